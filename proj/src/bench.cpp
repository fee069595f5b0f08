#include "tqf/bench.hpp"

#include "tqf/metrics.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <fstream>
#include <numeric>
#include <sstream>

namespace tqf::bench {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double logit(double a) { return std::log(a / (1.0 - a)); }

std::string fmt_num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string fmt_ms(const MeanSd& m, int digits = 3) { return fmt_num(m.mean, digits) + " (" + fmt_num(m.sd, digits) + ")"; }

// Cached per-seed results: the JSON produced by `compute` is stored under
// dir/key.json and reused on the next run.
io::Json cached(const std::string& dir, const std::string& key, const std::function<io::Json()>& compute) {
  if (dir.empty()) return compute();
  const std::filesystem::path path = std::filesystem::path(dir) / (key + ".json");
  if (std::filesystem::exists(path)) {
    try {
      return io::read_json_file(path.string());
    } catch (const Error& e) {
      spdlog::warn("ignoring unreadable cached result {}: {}", path.string(), e.what());
    }
  }
  io::Json j = compute();
  std::filesystem::create_directories(dir);
  io::write_text_file(path.string(), j.dump() + "\n");
  return j;
}

Matrix shuffled_columns(const Matrix& P, RngStream& rng) {
  Matrix out = P;
  for (Eigen::Index c = 1; c < P.cols(); ++c) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(P.rows()));
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.index(i)]);
    for (Eigen::Index i = 0; i < P.rows(); ++i) out(i, c) = P(idx[static_cast<std::size_t>(i)], c);
  }
  return out;
}

// Least-squares mean from the per-direction slice means.
Vector mean_from_slices(const DirectionalQuantileSet& s) {
  const Vector proj_mean = s.values.rowwise().mean();
  const Matrix& N = s.directions;
  return (N.transpose() * N).ldlt().solve(N.transpose() * proj_mean);
}

}  // namespace

MeanSd mean_sd(std::span<const double> v) {
  MeanSd m;
  m.n = v.size();
  if (v.empty()) return m;
  m.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double s = 0.0;
    for (double x : v) s += (x - m.mean) * (x - m.mean);
    m.sd = std::sqrt(s / static_cast<double>(v.size() - 1));
  }
  return m;
}

// ---------------------------------------------------------------------------

MoonsRun two_moons_run(std::uint64_t seed, int K, int M, const QmemConfig& qmem) {
  GeneratorSpec g;
  g.name = "two_moons";
  g.n = 5000;
  g.seed = seed;
  const auto src = WeightedPointCloud::uniform(generate(g).Y);
  RngStream dir_rng(seed, 1);
  const Matrix dirs = sample_directions(dir_rng, 2, K);
  const auto slices = slices_from_cloud(src, dirs, midpoint_levels(M));
  const auto t0 = Clock::now();
  auto res = reconstruct(slices, qmem, RngStream(seed, 2));
  MoonsRun r;
  r.seconds = seconds_since(t0);
  r.ed = energy_distance(res.cloud, src);
  r.size = static_cast<std::size_t>(res.cloud.size());
  r.report = std::move(res.report);
  return r;
}

// ---------------------------------------------------------------------------

RotorSettings rect_rotor_settings(int G, int G_tilde) {
  RotorSettings s;
  s.dataset = "rect_rotor";
  s.n = 20000;
  s.tqf.G = G;
  s.tqf.G_tilde = G_tilde;
  s.tqf.scheme = FrequencyScheme::DistanceQuantiles;
  s.tqf.T = 5;
  s.tqf.forest.n_trees = 50;
  s.tqf.forest.min_samples_leaf = 20 * G;
  s.tqf.K = 30;
  s.tqf.levels = midpoint_levels(30);
  s.qmem.N0 = 9;
  s.qmem.N1 = 100;
  s.qmem.E = 20;
  s.truth_count = 2000;
  return s;
}

RotorSettings seven_rotor_settings() {
  RotorSettings s;
  s.dataset = "seven_rotor";
  s.n = 20000;
  s.tqf.G = 20;
  s.tqf.G_tilde = 10;
  s.tqf.scheme = FrequencyScheme::Explicit;
  s.tqf.T = 2;
  s.tqf.explicit_w = {0.3, 0.4};
  s.tqf.forest.n_trees = 120;
  s.tqf.forest.min_samples_leaf = 100;
  s.tqf.K = 30;
  s.tqf.levels = midpoint_levels(30);
  s.qmem.N0 = 9;
  s.qmem.N1 = 100;
  s.qmem.E = 20;
  s.truth_count = 1312;
  return s;
}

RotorRun rotor_run(std::uint64_t seed, const RotorSettings& s, const std::vector<double>& a_levels) {
  GeneratorSpec g;
  g.name = s.dataset;
  g.n = s.n;
  g.seed = seed;
  const Dataset data = generate(g);
  RotorRun r;
  r.a_levels = a_levels;
  auto t0 = Clock::now();
  const TqfModel model = TqfModel::fit(data, s.tqf, RngStream(seed, 11));
  r.fit_seconds = seconds_since(t0);
  spdlog::info("{} seed {}: fit in {:.1f}s", s.dataset, seed, r.fit_seconds);
  for (std::size_t i = 0; i < a_levels.size(); ++i) {
    const std::vector<double> x(static_cast<std::size_t>(data.X.cols()), logit(a_levels[i]));
    const auto pred = model.predict_distribution(x, s.qmem, RngStream(seed, 100 + i));
    RngStream truth_rng(seed, 200 + i);
    const auto truth = ground_truth_sample(s.dataset, {{"a", a_levels[i]}}, s.truth_count, truth_rng);
    r.tqf_ed.push_back(energy_distance(pred.cloud, truth));
    r.sizes.push_back(static_cast<std::size_t>(pred.cloud.size()));
  }
  return r;
}

double naive_marginal_ed(const std::string& dataset, double a, int count, std::uint64_t seed) {
  RngStream rng(seed, 300);
  const auto ref = ground_truth_sample(dataset, {{"a", a}}, count, rng);
  const auto base = ground_truth_sample(dataset, {{"a", a}}, count, rng);
  return energy_distance(WeightedPointCloud::uniform(shuffled_columns(base.points, rng)), ref);
}

double oracle_ed(const std::string& dataset, double a, int count, std::uint64_t seed) {
  RngStream rng(seed, 301);
  const auto p = ground_truth_sample(dataset, {{"a", a}}, count, rng);
  const auto q = ground_truth_sample(dataset, {{"a", a}}, count, rng);
  return energy_distance(p, q);
}

double single_gaussian_ed(const std::string& dataset, double a, int count, std::uint64_t seed) {
  RngStream rng(seed, 302);
  const auto ref = ground_truth_sample(dataset, {{"a", a}}, count, rng);
  const auto fit = ground_truth_sample(dataset, {{"a", a}}, count, rng);
  const Vector mu = fit.points.colwise().mean().transpose();
  const Matrix centered = fit.points.rowwise() - mu.transpose();
  const Matrix cov = centered.transpose() * centered / static_cast<double>(count - 1);
  const Matrix L = Eigen::LLT<Eigen::MatrixXd>(Eigen::MatrixXd(cov)).matrixL();
  Matrix draws(count, mu.size());
  for (int i = 0; i < count; ++i) {
    Vector z(mu.size());
    for (Eigen::Index c = 0; c < z.size(); ++c) z[c] = rng.normal();
    draws.row(i) = (mu + L * z).transpose();
  }
  return energy_distance(WeightedPointCloud::uniform(draws), ref);
}

// ---------------------------------------------------------------------------

std::vector<double> qrfpp_plot_levels(const std::string& dataset) {
  if (dataset == "qrfpp_a") return {0.1, 0.9};
  if (dataset == "qrfpp_b") return {0.3, 0.7};
  if (dataset == "qrfpp_c") return {0.2, 0.8};
  if (dataset == "qrfpp_d") return {0.25, 0.65};
  fail(ErrorKind::Usage, "no plotted levels for '" + dataset + "'");
}

QrfppRun qrfpp_run(const std::string& dataset, std::uint64_t seed, int n_trees, int min_samples_leaf) {
  GeneratorSpec g;
  g.name = dataset;
  g.seed = seed;
  const Dataset data = generate(g);
  const std::vector<double> y(data.Y.data(), data.Y.data() + data.Y.rows());
  ForestConfig fc;
  fc.n_trees = n_trees;
  fc.min_samples_leaf = min_samples_leaf;
  fc.seed = seed;
  const auto plain = QrfppModel::fit(data.X, y, select_frequencies(y, 0, FrequencyScheme::Explicit), fc);
  const auto aug = QrfppModel::fit(data.X, y, select_frequencies(y, 3, FrequencyScheme::MedianTriple), fc);

  QrfppRun r;
  r.dataset = dataset;
  r.levels = qrfpp_plot_levels(dataset);
  constexpr int kGrid = 40;
  double e_plain = 0.0;
  double e_aug = 0.0;
  // Noise features are drawn from their training law. Pinning them all at 0
  // puts the query at the centre of every noise split, an atypical point.
  RngStream noise(seed, 400);
  std::vector<double> x(static_cast<std::size_t>(data.X.cols()), 0.0);
  for (int i = 0; i < kGrid; ++i) {
    for (double& v : x) v = noise.uniform(-1.0, 1.0);
    x[0] = -1.0 + (2.0 * i + 1.0) / kGrid;
    const auto qp = plain.predict_quantiles(x, r.levels);
    const auto qa = aug.predict_quantiles(x, r.levels);
    for (std::size_t m = 0; m < r.levels.size(); ++m) {
      const double truth = conditional_quantile(dataset, x[0], r.levels[m]);
      e_plain += std::abs(qp[m] - truth);
      e_aug += std::abs(qa[m] - truth);
    }
  }
  const double count = static_cast<double>(kGrid) * static_cast<double>(r.levels.size());
  r.qrf_error = e_plain / count;
  r.qrfpp_error = e_aug / count;
  r.importance = aug.forest.target_importance().mean;
  return r;
}

// ---------------------------------------------------------------------------

DiskSettings sliding_disk_settings() {
  DiskSettings s;
  s.tqf.G = 20;
  s.tqf.G_tilde = 10;
  s.tqf.scheme = FrequencyScheme::Explicit;
  s.tqf.T = 0;
  s.tqf.forest.n_trees = 10;
  s.tqf.forest.min_samples_leaf = 15;
  s.tqf.K = 20;
  s.tqf.levels = midpoint_levels(20);
  s.qmem.N0 = 9;
  s.qmem.N1 = 150;
  s.qmem.E = 10;
  return s;
}

DiskRun sliding_disk_run(std::uint64_t seed, const DiskSettings& s) {
  GeneratorSpec g;
  g.name = "sliding_disk";
  g.n = 30;
  g.seed = seed;
  const Dataset data = generate(g);
  const TqfModel model = TqfModel::fit(data, s.tqf, RngStream(seed, 11));

  DiskRun r;
  RngStream rng(seed, 12);
  r.x_test = rng.uniform();
  const std::vector<double> x{r.x_test};
  const auto pred = model.predict_distribution(x, s.qmem, RngStream(seed, 13));
  r.size = static_cast<std::size_t>(pred.cloud.size());
  const auto truth = ground_truth_sample("sliding_disk", {{"x", r.x_test}}, s.truth_count, rng);
  r.ed = energy_distance(pred.cloud, truth);

  const auto kde = KdeModel::fit(pred.cloud);
  const auto nll_sample = ground_truth_sample("sliding_disk", {{"x", r.x_test}}, s.nll_count, rng);
  double nll = 0.0;
  for (Eigen::Index i = 0; i < nll_sample.size(); ++i) nll -= kde.log_density(nll_sample.points.row(i).transpose());
  r.nll = nll / static_cast<double>(nll_sample.size());

  // ES over an independent test set, each point scored from its own slices.
  GeneratorSpec tg = g;
  tg.n = s.es_points;
  tg.seed = splitmix64(seed ^ 0x5eedULL);
  const Dataset test = generate(tg);
  RngStream dir_rng(seed, 14);
  double es = 0.0;
  for (Eigen::Index i = 0; i < test.rows(); ++i) {
    const std::vector<double> xi{test.X(i, 0)};
    RngStream ri = dir_rng.substream(static_cast<std::uint64_t>(i));
    const auto sl = model.target_unit_slices(xi, s.tqf.K, s.tqf.levels, ri);
    es += energy_score_from_slices(test.Y.row(i).transpose(), sl);
  }
  r.es = es / static_cast<double>(test.rows());
  return r;
}

// ---------------------------------------------------------------------------

HousingSettings housing_settings() {
  HousingSettings s;
  s.tqf.G = 10;
  s.tqf.G_tilde = 1;
  s.tqf.scheme = FrequencyScheme::DistanceQuantiles;
  s.tqf.T = 3;
  s.tqf.forest.n_trees = 50;
  s.tqf.forest.min_samples_leaf = 5;
  s.tqf.K = 30;
  s.tqf.levels = midpoint_levels(30);
  return s;
}

std::vector<FoldScores> housing_cv(const Dataset& data, const HousingSettings& s, std::uint64_t seed) {
  const Eigen::Index n = data.rows();
  require(s.folds >= 2 && n >= s.folds, ErrorKind::Usage, "need at least as many rows as folds (>= 2)");
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  RngStream rng(seed, 40);
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);

  // KNN on the two standardized covariates named in the settings' tail.
  std::vector<Eigen::Index> knn_cols;
  for (const char* name : {"MedHouseVal", "AveOccup"}) {
    const auto it = std::find(data.feature_names.begin(), data.feature_names.end(), name);
    if (it != data.feature_names.end()) knn_cols.push_back(it - data.feature_names.begin());
  }
  if (knn_cols.empty())
    for (Eigen::Index c = 0; c < data.X.cols(); ++c) knn_cols.push_back(c);

  std::vector<FoldScores> out;
  for (int f = 0; f < s.folds; ++f) {
    std::vector<Eigen::Index> train, test;
    for (std::size_t i = 0; i < perm.size(); ++i)
      (static_cast<int>(i % static_cast<std::size_t>(s.folds)) == f ? test : train).push_back(perm[i]);
    if (s.max_test_per_fold > 0 && test.size() > static_cast<std::size_t>(s.max_test_per_fold))
      test.resize(static_cast<std::size_t>(s.max_test_per_fold));

    Dataset tr;
    tr.X = data.X(train, Eigen::all);
    tr.Y = data.Y(train, Eigen::all);
    tr.feature_names = data.feature_names;
    tr.target_names = data.target_names;
    const TqfModel model = TqfModel::fit(tr, s.tqf, RngStream(seed, 50 + static_cast<std::uint64_t>(f)));

    Dataset knn_tr;
    knn_tr.X = tr.X(Eigen::all, knn_cols);
    const Eigen::RowVectorXd mu = knn_tr.X.colwise().mean();
    Eigen::RowVectorXd sd = ((knn_tr.X.rowwise() - mu).array().square().colwise().sum() /
                             static_cast<double>(knn_tr.X.rows()))
                                .sqrt();
    for (Eigen::Index c = 0; c < sd.size(); ++c)
      if (!(sd[c] > 0.0)) sd[c] = 1.0;
    knn_tr.X = (knn_tr.X.rowwise() - mu).array().rowwise() / sd.array();
    knn_tr.Y = tr.Y;
    const int k = std::min<int>(s.knn_k, static_cast<int>(train.size()));

    Matrix truth(static_cast<Eigen::Index>(test.size()), data.Y.cols());
    Matrix tqf_pt(truth.rows(), truth.cols()), knn_pt(truth.rows(), truth.cols());
    double tqf_es = 0.0, knn_es = 0.0;
    RngStream dir_rng(seed, 60 + static_cast<std::uint64_t>(f));
    for (std::size_t t = 0; t < test.size(); ++t) {
      const Eigen::Index row = test[t];
      const auto ti = static_cast<Eigen::Index>(t);
      truth.row(ti) = data.Y.row(row);
      const std::vector<double> x(data.X.row(row).data(), data.X.row(row).data() + data.X.cols());
      RngStream ri = dir_rng.substream(t);
      const auto sl = model.target_unit_slices(x, s.tqf.K, s.tqf.levels, ri);
      tqf_es += energy_score_from_slices(data.Y.row(row).transpose(), sl);
      tqf_pt.row(ti) = mean_from_slices(sl).transpose();

      std::vector<double> xk(knn_cols.size());
      for (std::size_t c = 0; c < knn_cols.size(); ++c)
        xk[c] = (data.X(row, knn_cols[c]) - mu[static_cast<Eigen::Index>(c)]) / sd[static_cast<Eigen::Index>(c)];
      std::vector<std::pair<double, Eigen::Index>> dist(train.size());
      for (std::size_t j = 0; j < train.size(); ++j) {
        double d2 = 0.0;
        for (std::size_t c = 0; c < xk.size(); ++c) {
          const double dl = knn_tr.X(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(c)) - xk[c];
          d2 += dl * dl;
        }
        dist[j] = {d2, static_cast<Eigen::Index>(j)};
      }
      std::nth_element(dist.begin(), dist.begin() + (k - 1), dist.end());
      Matrix nb(k, data.Y.cols());
      for (int j = 0; j < k; ++j) nb.row(j) = tr.Y.row(dist[static_cast<std::size_t>(j)].second);
      const auto cloud = WeightedPointCloud::uniform(nb);
      knn_es += energy_score(data.Y.row(row).transpose(), cloud);
      knn_pt.row(ti) = cloud.mean().transpose();
    }
    FoldScores fs;
    const auto nt = static_cast<double>(test.size());
    fs.tqf_es = tqf_es / nt;
    fs.knn_es = knn_es / nt;
    fs.tqf_r2 = r_squared(truth, tqf_pt);
    fs.knn_r2 = r_squared(truth, knn_pt);
    spdlog::info("housing fold {}: TQF R2 {:.3f} ES {:.4f}, KNN R2 {:.3f} ES {:.4f}", f + 1, fs.tqf_r2, fs.tqf_es,
                 fs.knn_r2, fs.knn_es);
    out.push_back(fs);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

std::string Report::text() const {
  std::vector<std::size_t> width(columns.size(), 0);
  for (std::size_t c = 0; c < columns.size(); ++c) width[c] = columns[c].size();
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size() && c < width.size(); ++c) width[c] = std::max(width[c], r[c].size());
  std::ostringstream os;
  os << "== " << name << " ==\n";
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < width.size(); ++c) {
      const std::string v = c < cells.size() ? cells[c] : "";
      os << (c ? "  " : "") << v << std::string(width[c] - v.size(), ' ');
    }
    os << '\n';
  };
  line(columns);
  for (const auto& r : rows) line(r);
  for (const auto& v : verdicts) os << (v.pass ? "PASS " : "FAIL ") << v.name << ": " << v.detail << '\n';
  return os.str();
}

bool Report::all_pass() const {
  return std::all_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.pass; });
}

const std::vector<std::string>& benchmark_names() {
  static const std::vector<std::string> names = {"two_moons", "rect_rotor",   "hyperparam_g", "qrfpp",
                                                 "sliding_disk", "seven_rotor", "housing"};
  return names;
}

namespace {

int seeds_or(const Options& opt, int fallback) { return opt.seeds > 0 ? opt.seeds : fallback; }

io::Json moons_json(const MoonsRun& r) {
  return io::Json{{"ed", r.ed},
                  {"size", r.size},
                  {"seconds", r.seconds},
                  {"jensen_ok", r.report.jensen_ok},
                  {"merge_repaired", r.report.merge_repaired},
                  {"merged_loss", r.report.merged_loss},
                  {"mean_member_loss", r.report.mean_member_loss}};
}

Report bench_two_moons(const Options& opt) {
  Report rep;
  rep.name = "two_moons";
  rep.columns = {"config", "ED mean (sd)", "mean size", "seeds"};
  const int seeds = seeds_or(opt, opt.quick ? 2 : 5);
  QmemConfig q;
  q.N0 = 9;
  q.N1 = 150;
  q.E = opt.quick ? 4 : 20;
  struct Variant {
    std::string label;
    int K, M, E, seeds;
  };
  const std::vector<Variant> variants = {{"K=M=25", 25, 25, q.E, seeds},
                                         {"K=M=5", 5, 5, q.E, seeds},
                                         {"K=M=25, E=1", 25, 25, 1, std::min(seeds, 3)}};
  std::vector<std::vector<double>> eds(variants.size());
  double slowest = 0.0;
  bool jensen = true;
  int repaired = 0, runs = 0;
  for (std::size_t v = 0; v < variants.size(); ++v) {
    double size = 0.0;
    for (int s = 0; s < variants[v].seeds; ++s) {
      const std::uint64_t seed = opt.base_seed + static_cast<std::uint64_t>(s);
      QmemConfig qv = q;
      qv.E = variants[v].E;
      const std::string key = "two_moons_K" + std::to_string(variants[v].K) + "_E" + std::to_string(qv.E) + "_seed" +
                              std::to_string(seed);
      const io::Json j = cached(opt.resume_dir, key, [&] { return moons_json(two_moons_run(seed, variants[v].K, variants[v].M, qv)); });
      eds[v].push_back(j.at("ed").get<double>());
      size += j.at("size").get<double>();
      if (v == 0) slowest = std::max(slowest, j.at("seconds").get<double>());
      jensen = jensen && j.at("jensen_ok").get<bool>();
      repaired += j.value("merge_repaired", false) ? 1 : 0;
      ++runs;
    }
    const MeanSd m = mean_sd(eds[v]);
    rep.rows.push_back({variants[v].label, fmt_ms(m, 4), fmt_num(size / variants[v].seeds, 0),
                        std::to_string(variants[v].seeds)});
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  const double med = median(eds[0]);
  rep.verdicts.push_back({"ED band", med >= 0.009 && med <= 0.025,
                          "median ED " + fmt_num(med) + " in [0.009, 0.025] (reference 0.0118)"});
  rep.verdicts.push_back({"runtime", slowest <= 600.0, "slowest K=M=25 run " + fmt_num(slowest, 1) + " s <= 600 s"});
  const double full = mean_sd(eds[0]).mean;
  const double coarse = mean_sd(eds[1]).mean;
  rep.verdicts.push_back({"degradation", coarse >= 3.0 * full,
                          "K=M=5 ED " + fmt_num(coarse) + " vs 3 x " + fmt_num(full) + " (reference factor 5.7)"});
  std::vector<double> first(eds[0].begin(), eds[0].begin() + static_cast<std::ptrdiff_t>(eds[2].size()));
  const double e20 = mean_sd(first).mean;
  const double e1 = mean_sd(eds[2]).mean;
  rep.verdicts.push_back({"ensemble", e20 < e1, "E=20 ED " + fmt_num(e20) + " < E=1 ED " + fmt_num(e1)});
  rep.verdicts.push_back({"Jensen merge bound", jensen,
                          "merged loss <= mean member loss on every run (" + std::to_string(repaired) + " of " +
                              std::to_string(runs) + " unions reweighted)"});
  return rep;
}

const std::vector<double> kALevels = {0.1, 0.2, 0.3, 0.4, 0.5};

std::vector<double> rotor_eds(const Options& opt, const RotorSettings& s, std::uint64_t seed, const std::string& tag) {
  const io::Json j = cached(opt.resume_dir, tag + "_seed" + std::to_string(seed), [&] {
    const RotorRun r = rotor_run(seed, s, kALevels);
    return io::Json{{"ed", r.tqf_ed}, {"sizes", r.sizes}, {"fit_seconds", r.fit_seconds}};
  });
  return j.at("ed").get<std::vector<double>>();
}

RotorSettings quick_rotor(RotorSettings s) {
  s.n = 4000;
  s.tqf.forest.n_trees = 5;
  s.tqf.forest.min_samples_leaf = std::max(5, s.tqf.forest.min_samples_leaf / 5);
  s.qmem.E = 4;
  return s;
}

Report bench_rect_rotor(const Options& opt) {
  Report rep;
  rep.name = "rect_rotor";
  rep.columns = {"a", "Naive", "TQF", "Oracle", "reference TQF"};
  const int seeds = seeds_or(opt, opt.quick ? 1 : 10);
  const int baseline_seeds = opt.quick ? 5 : 100;
  RotorSettings s = rect_rotor_settings();
  if (opt.quick) s = quick_rotor(s);
  std::vector<std::vector<double>> tqf(kALevels.size());
  for (int k = 0; k < seeds; ++k) {
    const auto eds = rotor_eds(opt, s, opt.base_seed + static_cast<std::uint64_t>(k), opt.quick ? "rect_quick" : "rect");
    for (std::size_t i = 0; i < kALevels.size(); ++i) tqf[i].push_back(eds[i]);
  }
  const std::vector<std::pair<double, double>> reference = {{0.038, 0.007}, {0.033, 0.006}, {0.038, 0.009},
                                                            {0.039, 0.006}, {0.043, 0.012}};
  io::Json data = io::Json::array();
  for (std::size_t i = 0; i < kALevels.size(); ++i) {
    std::vector<double> naive, oracle;
    for (int k = 0; k < baseline_seeds; ++k) {
      naive.push_back(naive_marginal_ed("rect_rotor", kALevels[i], 2000, 1000 + static_cast<std::uint64_t>(k)));
      oracle.push_back(oracle_ed("rect_rotor", kALevels[i], 2000, 1000 + static_cast<std::uint64_t>(k)));
    }
    const MeanSd t = mean_sd(tqf[i]), nv = mean_sd(naive), orc = mean_sd(oracle);
    rep.rows.push_back({fmt_num(kALevels[i], 1), fmt_ms(nv), fmt_ms(t), fmt_ms(orc),
                        fmt_num(reference[i].first, 3) + " (" + fmt_num(reference[i].second, 3) + ")"});
    data.push_back({{"a", kALevels[i]}, {"tqf", tqf[i]}, {"naive_mean", nv.mean}, {"oracle_mean", orc.mean}});
    if (kALevels[i] >= 0.2) {
      const double lo = reference[i].first - 2.0 * reference[i].second;
      const double hi = reference[i].first + 2.0 * reference[i].second;
      rep.verdicts.push_back({"TQF a=" + fmt_num(kALevels[i], 1), t.mean >= lo && t.mean <= hi,
                              fmt_num(t.mean) + " in [" + fmt_num(lo) + ", " + fmt_num(hi) + "]"});
      rep.verdicts.push_back({"beats Naive a=" + fmt_num(kALevels[i], 1), t.mean - orc.mean < nv.mean - orc.mean,
                              "floor-adjusted " + fmt_num(t.mean - orc.mean) + " < " + fmt_num(nv.mean - orc.mean)});
    }
  }
  rep.data = data;
  return rep;
}

Report bench_hyperparam_g(const Options& opt) {
  Report rep;
  rep.name = "hyperparam_g";
  rep.columns = {"a", "(15,1)", "(15,10)", "(1,10)"};
  const int seeds = seeds_or(opt, opt.quick ? 1 : 9);
  const std::vector<std::pair<int, int>> cells = {{15, 1}, {15, 10}, {1, 10}};
  std::vector<std::vector<std::vector<double>>> eds(cells.size(), std::vector<std::vector<double>>(kALevels.size()));
  for (std::size_t c = 0; c < cells.size(); ++c) {
    RotorSettings s = rect_rotor_settings(cells[c].first, cells[c].second);
    if (opt.quick) s = quick_rotor(s);
    // (15,10) is the rect_rotor configuration; share its cache entries.
    std::string tag = std::string(opt.quick ? "hyper_quick" : "hyper") + "_G" + std::to_string(cells[c].first) + "_Gt" +
                      std::to_string(cells[c].second);
    if (cells[c] == std::pair{15, 10}) tag = opt.quick ? "rect_quick" : "rect";
    for (int k = 0; k < seeds; ++k) {
      const auto e = rotor_eds(opt, s, opt.base_seed + static_cast<std::uint64_t>(k), tag);
      for (std::size_t i = 0; i < kALevels.size(); ++i) eds[c][i].push_back(e[i]);
    }
  }
  int worse_151 = 0, worse_110 = 0;
  for (std::size_t i = 0; i < kALevels.size(); ++i) {
    const double m0 = mean_sd(eds[0][i]).mean, m1 = mean_sd(eds[1][i]).mean, m2 = mean_sd(eds[2][i]).mean;
    worse_151 += m0 > m1;
    worse_110 += m2 > m1;
    rep.rows.push_back({fmt_num(kALevels[i], 1), fmt_ms(mean_sd(eds[0][i])), fmt_ms(mean_sd(eds[1][i])),
                        fmt_ms(mean_sd(eds[2][i]))});
  }
  rep.verdicts.push_back({"(15,1) worse than (15,10)", worse_151 >= 3, std::to_string(worse_151) + " of 5 a-levels"});
  rep.verdicts.push_back({"(1,10) worse than (15,10)", worse_110 >= 3, std::to_string(worse_110) + " of 5 a-levels"});
  return rep;
}

Report bench_qrfpp(const Options& opt) {
  Report rep;
  rep.name = "qrfpp";
  rep.columns = {"dataset", "levels", "QRF error", "QRF++ error", "importance y", "cos share", "sin share"};
  const int seeds = seeds_or(opt, opt.quick ? 1 : 5);
  const int trees = opt.quick ? 20 : 100;
  for (const std::string ds : {"qrfpp_a", "qrfpp_b", "qrfpp_c", "qrfpp_d"}) {
    std::vector<double> e_plain, e_aug;
    std::vector<double> imp;
    for (int k = 0; k < seeds; ++k) {
      const std::uint64_t seed = opt.base_seed + static_cast<std::uint64_t>(k);
      const io::Json j = cached(opt.resume_dir, ds + "_t" + std::to_string(trees) + "_seed" + std::to_string(seed), [&] {
        const QrfppRun r = qrfpp_run(ds, seed, trees, 30);
        return io::Json{{"qrf", r.qrf_error}, {"qrfpp", r.qrfpp_error}, {"importance", r.importance}};
      });
      e_plain.push_back(j.at("qrf").get<double>());
      e_aug.push_back(j.at("qrfpp").get<double>());
      const auto im = j.at("importance").get<std::vector<double>>();
      if (imp.empty()) imp.assign(im.size(), 0.0);
      for (std::size_t c = 0; c < im.size(); ++c) imp[c] += im[c] / seeds;
    }
    double cos_share = 0.0, sin_share = 0.0;
    for (std::size_t c = 1; c < imp.size(); ++c) (c % 2 ? cos_share : sin_share) += imp[c];
    const auto lv = qrfpp_plot_levels(ds);
    const MeanSd p = mean_sd(e_plain), a = mean_sd(e_aug);
    rep.rows.push_back({ds, fmt_num(lv[0], 2) + "/" + fmt_num(lv[1], 2), fmt_ms(p), fmt_ms(a), fmt_num(imp[0], 3),
                        fmt_num(cos_share, 3), fmt_num(sin_share, 3)});
    if (ds != "qrfpp_c")
      rep.verdicts.push_back({"QRF++ beats QRF on " + ds, a.mean < p.mean, fmt_num(a.mean) + " < " + fmt_num(p.mean)});
    rep.verdicts.push_back({"raw-y importance on " + ds, imp[0] <= 0.2, fmt_num(imp[0], 3) + " <= 0.2"});
    const bool sin_dominant = sin_share > cos_share;
    rep.verdicts.push_back({"sin dominance on " + ds, sin_dominant == (ds == "qrfpp_d"),
                            std::string(sin_dominant ? "sin" : "cos") + " components dominate"});
  }
  return rep;
}

Report bench_sliding_disk(const Options& opt) {
  Report rep;
  rep.name = "sliding_disk";
  rep.columns = {"metric", "TQF mean (sd)", "reference"};
  const int runs = seeds_or(opt, opt.quick ? 3 : 100);
  DiskSettings s = sliding_disk_settings();
  if (opt.quick) {
    s.qmem.E = 3;
    s.es_points = 100;
    s.truth_count = 1000;
  }
  std::vector<double> ed, es, nll;
  for (int k = 0; k < runs; ++k) {
    const std::uint64_t seed = opt.base_seed + static_cast<std::uint64_t>(k);
    const io::Json j = cached(opt.resume_dir, std::string(opt.quick ? "disk_quick" : "disk") + "_seed" + std::to_string(seed), [&] {
      const DiskRun r = sliding_disk_run(seed, s);
      return io::Json{{"x", r.x_test}, {"ed", r.ed}, {"es", r.es}, {"nll", r.nll}, {"size", r.size}};
    });
    ed.push_back(j.at("ed").get<double>());
    es.push_back(j.at("es").get<double>());
    nll.push_back(j.at("nll").get<double>());
  }
  const MeanSd e = mean_sd(ed), c = mean_sd(es), l = mean_sd(nll);
  rep.rows.push_back({"ED", fmt_ms(e), "0.290 (0.133)"});
  rep.rows.push_back({"ES", fmt_ms(c), "0.538 (0.018)"});
  rep.rows.push_back({"NLL", fmt_ms(l, 2), "2.01 (0.69)"});
  rep.verdicts.push_back({"ED band", e.mean >= 0.20 && e.mean <= 0.40, fmt_num(e.mean) + " in [0.20, 0.40]"});
  rep.verdicts.push_back({"ES band", c.mean >= 0.50 && c.mean <= 0.58, fmt_num(c.mean) + " in [0.50, 0.58]"});
  return rep;
}

Report bench_seven_rotor(const Options& opt) {
  Report rep;
  rep.name = "seven_rotor";
  rep.columns = {"a", "single Gaussian", "TQF", "Oracle"};
  const int seeds = seeds_or(opt, opt.quick ? 1 : 3);
  RotorSettings s = seven_rotor_settings();
  if (opt.quick) s = quick_rotor(s);
  std::vector<std::vector<double>> tqf(kALevels.size());
  for (int k = 0; k < seeds; ++k) {
    const auto eds = rotor_eds(opt, s, opt.base_seed + static_cast<std::uint64_t>(k), opt.quick ? "seven_quick" : "seven");
    for (std::size_t i = 0; i < kALevels.size(); ++i) tqf[i].push_back(eds[i]);
  }
  const int baseline_seeds = opt.quick ? 5 : 20;
  for (std::size_t i = 0; i < kALevels.size(); ++i) {
    std::vector<double> g1, orc;
    for (int k = 0; k < baseline_seeds; ++k) {
      g1.push_back(single_gaussian_ed("seven_rotor", kALevels[i], 1312, 2000 + static_cast<std::uint64_t>(k)));
      orc.push_back(oracle_ed("seven_rotor", kALevels[i], 1312, 2000 + static_cast<std::uint64_t>(k)));
    }
    const MeanSd t = mean_sd(tqf[i]), g = mean_sd(g1), o = mean_sd(orc);
    rep.rows.push_back({fmt_num(kALevels[i], 1), fmt_ms(g), fmt_ms(t), fmt_ms(o)});
    rep.verdicts.push_back({"TQF beats single Gaussian a=" + fmt_num(kALevels[i], 1), t.mean < g.mean,
                            fmt_num(t.mean) + " < " + fmt_num(g.mean)});
  }
  return rep;
}

Report bench_housing(const Options& opt) {
  require(!opt.csv_path.empty(), ErrorKind::Usage, "housing benchmark needs a CSV path");
  HousingSettings s = housing_settings();
  CsvOptions co;
  co.features = s.features;
  co.targets = s.targets;
  for (const auto& t : s.targets) co.transforms[t] = ColumnTransform::RankUniform;
  const Dataset data = load_csv(opt.csv_path, co);
  if (opt.quick) {
    s.folds = 3;
    s.tqf.forest.n_trees = 5;
    s.tqf.G = 2;
    s.max_test_per_fold = 50;
  }
  if (opt.seeds > 0) s.folds = opt.seeds;
  const auto folds = housing_cv(data, s, opt.base_seed);
  Report rep;
  rep.name = "housing";
  rep.columns = {"fold", "TQF R2", "TQF ES", "KNN R2", "KNN ES"};
  std::vector<double> tr, te, kr, ke;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    rep.rows.push_back({std::to_string(f + 1), fmt_num(folds[f].tqf_r2, 3), fmt_num(folds[f].tqf_es),
                        fmt_num(folds[f].knn_r2, 3), fmt_num(folds[f].knn_es)});
    tr.push_back(folds[f].tqf_r2);
    te.push_back(folds[f].tqf_es);
    kr.push_back(folds[f].knn_r2);
    ke.push_back(folds[f].knn_es);
  }
  rep.rows.push_back({"mean (sd)", fmt_ms(mean_sd(tr)), fmt_ms(mean_sd(te)), fmt_ms(mean_sd(kr)), fmt_ms(mean_sd(ke))});
  rep.verdicts.push_back({"format", folds.size() == static_cast<std::size_t>(s.folds),
                          std::to_string(folds.size()) + " folds scored (not compared against published numbers)"});
  return rep;
}

}  // namespace

Report run_benchmark(const std::string& name, const Options& opt) {
  if (name == "two_moons") return bench_two_moons(opt);
  if (name == "rect_rotor") return bench_rect_rotor(opt);
  if (name == "hyperparam_g") return bench_hyperparam_g(opt);
  if (name == "qrfpp") return bench_qrfpp(opt);
  if (name == "sliding_disk") return bench_sliding_disk(opt);
  if (name == "seven_rotor") return bench_seven_rotor(opt);
  if (name == "housing") return bench_housing(opt);
  fail(ErrorKind::Usage, "unknown benchmark '" + name + "'");
}

}  // namespace tqf::bench
