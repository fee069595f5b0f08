#include "tqf/tqf_model.hpp"

#include "binary_io.hpp"
#include "parallel.hpp"
#include "tqf/io.hpp"
#include "tqf/metrics.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

namespace tqf {

TargetScaler TargetScaler::fit(const Matrix& Y) {
  require(Y.rows() >= 1 && Y.cols() >= 1, ErrorKind::Data, "cannot fit a target scaler on empty data");
  TargetScaler s;
  const auto n = static_cast<double>(Y.rows());
  s.means = Y.colwise().mean().transpose();
  s.sds.resize(Y.cols());
  for (Eigen::Index c = 0; c < Y.cols(); ++c) {
    const double sd = std::sqrt((Y.col(c).array() - s.means[c]).square().sum() / n);
    s.sds[c] = sd > 0.0 ? sd : 1.0;
  }
  return s;
}

TargetScaler TargetScaler::identity(int d) {
  TargetScaler s;
  s.means = Vector::Zero(d);
  s.sds = Vector::Ones(d);
  return s;
}

Matrix TargetScaler::transform(const Matrix& Y) const {
  require(Y.cols() == means.size(), ErrorKind::Data, "target scaler width mismatch");
  Matrix Z(Y.rows(), Y.cols());
  for (Eigen::Index c = 0; c < Y.cols(); ++c) Z.col(c) = (Y.col(c).array() - means[c]) / sds[c];
  return Z;
}

Matrix TargetScaler::inverse(const Matrix& Z) const {
  require(Z.cols() == means.size(), ErrorKind::Data, "target scaler width mismatch");
  Matrix Y(Z.rows(), Z.cols());
  for (Eigen::Index c = 0; c < Z.cols(); ++c) Y.col(c) = Z.col(c).array() * sds[c] + means[c];
  return Y;
}

void TqfConfig::validate() const {
  require(G >= 1, ErrorKind::Usage, "G must be >= 1");
  require(G_tilde >= 1, ErrorKind::Usage, "G_tilde must be >= 1");
  require(T >= 0, ErrorKind::Usage, "T must be >= 0");
  require(K >= 1, ErrorKind::Usage, "K must be >= 1");
  require(frequency_cap >= 2, ErrorKind::Usage, "frequency_cap must be >= 2");
  require(!levels.empty(), ErrorKind::Usage, "levels must not be empty");
  for (std::size_t m = 0; m < levels.size(); ++m) {
    require(levels[m] > 0.0 && levels[m] < 1.0, ErrorKind::Usage, "levels must lie in (0,1)");
    require(m == 0 || levels[m] > levels[m - 1], ErrorKind::Usage, "levels must be strictly increasing");
  }
  if (scheme == FrequencyScheme::Explicit)
    require(explicit_w.size() == static_cast<std::size_t>(T), ErrorKind::Usage,
            "explicit frequency list length must equal T");
  if (scheme == FrequencyScheme::MedianTriple) require(T == 3, ErrorKind::Usage, "median_triple requires T = 3");
  forest.validate();
}

AugmentedSet projective_augment(const Matrix& X, const Matrix& Z, int G, const std::vector<Matrix>& orthogonals,
                                RngStream& rng) {
  require(G >= 1, ErrorKind::Usage, "G must be >= 1");
  require(X.rows() == Z.rows(), ErrorKind::Data, "covariate and target row counts differ");
  const Eigen::Index N = Z.rows();
  const Eigen::Index p = X.cols();
  const Eigen::Index d = Z.cols();
  for (const auto& O : orthogonals)
    require(O.rows() == d && O.cols() == d, ErrorKind::Data, "orthogonal matrix size does not match target dimension");
  const Eigen::Index width = p + d * static_cast<Eigen::Index>(orthogonals.size() + 1);
  const Eigen::Index rows = N * G;

  const Matrix dirs = sample_directions(rng, static_cast<int>(d), static_cast<int>(rows));
  AugmentedSet out;
  out.features.resize(rows, width);
  out.targets.resize(static_cast<std::size_t>(rows));
  for (Eigen::Index i = 0; i < N; ++i) {
    for (int g = 0; g < G; ++g) {
      const Eigen::Index l = i * G + g;
      const Vector n = dirs.row(l).transpose();
      out.features.row(l).head(p) = X.row(i);
      out.features.row(l).segment(p, d) = n.transpose();
      for (std::size_t o = 0; o < orthogonals.size(); ++o)
        out.features.row(l).segment(p + d * static_cast<Eigen::Index>(o + 1), d) = (orthogonals[o] * n).transpose();
      out.targets[static_cast<std::size_t>(l)] = Z.row(i).dot(n);
    }
  }
  return out;
}

TqfModel TqfModel::fit(const Dataset& data, const TqfConfig& config, const RngStream& rng) {
  config.validate();
  data.validate();
  TqfModel m;
  m.config_ = config;
  m.d_ = static_cast<int>(data.Y.cols());
  m.p_ = static_cast<int>(data.X.cols());
  require(m.d_ >= 1, ErrorKind::Data, "dataset has no target columns");

  m.scaler_ = TargetScaler::fit(data.Y);
  const Matrix Z = m.scaler_.transform(data.Y);
  RngStream orth_rng = rng.substream(1);
  for (int o = 1; o < config.G_tilde; ++o) m.orthogonals_.push_back(sample_orthogonal(orth_rng, m.d_));

  RngStream aug_rng = rng.substream(2);
  const AugmentedSet aug = projective_augment(data.X, Z, config.G, m.orthogonals_, aug_rng);
  const FrequencySpec spec =
      select_frequencies(aug.targets, config.T, config.scheme, config.frequency_cap, config.explicit_w);

  ForestConfig fc = config.forest;
  fc.seed = splitmix64(rng.seed() ^ splitmix64(rng.stream_id() + 3));
  m.config_.forest.seed = fc.seed;
  spdlog::debug("tqf: {} augmented rows, {} features, T = {}", aug.features.rows(), aug.features.cols(), spec.T());
  m.qrf_ = QrfppModel::fit(aug.features, aug.targets, spec, fc);
  return m;
}

std::vector<double> TqfModel::query_features(std::span<const double> x, const Vector& n) const {
  require(x.size() == static_cast<std::size_t>(p_), ErrorKind::Data,
          "covariate width mismatch: model expects " + std::to_string(p_) + ", found " + std::to_string(x.size()));
  require(n.size() == d_, ErrorKind::Data, "direction dimension does not match the model");
  std::vector<double> f(feature_width());
  std::copy(x.begin(), x.end(), f.begin());
  auto* out = f.data() + p_;
  for (int c = 0; c < d_; ++c) *out++ = n[c];
  for (const auto& O : orthogonals_) {
    const Vector r = O * n;
    for (int c = 0; c < d_; ++c) *out++ = r[c];
  }
  return f;
}

std::vector<double> TqfModel::directional_quantiles(std::span<const double> x, const Vector& n,
                                                    std::span<const double> levels) const {
  return qrf_.predict_quantiles(query_features(x, n), levels);
}

namespace {

// Canonical level pair (lo, hi) with lo = 1 - hi exactly (Sterbenz). Both q
// and the rounded 1 - q map to the same pair, which makes the symmetrized
// value an exact negation under (n, q) -> (-n, 1 - q).
std::pair<double, double> level_pair(double q) {
  const double hi = q >= 0.5 ? q : 1.0 - q;
  return {1.0 - hi, hi};
}

}  // namespace

double TqfModel::symmetrized_quantile(std::span<const double> x, const Vector& n, double q) const {
  require(q > 0.0 && q < 1.0, ErrorKind::Usage, "quantile level must lie in (0,1)");
  const auto [lo, hi] = level_pair(q);
  const Vector neg = -n;
  if (q <= 0.5) {
    const double a = directional_quantiles(x, n, std::span<const double>(&lo, 1))[0];
    const double b = directional_quantiles(x, neg, std::span<const double>(&hi, 1))[0];
    return 0.5 * (a - b);
  }
  const double a = directional_quantiles(x, n, std::span<const double>(&hi, 1))[0];
  const double b = directional_quantiles(x, neg, std::span<const double>(&lo, 1))[0];
  return 0.5 * (a - b);
}

SliceInference TqfModel::infer_slices_at(std::span<const double> x, const Matrix& directions,
                                         const std::vector<double>& levels) const {
  require(directions.cols() == d_, ErrorKind::Data, "direction dimension does not match the model");
  const auto K = static_cast<std::size_t>(directions.rows());
  const std::size_t M = levels.size();
  // One forest query per sign: level m needs lo_m or hi_m from +n and the
  // partner level from -n.
  std::vector<double> plus_levels(M), minus_levels(M);
  for (std::size_t m = 0; m < M; ++m) {
    require(levels[m] > 0.0 && levels[m] < 1.0, ErrorKind::Usage, "quantile level must lie in (0,1)");
    const auto [lo, hi] = level_pair(levels[m]);
    plus_levels[m] = levels[m] <= 0.5 ? lo : hi;
    minus_levels[m] = levels[m] <= 0.5 ? hi : lo;
  }
  SliceInference out;
  out.slices.directions = directions;
  out.slices.levels = levels;
  out.slices.values.resize(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(M));
  std::vector<std::size_t> repairs(K, 0);
  detail::parallel_for(K, detail::thread_count_from_env(config_.forest.n_threads), [&](std::size_t k) {
    const Vector n = directions.row(static_cast<Eigen::Index>(k)).transpose();
    const auto a = directional_quantiles(x, n, plus_levels);
    const auto b = directional_quantiles(x, -n, minus_levels);
    std::vector<double> row(M);
    for (std::size_t m = 0; m < M; ++m) row[m] = 0.5 * (a[m] - b[m]);
    if (!std::is_sorted(row.begin(), row.end())) {
      auto sorted = row;
      std::sort(sorted.begin(), sorted.end());
      for (std::size_t m = 0; m < M; ++m) repairs[k] += sorted[m] != row[m];
      row = std::move(sorted);
    }
    for (std::size_t m = 0; m < M; ++m)
      out.slices.values(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m)) = row[m];
  });
  out.repairs = std::accumulate(repairs.begin(), repairs.end(), std::size_t{0});
  return out;
}

SliceInference TqfModel::infer_slices(std::span<const double> x, int K, const std::vector<double>& levels,
                                      RngStream& rng) const {
  require(K >= 1, ErrorKind::Usage, "K must be >= 1");
  return infer_slices_at(x, sample_directions(rng, d_, K), levels);
}

DirectionalQuantileSet TqfModel::target_unit_slices(std::span<const double> x, int K,
                                                    const std::vector<double>& levels, RngStream& rng) const {
  const Matrix dirs = sample_directions(rng, d_, K);
  Matrix unit(dirs.rows(), dirs.cols());
  Vector scale(dirs.rows()), offset(dirs.rows());
  for (Eigen::Index k = 0; k < dirs.rows(); ++k) {
    const Vector dn = scaler_.sds.cwiseProduct(dirs.row(k).transpose());
    scale[k] = dn.norm();
    offset[k] = dirs.row(k).dot(scaler_.means);
    unit.row(k) = (dn / scale[k]).transpose();
  }
  auto inf = infer_slices_at(x, unit, levels);
  DirectionalQuantileSet s;
  s.directions = dirs;
  s.levels = levels;
  s.values = inf.slices.values;
  for (Eigen::Index k = 0; k < dirs.rows(); ++k) s.values.row(k) = s.values.row(k).array() * scale[k] + offset[k];
  return s;
}

WeightedPointCloud TqfModel::unscale(const WeightedPointCloud& cloud) const {
  WeightedPointCloud out;
  out.points = scaler_.inverse(cloud.points);
  out.weights = cloud.weights;
  return out;
}

QmemResult TqfModel::predict_distribution(std::span<const double> x, const QmemConfig& qmem,
                                          const RngStream& rng) const {
  RngStream dir_rng = rng.substream(1);
  const auto inf = infer_slices(x, config_.K, config_.levels, dir_rng);
  if (inf.repairs > 0) spdlog::debug("tqf: {} slice entries reordered", inf.repairs);
  QmemResult r = reconstruct(inf.slices, qmem, rng.substream(2));
  r.cloud = unscale(r.cloud);
  return r;
}

std::vector<double> knn_directional_quantile(const Dataset& data, std::span<const double> x, const Vector& n,
                                             std::span<const double> levels, int k) {
  const Eigen::Index N = data.rows();
  require(k >= 1 && k <= N, ErrorKind::Usage, "k must lie in [1, number of rows]");
  require(x.size() == static_cast<std::size_t>(data.X.cols()), ErrorKind::Data, "covariate width mismatch");
  require(n.size() == data.Y.cols(), ErrorKind::Data, "direction dimension mismatch");
  std::vector<std::pair<double, Eigen::Index>> dist(static_cast<std::size_t>(N));
  for (Eigen::Index i = 0; i < N; ++i) {
    double s = 0.0;
    for (Eigen::Index c = 0; c < data.X.cols(); ++c) {
      const double t = data.X(i, c) - x[static_cast<std::size_t>(c)];
      s += t * t;
    }
    dist[static_cast<std::size_t>(i)] = {s, i};
  }
  std::nth_element(dist.begin(), dist.begin() + (k - 1), dist.end());
  std::vector<double> proj(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) proj[static_cast<std::size_t>(j)] = data.Y.row(dist[static_cast<std::size_t>(j)].second).dot(n);
  return hazen_quantiles(WeightedScalarSample::uniform(std::move(proj)), levels);
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Persistence: "TQFMODEL", version, byte-order probe, JSON header, forest
// binary, FNV-1a 64 of everything before it.

namespace {

constexpr char kMagic[8] = {'T', 'Q', 'F', 'M', 'O', 'D', 'E', 'L'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kProbe = 0x01020304;

io::Json matrix_rows(const Matrix& m) {
  io::Json a = io::Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(m.row(r).data(), m.row(r).data() + m.cols());
    a.push_back(row);
  }
  return a;
}

Matrix matrix_from_rows(const io::Json& a, Eigen::Index rows, Eigen::Index cols) {
  require(a.is_array() && static_cast<Eigen::Index>(a.size()) == rows, ErrorKind::Data, "model header: bad matrix");
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto row = a[static_cast<std::size_t>(r)].get<std::vector<double>>();
    require(static_cast<Eigen::Index>(row.size()) == cols, ErrorKind::Data, "model header: bad matrix row");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)];
  }
  return m;
}

std::string serialize(const TqfModel& m) {
  io::Json h;
  h["d"] = m.dim();
  h["p"] = m.num_covariates();
  h["config"] = io::to_json(m.config());
  h["target_means"] = std::vector<double>(m.scaler().means.begin(), m.scaler().means.end());
  h["target_sds"] = std::vector<double>(m.scaler().sds.begin(), m.scaler().sds.end());
  io::Json orth = io::Json::array();
  for (const auto& O : m.orthogonals()) orth.push_back(matrix_rows(O));
  h["orthogonals"] = orth;
  h["frequency_scheme"] = to_string(m.qrf().spec.scheme);
  h["frequencies"] = m.qrf().spec.w;
  h["component_means"] = m.qrf().scaler.means;
  h["component_sds"] = m.qrf().scaler.sds;
  const std::string header = h.dump();

  std::ostringstream os(std::ios::binary);
  os.write(kMagic, sizeof kMagic);
  detail::write_pod(os, kVersion);
  detail::write_pod(os, kProbe);
  detail::write_pod<std::uint64_t>(os, header.size());
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  m.qrf().forest.write(os);
  std::string bytes = os.str();
  const std::uint64_t hash = fnv1a64(bytes);
  bytes.append(reinterpret_cast<const char*>(&hash), sizeof hash);
  return bytes;
}

}  // namespace

void TqfModel::write(std::ostream& os) const {
  const std::string bytes = serialize(*this);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(os), ErrorKind::Data, "failed writing model");
}

TqfModel TqfModel::read(std::istream& is) {
  const std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  require(bytes.size() >= sizeof kMagic + 16 + sizeof(std::uint64_t), ErrorKind::Data, "model file is truncated");
  require(std::equal(kMagic, kMagic + sizeof kMagic, bytes.begin()), ErrorKind::Data, "not a model file (bad magic)");
  const std::string_view body(bytes.data(), bytes.size() - sizeof(std::uint64_t));
  std::uint64_t stored = 0;
  std::memcpy(&stored, bytes.data() + body.size(), sizeof stored);

  std::istringstream in(std::string(body), std::ios::binary);
  in.ignore(sizeof kMagic);
  const auto version = detail::read_pod<std::uint32_t>(in);
  const auto probe = detail::read_pod<std::uint32_t>(in);
  require(probe == kProbe, ErrorKind::Data, "model file was written with a different byte order");
  require(version == kVersion, ErrorKind::Data, "unsupported model file version " + std::to_string(version));
  require(fnv1a64(body) == stored, ErrorKind::Data, "model file checksum mismatch");

  const std::size_t header_len = detail::read_count(in, 1);
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  require(static_cast<std::size_t>(in.gcount()) == header_len, ErrorKind::Data, "model file is truncated");

  TqfModel m;
  try {
    const auto h = io::Json::parse(header);
    m.d_ = h.at("d").get<int>();
    m.p_ = h.at("p").get<int>();
    require(m.d_ >= 1 && m.p_ >= 0, ErrorKind::Data, "model header: bad dimensions");
    m.config_ = io::tqf_config_from_json(h.at("config"));
    const auto means = h.at("target_means").get<std::vector<double>>();
    const auto sds = h.at("target_sds").get<std::vector<double>>();
    require(means.size() == static_cast<std::size_t>(m.d_) && sds.size() == means.size(), ErrorKind::Data,
            "model header: bad target scaler");
    m.scaler_.means = Eigen::Map<const Vector>(means.data(), m.d_);
    m.scaler_.sds = Eigen::Map<const Vector>(sds.data(), m.d_);
    for (const auto& o : h.at("orthogonals")) m.orthogonals_.push_back(matrix_from_rows(o, m.d_, m.d_));
    require(m.orthogonals_.size() + 1 == static_cast<std::size_t>(m.config_.G_tilde), ErrorKind::Data,
            "model header: orthogonal count does not match G_tilde");
    m.qrf_.spec.scheme = frequency_scheme_from_string(h.at("frequency_scheme").get<std::string>());
    m.qrf_.spec.w = h.at("frequencies").get<std::vector<double>>();
    m.qrf_.scaler.means = h.at("component_means").get<std::vector<double>>();
    m.qrf_.scaler.sds = h.at("component_sds").get<std::vector<double>>();
  } catch (const io::Json::exception& e) {
    fail(ErrorKind::Data, std::string("model header: ") + e.what());
  }
  m.qrf_.forest = QuantileForestModel::read(in);
  require(m.qrf_.forest.num_features() == m.feature_width(), ErrorKind::Data,
          "model feature width mismatch: expected " + std::to_string(m.feature_width()) + ", found " +
              std::to_string(m.qrf_.forest.num_features()));
  require(in.peek() == std::char_traits<char>::eof(), ErrorKind::Data, "trailing bytes in model file");
  return m;
}

void TqfModel::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), ErrorKind::Data, "cannot write model file '" + path + "'");
  write(os);
}

TqfModel TqfModel::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorKind::Data, "cannot open model file '" + path + "'");
  return read(is);
}

std::string TqfModel::hash() const {
  const std::string bytes = serialize(*this);
  std::uint64_t h = 0;
  std::memcpy(&h, bytes.data() + bytes.size() - sizeof h, sizeof h);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace tqf
