#include "tqf/tqf.h"

#include "tqf/bench.hpp"
#include "tqf/io.hpp"
#include "tqf/metrics.hpp"

#include <spdlog/spdlog.h>

#include <cstring>
#include <new>

struct tqf_model {
  tqf::TqfModel model;
};
struct tqf_slices {
  tqf::DirectionalQuantileSet slices;
};
struct tqf_cloud {
  tqf::WeightedPointCloud cloud;
};

namespace {

using tqf::ErrorKind;
using tqf::io::Json;

thread_local std::string g_last_error;

int set_error(int code, const std::string& msg) {
  g_last_error = msg;
  return code;
}

// Runs `f`, mapping exceptions to status codes.
template <class F>
int guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return TQF_OK;
  } catch (const tqf::Error& e) {
    return set_error(static_cast<int>(e.kind()), e.what());
  } catch (const Json::exception& e) {
    return set_error(TQF_ERR_USAGE, std::string("invalid JSON argument: ") + e.what());
  } catch (const std::bad_alloc&) {
    return set_error(TQF_ERR_NUMERICAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(TQF_ERR_DATA, e.what());
  }
}

void need(const void* p, const char* what) { tqf::require(p != nullptr, ErrorKind::Usage, std::string(what) + " is null"); }

void check_covariates(const tqf::TqfModel& m, const double* x, size_t p) {
  tqf::require(p == 0 || x != nullptr, ErrorKind::Usage, "covariates are null");
  tqf::require(p == static_cast<size_t>(m.num_covariates()), ErrorKind::Data,
               "covariate count mismatch: model expects " + std::to_string(m.num_covariates()) + ", found " +
                   std::to_string(p));
}

Json parse_arg(const char* text, const char* what) {
  if (text == nullptr || *text == '\0') return Json::object();
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    tqf::fail(ErrorKind::Usage, std::string(what) + ": parse error at byte " + std::to_string(e.byte));
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void put_string(char** out, const std::string& s) {
  if (out != nullptr) *out = dup_string(s);
}

Json report_json(const tqf::QmemReport& r) {
  return Json{{"location_loss", r.location_loss},
              {"alternation_losses", r.alternation_losses},
              {"accepted_alternations", r.accepted_alternations},
              {"final_kde_factor", r.final_kde_factor},
              {"member_losses", r.member_losses},
              {"mean_member_loss", r.mean_member_loss},
              {"union_loss", r.union_loss},
              {"union_jensen_ok", r.union_jensen_ok},
              {"merge_repaired", r.merge_repaired},
              {"merged_loss", r.merged_loss},
              {"jensen_ok", r.jensen_ok},
              {"merged_size", r.merged_size},
              {"pruned_size", r.pruned_size},
              {"pruned_loss", r.pruned_loss},
              {"seconds", r.seconds}};
}

tqf::CsvOptions csv_options(const Json& j) {
  tqf::CsvOptions o;
  for (const auto& [key, value] : j.items()) {
    if (key == "features") {
      o.features = value.get<std::vector<std::string>>();
    } else if (key == "targets") {
      o.targets = value.get<std::vector<std::string>>();
    } else if (key == "transforms") {
      for (const auto& [col, t] : value.items()) o.transforms[col] = tqf::column_transform_from_string(t.get<std::string>());
    } else {
      tqf::fail(ErrorKind::Usage, "unknown CSV option '" + key + "'");
    }
  }
  return o;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

extern "C" {

const char* tqf_version(void) { return "1.0.0"; }

const char* tqf_last_error(void) { return g_last_error.c_str(); }

void tqf_string_free(char* s) { std::free(s); }

int tqf_set_log_level(const char* level) {
  return guarded([&] {
    need(level, "level");
    const auto lv = spdlog::level::from_str(level);
    // from_str maps unknown names to off; only accept that for "off" itself.
    tqf::require(lv != spdlog::level::off || std::strcmp(level, "off") == 0, ErrorKind::Usage,
                 std::string("unknown log level '") + level + "'");
    spdlog::set_level(lv);
  });
}

int tqf_generate_csv(const char* spec_json, const char* out_path) {
  return guarded([&] {
    need(out_path, "output path");
    const auto spec = tqf::io::generator_spec_from_json(parse_arg(spec_json, "generator spec"));
    const auto data = tqf::generate(spec);
    tqf::save_csv(data, out_path);
    spdlog::info("gen: {} rows of {} (seed {}) -> {}", data.rows(), spec.name, spec.seed, out_path);
  });
}

int tqf_generator_names(char** out_json) {
  return guarded([&] { put_string(out_json, Json(tqf::generator_names()).dump()); });
}

int tqf_model_train(const char* csv_path, const char* csv_json, const char* config_json, uint64_t seed,
                    tqf_model** out) {
  return guarded([&] {
    need(csv_path, "CSV path");
    need(out, "output handle");
    const auto options = csv_options(parse_arg(csv_json, "CSV options"));
    const auto config = tqf::io::tqf_config_from_json(parse_arg(config_json, "model config"));
    const auto data = tqf::load_csv(csv_path, options);
    auto m = std::make_unique<tqf_model>();
    m->model = tqf::TqfModel::fit(data, config, tqf::RngStream(seed, 11));
    *out = m.release();
  });
}

int tqf_model_load(const char* path, tqf_model** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "output handle");
    auto m = std::make_unique<tqf_model>();
    m->model = tqf::TqfModel::load(path);
    *out = m.release();
  });
}

int tqf_model_save(const tqf_model* model, const char* path) {
  return guarded([&] {
    need(model, "model");
    need(path, "path");
    model->model.save(path);
  });
}

void tqf_model_free(tqf_model* model) { delete model; }

int tqf_model_hash(const tqf_model* model, char out[17]) {
  return guarded([&] {
    need(model, "model");
    need(out, "output buffer");
    const std::string h = model->model.hash();
    std::memcpy(out, h.c_str(), 17);
  });
}

int tqf_model_dims(const tqf_model* model, int* d, int* p) {
  return guarded([&] {
    need(model, "model");
    if (d) *d = model->model.dim();
    if (p) *p = model->model.num_covariates();
  });
}

int tqf_model_info(const tqf_model* model, char** out_json) {
  return guarded([&] {
    need(model, "model");
    const auto& m = model->model;
    Json j{{"d", m.dim()},
           {"p", m.num_covariates()},
           {"feature_width", m.feature_width()},
           {"config", tqf::io::to_json(m.config())},
           {"target_means", std::vector<double>(m.scaler().means.data(), m.scaler().means.data() + m.dim())},
           {"target_sds", std::vector<double>(m.scaler().sds.data(), m.scaler().sds.data() + m.dim())},
           {"frequencies", m.qrf().spec.w},
           {"hash", m.hash()}};
    put_string(out_json, j.dump(2));
  });
}

int tqf_model_slices(const tqf_model* model, const double* x, size_t p, int K, int M, uint64_t seed,
                     tqf_slices** out) {
  return guarded([&] {
    need(model, "model");
    need(out, "output handle");
    check_covariates(model->model, x, p);
    tqf::require(K >= 1 && M >= 1, ErrorKind::Usage, "K and M must be positive");
    const std::vector<double> xv(x, x + p);
    tqf::RngStream rng(seed, 8);
    auto s = std::make_unique<tqf_slices>();
    s->slices = model->model.target_unit_slices(xv, K, tqf::midpoint_levels(M), rng);
    *out = s.release();
  });
}

int tqf_model_predict(const tqf_model* model, const double* x, size_t p, const char* qmem_json, uint64_t seed,
                      tqf_cloud** out, char** report_json_out) {
  return guarded([&] {
    need(model, "model");
    need(out, "output handle");
    check_covariates(model->model, x, p);
    const auto q = tqf::io::qmem_config_from_json(parse_arg(qmem_json, "QMEM config"));
    const std::vector<double> xv(x, x + p);
    auto r = model->model.predict_distribution(xv, q, tqf::RngStream(seed, 7));
    auto c = std::make_unique<tqf_cloud>();
    c->cloud = std::move(r.cloud);
    put_string(report_json_out, report_json(r.report).dump(2));
    *out = c.release();
  });
}

int tqf_slices_load(const char* path, tqf_slices** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "output handle");
    auto s = std::make_unique<tqf_slices>();
    s->slices = tqf::io::load_slices(path);
    *out = s.release();
  });
}

int tqf_slices_save(const tqf_slices* s, const char* path, const char* provenance_json) {
  return guarded([&] {
    need(s, "slices");
    need(path, "path");
    tqf::io::save_slices(path, s->slices, parse_arg(provenance_json, "provenance"));
  });
}

void tqf_slices_free(tqf_slices* s) { delete s; }

int tqf_slices_dims(const tqf_slices* s, int* d, int* K, int* M) {
  return guarded([&] {
    need(s, "slices");
    if (d) *d = s->slices.dim();
    if (K) *K = s->slices.num_directions();
    if (M) *M = s->slices.num_levels();
  });
}

int tqf_slices_from_cloud(const tqf_cloud* c, int K, int M, uint64_t seed, tqf_slices** out) {
  return guarded([&] {
    need(c, "cloud");
    need(out, "output handle");
    tqf::require(K >= 1 && M >= 1, ErrorKind::Usage, "K and M must be positive");
    tqf::RngStream rng(seed, 1);
    const tqf::Matrix dirs = tqf::sample_directions(rng, static_cast<int>(c->cloud.dim()), K);
    auto s = std::make_unique<tqf_slices>();
    s->slices = tqf::slices_from_cloud(c->cloud, dirs, tqf::midpoint_levels(M));
    *out = s.release();
  });
}

int tqf_qmem(const tqf_slices* s, const char* qmem_json, uint64_t seed, tqf_cloud** out, char** report_json_out) {
  return guarded([&] {
    need(s, "slices");
    need(out, "output handle");
    const auto q = tqf::io::qmem_config_from_json(parse_arg(qmem_json, "QMEM config"));
    auto r = tqf::reconstruct(s->slices, q, tqf::RngStream(seed, 2));
    auto c = std::make_unique<tqf_cloud>();
    c->cloud = std::move(r.cloud);
    put_string(report_json_out, report_json(r.report).dump(2));
    *out = c.release();
  });
}

int tqf_cloud_load(const char* path, tqf_cloud** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "output handle");
    auto c = std::make_unique<tqf_cloud>();
    c->cloud = tqf::io::load_cloud(path);
    *out = c.release();
  });
}

int tqf_cloud_load_csv(const char* path, tqf_cloud** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "output handle");
    auto c = std::make_unique<tqf_cloud>();
    c->cloud = tqf::io::load_sample_csv(path);
    *out = c.release();
  });
}

int tqf_cloud_load_any(const char* path, tqf_cloud** out) {
  if (path == nullptr) return set_error(TQF_ERR_USAGE, "path is null");
  return ends_with(path, ".json") ? tqf_cloud_load(path, out) : tqf_cloud_load_csv(path, out);
}

int tqf_cloud_from_points(const double* points, const double* weights, size_t J, size_t d, tqf_cloud** out) {
  return guarded([&] {
    need(points, "points");
    need(out, "output handle");
    tqf::require(J >= 1 && d >= 1, ErrorKind::Usage, "cloud needs at least one point and one coordinate");
    tqf::Matrix P = Eigen::Map<const tqf::Matrix>(points, static_cast<Eigen::Index>(J), static_cast<Eigen::Index>(d));
    auto c = std::make_unique<tqf_cloud>();
    if (weights == nullptr) {
      c->cloud = tqf::WeightedPointCloud::uniform(std::move(P));
    } else {
      c->cloud.points = std::move(P);
      c->cloud.weights = Eigen::Map<const tqf::Vector>(weights, static_cast<Eigen::Index>(J));
    }
    c->cloud.validate();
    *out = c.release();
  });
}

int tqf_cloud_save(const tqf_cloud* c, const char* path, const char* provenance_json) {
  return guarded([&] {
    need(c, "cloud");
    need(path, "path");
    tqf::io::save_cloud(path, c->cloud, parse_arg(provenance_json, "provenance"));
  });
}

void tqf_cloud_free(tqf_cloud* c) { delete c; }

int tqf_cloud_dims(const tqf_cloud* c, size_t* J, size_t* d) {
  return guarded([&] {
    need(c, "cloud");
    if (J) *J = static_cast<size_t>(c->cloud.size());
    if (d) *d = static_cast<size_t>(c->cloud.dim());
  });
}

int tqf_cloud_copy(const tqf_cloud* c, double* points, double* weights) {
  return guarded([&] {
    need(c, "cloud");
    if (points) std::memcpy(points, c->cloud.points.data(), sizeof(double) * static_cast<size_t>(c->cloud.points.size()));
    if (weights) std::memcpy(weights, c->cloud.weights.data(), sizeof(double) * static_cast<size_t>(c->cloud.size()));
  });
}

int tqf_cloud_kde_grid(const tqf_cloud* c, const char* path, int cells) {
  return guarded([&] {
    need(c, "cloud");
    need(path, "path");
    tqf::require(c->cloud.dim() == 2, ErrorKind::Usage, "KDE grids are only emitted for two-dimensional clouds");
    tqf::require(cells >= 2, ErrorKind::Usage, "grid needs at least 2 cells per axis");
    tqf::io::save_kde_grid(path, tqf::KdeModel::fit(c->cloud), cells);
  });
}

int tqf_score(const tqf_cloud* pred, const tqf_cloud* ref, const char* options_json, char** out_json) {
  return guarded([&] {
    need(pred, "prediction");
    need(ref, "reference");
    const Json opt = parse_arg(options_json, "score options");
    std::vector<std::string> metrics = {"ed", "es", "sw1", "nll"};
    int n_dirs = 200;
    std::uint64_t seed = 0;
    for (const auto& [key, value] : opt.items()) {
      if (key == "metrics") metrics = value.get<std::vector<std::string>>();
      else if (key == "directions") n_dirs = value.get<int>();
      else if (key == "seed") seed = value.get<std::uint64_t>();
      else tqf::fail(ErrorKind::Usage, "unknown score option '" + key + "'");
    }
    const auto& P = pred->cloud;
    const auto& R = ref->cloud;
    tqf::require(P.dim() == R.dim(), ErrorKind::Data,
                 "dimension mismatch: prediction has " + std::to_string(P.dim()) + " coordinates, reference " +
                     std::to_string(R.dim()));
    Json rep{{"pred_size", P.size()}, {"ref_size", R.size()}, {"d", P.dim()}};
    for (const auto& m : metrics) {
      if (m == "ed") {
        rep["ed"] = tqf::energy_distance(P, R);
      } else if (m == "es") {
        const auto rows = tqf::energy_scores(R.points, P);
        double mean = 0.0;
        for (std::size_t i = 0; i < rows.size(); ++i) mean += R.weights[static_cast<Eigen::Index>(i)] * rows[i];
        rep["es"] = {{"mean", mean}, {"per_row", rows}};
      } else if (m == "crps") {
        tqf::require(P.dim() == 1, ErrorKind::Usage, "CRPS needs one-dimensional targets");
        const tqf::Vector e1 = tqf::Vector::Ones(1);
        const auto proj = tqf::project(P, e1);
        std::vector<double> rows(static_cast<std::size_t>(R.size()));
        double mean = 0.0;
        for (Eigen::Index i = 0; i < R.size(); ++i) {
          rows[static_cast<std::size_t>(i)] = tqf::crps(R.points(i, 0), proj);
          mean += R.weights[i] * rows[static_cast<std::size_t>(i)];
        }
        rep["crps"] = {{"mean", mean}, {"per_row", rows}};
      } else if (m == "sw1") {
        tqf::require(n_dirs >= 1, ErrorKind::Usage, "directions must be positive");
        tqf::RngStream rng(seed, 3);
        const tqf::Matrix dirs = tqf::sample_directions(rng, static_cast<int>(P.dim()), n_dirs);
        rep["sw1"] = {{"value", tqf::sliced_w1(P, R, dirs)}, {"directions", n_dirs}, {"seed", seed}};
      } else if (m == "nll") {
        const auto kde = tqf::KdeModel::fit(P);
        double mean = 0.0;
        for (Eigen::Index i = 0; i < R.size(); ++i) mean -= R.weights[i] * kde.log_density(R.points.row(i).transpose());
        rep["nll"] = {{"mean", mean}, {"kde_factor", kde.factor}};
      } else {
        tqf::fail(ErrorKind::Usage, "unknown metric '" + m + "' (expected ed, es, crps, sw1 or nll)");
      }
    }
    put_string(out_json, rep.dump(2));
  });
}

int tqf_benchmark_names(char** out_json) {
  return guarded([&] { put_string(out_json, Json(tqf::bench::benchmark_names()).dump()); });
}

int tqf_benchmark(const char* name, const char* options_json, char** report_text, char** report_json_out,
                  int* all_pass) {
  return guarded([&] {
    need(name, "benchmark name");
    const Json j = parse_arg(options_json, "benchmark options");
    tqf::bench::Options o;
    for (const auto& [key, value] : j.items()) {
      if (key == "seeds") o.seeds = value.get<int>();
      else if (key == "base_seed") o.base_seed = value.get<std::uint64_t>();
      else if (key == "quick") o.quick = value.get<bool>();
      else if (key == "resume_dir") o.resume_dir = value.get<std::string>();
      else if (key == "csv") o.csv_path = value.get<std::string>();
      else tqf::fail(ErrorKind::Usage, "unknown benchmark option '" + key + "'");
    }
    const auto rep = tqf::bench::run_benchmark(name, o);
    Json verdicts = Json::array();
    for (const auto& v : rep.verdicts) verdicts.push_back({{"name", v.name}, {"pass", v.pass}, {"detail", v.detail}});
    const Json out{{"name", rep.name}, {"columns", rep.columns}, {"rows", rep.rows}, {"verdicts", verdicts},
                   {"data", rep.data}};
    put_string(report_text, rep.text());
    put_string(report_json_out, out.dump(2));
    if (all_pass) *all_pass = rep.all_pass() ? 1 : 0;
  });
}

}  // extern "C"
