#include "tqf/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace tqf::io {

namespace {

void reject_unknown(const Json& j, const std::set<std::string>& known, const std::string& what) {
  require(j.is_object(), ErrorKind::Usage, what + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    require(known.count(key) > 0, ErrorKind::Usage, "unknown key '" + key + "' in " + what);
  }
}

template <class T>
void take(const Json& j, const char* key, T& out, const std::string& what) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const Json::exception&) {
    fail(ErrorKind::Usage, "bad value for '" + std::string(key) + "' in " + what);
  }
}

Json rows_json(const Matrix& m) {
  Json a = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(std::vector<double>(m.row(r).data(), m.row(r).data() + m.cols()));
  return a;
}

Matrix rows_matrix(const Json& a, std::size_t rows, std::size_t cols, const std::string& what) {
  require(a.is_array() && a.size() == rows, ErrorKind::Data, what + ": expected " + std::to_string(rows) + " rows");
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    const auto& row = a[r];
    require(row.is_array() && row.size() == cols, ErrorKind::Data,
            what + ": row " + std::to_string(r) + " does not have " + std::to_string(cols) + " entries");
    for (std::size_t c = 0; c < cols; ++c) {
      require(row[c].is_number(), ErrorKind::Data, what + ": non-numeric entry");
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c].get<double>();
    }
  }
  return m;
}

std::size_t size_field(const Json& j, const char* key, const std::string& what) {
  require(j.contains(key) && j.at(key).is_number_integer() && j.at(key).get<long long>() >= 0, ErrorKind::Data,
          what + ": missing or invalid '" + key + "'");
  return j.at(key).get<std::size_t>();
}

}  // namespace

Json to_json(const ForestConfig& c) {
  return Json{{"n_trees", c.n_trees},     {"min_samples_leaf", c.min_samples_leaf}, {"max_features", c.max_features},
              {"bootstrap", c.bootstrap}, {"seed", c.seed},                         {"n_threads", c.n_threads}};
}

ForestConfig forest_config_from_json(const Json& j) {
  const std::string what = "forest config";
  reject_unknown(j, {"n_trees", "min_samples_leaf", "max_features", "bootstrap", "seed", "n_threads"}, what);
  ForestConfig c;
  take(j, "n_trees", c.n_trees, what);
  take(j, "min_samples_leaf", c.min_samples_leaf, what);
  take(j, "max_features", c.max_features, what);
  take(j, "bootstrap", c.bootstrap, what);
  take(j, "seed", c.seed, what);
  take(j, "n_threads", c.n_threads, what);
  c.validate();
  return c;
}

Json to_json(const QmemConfig& c) {
  return Json{{"N0", c.N0},
              {"N1", c.N1},
              {"E", c.E},
              {"max_alternations", c.max_alternations},
              {"rel_tol", c.rel_tol},
              {"solver_budget", c.solver_budget},
              {"prune_stride", c.prune_stride},
              {"n_threads", c.n_threads}};
}

QmemConfig qmem_config_from_json(const Json& j) {
  const std::string what = "qmem config";
  reject_unknown(j, {"N0", "N1", "E", "max_alternations", "rel_tol", "solver_budget", "prune_stride", "n_threads"},
                 what);
  QmemConfig c;
  take(j, "N0", c.N0, what);
  take(j, "N1", c.N1, what);
  take(j, "E", c.E, what);
  take(j, "max_alternations", c.max_alternations, what);
  take(j, "rel_tol", c.rel_tol, what);
  take(j, "solver_budget", c.solver_budget, what);
  take(j, "prune_stride", c.prune_stride, what);
  take(j, "n_threads", c.n_threads, what);
  c.validate();
  return c;
}

Json to_json(const TqfConfig& c) {
  return Json{{"G", c.G},
              {"G_tilde", c.G_tilde},
              {"scheme", to_string(c.scheme)},
              {"T", c.T},
              {"explicit_w", c.explicit_w},
              {"frequency_cap", c.frequency_cap},
              {"forest", to_json(c.forest)},
              {"K", c.K},
              {"levels", c.levels}};
}

TqfConfig tqf_config_from_json(const Json& j) {
  const std::string what = "tqf config";
  reject_unknown(j, {"G", "G_tilde", "scheme", "T", "explicit_w", "frequency_cap", "forest", "K", "levels", "M"},
                 what);
  TqfConfig c;
  take(j, "G", c.G, what);
  take(j, "G_tilde", c.G_tilde, what);
  if (j.contains("scheme")) {
    std::string s;
    take(j, "scheme", s, what);
    c.scheme = frequency_scheme_from_string(s);
  }
  take(j, "T", c.T, what);
  take(j, "explicit_w", c.explicit_w, what);
  take(j, "frequency_cap", c.frequency_cap, what);
  if (j.contains("forest")) c.forest = forest_config_from_json(j.at("forest"));
  take(j, "K", c.K, what);
  require(!(j.contains("levels") && j.contains("M")), ErrorKind::Usage, "give either 'levels' or 'M', not both");
  if (j.contains("M")) {
    int M = 0;
    take(j, "M", M, what);
    require(M >= 1, ErrorKind::Usage, "M must be >= 1");
    c.levels = midpoint_levels(M);
  }
  take(j, "levels", c.levels, what);
  if (c.scheme == FrequencyScheme::Explicit && !j.contains("T")) c.T = static_cast<int>(c.explicit_w.size());
  c.validate();
  return c;
}

Json to_json(const GeneratorSpec& g) {
  Json params = Json::object();
  for (const auto& [k, v] : g.params) params[k] = v;
  return Json{{"name", g.name}, {"n", g.n}, {"seed", g.seed}, {"params", params}};
}

GeneratorSpec generator_spec_from_json(const Json& j) {
  const std::string what = "generator spec";
  reject_unknown(j, {"name", "n", "seed", "params"}, what);
  GeneratorSpec g;
  take(j, "name", g.name, what);
  take(j, "n", g.n, what);
  take(j, "seed", g.seed, what);
  take(j, "params", g.params, what);
  require(!g.name.empty(), ErrorKind::Usage, "generator spec needs a 'name'");
  return g;
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Data, "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return Json::parse(ss.str());
  } catch (const Json::parse_error& e) {
    fail(ErrorKind::Data, path + ": parse error at byte " + std::to_string(e.byte) + ": " + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  require(f != nullptr, ErrorKind::Data, "cannot write '" + path + "'");
  const bool ok = std::fwrite(text.data(), 1, text.size(), f) == text.size();
  std::fclose(f);
  require(ok, ErrorKind::Data, "failed writing '" + path + "'");
}

// ---------------------------------------------------------------------------
// Slice and cloud files

Json slices_to_json(const DirectionalQuantileSet& s, const Json& provenance) {
  s.validate();
  return Json{{"format", "tqf-slices"},
              {"version", 1},
              {"d", s.dim()},
              {"K", s.num_directions()},
              {"M", s.num_levels()},
              {"directions", rows_json(s.directions)},
              {"levels", s.levels},
              {"values", rows_json(s.values)},
              {"provenance", provenance}};
}

DirectionalQuantileSet slices_from_json(const Json& j) {
  const std::string what = "slice file";
  require(j.is_object() && j.value("format", "") == "tqf-slices", ErrorKind::Data, what + ": not a slice file");
  require(j.value("version", 0) == 1, ErrorKind::Data, what + ": unsupported version");
  const std::size_t d = size_field(j, "d", what);
  const std::size_t K = size_field(j, "K", what);
  const std::size_t M = size_field(j, "M", what);
  DirectionalQuantileSet s;
  require(j.contains("directions") && j.contains("levels") && j.contains("values"), ErrorKind::Data,
          what + ": missing directions, levels or values");
  s.directions = rows_matrix(j.at("directions"), K, d, what + " directions");
  s.values = rows_matrix(j.at("values"), K, M, what + " values");
  const auto& lv = j.at("levels");
  require(lv.is_array() && lv.size() == M, ErrorKind::Data, what + ": expected " + std::to_string(M) + " levels");
  for (const auto& v : lv) {
    require(v.is_number(), ErrorKind::Data, what + ": non-numeric level");
    s.levels.push_back(v.get<double>());
  }
  s.validate();
  return s;
}

void save_slices(const std::string& path, const DirectionalQuantileSet& s, const Json& provenance) {
  write_text_file(path, slices_to_json(s, provenance).dump(1) + "\n");
}

DirectionalQuantileSet load_slices(const std::string& path) {
  try {
    return slices_from_json(read_json_file(path));
  } catch (const Error& e) {
    const std::string msg = e.what();
    throw Error(e.kind(), msg.rfind(path, 0) == 0 ? msg : path + ": " + msg);
  }
}

Json cloud_to_json(const WeightedPointCloud& c, const Json& provenance) {
  c.validate(1e-6);
  return Json{{"format", "tqf-cloud"},
              {"version", 1},
              {"d", c.dim()},
              {"J", c.size()},
              {"points", rows_json(c.points)},
              {"weights", std::vector<double>(c.weights.data(), c.weights.data() + c.weights.size())},
              {"provenance", provenance}};
}

WeightedPointCloud cloud_from_json(const Json& j) {
  const std::string what = "cloud file";
  require(j.is_object() && j.value("format", "") == "tqf-cloud", ErrorKind::Data, what + ": not a cloud file");
  require(j.value("version", 0) == 1, ErrorKind::Data, what + ": unsupported version");
  const std::size_t d = size_field(j, "d", what);
  const std::size_t J = size_field(j, "J", what);
  require(J >= 1 && d >= 1, ErrorKind::Data, what + ": empty cloud");
  WeightedPointCloud c;
  require(j.contains("points") && j.contains("weights"), ErrorKind::Data, what + ": missing points or weights");
  c.points = rows_matrix(j.at("points"), J, d, what + " points");
  const auto& w = j.at("weights");
  require(w.is_array() && w.size() == J, ErrorKind::Data, what + ": expected " + std::to_string(J) + " weights");
  c.weights.resize(static_cast<Eigen::Index>(J));
  for (std::size_t i = 0; i < J; ++i) {
    require(w[i].is_number(), ErrorKind::Data, what + ": non-numeric weight");
    c.weights[static_cast<Eigen::Index>(i)] = w[i].get<double>();
  }
  require((c.weights.array() >= 0.0).all() && c.weights.allFinite(), ErrorKind::Data,
          what + ": weights must be finite and nonnegative");
  const double total = c.weights.sum();
  require(std::abs(total - 1.0) <= 1e-6, ErrorKind::Data, what + ": weights sum to " + std::to_string(total));
  // Sums already at rounding level are left untouched so files round-trip
  // byte for byte.
  if (std::abs(total - 1.0) > 1e-12) c.weights /= total;
  c.validate(1e-9);
  return c;
}

void save_cloud(const std::string& path, const WeightedPointCloud& c, const Json& provenance) {
  write_text_file(path, cloud_to_json(c, provenance).dump(1) + "\n");
}

WeightedPointCloud load_cloud(const std::string& path) {
  try {
    return cloud_from_json(read_json_file(path));
  } catch (const Error& e) {
    const std::string msg = e.what();
    throw Error(e.kind(), msg.rfind(path, 0) == 0 ? msg : path + ": " + msg);
  }
}

Json load_cloud_provenance(const std::string& path) {
  const Json j = read_json_file(path);
  return j.value("provenance", Json::object());
}

void save_kde_grid(const std::string& path, const KdeModel& kde, int cells) {
  require(kde.dim() == 2, ErrorKind::Usage, "density grids need two-dimensional targets");
  require(cells >= 2, ErrorKind::Usage, "grid needs at least 2 cells per axis");
  const Eigen::RowVector2d lo = kde.support.colwise().minCoeff();
  const Eigen::RowVector2d hi = kde.support.colwise().maxCoeff();
  const double pad_x = 3.0 * std::sqrt(kde.kernel_cov(0, 0));
  const double pad_y = 3.0 * std::sqrt(kde.kernel_cov(1, 1));
  const double x0 = lo[0] - pad_x, x1 = hi[0] + pad_x;
  const double y0 = lo[1] - pad_y, y1 = hi[1] + pad_y;
  std::string out = "x,y,density\n";
  char buf[96];
  Vector p(2);
  for (int i = 0; i < cells; ++i) {
    p[0] = x0 + (x1 - x0) * i / (cells - 1);
    for (int k = 0; k < cells; ++k) {
      p[1] = y0 + (y1 - y0) * k / (cells - 1);
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", p[0], p[1], std::exp(kde.log_density(p)));
      out += buf;
    }
  }
  write_text_file(path, out);
}

WeightedPointCloud load_sample_csv(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Data, "cannot open CSV file '" + path + "'");
  std::string header;
  require(static_cast<bool>(std::getline(in, header)), ErrorKind::Data, path + ": empty file");
  if (header.size() >= 3 && header.compare(0, 3, "\xEF\xBB\xBF") == 0) header.erase(0, 3);
  if (!header.empty() && header.back() == '\r') header.pop_back();
  CsvOptions opt;
  std::stringstream ss(header);
  std::string col;
  while (std::getline(ss, col, ',')) {
    if (col.size() >= 2 && col.front() == '"' && col.back() == '"') col = col.substr(1, col.size() - 2);
    opt.targets.push_back(col);
  }
  return WeightedPointCloud::uniform(load_csv(path, opt).Y);
}

void save_sample_csv(const std::string& path, const Matrix& points, const std::vector<std::string>& names) {
  Dataset d;
  d.X.resize(points.rows(), 0);
  d.Y = points;
  if (names.empty()) {
    for (Eigen::Index c = 1; c <= points.cols(); ++c) d.target_names.push_back("y" + std::to_string(c));
  } else {
    d.target_names = names;
  }
  save_csv(d, path);
}

}  // namespace tqf::io
