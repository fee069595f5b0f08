#include "tqf/datasets.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace tqf {

void Dataset::validate() const {
  require(X.rows() == Y.rows(), ErrorKind::Data, "dataset: feature and target row counts differ");
  require(static_cast<std::size_t>(X.cols()) == feature_names.size(), ErrorKind::Data,
          "dataset: feature names do not match feature columns");
  require(static_cast<std::size_t>(Y.cols()) == target_names.size(), ErrorKind::Data,
          "dataset: target names do not match target columns");
  require(X.allFinite() && Y.allFinite(), ErrorKind::Data, "dataset: non-finite entries");
}

const std::vector<std::string>& generator_names() {
  static const std::vector<std::string> names = {"qrfpp_a",    "qrfpp_b",    "qrfpp_c",     "qrfpp_d",
                                                 "two_moons",  "rect_rotor", "seven_rotor", "sliding_disk"};
  return names;
}

long default_size(const std::string& name) {
  if (name == "qrfpp_a") return 1500;
  if (name == "qrfpp_b") return 3000;
  if (name == "qrfpp_c") return 3500;
  if (name == "qrfpp_d") return 1700;
  if (name == "two_moons") return 5000;
  if (name == "rect_rotor" || name == "seven_rotor") return 20000;
  if (name == "sliding_disk") return 30;
  fail(ErrorKind::Usage, "unknown generator name '" + name + "'");
}

namespace {

constexpr double kMoonNoise = 0.1;
constexpr double kRectNoise = 0.08;
constexpr double kBimodalMu = 0.95;

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

std::vector<std::string> numbered(const char* prefix, Eigen::Index count) {
  std::vector<std::string> out;
  for (Eigen::Index i = 1; i <= count; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

int int_param(const GeneratorSpec& spec, const std::string& key, int fallback) {
  const auto it = spec.params.find(key);
  if (it == spec.params.end()) return fallback;
  const double v = it->second;
  require(v >= 1.0 && v == std::floor(v), ErrorKind::Usage, "generator parameter '" + key + "' must be a positive integer");
  return static_cast<int>(v);
}

double qrfpp_draw(const std::string& name, double x, RngStream& rng) {
  if (name == "qrfpp_a") return (x < 0.0 ? 1.0 : 3.0) * rng.normal();
  if (name == "qrfpp_b") {
    if (x < 0.0) return rng.normal();
    const double sigma = std::sqrt(1.0 - kBimodalMu * kBimodalMu);
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    return sign * kBimodalMu + sigma * rng.normal();
  }
  if (name == "qrfpp_c") {
    const double h = (x + 2.5) * (x + 2.5);
    return rng.uniform(-h, h);
  }
  // qrfpp_d: 1 - Exp(1) left of zero, Exp(1) - 1 right of it.
  const double e = -std::log1p(-rng.uniform());
  return x < 0.0 ? 1.0 - e : e - 1.0;
}

// Uniform by arc length on the rectangle with vertices
// ((s1 (1-a) - s2 a) / sqrt2, (s1 (1-a) + s2 a) / sqrt2), plus noise.
Vector rect_perimeter_draw(double a, RngStream& rng) {
  const double A = 1.0 - a;
  const double B = a;
  double t = rng.uniform() * 4.0 * (A + B);
  double u = 0.0;
  double v = 0.0;
  if (t < 2.0 * A) {
    u = -1.0 + t / A;
    v = 1.0;
  } else if ((t -= 2.0 * A) < 2.0 * A) {
    u = -1.0 + t / A;
    v = -1.0;
  } else if ((t -= 2.0 * A) < 2.0 * B) {
    u = 1.0;
    v = -1.0 + t / B;
  } else {
    t -= 2.0 * B;
    u = -1.0;
    v = -1.0 + t / B;
  }
  Vector y(2);
  y[0] = (u * A - v * B) / std::sqrt(2.0) + kRectNoise * rng.normal();
  y[1] = (u * A + v * B) / std::sqrt(2.0) + kRectNoise * rng.normal();
  return y;
}

Vector disk_draw(double x, RngStream& rng) {
  const double r = std::sqrt(rng.uniform());
  const double th = 2.0 * M_PI * rng.uniform();
  Vector y(2);
  y[0] = 2.0 * x + r * std::cos(th);
  y[1] = 2.0 * x + r * std::sin(th);
  return y;
}

// sklearn-style construction: evenly spaced angles on each half circle,
// outer moon gets floor(n/2) points, then Gaussian noise and a shuffle.
Matrix two_moons_points(long n, RngStream& rng) {
  const long n_out = n / 2;
  const long n_in = n - n_out;
  Matrix Y(n, 2);
  for (long i = 0; i < n_out; ++i) {
    const double t = n_out > 1 ? M_PI * static_cast<double>(i) / static_cast<double>(n_out - 1) : 0.0;
    Y(i, 0) = std::cos(t);
    Y(i, 1) = std::sin(t);
  }
  for (long i = 0; i < n_in; ++i) {
    const double t = n_in > 1 ? M_PI * static_cast<double>(i) / static_cast<double>(n_in - 1) : 0.0;
    Y(n_out + i, 0) = 1.0 - std::cos(t);
    Y(n_out + i, 1) = 1.0 - std::sin(t) - 0.5;
  }
  std::vector<long> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0L);
  std::shuffle(perm.begin(), perm.end(), rng.engine());
  Matrix out(n, 2);
  for (long i = 0; i < n; ++i) {
    out(i, 0) = Y(perm[static_cast<std::size_t>(i)], 0) + kMoonNoise * rng.normal();
    out(i, 1) = Y(perm[static_cast<std::size_t>(i)], 1) + kMoonNoise * rng.normal();
  }
  return out;
}

}  // namespace

const Matrix& seven_base_cloud() {
  static const Matrix cloud = [] {
    // Two thick strokes: a top bar and a descending diagonal.
    const double half_width = 0.12;
    const double seg[2][4] = {{-0.5, 0.6, 0.5, 0.6}, {0.5, 0.6, -0.15, -0.8}};
    double len[2];
    for (int s = 0; s < 2; ++s) len[s] = std::hypot(seg[s][2] - seg[s][0], seg[s][3] - seg[s][1]);
    const int n = 1312;
    RngStream rng(0x7A7A7A7AULL, 7);
    Matrix P(n, 2);
    for (int i = 0; i < n; ++i) {
      const int s = rng.uniform() * (len[0] + len[1]) < len[0] ? 0 : 1;
      const double t = rng.uniform();
      const double off = rng.uniform(-half_width, half_width);
      const double dx = (seg[s][2] - seg[s][0]) / len[s];
      const double dy = (seg[s][3] - seg[s][1]) / len[s];
      P(i, 0) = seg[s][0] + t * (seg[s][2] - seg[s][0]) - off * dy;
      P(i, 1) = seg[s][1] + t * (seg[s][3] - seg[s][1]) + off * dx;
    }
    for (int c = 0; c < 2; ++c) {
      const double mean = P.col(c).mean();
      const double sd = std::sqrt((P.col(c).array() - mean).square().mean());
      P.col(c) = (P.col(c).array() - mean) / sd;
    }
    return P;
  }();
  return cloud;
}

Matrix rotate_clockwise(const Matrix& points, double a) {
  require(points.cols() == 2, ErrorKind::Data, "rotation needs 2-D points");
  const double th = 0.5 * M_PI * a;
  const double c = std::cos(th);
  const double s = std::sin(th);
  Matrix out(points.rows(), 2);
  out.col(0) = c * points.col(0) + s * points.col(1);
  out.col(1) = -s * points.col(0) + c * points.col(1);
  return out;
}

Dataset generate(const GeneratorSpec& spec) {
  const long n = spec.n == 0 ? default_size(spec.name) : spec.n;
  require(n >= 1, ErrorKind::Usage, "generator size n must be positive");
  RngStream rng(spec.seed, 0);
  Dataset D;
  const std::string& name = spec.name;
  if (name.rfind("qrfpp_", 0) == 0 && name.size() == 7 && name[6] >= 'a' && name[6] <= 'd') {
    D.X.resize(n, 40);
    D.Y.resize(n, 1);
    for (long i = 0; i < n; ++i) {
      for (int c = 0; c < 40; ++c) D.X(i, c) = rng.uniform(-1.0, 1.0);
      D.Y(i, 0) = qrfpp_draw(name, D.X(i, 0), rng);
    }
  } else if (name == "two_moons") {
    D.X.resize(n, 0);
    D.Y = two_moons_points(n, rng);
  } else if (name == "rect_rotor") {
    const int p = int_param(spec, "p", 2);
    D.X.resize(n, p);
    D.Y.resize(n, 2);
    for (long i = 0; i < n; ++i) {
      for (int c = 0; c < p; ++c) D.X(i, c) = rng.uniform(-2.0, 2.0);
      D.Y.row(i) = rect_perimeter_draw(sigmoid(D.X.row(i).mean()), rng).transpose();
    }
  } else if (name == "seven_rotor") {
    const int p1 = int_param(spec, "p1", 2);
    const int p2 = spec.params.count("p2") && spec.params.at("p2") == 0.0 ? 0 : int_param(spec, "p2", 3);
    const Matrix& base = seven_base_cloud();
    D.X.resize(n, p1 + p2);
    D.Y.resize(n, 2);
    for (long i = 0; i < n; ++i) {
      for (int c = 0; c < p1 + p2; ++c) D.X(i, c) = rng.uniform(-2.0, 2.0);
      const double a = sigmoid(D.X.row(i).head(p1).mean());
      D.Y.row(i) = rotate_clockwise(base.row(static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(base.rows())))), a);
    }
  } else if (name == "sliding_disk") {
    D.X.resize(n, 1);
    D.Y.resize(n, 2);
    for (long i = 0; i < n; ++i) {
      D.X(i, 0) = rng.uniform();
      D.Y.row(i) = disk_draw(D.X(i, 0), rng).transpose();
    }
  } else {
    fail(ErrorKind::Usage, "unknown generator name '" + name + "'");
  }
  D.feature_names = numbered("x", D.X.cols());
  D.target_names = numbered("y", D.Y.cols());
  return D;
}

WeightedPointCloud ground_truth_sample(const std::string& name, const std::map<std::string, double>& condition,
                                       int count, RngStream& rng) {
  require(count >= 1, ErrorKind::Usage, "ground-truth sample count must be positive");
  auto need = [&](const char* key) {
    const auto it = condition.find(key);
    require(it != condition.end(), ErrorKind::Usage, name + " ground truth needs condition '" + key + "'");
    return it->second;
  };
  Matrix P;
  if (name == "rect_rotor") {
    const double a = need("a");
    P.resize(count, 2);
    for (int i = 0; i < count; ++i) P.row(i) = rect_perimeter_draw(a, rng).transpose();
  } else if (name == "seven_rotor") {
    const double a = need("a");
    const Matrix& base = seven_base_cloud();
    Matrix picked(count, 2);
    for (int i = 0; i < count; ++i)
      picked.row(i) = base.row(static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(base.rows()))));
    P = rotate_clockwise(picked, a);
  } else if (name == "sliding_disk") {
    const double x = need("x");
    P.resize(count, 2);
    for (int i = 0; i < count; ++i) P.row(i) = disk_draw(x, rng).transpose();
  } else if (name == "two_moons") {
    P = two_moons_points(count, rng);
  } else if (name.rfind("qrfpp_", 0) == 0 && name.size() == 7 && name[6] >= 'a' && name[6] <= 'd') {
    const double x = need("x");
    P.resize(count, 1);
    for (int i = 0; i < count; ++i) P(i, 0) = qrfpp_draw(name, x, rng);
  } else {
    fail(ErrorKind::Usage, "no ground-truth sampler for '" + name + "'");
  }
  return WeightedPointCloud::uniform(std::move(P));
}

double conditional_quantile(const std::string& name, double x, double q) {
  require(q > 0.0 && q < 1.0, ErrorKind::Usage, "quantile level must lie in (0,1)");
  const boost::math::normal_distribution<double> std_normal;
  if (name == "qrfpp_a") return (x < 0.0 ? 1.0 : 3.0) * boost::math::quantile(std_normal, q);
  if (name == "qrfpp_b") {
    if (x < 0.0) return boost::math::quantile(std_normal, q);
    const double sigma = std::sqrt(1.0 - kBimodalMu * kBimodalMu);
    auto cdf = [&](double v) {
      return 0.5 * boost::math::cdf(std_normal, (v - kBimodalMu) / sigma) +
             0.5 * boost::math::cdf(std_normal, (v + kBimodalMu) / sigma);
    };
    double lo = -10.0;
    double hi = 10.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (cdf(mid) < q ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }
  if (name == "qrfpp_c") {
    const double h = (x + 2.5) * (x + 2.5);
    return -h + 2.0 * h * q;
  }
  if (name == "qrfpp_d") return x < 0.0 ? 1.0 + std::log(q) : -std::log1p(-q) - 1.0;
  fail(ErrorKind::Usage, "no analytic quantiles for '" + name + "'");
}

// ---------------------------------------------------------------------------
// CSV

ColumnTransform column_transform_from_string(const std::string& name) {
  if (name == "none") return ColumnTransform::None;
  if (name == "standardize") return ColumnTransform::Standardize;
  if (name == "rank_uniform") return ColumnTransform::RankUniform;
  fail(ErrorKind::Usage, "unknown column transform '" + name + "' (expected none, standardize or rank_uniform)");
}

std::vector<double> rank_uniform(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> out(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[idx[j + 1]] == values[idx[i]]) ++j;
    const double mean_rank = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based average rank of the tie block
    for (std::size_t k = i; k <= j; ++k) out[idx[k]] = (mean_rank - 0.5) / static_cast<double>(n);
    i = j + 1;
  }
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(cell);
      cell.clear();
    } else {
      cell.push_back(ch);
    }
  }
  out.push_back(cell);
  for (auto& c : out) {
    const auto b = c.find_first_not_of(" \t");
    const auto e = c.find_last_not_of(" \t\r");
    c = b == std::string::npos ? std::string() : c.substr(b, e - b + 1);
  }
  return out;
}

bool parse_double(const std::string& s, double& v) {
  if (s.empty()) return false;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto res = std::from_chars(first, s.data() + s.size(), v);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

void apply_transform(Matrix& M, Eigen::Index col, ColumnTransform t, const std::string& name) {
  if (t == ColumnTransform::None) return;
  if (t == ColumnTransform::Standardize) {
    const double mean = M.col(col).mean();
    const double sd = std::sqrt((M.col(col).array() - mean).square().mean());
    require(sd > 0.0, ErrorKind::Numerical, "cannot standardize constant column '" + name + "'");
    M.col(col) = (M.col(col).array() - mean) / sd;
    return;
  }
  std::vector<double> v(M.rows());
  for (Eigen::Index i = 0; i < M.rows(); ++i) v[static_cast<std::size_t>(i)] = M(i, col);
  const auto r = rank_uniform(v);
  for (Eigen::Index i = 0; i < M.rows(); ++i) M(i, col) = r[static_cast<std::size_t>(i)];
}

}  // namespace

Dataset load_csv(const std::string& path, const CsvOptions& options) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::Data, "cannot open CSV file '" + path + "'");
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::Data, path + ": missing header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_csv_line(line);
  std::map<std::string, std::size_t> column;
  for (std::size_t c = 0; c < header.size(); ++c) {
    require(!header[c].empty(), ErrorKind::Data, path + ": empty column name in header");
    require(column.emplace(header[c], c).second, ErrorKind::Data,
            path + ": duplicate header name '" + header[c] + "'");
  }

  std::vector<std::string> features = options.features;
  std::vector<std::string> targets = options.targets;
  if (features.empty() && targets.empty()) {
    for (const auto& h : header) {
      if (h[0] == 'x') features.push_back(h);
      if (h[0] == 'y') targets.push_back(h);
    }
  }
  require(!targets.empty(), ErrorKind::Data, path + ": no target columns selected");
  auto index_of = [&](const std::string& name) {
    const auto it = column.find(name);
    require(it != column.end(), ErrorKind::Data, path + ": missing column '" + name + "'");
    return it->second;
  };
  std::vector<std::size_t> fidx, tidx;
  for (const auto& f : features) fidx.push_back(index_of(f));
  for (const auto& t : targets) tidx.push_back(index_of(t));
  for (const auto& [name, tr] : options.transforms) {
    (void)tr;
    index_of(name);
  }

  std::vector<std::vector<double>> rows;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv_line(line);
    require(cells.size() == header.size(), ErrorKind::Data,
            path + ", line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) + " fields, found " +
                std::to_string(cells.size()));
    std::vector<double> row(fidx.size() + tidx.size());
    std::size_t k = 0;
    for (auto c : fidx) {
      require(parse_double(cells[c], row[k]) && std::isfinite(row[k]), ErrorKind::Data,
              path + ", line " + std::to_string(line_no) + ": non-numeric value '" + cells[c] + "' in column '" + header[c] +
                  "'");
      ++k;
    }
    for (auto c : tidx) {
      require(parse_double(cells[c], row[k]) && std::isfinite(row[k]), ErrorKind::Data,
              path + ", line " + std::to_string(line_no) + ": non-numeric value '" + cells[c] + "' in column '" + header[c] +
                  "'");
      ++k;
    }
    rows.push_back(std::move(row));
  }
  require(!rows.empty(), ErrorKind::Data, path + ": no data rows");

  Dataset D;
  const auto n = static_cast<Eigen::Index>(rows.size());
  D.X.resize(n, static_cast<Eigen::Index>(fidx.size()));
  D.Y.resize(n, static_cast<Eigen::Index>(tidx.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    for (std::size_t c = 0; c < fidx.size(); ++c) D.X(i, static_cast<Eigen::Index>(c)) = r[c];
    for (std::size_t c = 0; c < tidx.size(); ++c) D.Y(i, static_cast<Eigen::Index>(c)) = r[fidx.size() + c];
  }
  D.feature_names = features;
  D.target_names = targets;
  for (const auto& [name, tr] : options.transforms) {
    for (std::size_t c = 0; c < features.size(); ++c)
      if (features[c] == name) apply_transform(D.X, static_cast<Eigen::Index>(c), tr, name);
    for (std::size_t c = 0; c < targets.size(); ++c)
      if (targets[c] == name) apply_transform(D.Y, static_cast<Eigen::Index>(c), tr, name);
  }
  return D;
}

void save_csv(const Dataset& data, const std::string& path) {
  data.validate();
  std::FILE* f = std::fopen(path.c_str(), "wb");
  require(f != nullptr, ErrorKind::Data, "cannot write CSV file '" + path + "'");
  std::string out;
  bool first = true;
  for (const auto& n : data.feature_names) {
    out += (first ? "" : ",") + n;
    first = false;
  }
  for (const auto& n : data.target_names) {
    out += (first ? "" : ",") + n;
    first = false;
  }
  out += '\n';
  char buf[32];
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    for (Eigen::Index c = 0; c < data.X.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", data.X(i, c));
      if (c > 0) out += ',';
      out += buf;
    }
    for (Eigen::Index c = 0; c < data.Y.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", data.Y(i, c));
      if (c > 0 || data.X.cols() > 0) out += ',';
      out += buf;
    }
    out += '\n';
  }
  const bool ok = std::fwrite(out.data(), 1, out.size(), f) == out.size();
  std::fclose(f);
  require(ok, ErrorKind::Data, "failed writing CSV file '" + path + "'");
}

}  // namespace tqf
