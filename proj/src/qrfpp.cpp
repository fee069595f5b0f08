#include "tqf/qrfpp.hpp"

#include "tqf/metrics.hpp"

#include <cmath>

namespace tqf {

std::string to_string(FrequencyScheme scheme) {
  switch (scheme) {
    case FrequencyScheme::MedianTriple: return "median_triple";
    case FrequencyScheme::DistanceQuantiles: return "distance_quantiles";
    case FrequencyScheme::Explicit: return "explicit";
  }
  return "explicit";
}

FrequencyScheme frequency_scheme_from_string(const std::string& name) {
  if (name == "median_triple") return FrequencyScheme::MedianTriple;
  if (name == "distance_quantiles") return FrequencyScheme::DistanceQuantiles;
  if (name == "explicit") return FrequencyScheme::Explicit;
  fail(ErrorKind::Usage, "unknown frequency scheme '" + name + "'");
}

void FrequencySpec::validate() const {
  for (double v : w) require(std::isfinite(v) && v > 0.0, ErrorKind::Usage, "frequencies must be positive and finite");
}

ComponentScaler ComponentScaler::fit(const Matrix& columns) {
  ComponentScaler s;
  const auto n = static_cast<double>(columns.rows());
  require(columns.rows() >= 1, ErrorKind::Data, "cannot standardize an empty matrix");
  for (Eigen::Index c = 0; c < columns.cols(); ++c) {
    const double mean = columns.col(c).mean();
    const double var = (columns.col(c).array() - mean).square().sum() / n;
    const double sd = std::sqrt(var);
    s.means.push_back(mean);
    s.sds.push_back(sd > 0.0 ? sd : 1.0);
  }
  return s;
}

Matrix ComponentScaler::transform(const Matrix& columns) const {
  require(static_cast<std::size_t>(columns.cols()) == means.size(), ErrorKind::Data, "scaler width mismatch");
  Matrix out(columns.rows(), columns.cols());
  for (Eigen::Index c = 0; c < columns.cols(); ++c)
    out.col(c) = (columns.col(c).array() - means[static_cast<std::size_t>(c)]) / sds[static_cast<std::size_t>(c)];
  return out;
}

Matrix ComponentScaler::inverse(const Matrix& standardized) const {
  require(static_cast<std::size_t>(standardized.cols()) == means.size(), ErrorKind::Data, "scaler width mismatch");
  Matrix out(standardized.rows(), standardized.cols());
  for (Eigen::Index c = 0; c < standardized.cols(); ++c)
    out.col(c) =
        standardized.col(c).array() * sds[static_cast<std::size_t>(c)] + means[static_cast<std::size_t>(c)];
  return out;
}

namespace {

std::vector<double> pairwise_distances(std::span<const double> y, std::size_t cap) {
  const std::size_t n = y.size();
  const std::size_t m = std::min(n, cap);
  std::vector<double> rows(m);
  for (std::size_t i = 0; i < m; ++i) rows[i] = y[i * n / m];
  std::vector<double> dist;
  dist.reserve(m * (m - 1) / 2);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) dist.push_back(std::abs(rows[i] - rows[j]));
  return dist;
}

}  // namespace

FrequencySpec select_frequencies(std::span<const double> y, int T, FrequencyScheme scheme, std::size_t subsample_cap,
                                 const std::vector<double>& explicit_w) {
  require(T >= 0, ErrorKind::Usage, "T must be nonnegative");
  FrequencySpec spec;
  spec.scheme = scheme;
  if (scheme == FrequencyScheme::Explicit) {
    require(explicit_w.size() == static_cast<std::size_t>(T), ErrorKind::Usage,
            "explicit frequency list length must equal T");
    spec.w = explicit_w;
    spec.validate();
    return spec;
  }
  if (scheme == FrequencyScheme::MedianTriple)
    require(T == 3, ErrorKind::Usage, "median_triple frequencies require T = 3");
  if (T == 0) return spec;
  require(y.size() >= 2, ErrorKind::Data, "frequency selection needs at least two targets");
  require(subsample_cap >= 2, ErrorKind::Usage, "subsample cap must be at least 2");
  for (double v : y) require(std::isfinite(v), ErrorKind::Data, "non-finite target");

  auto dist = pairwise_distances(y, subsample_cap);
  std::sort(dist.begin(), dist.end());
  require(dist.back() > 0.0, ErrorKind::Numerical, "degenerate target scale");
  const auto sample = WeightedScalarSample::uniform(std::move(dist));
  if (scheme == FrequencyScheme::MedianTriple) {
    const double med = hazen_quantile(sample, 0.5);
    require(med > 0.0, ErrorKind::Numerical, "degenerate target scale");
    spec.w = {med / 2.0, med, 2.0 * med};
  } else {
    std::vector<double> levels(static_cast<std::size_t>(T));
    for (int t = 1; t <= T; ++t) levels[static_cast<std::size_t>(t - 1)] = (2.0 * t - 1.0) / (2.0 * T);
    spec.w = hazen_quantiles(sample, levels);
    for (double v : spec.w) require(v > 0.0, ErrorKind::Numerical, "degenerate target scale");
  }
  return spec;
}

Matrix augmented_columns(std::span<const double> y, const FrequencySpec& spec) {
  spec.validate();
  const auto n = static_cast<Eigen::Index>(y.size());
  const int T = spec.T();
  Matrix out(n, 2 * T + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double v = y[static_cast<std::size_t>(i)];
    require(std::isfinite(v), ErrorKind::Data, "non-finite target");
    out(i, 0) = v;
    for (int t = 0; t < T; ++t) {
      const double a = v / spec.w[static_cast<std::size_t>(t)];
      out(i, 2 * t + 1) = std::cos(a);
      out(i, 2 * t + 2) = std::sin(a);
    }
  }
  return out;
}

AugmentedTargets augment_targets(std::span<const double> y, const FrequencySpec& spec) {
  const Matrix raw = augmented_columns(y, spec);
  AugmentedTargets out;
  out.scaler = ComponentScaler::fit(raw);
  out.standardized = out.scaler.transform(raw);
  return out;
}

QrfppModel QrfppModel::fit(const Matrix& X, std::span<const double> y, const FrequencySpec& spec,
                           const ForestConfig& config) {
  QrfppModel m;
  m.spec = spec;
  auto aug = augment_targets(y, spec);
  m.scaler = std::move(aug.scaler);
  m.forest = QuantileForestModel::fit(X, aug.standardized, y, config);
  return m;
}

}  // namespace tqf
