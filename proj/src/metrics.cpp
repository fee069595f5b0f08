#include "tqf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tqf {

namespace {

struct SortedSample {
  std::vector<double> values;
  std::vector<double> weights;
  double total = 0.0;
};

SortedSample sort_positive(const WeightedScalarSample& s) {
  require(s.values.size() == s.weights.size(), ErrorKind::Data, "sample values and weights differ in length");
  std::vector<std::size_t> idx;
  idx.reserve(s.values.size());
  for (std::size_t i = 0; i < s.values.size(); ++i)
    if (s.weights[i] > 0.0) idx.push_back(i);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s.values[a] < s.values[b]; });
  SortedSample out;
  out.values.reserve(idx.size());
  out.weights.reserve(idx.size());
  for (std::size_t i : idx) {
    out.values.push_back(s.values[i]);
    out.weights.push_back(s.weights[i]);
    out.total += s.weights[i];
  }
  require(out.total > 0.0, ErrorKind::Numerical, "empty measure");
  return out;
}

double pairwise_mean_distance(const Matrix& a, const Vector& wa, const Matrix& b, const Vector& wb) {
  const Eigen::Index d = a.cols();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    if (wa[i] == 0.0) continue;
    const double* ai = a.row(i).data();
    double row = 0.0;
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      const double* bj = b.row(j).data();
      double s = 0.0;
      for (Eigen::Index k = 0; k < d; ++k) {
        const double diff = ai[k] - bj[k];
        s += diff * diff;
      }
      row += wb[j] * std::sqrt(s);
    }
    acc += wa[i] * row;
  }
  return acc;
}

double pairwise_mean_kernel(const Matrix& a, const Vector& wa, const Matrix& b, const Vector& wb, double h) {
  const double inv = 1.0 / (2.0 * h * h);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    double row = 0.0;
    for (Eigen::Index j = 0; j < b.rows(); ++j) row += wb[j] * std::exp(-(a.row(i) - b.row(j)).squaredNorm() * inv);
    acc += wa[i] * row;
  }
  return acc;
}

// Σ_ij w_i w_j |z_i - z_j| for a sorted sample, in O(n).
double sorted_dispersion(const SortedSample& s) {
  double below = 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < s.values.size(); ++i) {
    const double w = s.weights[i] / s.total;
    const double above = 1.0 - below - w;
    acc += 2.0 * w * s.values[i] * (below - above);
    below += w;
  }
  return acc;
}

}  // namespace

void hazen_quantiles_sorted(std::span<const double> z, std::span<const double> w, double total,
                            std::span<const double> levels, std::span<double> out) {
  const std::size_t n = z.size();
  require(n > 0 && total > 0.0, ErrorKind::Numerical, "empty measure");
  std::vector<double> pos(n);
  double cum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    pos[i] = (cum + 0.5 * w[i]) / total;
    cum += w[i];
  }
  for (std::size_t m = 0; m < levels.size(); ++m) {
    const double q = levels[m];
    if (q <= pos.front()) {
      out[m] = z.front();
    } else if (q >= pos.back()) {
      out[m] = z.back();
    } else {
      const auto it = std::upper_bound(pos.begin(), pos.end(), q);
      const std::size_t hi = static_cast<std::size_t>(it - pos.begin());
      const std::size_t lo = hi - 1;
      const double t = (q - pos[lo]) / (pos[hi] - pos[lo]);
      out[m] = z[lo] + t * (z[hi] - z[lo]);
    }
  }
}

std::vector<double> hazen_quantiles(const WeightedScalarSample& sample, std::span<const double> levels) {
  for (double q : levels) require(q > 0.0 && q < 1.0, ErrorKind::Usage, "quantile level must lie in (0,1)");
  const SortedSample s = sort_positive(sample);
  std::vector<double> out(levels.size());
  hazen_quantiles_sorted(s.values, s.weights, s.total, levels, out);
  return out;
}

double hazen_quantile(const WeightedScalarSample& sample, double q) {
  const double levels[1] = {q};
  return hazen_quantiles(sample, levels)[0];
}

double w1_1d(const WeightedScalarSample& a, const WeightedScalarSample& b) {
  const SortedSample sa = sort_positive(a);
  const SortedSample sb = sort_positive(b);
  // Merge jumps of F_a - F_b.
  std::vector<std::pair<double, double>> jumps;
  jumps.reserve(sa.values.size() + sb.values.size());
  for (std::size_t i = 0; i < sa.values.size(); ++i) jumps.emplace_back(sa.values[i], sa.weights[i] / sa.total);
  for (std::size_t i = 0; i < sb.values.size(); ++i) jumps.emplace_back(sb.values[i], -sb.weights[i] / sb.total);
  std::stable_sort(jumps.begin(), jumps.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
  double diff = 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < jumps.size(); ++i) {
    diff += jumps[i].second;
    acc += std::abs(diff) * (jumps[i + 1].first - jumps[i].first);
  }
  return acc;
}

double sliced_w1(const WeightedPointCloud& a, const WeightedPointCloud& b, const Matrix& directions) {
  require(a.dim() == b.dim(), ErrorKind::Data, "sliced_w1: dimension mismatch");
  require(directions.rows() >= 1 && directions.cols() == a.dim(), ErrorKind::Data,
          "sliced_w1: directions must be nonempty with matching dimension");
  double acc = 0.0;
  for (Eigen::Index k = 0; k < directions.rows(); ++k) {
    const Vector n = directions.row(k).transpose();
    acc += w1_1d(project(a, n), project(b, n));
  }
  return acc / static_cast<double>(directions.rows());
}

double energy_distance(const WeightedPointCloud& a, const WeightedPointCloud& b) {
  require(a.dim() == b.dim(), ErrorKind::Data, "energy_distance: dimension mismatch");
  const double ab = pairwise_mean_distance(a.points, a.weights, b.points, b.weights);
  const double aa = pairwise_mean_distance(a.points, a.weights, a.points, a.weights);
  const double bb = pairwise_mean_distance(b.points, b.weights, b.points, b.weights);
  return std::sqrt(std::max(0.0, 2.0 * ab - aa - bb));
}

double mmd(const WeightedPointCloud& a, const WeightedPointCloud& b, double bandwidth) {
  require(a.dim() == b.dim(), ErrorKind::Data, "mmd: dimension mismatch");
  require(bandwidth > 0.0, ErrorKind::Usage, "mmd: bandwidth must be positive");
  const double aa = pairwise_mean_kernel(a.points, a.weights, a.points, a.weights, bandwidth);
  const double bb = pairwise_mean_kernel(b.points, b.weights, b.points, b.weights, bandwidth);
  const double ab = pairwise_mean_kernel(a.points, a.weights, b.points, b.weights, bandwidth);
  return std::sqrt(std::max(0.0, aa + bb - 2.0 * ab));
}

double median_heuristic_bandwidth(const WeightedPointCloud& a, const WeightedPointCloud& b, std::size_t cap) {
  Matrix pooled(a.size() + b.size(), a.dim());
  pooled << a.points, b.points;
  const std::size_t n = static_cast<std::size_t>(pooled.rows());
  const std::size_t m = std::min(n, cap);
  std::vector<double> dist;
  dist.reserve(m * (m - 1) / 2);
  for (std::size_t i = 0; i < m; ++i) {
    const auto ri = static_cast<Eigen::Index>(i * n / m);
    for (std::size_t j = i + 1; j < m; ++j) {
      const auto rj = static_cast<Eigen::Index>(j * n / m);
      dist.push_back((pooled.row(ri) - pooled.row(rj)).norm());
    }
  }
  require(!dist.empty(), ErrorKind::Numerical, "median heuristic needs at least two points");
  auto mid = dist.begin() + static_cast<std::ptrdiff_t>(dist.size() / 2);
  std::nth_element(dist.begin(), mid, dist.end());
  require(*mid > 0.0, ErrorKind::Numerical, "median pairwise distance is zero");
  return *mid;
}

double crps(double y, const WeightedScalarSample& pred) {
  const SortedSample s = sort_positive(pred);
  double first = 0.0;
  for (std::size_t i = 0; i < s.values.size(); ++i) first += s.weights[i] / s.total * std::abs(y - s.values[i]);
  return first - 0.5 * sorted_dispersion(s);
}

std::vector<double> energy_scores(const Matrix& ys, const WeightedPointCloud& pred) {
  require(ys.cols() == pred.dim(), ErrorKind::Data, "energy_score: dimension mismatch");
  const double total = pred.weights.sum();
  require(total > 0.0, ErrorKind::Numerical, "empty measure");
  const Vector w = pred.weights / total;
  const double dispersion = pairwise_mean_distance(pred.points, w, pred.points, w);
  std::vector<double> out(static_cast<std::size_t>(ys.rows()));
  for (Eigen::Index r = 0; r < ys.rows(); ++r) {
    double first = 0.0;
    for (Eigen::Index j = 0; j < pred.size(); ++j) first += w[j] * (ys.row(r) - pred.points.row(j)).norm();
    out[static_cast<std::size_t>(r)] = first - 0.5 * dispersion;
  }
  return out;
}

double energy_score(const Vector& y, const WeightedPointCloud& pred) {
  require(y.size() == pred.dim(), ErrorKind::Data, "energy_score: dimension mismatch");
  return energy_scores(Matrix(y.transpose()), pred)[0];
}

double slice_energy_coefficient(int d) {
  require(d >= 2, ErrorKind::Usage, "slice-based energy score needs d >= 2; use crps for d = 1");
  const double dm1 = static_cast<double>(d - 1);
  return std::exp(std::log(dm1) + 0.5 * std::log(M_PI) + std::lgamma(0.5 * dm1) - std::lgamma(0.5 * d));
}

double energy_score_from_slices(const Vector& y, const DirectionalQuantileSet& slices) {
  const int d = slices.dim();
  const double coef = slice_energy_coefficient(d);
  require(y.size() == d, ErrorKind::Data, "energy_score_from_slices: dimension mismatch");
  const int K = slices.num_directions();
  const int M = slices.num_levels();
  require(K >= 1 && M >= 1, ErrorKind::Data, "energy_score_from_slices: empty slice grid");
  double acc = 0.0;
  for (int k = 0; k < K; ++k) {
    const double proj = slices.directions.row(k).dot(y);
    for (int m = 0; m < M; ++m) {
      const double qv = slices.values(k, m);
      const double ind = proj <= qv ? 1.0 : 0.0;
      acc += (ind - slices.levels[static_cast<std::size_t>(m)]) * (qv - proj);
    }
  }
  return coef * acc / (static_cast<double>(K) * M);
}

double r_squared(const Matrix& truth, const Matrix& pred) {
  require(truth.rows() == pred.rows() && truth.cols() == pred.cols(), ErrorKind::Data, "r_squared: shape mismatch");
  require(truth.rows() >= 2, ErrorKind::Data, "r_squared: need at least two rows");
  const Eigen::RowVectorXd mean = truth.colwise().mean();
  const double sse = (truth - pred).squaredNorm();
  const double sst = (truth.rowwise() - mean).squaredNorm();
  require(sst > 0.0, ErrorKind::Numerical, "constant target");
  return 1.0 - sse / sst;
}

}  // namespace tqf
