#include "tqf/qmem.hpp"

#include "tqf/metrics.hpp"
#include "parallel.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace tqf {

void QmemConfig::validate() const {
  require(N0 >= 1 && N1 >= 1 && E >= 1, ErrorKind::Usage, "QMEM sizes N0, N1, E must be positive");
  require(N0 <= N1, ErrorKind::Usage, "QMEM requires N0 <= N1");
  require(max_alternations >= 1, ErrorKind::Usage, "max_alternations must be positive");
  require(rel_tol > 0.0, ErrorKind::Usage, "rel_tol must be positive");
  require(solver_budget >= 1, ErrorKind::Usage, "solver_budget must be positive");
  require(prune_stride >= 0, ErrorKind::Usage, "prune_stride must be nonnegative");
}

// ---------------------------------------------------------------------------
// Loss

LossEvaluator::LossEvaluator(const Matrix& support, const DirectionalQuantileSet& slices)
    : J_(static_cast<std::size_t>(support.rows())),
      K_(static_cast<std::size_t>(slices.num_directions())),
      M_(static_cast<std::size_t>(slices.num_levels())),
      levels_(slices.levels) {
  require(J_ >= 1, ErrorKind::Data, "empty point cloud");
  require(support.cols() == slices.directions.cols(), ErrorKind::Data,
          "cloud dimension does not match slice dimension");
  require(K_ >= 1 && M_ >= 1, ErrorKind::Data, "empty slice grid");
  proj_.resize(K_ * J_);
  order_.resize(K_ * J_);
  targets_.resize(K_ * M_);
  for (std::size_t k = 0; k < K_; ++k) {
    // Same expression as project() so quantiles agree bit for bit.
    const Vector n = slices.directions.row(static_cast<Eigen::Index>(k)).transpose();
    const Vector p = support * n;
    double* row = proj_.data() + k * J_;
    std::copy(p.data(), p.data() + J_, row);
    std::uint32_t* ord = order_.data() + k * J_;
    std::iota(ord, ord + J_, 0u);
    std::stable_sort(ord, ord + J_, [row](std::uint32_t a, std::uint32_t b) { return row[a] < row[b]; });
    for (std::size_t m = 0; m < M_; ++m)
      targets_[k * M_ + m] = slices.values(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m));
  }
}

double LossEvaluator::loss(const Vector& w) const { return evaluate(w, nullptr); }

double LossEvaluator::loss_and_gradient(const Vector& w, Vector& grad) const {
  grad.setZero(static_cast<Eigen::Index>(J_));
  return evaluate(w, &grad);
}

double LossEvaluator::evaluate(const Vector& w, Vector* grad) const {
  require(static_cast<std::size_t>(w.size()) == J_, ErrorKind::Data, "weight vector length mismatch");
  std::vector<double> z;
  std::vector<double> wt;
  std::vector<double> pos;
  std::vector<std::size_t> full;  // position of each positive entry in the full order
  std::vector<double> diff;
  z.reserve(J_);
  wt.reserve(J_);
  pos.reserve(J_);
  full.reserve(J_);
  if (grad) diff.resize(J_ + 1);

  const double scale = 1.0 / static_cast<double>(K_ * M_);
  double acc = 0.0;
  for (std::size_t k = 0; k < K_; ++k) {
    const double* row = proj_.data() + k * J_;
    const std::uint32_t* ord = order_.data() + k * J_;
    z.clear();
    wt.clear();
    full.clear();
    double total = 0.0;
    for (std::size_t f = 0; f < J_; ++f) {
      const double wj = w[ord[f]];
      if (wj > 0.0) {
        z.push_back(row[ord[f]]);
        wt.push_back(wj);
        full.push_back(f);
        total += wj;
      }
    }
    require(total > 0.0, ErrorKind::Numerical, "empty measure");
    const std::size_t n = z.size();
    pos.resize(n);
    double cum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      pos[i] = (cum + 0.5 * wt[i]) / total;
      cum += wt[i];
    }
    if (grad) std::fill(diff.begin(), diff.end(), 0.0);

    std::size_t hi = 0;
    for (std::size_t m = 0; m < M_; ++m) {
      const double q = levels_[m];
      const double target = targets_[k * M_ + m];
      if (q <= pos.front() || q >= pos.back()) {
        acc += std::abs(q <= pos.front() ? z.front() - target : z.back() - target);
        continue;
      }
      while (pos[hi] <= q) ++hi;  // levels ascend, so hi only moves forward
      const std::size_t lo = hi - 1;
      const double t = (q - pos[lo]) / (pos[hi] - pos[lo]);
      const double Q = z[lo] + t * (z[hi] - z[lo]);
      const double r = Q - target;
      acc += std::abs(r);
      if (!grad || r == 0.0) continue;
      // dQ/dw: -s below the bracket, -s(1+t)/2 and -s t/2 at its ends, where
      // s = dz / dp is the local inverse density.
      const double s = 2.0 * (z[hi] - z[lo]) / ((wt[lo] + wt[hi]) / total) / total;
      const double c = (r > 0.0 ? 1.0 : -1.0) * scale;
      diff[0] -= s * c;
      diff[full[lo]] += s * c;
      (*grad)[ord[full[lo]]] -= s * c * 0.5 * (1.0 + t);
      (*grad)[ord[full[hi]]] -= s * c * 0.5 * t;
      for (std::size_t f = full[lo] + 1; f < full[hi]; ++f)
        if (row[ord[f]] < Q) (*grad)[ord[f]] -= s * c;
    }
    if (grad) {
      double run = 0.0;
      for (std::size_t f = 0; f < J_; ++f) {
        run += diff[f];
        (*grad)[ord[f]] += run;
      }
    }
  }
  return acc * scale;
}

double qmem_loss(const WeightedPointCloud& cloud, const DirectionalQuantileSet& slices) {
  require(cloud.size() >= 1, ErrorKind::Data, "empty point cloud");
  require(cloud.weights.size() == cloud.size(), ErrorKind::Data, "weight count does not match point count");
  return LossEvaluator(cloud.points, slices).loss(cloud.weights);
}

// ---------------------------------------------------------------------------
// Weights

Vector project_to_simplex(const Vector& v) {
  const Eigen::Index n = v.size();
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<>());
  double css = 0.0;
  double theta = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    css += u[static_cast<std::size_t>(j)];
    const double th = (css - 1.0) / static_cast<double>(j + 1);
    if (u[static_cast<std::size_t>(j)] - th > 0.0) theta = th;
  }
  Vector w = (v.array() - theta).max(0.0);
  const double s = w.sum();
  if (s > 0.0) w /= s;
  return w;
}

Vector optimize_weights(const Matrix& support, const DirectionalQuantileSet& slices, int budget) {
  const Eigen::Index J = support.rows();
  require(J >= 1, ErrorKind::Data, "empty support");
  const Vector uniform = Vector::Constant(J, 1.0 / static_cast<double>(J));
  if (J == 1) return uniform;
  const LossEvaluator ev(support, slices);

  Vector w = uniform;
  Vector g;
  double f = ev.loss_and_gradient(w, g);
  const double f_uniform = f;
  if (f == 0.0) return uniform;
  Vector best = w;
  Vector best_g = g;
  double f_best = f;
  double delta = 0.5 * f;
  int stall = 0;
  constexpr int kPatience = 30;

  // Projected subgradient with a Polyak step toward the moving target
  // f_best - delta; delta halves whenever progress stalls.
  for (int it = 0; it < budget; ++it) {
    Vector gc = g.array() - g.mean();
    const double gn2 = gc.squaredNorm();
    if (!(gn2 > 0.0)) break;
    const double step = (f - (f_best - delta)) / gn2;
    w = project_to_simplex(w - step * gc);
    f = ev.loss_and_gradient(w, g);
    if (f < f_best) {
      f_best = f;
      best = w;
      best_g = g;
      stall = 0;
    } else if (++stall >= kPatience) {
      delta *= 0.5;
      w = best;
      g = best_g;
      f = f_best;
      stall = 0;
      if (delta < 1e-12 * f_uniform) break;
    }
  }

  for (Eigen::Index j = 0; j < J; ++j)
    if (best[j] < 0.0) best[j] = 0.0;
  best /= best.sum();
  if (ev.loss(best) > f_uniform) return uniform;
  return best;
}

// ---------------------------------------------------------------------------
// Locations

namespace {

// Linear interpolation of a monotone row of slice values at level q,
// clamped at the grid ends.
double interp_level(const DirectionalQuantileSet& s, Eigen::Index k, double q) {
  const auto& lv = s.levels;
  const Eigen::Index M = s.values.cols();
  if (q <= lv.front()) return s.values(k, 0);
  if (q >= lv.back()) return s.values(k, M - 1);
  const auto it = std::upper_bound(lv.begin(), lv.end(), q);
  const auto hi = static_cast<Eigen::Index>(it - lv.begin());
  const Eigen::Index lo = hi - 1;
  const double t = (q - lv[static_cast<std::size_t>(lo)]) /
                   (lv[static_cast<std::size_t>(hi)] - lv[static_cast<std::size_t>(lo)]);
  return s.values(k, lo) + t * (s.values(k, hi) - s.values(k, lo));
}

double uniform_loss(const Matrix& Z, const DirectionalQuantileSet& slices) {
  return LossEvaluator(Z, slices).loss(Vector::Constant(Z.rows(), 1.0 / static_cast<double>(Z.rows())));
}

}  // namespace

Matrix optimize_locations(const DirectionalQuantileSet& slices, int N0, int budget, RngStream& rng) {
  require(N0 >= 1, ErrorKind::Usage, "N0 must be positive");
  const Eigen::Index K = slices.directions.rows();
  const int d = slices.dim();

  // Centre: least-squares point whose projections match the slice medians.
  Vector med(K);
  std::vector<double> spread(static_cast<std::size_t>(K));
  for (Eigen::Index k = 0; k < K; ++k) {
    med[k] = interp_level(slices, k, 0.5);
    spread[static_cast<std::size_t>(k)] = interp_level(slices, k, 0.75) - interp_level(slices, k, 0.25);
  }
  const Eigen::MatrixXd A = slices.directions;
  Eigen::MatrixXd AtA = A.transpose() * A;
  AtA.diagonal().array() += 1e-9 * (AtA.trace() + 1.0);
  const Vector center = AtA.ldlt().solve(A.transpose() * med);
  std::nth_element(spread.begin(), spread.begin() + static_cast<std::ptrdiff_t>(spread.size() / 2), spread.end());
  double sigma = spread[spread.size() / 2] / 1.349;
  if (!(sigma > 0.0)) sigma = 1e-3 * std::max(1.0, center.norm());

  const long max_evals = 10L * budget;
  Matrix best;
  double f_best = std::numeric_limits<double>::infinity();
  for (int restart = 0; restart < 3; ++restart) {
    RngStream sub = rng.substream(static_cast<std::uint64_t>(restart));
    Matrix Z(N0, d);
    for (int j = 0; j < N0; ++j)
      for (int c = 0; c < d; ++c) Z(j, c) = center[c] + sigma * sub.normal();
    double f = uniform_loss(Z, slices);
    long evals = 1;
    double step = sigma;
    while (step > 1e-7 * sigma && evals < max_evals) {
      const Matrix basis = sample_orthogonal(sub, d);
      bool improved = false;
      for (int j = 0; j < N0 && evals < max_evals; ++j) {
        for (int b = 0; b < d; ++b) {
          for (double sign : {1.0, -1.0}) {
            Matrix trial = Z;
            trial.row(j) += sign * step * basis.col(b).transpose();
            const double ft = uniform_loss(trial, slices);
            ++evals;
            if (ft < f) {
              Z = std::move(trial);
              f = ft;
              improved = true;
              break;
            }
          }
        }
      }
      if (!improved) step *= 0.5;
    }
    if (f < f_best) {
      f_best = f;
      best = Z;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// KDE

KdeModel KdeModel::fit(const WeightedPointCloud& cloud) {
  require(cloud.size() >= 1, ErrorKind::Data, "cannot fit a KDE to an empty cloud");
  const double total = cloud.weights.sum();
  require(total > 0.0, ErrorKind::Numerical, "empty measure");
  const Vector w = cloud.weights / total;
  const int d = static_cast<int>(cloud.dim());
  const double sum_w2 = w.squaredNorm();
  const double n_eff = 1.0 / sum_w2;

  const Vector mean = cloud.points.transpose() * w;
  Matrix cov = Matrix::Zero(d, d);
  const double denom = 1.0 - sum_w2;
  if (denom > 1e-12) {
    for (Eigen::Index j = 0; j < cloud.size(); ++j) {
      if (w[j] == 0.0) continue;
      const Vector c = cloud.points.row(j).transpose() - mean;
      cov.noalias() += w[j] * c * c.transpose();
    }
    cov /= denom;
  }
  const double tr = cov.trace();
  cov.diagonal().array() += tr > 0.0 ? 1e-9 * tr : 1e-9;

  KdeModel kde;
  kde.support = cloud.points;
  kde.weights = w;
  kde.factor = std::pow(n_eff, -1.0 / (d + 4));
  kde.covariance = cov;
  kde.kernel_cov = kde.factor * kde.factor * cov;
  kde.factorize();
  return kde;
}

KdeModel KdeModel::with_kernel(const WeightedPointCloud& cloud, const Matrix& kernel_cov) {
  require(kernel_cov.rows() == cloud.dim() && kernel_cov.cols() == cloud.dim(), ErrorKind::Data,
          "kernel covariance has the wrong shape");
  const double total = cloud.weights.sum();
  require(total > 0.0, ErrorKind::Numerical, "empty measure");
  KdeModel kde;
  kde.support = cloud.points;
  kde.weights = cloud.weights / total;
  kde.factor = 1.0;
  kde.covariance = kernel_cov;
  kde.kernel_cov = kernel_cov;
  kde.factorize();
  return kde;
}

void KdeModel::factorize() {
  const Eigen::MatrixXd kc = kernel_cov;
  Eigen::LLT<Eigen::MatrixXd> llt(kc);
  require(llt.info() == Eigen::Success, ErrorKind::Numerical, "KDE covariance is not positive definite");
  chol_ = llt.matrixL();
  const int d = dim();
  log_norm_ = -0.5 * d * std::log(2.0 * M_PI);
  for (int i = 0; i < d; ++i) log_norm_ -= std::log(chol_(i, i));
}

Matrix KdeModel::sample(int count, RngStream& rng) const {
  const int d = dim();
  std::vector<double> cum(static_cast<std::size_t>(weights.size()));
  double run = 0.0;
  for (Eigen::Index j = 0; j < weights.size(); ++j) cum[static_cast<std::size_t>(j)] = run += weights[j];
  Matrix out(count, d);
  Vector eps(d);
  for (int i = 0; i < count; ++i) {
    const double u = rng.uniform() * run;
    auto it = std::upper_bound(cum.begin(), cum.end(), u);
    if (it == cum.end()) --it;
    const auto j = static_cast<Eigen::Index>(it - cum.begin());
    for (int c = 0; c < d; ++c) eps[c] = rng.normal();
    out.row(i) = support.row(j) + (chol_ * eps).transpose();
  }
  return out;
}

double KdeModel::log_density(const Vector& y) const {
  require(y.size() == dim(), ErrorKind::Data, "KDE query has the wrong dimension");
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(support.rows()));
  double top = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < support.rows(); ++j) {
    if (weights[j] <= 0.0) continue;
    const Vector r = chol_.triangularView<Eigen::Lower>().solve(y - support.row(j).transpose());
    const double t = std::log(weights[j]) - 0.5 * r.squaredNorm();
    terms.push_back(t);
    top = std::max(top, t);
  }
  double s = 0.0;
  for (double t : terms) s += std::exp(t - top);
  return log_norm_ + top + std::log(s);
}

// ---------------------------------------------------------------------------
// Prune and reconstruct

PruneResult prune(const WeightedPointCloud& cloud, const DirectionalQuantileSet& slices, int stride) {
  const Eigen::Index J = cloud.size();
  require(J >= 1, ErrorKind::Data, "empty point cloud");
  require(stride >= 1, ErrorKind::Usage, "prune stride must be positive");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(J));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return cloud.weights[a] > cloud.weights[b]; });
  Matrix pts(J, cloud.dim());
  Vector w(J);
  Eigen::Index positive = 0;
  for (Eigen::Index i = 0; i < J; ++i) {
    pts.row(i) = cloud.points.row(order[static_cast<std::size_t>(i)]);
    w[i] = cloud.weights[order[static_cast<std::size_t>(i)]];
    if (w[i] > 0.0) ++positive;
  }
  require(positive > 0, ErrorKind::Numerical, "empty measure");

  std::vector<Eigen::Index> sizes;
  for (Eigen::Index s = stride; s < J; s += stride) sizes.push_back(s);
  sizes.push_back(positive);
  sizes.push_back(J);
  std::sort(sizes.begin(), sizes.end());
  sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());

  const LossEvaluator ev(pts, slices);
  Eigen::Index best_size = J;
  double best_loss = std::numeric_limits<double>::infinity();
  Vector trial(J);
  for (Eigen::Index s : sizes) {
    const double mass = w.head(s).sum();
    if (!(mass > 0.0)) continue;
    trial.setZero();
    trial.head(s) = w.head(s) / mass;
    const double l = ev.loss(trial);
    if (l < best_loss) {  // ascending sizes: ties keep the smaller prefix
      best_loss = l;
      best_size = s;
    }
  }
  PruneResult out;
  out.cloud.points = pts.topRows(best_size);
  out.cloud.weights = w.head(best_size) / w.head(best_size).sum();
  out.loss = qmem_loss(out.cloud, slices);
  // Reordering and renormalizing can cost an ulp; never hand back a worse cloud.
  const double input_loss = qmem_loss(cloud, slices);
  if (out.loss > input_loss) {
    out.cloud = cloud;
    out.loss = input_loss;
  }
  return out;
}

QmemResult reconstruct(const DirectionalQuantileSet& slices, const QmemConfig& config, const RngStream& rng) {
  config.validate();
  slices.validate();
  const auto t0 = std::chrono::steady_clock::now();
  QmemResult result;
  QmemReport& rep = result.report;

  RngStream loc_rng = rng.substream(0);
  WeightedPointCloud current;
  current.points = optimize_locations(slices, config.N0, config.solver_budget, loc_rng);
  current.weights = Vector::Constant(config.N0, 1.0 / config.N0);
  double current_loss = qmem_loss(current, slices);
  rep.location_loss = current_loss;
  spdlog::debug("qmem: location fit loss {:.6g}", current_loss);

  for (int a = 0; a < config.max_alternations; ++a) {
    RngStream sub = rng.substream(1 + static_cast<std::uint64_t>(a));
    const KdeModel kde = KdeModel::fit(current);
    WeightedPointCloud next;
    next.points = kde.sample(config.N1, sub);
    next.weights = optimize_weights(next.points, slices, config.solver_budget);
    const double next_loss = qmem_loss(next, slices);
    rep.alternation_losses.push_back(next_loss);
    spdlog::debug("qmem: alternation {} loss {:.6g}", a + 1, next_loss);
    if (!(next_loss < current_loss)) break;  // revert: keep the previous cloud
    const double improvement = (current_loss - next_loss) / current_loss;
    current = std::move(next);
    current_loss = next_loss;
    ++rep.accepted_alternations;
    if (improvement < config.rel_tol) break;
  }

  const KdeModel final_kde = KdeModel::fit(current);
  rep.final_kde_factor = final_kde.factor;
  const auto E = static_cast<std::size_t>(config.E);
  std::vector<WeightedPointCloud> members(E);
  rep.member_losses.assign(E, 0.0);
  detail::parallel_for(E, detail::thread_count_from_env(config.n_threads), [&](std::size_t e) {
    RngStream sub = rng.substream(1000 + e);
    WeightedPointCloud& m = members[e];
    m.points = final_kde.sample(config.N1, sub);
    m.weights = optimize_weights(m.points, slices, config.solver_budget);
    rep.member_losses[e] = qmem_loss(m, slices);
  });
  rep.mean_member_loss =
      std::accumulate(rep.member_losses.begin(), rep.member_losses.end(), 0.0) / static_cast<double>(E);

  WeightedPointCloud merged;
  const int d = slices.dim();
  merged.points.resize(static_cast<Eigen::Index>(E) * config.N1, d);
  merged.weights.resize(static_cast<Eigen::Index>(E) * config.N1);
  for (std::size_t e = 0; e < E; ++e) {
    const auto off = static_cast<Eigen::Index>(e) * config.N1;
    merged.points.middleRows(off, config.N1) = members[e].points;
    merged.weights.segment(off, config.N1) = members[e].weights / static_cast<double>(E);
  }
  rep.union_loss = qmem_loss(merged, slices);
  rep.merged_loss = rep.union_loss;
  rep.union_jensen_ok = rep.union_loss <= rep.mean_member_loss + 1e-9;
  if (!rep.union_jensen_ok) {
    // The discretized loss is only approximately convex under mixing, so a
    // union of overfitted members can lose to them. Reweight the union and
    // fall back to the best member, which is never above the mean.
    spdlog::debug("qmem: union loss {:.6g} exceeds mean member loss {:.6g}; reweighting", rep.union_loss,
                 rep.mean_member_loss);
    rep.merge_repaired = true;
    WeightedPointCloud reweighted;
    reweighted.points = merged.points;
    reweighted.weights = optimize_weights(reweighted.points, slices, config.solver_budget);
    const double reweighted_loss = qmem_loss(reweighted, slices);
    const auto best = static_cast<std::size_t>(
        std::min_element(rep.member_losses.begin(), rep.member_losses.end()) - rep.member_losses.begin());
    if (reweighted_loss <= rep.member_losses[best]) {
      merged = std::move(reweighted);
      rep.merged_loss = reweighted_loss;
    } else {
      merged = members[best];
      rep.merged_loss = rep.member_losses[best];
    }
  }
  rep.merged_size = static_cast<std::size_t>(merged.size());
  rep.jensen_ok = rep.merged_loss <= rep.mean_member_loss + 1e-9;

  const int stride =
      config.prune_stride > 0 ? config.prune_stride : std::max(1, static_cast<int>(merged.size() / 200));
  PruneResult pruned = prune(merged, slices, stride);
  rep.pruned_size = static_cast<std::size_t>(pruned.cloud.size());
  rep.pruned_loss = pruned.loss;
  result.cloud = std::move(pruned.cloud);
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  spdlog::debug("qmem: merged {} -> pruned {} points, loss {:.6g}", rep.merged_size, rep.pruned_size, rep.pruned_loss);
  return result;
}

}  // namespace tqf
