#pragma once

#include "tqf/rng.hpp"
#include "tqf/slices.hpp"

namespace tqf {

struct QmemConfig {
  int N0 = 9;
  int N1 = 150;
  int E = 20;
  int max_alternations = 20;
  double rel_tol = 1e-3;
  int solver_budget = 2000;  // weight-solver iterations; location search gets 10x this in loss evaluations
  int prune_stride = 0;     // 0: max(1, J / 200)
  int n_threads = 0;        // 0: TQF_NUM_THREADS or hardware concurrency

  void validate() const;
};

/// Discretized sliced-W1 loss (1/KM) Σ |Hazen_q_m(n_k·Z) - Q_km| for a fixed
/// support. Projections and their sort orders are computed once, so repeated
/// evaluation under different weights costs O(K (J + M)).
class LossEvaluator {
 public:
  LossEvaluator(const Matrix& support, const DirectionalQuantileSet& slices);

  std::size_t size() const { return J_; }

  double loss(const Vector& w) const;

  /// Loss and a subgradient with respect to the weights. Points with zero
  /// weight receive the derivative they would have at an infinitesimal
  /// positive weight, so the solver can bring them back.
  double loss_and_gradient(const Vector& w, Vector& grad) const;

 private:
  double evaluate(const Vector& w, Vector* grad) const;

  std::size_t J_;
  std::size_t K_;
  std::size_t M_;
  std::vector<double> proj_;          // K×J, row k holds n_k·z_j
  std::vector<std::uint32_t> order_;  // K×J, ascending projection order per direction
  std::vector<double> levels_;
  std::vector<double> targets_;       // K×M
};

double qmem_loss(const WeightedPointCloud& cloud, const DirectionalQuantileSet& slices);

/// Euclidean projection onto the probability simplex.
Vector project_to_simplex(const Vector& v);

/// Simplex-constrained minimization of the loss over weights for a fixed
/// support. Never returns weights worse than uniform.
Vector optimize_weights(const Matrix& support, const DirectionalQuantileSet& slices, int budget);

/// Derivative-free search for N0 equally weighted locations.
Matrix optimize_locations(const DirectionalQuantileSet& slices, int N0, int budget, RngStream& rng);

/// Weighted Gaussian KDE with kernel covariance factor^2 · cov.
struct KdeModel {
  Matrix support;
  Vector weights;
  double factor = 1.0;
  Matrix covariance;  // regularized weighted data covariance
  Matrix kernel_cov;  // factor^2 · covariance

  /// Scott factor n_eff^(-1/(d+4)), n_eff = 1/Σ w², weighted covariance
  /// with the (1 - Σ w²) correction, plus 1e-9 · trace · I.
  static KdeModel fit(const WeightedPointCloud& cloud);

  /// Mixture with an explicitly given kernel covariance.
  static KdeModel with_kernel(const WeightedPointCloud& cloud, const Matrix& kernel_cov);

  int dim() const { return static_cast<int>(support.cols()); }
  Matrix sample(int count, RngStream& rng) const;
  double log_density(const Vector& y) const;

 private:
  void factorize();
  Matrix chol_;          // lower Cholesky factor of kernel_cov
  double log_norm_ = 0;  // log of the Gaussian normalizer
};

struct QmemReport {
  double location_loss = 0.0;
  std::vector<double> alternation_losses;  // every attempted alternation, accepted or not
  int accepted_alternations = 0;
  double final_kde_factor = 0.0;
  std::vector<double> member_losses;
  double mean_member_loss = 0.0;
  double union_loss = 0.0;      // plain union of the members, weights / E
  bool union_jensen_ok = true;  // union_loss <= mean_member_loss
  bool merge_repaired = false;  // union reweighted or replaced by the best member
  double merged_loss = 0.0;     // loss of the cloud handed to pruning
  bool jensen_ok = true;
  std::size_t merged_size = 0;
  std::size_t pruned_size = 0;
  double pruned_loss = 0.0;
  double seconds = 0.0;
};

struct QmemResult {
  WeightedPointCloud cloud;
  QmemReport report;
};

/// Location fit, KDE/reweight alternations, ensemble of E members, merge and
/// prune. Deterministic for a given rng identity regardless of thread count.
QmemResult reconstruct(const DirectionalQuantileSet& slices, const QmemConfig& config, const RngStream& rng);

struct PruneResult {
  WeightedPointCloud cloud;
  double loss = 0.0;
};

/// Keeps the loss-minimizing prefix of the weight-sorted cloud, renormalized.
/// Candidate sizes are every stride-th size, the positive-weight count and J.
PruneResult prune(const WeightedPointCloud& cloud, const DirectionalQuantileSet& slices, int stride);

}  // namespace tqf
