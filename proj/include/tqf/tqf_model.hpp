#pragma once

#include "tqf/datasets.hpp"
#include "tqf/qmem.hpp"
#include "tqf/qrfpp.hpp"
#include "tqf/slices.hpp"

#include <iosfwd>

namespace tqf {

/// Per-component affine standardization of targets; constant components
/// keep sd = 1.
struct TargetScaler {
  Vector means;
  Vector sds;

  static TargetScaler fit(const Matrix& Y);
  static TargetScaler identity(int d);

  int dim() const { return static_cast<int>(means.size()); }
  Matrix transform(const Matrix& Y) const;
  Matrix inverse(const Matrix& Z) const;
};

struct TqfConfig {
  int G = 1;        // copies of each training row
  int G_tilde = 1;  // rotated direction blocks in the features (1 = direction only)
  FrequencyScheme scheme = FrequencyScheme::Explicit;
  int T = 0;
  std::vector<double> explicit_w;
  std::size_t frequency_cap = 2000;
  ForestConfig forest;
  int K = 30;
  std::vector<double> levels = midpoint_levels(30);

  void validate() const;
};

struct AugmentedSet {
  Matrix features;              // (G N) × (p + G_tilde d)
  std::vector<double> targets;  // n_l · z_l
};

/// Replicates every row G times (row i*G + g) and pairs each copy with a
/// fresh uniform direction n on the full sphere.
AugmentedSet projective_augment(const Matrix& X, const Matrix& Z, int G, const std::vector<Matrix>& orthogonals,
                                RngStream& rng);

struct SliceInference {
  DirectionalQuantileSet slices;
  std::size_t repairs = 0;  // grid entries moved by the monotonicity sort
};

class TqfModel {
 public:
  TqfModel() = default;

  static TqfModel fit(const Dataset& data, const TqfConfig& config, const RngStream& rng);

  /// Raw forest quantiles F(x, n, q) at the given levels.
  std::vector<double> directional_quantiles(std::span<const double> x, const Vector& n,
                                            std::span<const double> levels) const;

  /// 1/2 [F(x, n, q) - F(x, -n, 1-q)], computed so that swapping (n, q) for
  /// (-n, 1-q) negates the result exactly.
  double symmetrized_quantile(std::span<const double> x, const Vector& n, double q) const;

  /// Symmetrized quantiles on the given directions, sorted along each row.
  SliceInference infer_slices_at(std::span<const double> x, const Matrix& directions,
                                 const std::vector<double>& levels) const;

  /// K fresh directions per call (scaled-target units).
  SliceInference infer_slices(std::span<const double> x, int K, const std::vector<double>& levels,
                              RngStream& rng) const;

  /// Quantiles of n·y in original target units for directions drawn in
  /// those units: Q_n(y) = n·mean + |D n| Q_u(z), u = D n / |D n|.
  DirectionalQuantileSet target_unit_slices(std::span<const double> x, int K, const std::vector<double>& levels,
                                            RngStream& rng) const;

  /// Slices, QMEM reconstruction, then the inverse scaler on the support.
  QmemResult predict_distribution(std::span<const double> x, const QmemConfig& qmem, const RngStream& rng) const;

  /// Maps a cloud in scaled units back to target units.
  WeightedPointCloud unscale(const WeightedPointCloud& cloud) const;

  const TargetScaler& scaler() const { return scaler_; }
  const std::vector<Matrix>& orthogonals() const { return orthogonals_; }
  const QrfppModel& qrf() const { return qrf_; }
  const TqfConfig& config() const { return config_; }
  int dim() const { return d_; }
  int num_covariates() const { return p_; }
  std::size_t feature_width() const { return static_cast<std::size_t>(p_ + config_.G_tilde * d_); }

  /// Self-checking binary model file.
  void save(const std::string& path) const;
  static TqfModel load(const std::string& path);
  /// FNV-1a 64 of the serialized model, as lowercase hex.
  std::string hash() const;

  void write(std::ostream& os) const;
  static TqfModel read(std::istream& is);

 private:
  std::vector<double> query_features(std::span<const double> x, const Vector& n) const;

  TargetScaler scaler_;
  std::vector<Matrix> orthogonals_;
  QrfppModel qrf_;
  TqfConfig config_;
  int d_ = 0;
  int p_ = 0;
};

/// Hazen quantiles of n·y over the k nearest rows of `data` to x.
std::vector<double> knn_directional_quantile(const Dataset& data, std::span<const double> x, const Vector& n,
                                             std::span<const double> levels, int k);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace tqf
