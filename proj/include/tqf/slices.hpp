#pragma once

#include "tqf/common.hpp"

namespace tqf {

/// K×M grid of directional quantiles {(n_k, q_m, Q_km)}.
struct DirectionalQuantileSet {
  Matrix directions;           // K×d, unit rows
  std::vector<double> levels;  // M, strictly increasing in (0,1)
  Matrix values;               // K×M, nondecreasing along each row

  int dim() const { return static_cast<int>(directions.cols()); }
  int num_directions() const { return static_cast<int>(directions.rows()); }
  int num_levels() const { return static_cast<int>(levels.size()); }

  /// Shape, unit-norm, level and monotonicity checks; throws Error(Data).
  void validate() const;
};

/// Midpoint level grid (m - 0.5) / M.
std::vector<double> midpoint_levels(int M);

/// Hazen directional quantiles of a weighted cloud along the given directions.
DirectionalQuantileSet slices_from_cloud(const WeightedPointCloud& cloud, const Matrix& directions,
                                         const std::vector<double>& levels);

}  // namespace tqf
