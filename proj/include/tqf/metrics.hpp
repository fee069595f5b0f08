#pragma once

#include "tqf/common.hpp"
#include "tqf/slices.hpp"

namespace tqf {

/// Weighted Hazen (Hyndman-Fan type 5) quantile.
///
/// Positive-weight entries are sorted ascending and given plotting positions
/// p_i = C_i - w_i / 2 on normalized cumulative weights; the quantile is the
/// linear interpolant of (p_i, z_i) at q, clamped to the extreme values
/// outside [p_1, p_n]. With uniform weights p_i = (i - 0.5) / n.
double hazen_quantile(const WeightedScalarSample& sample, double q);

/// Same as hazen_quantile for several levels, sorting the sample once.
std::vector<double> hazen_quantiles(const WeightedScalarSample& sample, std::span<const double> levels);

/// Hazen quantiles of values already sorted ascending with positive weights
/// summing to `total`. Levels need not be sorted.
void hazen_quantiles_sorted(std::span<const double> sorted_values, std::span<const double> weights,
                            double total, std::span<const double> levels, std::span<double> out);

/// Exact 1-Wasserstein distance between two weighted empirical measures on the
/// line, by integrating |F_a - F_b| over the merged support.
double w1_1d(const WeightedScalarSample& a, const WeightedScalarSample& b);

/// Monte Carlo sliced W1 over the rows of `directions`.
double sliced_w1(const WeightedPointCloud& a, const WeightedPointCloud& b, const Matrix& directions);

/// Energy distance with the radicand clamped at zero.
double energy_distance(const WeightedPointCloud& a, const WeightedPointCloud& b);

/// Gaussian-kernel MMD, k(x,y) = exp(-|x-y|^2 / (2 h^2)).
double mmd(const WeightedPointCloud& a, const WeightedPointCloud& b, double bandwidth);

/// Median pairwise distance of the pooled support (median heuristic).
double median_heuristic_bandwidth(const WeightedPointCloud& a, const WeightedPointCloud& b,
                                  std::size_t cap = 2000);

double crps(double y, const WeightedScalarSample& pred);

double energy_score(const Vector& y, const WeightedPointCloud& pred);

/// Energy scores for each row of `ys` against one predictive cloud. The
/// y-independent dispersion term is computed once.
std::vector<double> energy_scores(const Matrix& ys, const WeightedPointCloud& pred);

/// (d-1) sqrt(pi) Gamma((d-1)/2) / Gamma(d/2), via lgamma. Requires d >= 2.
double slice_energy_coefficient(int d);

/// Energy score from directional quantiles through the averaged pinball loss.
double energy_score_from_slices(const Vector& y, const DirectionalQuantileSet& slices);

/// 1 - SSE / SST pooled over all target components.
double r_squared(const Matrix& truth, const Matrix& pred);

}  // namespace tqf
