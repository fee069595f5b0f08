#include "oracles.hpp"
#include "tqf/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace tqf;
using tqf::oracle::random_cloud;
using tqf::oracle::random_scalar_sample;

namespace {

WeightedScalarSample sample(std::vector<double> v, std::vector<double> w = {}) {
  if (w.empty()) w.assign(v.size(), 1.0 / static_cast<double>(v.size()));
  return WeightedScalarSample{std::move(v), std::move(w)};
}

WeightedPointCloud dirac(std::initializer_list<double> at) {
  Vector v(static_cast<Eigen::Index>(at.size()));
  Eigen::Index i = 0;
  for (double x : at) v[i++] = x;
  return WeightedPointCloud::dirac(v);
}

}  // namespace

// ---- Hazen quantiles

TEST(Hazen, UniformMedianOfFour) { EXPECT_DOUBLE_EQ(hazen_quantile(sample({1, 2, 3, 4}), 0.5), 2.5); }

TEST(Hazen, SinglePoint) {
  for (double q : {0.01, 0.3, 0.99}) EXPECT_EQ(hazen_quantile(sample({7.5}), q), 7.5);
}

TEST(Hazen, ClampsBelowFirstPosition) { EXPECT_EQ(hazen_quantile(sample({0, 10}, {0.9, 0.1}), 0.05), 0.0); }

TEST(Hazen, ZeroTotalWeightIsAnError) {
  EXPECT_THROW(hazen_quantile(sample({1, 2}, {0.0, 0.0}), 0.5), Error);
}

TEST(Hazen, MatchesTypeFiveOnUniformWeights) {
  RngStream rng(3);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 1 + rng.index(12);
    std::vector<double> v;
    for (std::size_t i = 0; i < n; ++i) v.push_back(std::round(4.0 * rng.normal()) / 2.0);
    const double q = 0.001 + 0.998 * rng.uniform();
    EXPECT_NEAR(hazen_quantile(sample(v), q), oracle::type5_quantile(v, q), 1e-12);
  }
}

TEST(Hazen, NondecreasingInLevel) {
  RngStream rng(5);
  for (int rep = 0; rep < 100; ++rep) {
    const auto s = random_scalar_sample(rng, 1 + rng.index(20), rep % 2 == 0);
    std::vector<double> levels;
    for (int m = 1; m <= 99; ++m) levels.push_back(m / 100.0);
    const auto q = hazen_quantiles(s, levels);
    for (std::size_t m = 1; m < q.size(); ++m) ASSERT_LE(q[m - 1], q[m]);
  }
}

// ---- W1

TEST(W1, DiracDistance) { EXPECT_DOUBLE_EQ(w1_1d(sample({0}), sample({3})), 3.0); }

TEST(W1, IdenticalSamplesAreZero) { EXPECT_EQ(w1_1d(sample({1, 4, 2}), sample({1, 4, 2})), 0.0); }

TEST(W1, TwoPointsAgainstMidpoint) { EXPECT_DOUBLE_EQ(w1_1d(sample({0, 1}), sample({0.5})), 0.5); }

TEST(W1, MatchesTransportLinearProgram) {
  RngStream rng(17);
  for (int rep = 0; rep < 300; ++rep) {
    const auto a = random_scalar_sample(rng, 1 + rng.index(6), rep % 3 == 0);
    const auto b = random_scalar_sample(rng, 1 + rng.index(6), rep % 5 == 0);
    const double lp = oracle::transport_lp_w1(a.values, a.weights, b.values, b.weights);
    EXPECT_NEAR(w1_1d(a, b), lp, 1e-9);
  }
}

TEST(W1, SymmetricAndTriangle) {
  RngStream rng(23);
  for (int rep = 0; rep < 100; ++rep) {
    const auto a = random_scalar_sample(rng, 1 + rng.index(8));
    const auto b = random_scalar_sample(rng, 1 + rng.index(8));
    const auto c = random_scalar_sample(rng, 1 + rng.index(8));
    EXPECT_NEAR(w1_1d(a, b), w1_1d(b, a), 1e-12);
    EXPECT_GE(w1_1d(a, b), 0.0);
    EXPECT_LE(w1_1d(a, c), w1_1d(a, b) + w1_1d(b, c) + 1e-12);
  }
}

// ---- sliced W1

TEST(SlicedW1, ZeroOnIdenticalClouds) {
  RngStream rng(1);
  const auto c = random_cloud(rng, 10, 3);
  EXPECT_EQ(sliced_w1(c, c, sample_directions(rng, 3, 20)), 0.0);
}

TEST(SlicedW1, OneDimensionalReducesToW1) {
  RngStream rng(2);
  const auto a = random_cloud(rng, 7, 1), b = random_cloud(rng, 4, 1);
  Matrix dirs(1, 1);
  dirs << 1.0;
  const WeightedScalarSample pa{{a.points.data(), a.points.data() + 7}, {a.weights.data(), a.weights.data() + 7}};
  const WeightedScalarSample pb{{b.points.data(), b.points.data() + 4}, {b.weights.data(), b.weights.data() + 4}};
  EXPECT_NEAR(sliced_w1(a, b, dirs), w1_1d(pa, pb), 1e-14);
}

TEST(SlicedW1, TwoDiracsAverageProjection) {
  RngStream rng(9);
  const Matrix dirs = sample_directions(rng, 2, 10000);
  const double v = sliced_w1(dirac({0.3, -1.0}), dirac({1.5, 0.6}), dirs);
  const double expected = 2.0 / std::numbers::pi * std::hypot(1.2, 1.6);
  EXPECT_NEAR(v, expected, 0.02 * expected);
}

TEST(SlicedW1, DimensionMismatchIsAnError) {
  RngStream rng(1);
  EXPECT_THROW(sliced_w1(random_cloud(rng, 3, 2), random_cloud(rng, 3, 3), sample_directions(rng, 2, 4)), Error);
}

TEST(SlicedW1, ConvexInMixtures) {
  RngStream rng(31);
  for (int rep = 0; rep < 60; ++rep) {
    const auto mu1 = random_cloud(rng, 1 + static_cast<Eigen::Index>(rng.index(8)), 2);
    const auto mu2 = random_cloud(rng, 1 + static_cast<Eigen::Index>(rng.index(8)), 2, 2.0);
    const auto nu = random_cloud(rng, 1 + static_cast<Eigen::Index>(rng.index(8)), 2);
    const Matrix dirs = sample_directions(rng, 2, 16);
    for (double lambda : {0.25, 0.5, 0.75}) {
      const double lhs = sliced_w1(mixture(mu1, mu2, lambda), nu, dirs);
      const double rhs = (1 - lambda) * sliced_w1(mu1, nu, dirs) + lambda * sliced_w1(mu2, nu, dirs);
      EXPECT_LE(lhs, rhs + 1e-9);
    }
  }
}

// ---- ED and MMD

TEST(EnergyDistance, ZeroOnIdenticalClouds) {
  RngStream rng(4);
  const auto c = random_cloud(rng, 12, 2);
  EXPECT_EQ(energy_distance(c, c), 0.0);
}

TEST(EnergyDistance, DiracPair) {
  EXPECT_NEAR(energy_distance(dirac({0, 0}), dirac({3, 4})), std::sqrt(10.0), 1e-12);
}

TEST(EnergyDistance, SymmetricNonnegative) {
  RngStream rng(6);
  for (int rep = 0; rep < 50; ++rep) {
    const auto a = random_cloud(rng, 5, 3), b = random_cloud(rng, 8, 3);
    EXPECT_NEAR(energy_distance(a, b), energy_distance(b, a), 1e-12);
    EXPECT_GE(energy_distance(a, b), 0.0);
  }
}

TEST(Mmd, ClosedFormForDiracs) {
  const double r = 1.7, h = 0.8;
  EXPECT_NEAR(mmd(dirac({0.0}), dirac({r}), h), std::sqrt(2.0 - 2.0 * std::exp(-r * r / (2 * h * h))), 1e-12);
}

TEST(Mmd, ZeroWhenSameSinglePoint) {
  EXPECT_EQ(mmd(dirac({1, 2}), dirac({1, 2}), 0.3), 0.0);
  RngStream rng(2);
  const auto c = random_cloud(rng, 9, 2);
  EXPECT_EQ(mmd(c, c, median_heuristic_bandwidth(c, c)), 0.0);
}

TEST(Mmd, SymmetricNonnegative) {
  RngStream rng(8);
  const auto a = random_cloud(rng, 5, 2), b = random_cloud(rng, 6, 2);
  EXPECT_NEAR(mmd(a, b, 0.7), mmd(b, a, 0.7), 1e-12);
  EXPECT_GT(mmd(a, b, 0.7), 0.0);
}

// ---- scores

TEST(Crps, PointMassCases) {
  EXPECT_EQ(crps(2.0, sample({2.0})), 0.0);
  EXPECT_DOUBLE_EQ(crps(2.0, sample({-1.5})), 3.5);
  EXPECT_DOUBLE_EQ(crps(0.0, sample({-1.0, 1.0})), 0.5);
}

TEST(EnergyScore, PointMassCases) {
  Vector y(2);
  y << 1.0, -2.0;
  EXPECT_EQ(energy_score(y, WeightedPointCloud::dirac(y)), 0.0);
  EXPECT_NEAR(energy_score(y, dirac({4.0, 2.0})), 5.0, 1e-12);
  Matrix pts(2, 2);
  pts << 1, 0, -1, 0;
  EXPECT_DOUBLE_EQ(energy_score(Vector::Zero(2), WeightedPointCloud::uniform(pts)), 0.5);
}

TEST(EnergyScore, MatchesDirectDoubleSum) {
  RngStream rng(12);
  for (int rep = 0; rep < 30; ++rep) {
    const auto c = random_cloud(rng, 1 + static_cast<Eigen::Index>(rng.index(15)), 3);
    Vector y(3);
    y << rng.normal(), rng.normal(), rng.normal();
    EXPECT_NEAR(energy_score(y, c), oracle::direct_energy_score(y, c.points, c.weights), 1e-12);
  }
}

TEST(EnergyScore, BatchedRowsMatchSingle) {
  RngStream rng(13);
  const auto c = random_cloud(rng, 20, 2);
  const Matrix ys = random_cloud(rng, 5, 2).points;
  const auto rows = energy_scores(ys, c);
  for (Eigen::Index i = 0; i < ys.rows(); ++i) EXPECT_NEAR(rows[static_cast<std::size_t>(i)], energy_score(ys.row(i).transpose(), c), 1e-12);
}

TEST(SliceEnergyScore, CoefficientInTwoDimensions) { EXPECT_NEAR(slice_energy_coefficient(2), std::numbers::pi, 1e-12); }

TEST(SliceEnergyScore, OneDimensionIsAnError) {
  DirectionalQuantileSet s;
  s.directions = Matrix::Ones(1, 1);
  s.levels = {0.5};
  s.values = Matrix::Zero(1, 1);
  EXPECT_THROW(energy_score_from_slices(Vector::Zero(1), s), Error);
}

TEST(SliceEnergyScore, ZeroOnOwnDiracSlices) {
  RngStream rng(14);
  Vector y(2);
  y << 0.4, -1.1;
  const auto s = slices_from_cloud(WeightedPointCloud::dirac(y), sample_directions(rng, 2, 30), midpoint_levels(20));
  EXPECT_NEAR(energy_score_from_slices(y, s), 0.0, 1e-15);
}

TEST(SliceEnergyScore, DiracPredictionApproachesDistance) {
  RngStream rng(15);
  Vector y(2), z(2);
  y << 0.0, 0.0;
  z << 1.0, 2.0;
  const auto s = slices_from_cloud(WeightedPointCloud::dirac(z), sample_directions(rng, 2, 500), midpoint_levels(200));
  const double direct = energy_score(y, WeightedPointCloud::dirac(z));
  EXPECT_NEAR(energy_score_from_slices(y, s), direct, 0.02 * direct);
}

// ---- R^2

TEST(RSquared, Cases) {
  Matrix t(4, 2);
  t << 1, 2, 3, 5, 2, 2, 0, 7;
  EXPECT_DOUBLE_EQ(r_squared(t, t), 1.0);
  Matrix means = t.colwise().mean().replicate(4, 1);
  EXPECT_NEAR(r_squared(t, means), 0.0, 1e-15);
  Matrix a(2, 1), b(2, 1);
  a << 0, 2;
  b << 1, 1;
  EXPECT_DOUBLE_EQ(r_squared(a, b), 0.0);
  EXPECT_THROW(r_squared(Matrix::Ones(3, 1), Matrix::Zero(3, 1)), Error);
}
