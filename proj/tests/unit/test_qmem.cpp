#include "properties.hpp"
#include "tqf/datasets.hpp"
#include "tqf/metrics.hpp"
#include "tqf/qmem.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numbers>
#include <numeric>

using namespace tqf;
using tqf::oracle::random_cloud;
using tqf::oracle::random_simplex;
using tqf::oracle::slices_of;
using tqf::oracle::convexity_sweep;

namespace {

WeightedPointCloud moons(int n, std::uint64_t seed) {
  const Dataset D = generate({"two_moons", n, seed, {}});
  return WeightedPointCloud::uniform(D.Y);
}

void expect_simplex(const Vector& w) {
  EXPECT_GE(w.minCoeff(), 0.0);
  EXPECT_NEAR(w.sum(), 1.0, 1e-9);
}

}  // namespace

// ---- loss

TEST(QmemLoss, SelfConsistencyIsExactlyZero) {
  RngStream rng(1);
  for (int rep = 0; rep < 50; ++rep) {
    const auto c = random_cloud(rng, 1 + static_cast<Eigen::Index>(rng.index(30)), 1 + static_cast<Eigen::Index>(rng.index(3)));
    const auto s = slices_of(c, 1 + static_cast<int>(rng.index(20)), 1 + static_cast<int>(rng.index(20)), static_cast<std::uint64_t>(rep));
    ASSERT_EQ(qmem_loss(c, s), 0.0);
  }
}

TEST(QmemLoss, DiracAgainstDiracSlices) {
  RngStream rng(2);
  Vector z(2), z2(2);
  z << 0.4, -0.2;
  z2 << -1.0, 0.5;
  const auto s = slices_of(WeightedPointCloud::dirac(z2), 30, 7, 3);
  double expected = 0.0;
  for (Eigen::Index k = 0; k < 30; ++k) expected += std::abs(s.directions.row(k).dot(z - z2));
  expected /= 30.0;
  EXPECT_NEAR(qmem_loss(WeightedPointCloud::dirac(z), s), expected, 1e-12);
  EXPECT_EQ(qmem_loss(WeightedPointCloud::dirac(z2), s), 0.0);
}

TEST(QmemLoss, PermutationInvariant) {
  RngStream rng(3);
  const auto c = random_cloud(rng, 12, 2);
  const auto s = slices_of(random_cloud(rng, 9, 2), 15, 10, 4);
  std::vector<int> perm(12);
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  std::swap(perm[2], perm[7]);
  WeightedPointCloud p = c;
  for (int i = 0; i < 12; ++i) {
    p.points.row(i) = c.points.row(perm[static_cast<std::size_t>(i)]);
    p.weights[i] = c.weights[perm[static_cast<std::size_t>(i)]];
  }
  EXPECT_NEAR(qmem_loss(p, s), qmem_loss(c, s), 1e-14);
}

TEST(QmemLoss, EvaluatorMatchesFreeFunction) {
  RngStream rng(4);
  const auto c = random_cloud(rng, 10, 3);
  const auto s = slices_of(random_cloud(rng, 6, 3), 11, 13, 5);
  const LossEvaluator L(c.points, s);
  EXPECT_NEAR(L.loss(c.weights), qmem_loss(c, s), 1e-14);
  Vector g;
  EXPECT_NEAR(L.loss_and_gradient(c.weights, g), qmem_loss(c, s), 1e-14);
  EXPECT_EQ(g.size(), 10);
}

TEST(QmemLoss, EmptyCloudIsAnError) {
  RngStream rng(5);
  const auto s = slices_of(random_cloud(rng, 3, 2), 4, 4, 6);
  WeightedPointCloud empty;
  empty.points.resize(0, 2);
  EXPECT_THROW(qmem_loss(empty, s), Error);
}

TEST(QmemLoss, ApproximatelyConvexInWeights) {
  // The Hazen interpolation makes the loss piecewise-smooth rather than
  // convex in the weights.
  EXPECT_LE(convexity_sweep(200), oracle::kConvexityEps);
}

// ---- weights

TEST(OptimizeWeights, SinglePoint) {
  RngStream rng(6);
  const auto s = slices_of(random_cloud(rng, 5, 2), 10, 10, 7);
  const Vector w = optimize_weights(Matrix::Zero(1, 2), s, 100);
  ASSERT_EQ(w.size(), 1);
  EXPECT_EQ(w[0], 1.0);
}

TEST(OptimizeWeights, RecoversTwoPointWeights) {
  WeightedPointCloud c;
  c.points.resize(2, 2);
  c.points << -1.0, 0.3, 0.8, -0.5;
  c.weights.resize(2);
  c.weights << 0.7, 0.3;
  const auto s = slices_of(c, 50, 50, 8);
  const Vector w = optimize_weights(c.points, s, 2000);
  // Grid search over the 1-simplex as the reference.
  double best = std::numeric_limits<double>::infinity(), arg = 0.0;
  const LossEvaluator L(c.points, s);
  for (int i = 0; i <= 1000; ++i) {
    Vector v(2);
    v << i / 1000.0, 1.0 - i / 1000.0;
    const double l = L.loss(v);
    if (l < best) {
      best = l;
      arg = v[0];
    }
  }
  EXPECT_NEAR(arg, 0.7, 0.05);
  EXPECT_NEAR(w[0], 0.7, 0.05);
  expect_simplex(w);
}

TEST(OptimizeWeights, FeasibleAndNeverWorseThanUniform) {
  RngStream rng(9);
  for (int rep = 0; rep < 100; ++rep) {
    const int J = 1 + static_cast<int>(rng.index(40));
    const auto truth = random_cloud(rng, 1 + static_cast<Eigen::Index>(rng.index(20)), 2);
    const auto s = slices_of(truth, 10, 10, 100 + static_cast<std::uint64_t>(rep));
    const Matrix support = random_cloud(rng, J, 2).points;
    const Vector w = optimize_weights(support, s, 300);
    expect_simplex(w);
    const LossEvaluator L(support, s);
    EXPECT_LE(L.loss(w), L.loss(Vector::Constant(J, 1.0 / J)) + 1e-12);
  }
}

TEST(Simplex, ProjectionProperties) {
  RngStream rng(10);
  for (int rep = 0; rep < 100; ++rep) {
    Vector v(8);
    for (Eigen::Index i = 0; i < 8; ++i) v[i] = 3.0 * rng.normal();
    const Vector p = project_to_simplex(v);
    expect_simplex(p);
    const Vector q = random_simplex(rng, 8);
    // Projection is the closest feasible point.
    EXPECT_LE((p - v).norm(), (q - v).norm() + 1e-12);
    EXPECT_LE((project_to_simplex(q) - q).norm(), 1e-12);
  }
}

// ---- locations

TEST(OptimizeLocations, DiracSlicesRecoverThePoint) {
  Vector z(2);
  z << 0.7, -1.3;
  const auto s = slices_of(WeightedPointCloud::dirac(z), 25, 9, 11);
  RngStream rng(12);
  const Matrix Z = optimize_locations(s, 1, 2000, rng);
  EXPECT_LE((Z.row(0).transpose() - z).norm(), 1e-3);
}

TEST(OptimizeLocations, SymmetricSlicesGiveOrigin) {
  RngStream rng(13);
  Matrix pts = random_cloud(rng, 20, 2).points;
  Matrix sym(40, 2);
  sym << pts, -pts;
  const auto s = slices_of(WeightedPointCloud::uniform(sym), 30, 20, 14);
  const Matrix Z = optimize_locations(s, 1, 2000, rng);
  EXPECT_LE(Z.row(0).norm(), 0.05);
}

TEST(OptimizeLocations, NotWorseThanRandomStarts) {
  const auto s = slices_of(moons(2000, 3), 25, 25, 15);
  RngStream rng(16);
  const Matrix Z = optimize_locations(s, 9, 2000, rng);
  const double found = qmem_loss(WeightedPointCloud::uniform(Z), s);
  for (int rep = 0; rep < 20; ++rep) EXPECT_LE(found, qmem_loss(random_cloud(rng, 9, 2), s) + 1e-12);
}

// ---- KDE

TEST(Kde, SinglePointHasUnitEffectiveSize) {
  Vector z(2);
  z << 1.0, 2.0;
  const auto kde = KdeModel::fit(WeightedPointCloud::dirac(z));
  EXPECT_EQ(kde.factor, 1.0);
  RngStream rng(17);
  const Matrix s = kde.sample(100, rng);
  for (Eigen::Index i = 0; i < 100; ++i) EXPECT_LE((s.row(i).transpose() - z).norm(), 1e-3);
}

TEST(Kde, UniformWeightsEffectiveSize) {
  RngStream rng(18);
  const auto c = WeightedPointCloud::uniform(random_cloud(rng, 64, 2).points);
  EXPECT_NEAR(KdeModel::fit(c).factor, std::pow(64.0, -1.0 / 6.0), 1e-12);
}

TEST(Kde, SampleCovarianceInflation) {
  RngStream rng(19);
  Matrix pts(1000, 2);
  for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = rng.normal();
  const auto kde = KdeModel::fit(WeightedPointCloud::uniform(pts));
  const Matrix s = kde.sample(100000, rng);
  const Matrix centered = s.rowwise() - s.colwise().mean();
  const Matrix cov = centered.transpose() * centered / static_cast<double>(s.rows() - 1);
  const double h2 = kde.factor * kde.factor;
  for (int a = 0; a < 2; ++a) EXPECT_NEAR(cov(a, a), 1.0 + h2, 0.15 * (1.0 + h2));
  EXPECT_LT(std::abs(cov(0, 1)), 0.15);
}

TEST(Kde, StandardNormalPeak) {
  const auto kde = KdeModel::with_kernel(WeightedPointCloud::dirac(Vector::Zero(2)), Matrix::Identity(2, 2));
  EXPECT_NEAR(kde.log_density(Vector::Zero(2)), -std::log(2.0 * std::numbers::pi), 1e-12);
}

TEST(Kde, DensityIntegratesToOne) {
  // Importance sampling from a wide Gaussian proposal.
  RngStream rng(20);
  const auto kde = KdeModel::fit(random_cloud(rng, 30, 2));
  const double s = 4.0;
  double acc = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    Vector y(2);
    y << s * rng.normal(), s * rng.normal();
    const double log_q = -std::log(2.0 * std::numbers::pi * s * s) - y.squaredNorm() / (2 * s * s);
    acc += std::exp(kde.log_density(y) - log_q);
  }
  EXPECT_NEAR(acc / n, 1.0, 0.02);
}

TEST(Kde, SymmetricCloudSymmetricDensity) {
  RngStream rng(21);
  Matrix pts = random_cloud(rng, 10, 2).points;
  Matrix sym(20, 2);
  sym << pts, -pts;
  const auto kde = KdeModel::fit(WeightedPointCloud::uniform(sym));
  for (int rep = 0; rep < 20; ++rep) {
    Vector y(2);
    y << rng.normal(), rng.normal();
    EXPECT_NEAR(kde.log_density(y), kde.log_density(-y), 1e-9);
  }
}

// ---- prune

TEST(Prune, ZeroTailDropsExactly) {
  RngStream rng(22);
  WeightedPointCloud c = random_cloud(rng, 10, 2);
  c.weights.tail(4).setZero();
  c.weights /= c.weights.sum();
  const auto s = slices_of(random_cloud(rng, 8, 2), 20, 20, 23);
  const auto p = prune(c, s, 1);
  EXPECT_LE(p.cloud.size(), 6);
  EXPECT_LE(p.loss, qmem_loss(c, s) + 1e-12);
  expect_simplex(p.cloud.weights);
}

TEST(Prune, NeverIncreasesLoss) {
  RngStream rng(24);
  for (int rep = 0; rep < 40; ++rep) {
    const Matrix support = random_cloud(rng, 60, 2).points;
    const auto s = slices_of(random_cloud(rng, 10, 2), 15, 15, 200 + static_cast<std::uint64_t>(rep));
    WeightedPointCloud c{support, optimize_weights(support, s, 200)};
    for (int stride : {1, 7}) {
      const auto p = prune(c, s, stride);
      EXPECT_LE(p.loss, qmem_loss(c, s) + 1e-9);
      EXPECT_NEAR(p.loss, qmem_loss(p.cloud, s), 1e-12);
    }
  }
}

// ---- full reconstruction

TEST(Reconstruct, ContractsOnSmallRun) {
  const auto s = slices_of(moons(3000, 4), 15, 15, 25);
  QmemConfig cfg;
  cfg.N1 = 60;
  cfg.E = 4;
  cfg.max_alternations = 5;
  cfg.solver_budget = 500;
  const auto r = reconstruct(s, cfg, RngStream(4, 2));
  expect_simplex(r.cloud.weights);
  EXPECT_EQ(r.report.member_losses.size(), 4u);
  EXPECT_LE(r.report.merged_loss, r.report.mean_member_loss + 1e-9);
  EXPECT_TRUE(r.report.jensen_ok);
  EXPECT_LE(r.report.pruned_loss, r.report.merged_loss + 1e-9);
  EXPECT_NEAR(r.report.pruned_loss, qmem_loss(r.cloud, s), 1e-12);
  EXPECT_EQ(static_cast<std::size_t>(r.cloud.size()), r.report.pruned_size);
  // Alternations: the accepted prefix is strictly decreasing, and at most one
  // rejected attempt follows it.
  const auto& a = r.report.alternation_losses;
  ASSERT_GE(a.size(), static_cast<std::size_t>(r.report.accepted_alternations));
  double prev = r.report.location_loss;
  for (int i = 0; i < r.report.accepted_alternations; ++i) {
    EXPECT_LT(a[static_cast<std::size_t>(i)], prev);
    prev = a[static_cast<std::size_t>(i)];
  }
}

TEST(Reconstruct, DeterministicAcrossThreadCounts) {
  const auto s = slices_of(moons(1000, 5), 10, 10, 26);
  QmemConfig cfg;
  cfg.N1 = 30;
  cfg.E = 3;
  cfg.max_alternations = 3;
  cfg.solver_budget = 200;
  cfg.n_threads = 1;
  const auto a = reconstruct(s, cfg, RngStream(5, 2));
  cfg.n_threads = 3;
  const auto b = reconstruct(s, cfg, RngStream(5, 2));
  EXPECT_EQ(a.cloud.points, b.cloud.points);
  EXPECT_EQ(a.cloud.weights, b.cloud.weights);
}

TEST(Reconstruct, JensenBoundAcrossSeeds) {
  const auto s = slices_of(moons(2000, 6), 8, 8, 27);
  QmemConfig cfg;
  cfg.N0 = 5;
  cfg.N1 = 25;
  cfg.E = 3;
  cfg.max_alternations = 2;
  cfg.solver_budget = 150;
  for (std::uint64_t seed = 1; seed <= 15; ++seed) {
    const auto r = reconstruct(s, cfg, RngStream(seed, 2));
    EXPECT_LE(r.report.merged_loss, r.report.mean_member_loss + 1e-9) << seed;
    EXPECT_LE(r.report.pruned_loss, r.report.merged_loss + 1e-9) << seed;
  }
}

TEST(QmemConfig, Validation) {
  QmemConfig c;
  c.N0 = 200;
  c.N1 = 100;
  EXPECT_THROW(c.validate(), Error);
  c = QmemConfig{};
  c.rel_tol = 0.0;
  EXPECT_THROW(c.validate(), Error);
}
