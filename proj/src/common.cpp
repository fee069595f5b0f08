#include "tqf/common.hpp"

#include <cmath>
#include <sstream>

namespace tqf {

WeightedScalarSample WeightedScalarSample::uniform(std::vector<double> values) {
  WeightedScalarSample s;
  const double w = values.empty() ? 0.0 : 1.0 / static_cast<double>(values.size());
  s.weights.assign(values.size(), w);
  s.values = std::move(values);
  return s;
}

WeightedPointCloud WeightedPointCloud::uniform(Matrix points) {
  WeightedPointCloud c;
  const auto n = points.rows();
  c.weights = Vector::Constant(n, n > 0 ? 1.0 / static_cast<double>(n) : 0.0);
  c.points = std::move(points);
  return c;
}

WeightedPointCloud WeightedPointCloud::dirac(const Vector& at) {
  WeightedPointCloud c;
  c.points = at.transpose();
  c.weights = Vector::Ones(1);
  return c;
}

void WeightedPointCloud::validate(double tol) const {
  require(points.rows() >= 1, ErrorKind::Data, "point cloud is empty");
  require(weights.size() == points.rows(), ErrorKind::Data, "point cloud weight count does not match point count");
  double total = 0.0;
  for (Eigen::Index j = 0; j < weights.size(); ++j) {
    require(std::isfinite(weights[j]) && weights[j] >= 0.0, ErrorKind::Data, "point cloud has a negative weight");
    total += weights[j];
  }
  if (std::abs(total - 1.0) > tol) {
    std::ostringstream os;
    os << "point cloud weights sum to " << total << ", expected 1";
    fail(ErrorKind::Data, os.str());
  }
  require(points.allFinite(), ErrorKind::Data, "point cloud has non-finite coordinates");
}

Vector WeightedPointCloud::mean() const { return points.transpose() * weights; }

WeightedPointCloud mixture(const WeightedPointCloud& a, const WeightedPointCloud& b, double lambda) {
  require(a.dim() == b.dim(), ErrorKind::Data, "mixture: dimension mismatch");
  WeightedPointCloud m;
  m.points.resize(a.size() + b.size(), a.dim());
  m.points << a.points, b.points;
  m.weights.resize(a.size() + b.size());
  m.weights << (1.0 - lambda) * a.weights, lambda * b.weights;
  return m;
}

WeightedScalarSample project(const WeightedPointCloud& cloud, const Vector& direction) {
  require(direction.size() == cloud.dim(), ErrorKind::Data, "projection direction has the wrong dimension");
  WeightedScalarSample s;
  const Vector proj = cloud.points * direction;
  s.values.assign(proj.data(), proj.data() + proj.size());
  s.weights.assign(cloud.weights.data(), cloud.weights.data() + cloud.weights.size());
  return s;
}

}  // namespace tqf
