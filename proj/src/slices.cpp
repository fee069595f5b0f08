#include "tqf/slices.hpp"

#include "tqf/metrics.hpp"

#include <cmath>

namespace tqf {

void DirectionalQuantileSet::validate() const {
  require(directions.rows() >= 1 && directions.cols() >= 1, ErrorKind::Data, "slice set has no directions");
  require(!levels.empty(), ErrorKind::Data, "slice set has no levels");
  require(values.rows() == directions.rows() && values.cols() == static_cast<Eigen::Index>(levels.size()),
          ErrorKind::Data, "slice values do not match K x M");
  for (Eigen::Index k = 0; k < directions.rows(); ++k)
    require(std::abs(directions.row(k).norm() - 1.0) <= 1e-9, ErrorKind::Data, "slice direction is not unit length");
  for (std::size_t m = 0; m < levels.size(); ++m) {
    require(levels[m] > 0.0 && levels[m] < 1.0, ErrorKind::Data, "slice level outside (0,1)");
    if (m > 0) require(levels[m] > levels[m - 1], ErrorKind::Data, "slice levels must be strictly increasing");
  }
  require(values.allFinite(), ErrorKind::Data, "slice values must be finite");
  for (Eigen::Index k = 0; k < values.rows(); ++k)
    for (Eigen::Index m = 1; m < values.cols(); ++m)
      require(values(k, m) >= values(k, m - 1), ErrorKind::Data, "slice values must be nondecreasing in level");
}

std::vector<double> midpoint_levels(int M) {
  require(M >= 1, ErrorKind::Usage, "level count must be positive");
  std::vector<double> out(static_cast<std::size_t>(M));
  for (int m = 0; m < M; ++m) out[static_cast<std::size_t>(m)] = (m + 0.5) / M;
  return out;
}

DirectionalQuantileSet slices_from_cloud(const WeightedPointCloud& cloud, const Matrix& directions,
                                         const std::vector<double>& levels) {
  require(directions.cols() == cloud.dim(), ErrorKind::Data, "slice directions do not match cloud dimension");
  DirectionalQuantileSet s;
  s.directions = directions;
  s.levels = levels;
  s.values.resize(directions.rows(), static_cast<Eigen::Index>(levels.size()));
  for (Eigen::Index k = 0; k < directions.rows(); ++k) {
    const auto q = hazen_quantiles(project(cloud, directions.row(k).transpose()), levels);
    for (std::size_t m = 0; m < q.size(); ++m) s.values(k, static_cast<Eigen::Index>(m)) = q[m];
  }
  return s;
}

}  // namespace tqf
