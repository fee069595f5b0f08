#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tqf {

/// Row-major dense matrix; rows are observations / points.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Error categories. The numeric values double as CLI exit codes and C API
/// status codes.
enum class ErrorKind : int {
  Usage = 1,      // bad arguments or configuration
  Data = 2,       // malformed or inconsistent input data
  Numerical = 3,  // degenerate numerics (empty measure, zero variance, ...)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
  if (!cond) fail(kind, msg);
}

/// One-dimensional weighted sample. Entries with zero weight carry no mass
/// and are ignored by every consumer.
struct WeightedScalarSample {
  std::vector<double> values;
  std::vector<double> weights;

  static WeightedScalarSample uniform(std::vector<double> values);
  std::size_t size() const { return values.size(); }
};

/// Finite support points (rows of `points`) with a probability vector.
struct WeightedPointCloud {
  Matrix points;
  Vector weights;

  static WeightedPointCloud uniform(Matrix points);
  static WeightedPointCloud dirac(const Vector& at);

  Eigen::Index size() const { return points.rows(); }
  Eigen::Index dim() const { return points.cols(); }

  /// Throws Error(Data) if weights are negative, do not sum to one within
  /// `tol`, or any point is non-finite.
  void validate(double tol = 1e-9) const;

  /// Weighted mean of the support.
  Vector mean() const;
};

/// Union of two clouds with mixture weights (1-lambda, lambda).
WeightedPointCloud mixture(const WeightedPointCloud& a, const WeightedPointCloud& b, double lambda);

/// Projection n·z_j of every support point, weights carried over.
WeightedScalarSample project(const WeightedPointCloud& cloud, const Vector& direction);

}  // namespace tqf
