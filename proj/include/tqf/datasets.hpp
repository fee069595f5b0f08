#pragma once

#include "tqf/rng.hpp"

#include <map>
#include <string>

namespace tqf {

struct Dataset {
  Matrix X;  // n×p covariates (p may be 0)
  Matrix Y;  // n×d targets
  std::vector<std::string> feature_names;
  std::vector<std::string> target_names;

  Eigen::Index rows() const { return Y.rows(); }
  void validate() const;
};

/// Named synthetic generator. n = 0 selects the generator's default size.
/// Recognized params: rect_rotor "p"; seven_rotor "p1", "p2".
struct GeneratorSpec {
  std::string name;
  long n = 0;
  std::uint64_t seed = 0;
  std::map<std::string, double> params;
};

const std::vector<std::string>& generator_names();
long default_size(const std::string& name);

Dataset generate(const GeneratorSpec& spec);

/// i.i.d. draws from the true conditional law. Conditions: "a" for
/// rect_rotor / seven_rotor, "x" for sliding_disk and qrfpp_* (value of the
/// informative coordinate); two_moons is unconditional.
WeightedPointCloud ground_truth_sample(const std::string& name, const std::map<std::string, double>& condition,
                                       int count, RngStream& rng);

/// Analytic conditional quantile of the qrfpp_* generators at informative
/// coordinate value x.
double conditional_quantile(const std::string& name, double x, double q);

/// The fixed "7" glyph cloud (standardized, 1,312 points by default).
const Matrix& seven_base_cloud();

/// Clockwise rotation by (pi/2) a applied to every row.
Matrix rotate_clockwise(const Matrix& points, double a);

enum class ColumnTransform { None, Standardize, RankUniform };

ColumnTransform column_transform_from_string(const std::string& name);

struct CsvOptions {
  std::vector<std::string> features;  // empty with targets empty: infer from x*/y* prefixes
  std::vector<std::string> targets;
  std::map<std::string, ColumnTransform> transforms;
};

Dataset load_csv(const std::string& path, const CsvOptions& options = {});

/// Writes feature columns then target columns with a header row, values in
/// %.17g so a reload reproduces every double exactly.
void save_csv(const Dataset& data, const std::string& path);

/// Hazen plotting positions of ranks, ties averaged.
std::vector<double> rank_uniform(std::span<const double> values);

}  // namespace tqf
