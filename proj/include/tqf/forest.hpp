#pragma once

#include "tqf/common.hpp"

#include <iosfwd>

namespace tqf {

struct ForestConfig {
  int n_trees = 100;
  int min_samples_leaf = 5;
  double max_features = 1.0;  // fraction of features tried per split, in (0,1]
  bool bootstrap = true;
  std::uint64_t seed = 0;
  int n_threads = 0;  // 0: TQF_NUM_THREADS or hardware concurrency

  void validate() const;
};

struct LeafMember {
  std::uint32_t row;
  std::uint32_t multiplicity;
};

/// Flat tree node. Leaves have feature == -1 and own a range of the tree's
/// member array; internal nodes send x[feature] <= threshold to `left`.
struct TreeNode {
  std::int32_t feature = -1;
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::uint32_t member_begin = 0;
  std::uint32_t member_count = 0;
  double gain = 0.0;  // total squared-error reduction at this split

  bool is_leaf() const { return feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  std::vector<LeafMember> members;
  std::vector<double> gain_by_coordinate;

  std::size_t leaf_index(std::span<const double> x) const;
  int depth() const;
  std::size_t num_leaves() const;
};

struct TargetImportance {
  std::vector<double> mean;
  std::vector<double> sd;
};

/// Multi-output CART forest that keeps leaf membership for quantile
/// aggregation over a scalar response.
class QuantileForestModel {
 public:
  QuantileForestModel() = default;

  /// Grows `config.n_trees` trees on bootstrap resamples. Splits maximize the
  /// summed squared-error reduction over all columns of `split_targets`;
  /// leaves retain (row, multiplicity) pairs that index `raw_targets`.
  static QuantileForestModel fit(const Matrix& X, const Matrix& split_targets, std::span<const double> raw_targets,
                                 const ForestConfig& config);

  /// Dense QRF weights over training rows, summing to one.
  std::vector<double> neighbor_weights(std::span<const double> x) const;

  /// Hazen quantiles of raw_targets under neighbor_weights(x).
  std::vector<double> predict_quantiles(std::span<const double> x, std::span<const double> levels) const;

  /// Weighted mean of raw_targets under neighbor_weights(x).
  double predict_mean(std::span<const double> x) const;

  /// Per-tree normalized split gain per target column, averaged over trees.
  TargetImportance target_importance() const;

  const std::vector<Tree>& trees() const { return trees_; }
  const ForestConfig& config() const { return config_; }
  const std::vector<double>& raw_targets() const { return raw_targets_; }
  const Matrix& split_targets() const { return split_targets_; }
  std::size_t num_features() const { return n_features_; }
  std::size_t num_outputs() const { return n_outputs_; }
  std::size_t num_rows() const { return raw_targets_.size(); }
  double mean_depth() const;

  /// Binary persistence. The training split-target matrix is not stored.
  void write(std::ostream& os) const;
  static QuantileForestModel read(std::istream& is);

 private:
  void build_rank();

  // Accumulates per-row weights of x into `acc` and records touched rows.
  void accumulate(std::span<const double> x, std::vector<double>& acc, std::vector<std::uint32_t>& touched) const;

  std::vector<Tree> trees_;
  ForestConfig config_;
  std::vector<double> raw_targets_;
  Matrix split_targets_;
  std::size_t n_features_ = 0;
  std::size_t n_outputs_ = 0;
  std::vector<std::uint32_t> rank_;  // rank of each row in ascending raw_targets order
};

/// Thread count from TQF_NUM_THREADS, else hardware concurrency (min 1).
int default_thread_count();

}  // namespace tqf
