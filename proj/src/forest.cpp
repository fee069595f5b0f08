#include "tqf/forest.hpp"

#include "tqf/metrics.hpp"
#include "tqf/rng.hpp"
#include "binary_io.hpp"
#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <sstream>

namespace tqf {

void ForestConfig::validate() const {
  require(n_trees >= 1, ErrorKind::Usage, "n_trees must be >= 1");
  require(min_samples_leaf >= 1, ErrorKind::Usage, "min_samples_leaf must be >= 1");
  require(max_features > 0.0 && max_features <= 1.0, ErrorKind::Usage, "max_features must lie in (0,1]");
}

int default_thread_count() { return detail::thread_count_from_env(0); }

std::size_t Tree::leaf_index(std::span<const double> x) const {
  std::size_t i = 0;
  while (!nodes[i].is_leaf()) {
    const TreeNode& node = nodes[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right);
  }
  return i;
}

int Tree::depth() const {
  std::vector<int> depth(nodes.size(), 0);
  int best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    best = std::max(best, depth[i]);
    if (!nodes[i].is_leaf()) {
      depth[static_cast<std::size_t>(nodes[i].left)] = depth[i] + 1;
      depth[static_cast<std::size_t>(nodes[i].right)] = depth[i] + 1;
    }
  }
  return best;
}

std::size_t Tree::num_leaves() const {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

namespace {

// Grows one tree over presorted feature orders.
class TreeBuilder {
 public:
  TreeBuilder(const Matrix& X, const Matrix& Y, const std::vector<std::vector<std::uint32_t>>& presorted,
              const ForestConfig& config)
      : X_(X), Y_(Y), presorted_(presorted), config_(config) {}

  Tree build(RngStream rng) {
    const std::size_t n = static_cast<std::size_t>(X_.rows());
    const std::size_t p = static_cast<std::size_t>(X_.cols());
    const std::size_t q = static_cast<std::size_t>(Y_.cols());

    mult_.assign(n, 0);
    if (config_.bootstrap) {
      for (std::size_t i = 0; i < n; ++i) ++mult_[rng.index(n)];
    } else {
      std::fill(mult_.begin(), mult_.end(), 1u);
    }
    std::size_t m = 0;
    for (std::size_t i = 0; i < n; ++i) m += mult_[i] > 0 ? 1 : 0;

    // Per-feature in-bag orders, feature-major. With no features we still
    // need one row list for the leaf.
    const std::size_t lists = std::max<std::size_t>(p, 1);
    order_.resize(lists * m);
    xs_.resize(p * m);
    if (p == 0) {
      std::size_t k = 0;
      for (std::uint32_t r = 0; r < n; ++r)
        if (mult_[r] > 0) order_[k++] = r;
    } else {
      for (std::size_t f = 0; f < p; ++f) {
        std::size_t k = 0;
        const auto col = static_cast<Eigen::Index>(f);
        for (std::uint32_t r : presorted_[f])
          if (mult_[r] > 0) {
            xs_[f * m + k] = X_(r, col);
            order_[f * m + k++] = r;
          }
      }
    }
    m_ = m;
    goes_left_.assign(n, 0);
    local_.assign(n, 0);
    scratch_.resize(m);
    xscratch_.resize(m);
    mean_.resize(q);
    acc_.resize(q);
    best_acc_.resize(q);

    Tree tree;
    tree.gain_by_coordinate.assign(q, 0.0);
    tree.nodes.emplace_back();

    struct Pending {
      std::size_t node;
      std::size_t begin;
      std::size_t end;
    };
    std::vector<Pending> stack{{0, 0, m}};
    std::vector<std::size_t> features(p);
    std::iota(features.begin(), features.end(), 0);
    const std::size_t n_try =
        p == 0 ? 0 : std::min(p, static_cast<std::size_t>(std::ceil(config_.max_features * static_cast<double>(p) - 1e-12)));

    while (!stack.empty()) {
      const Pending job = stack.back();
      stack.pop_back();
      const Split split = find_split(job.begin, job.end, features, n_try, rng);
      if (!split.valid) {
        make_leaf(tree, job.node, job.begin, job.end);
        continue;
      }
      TreeNode& node = tree.nodes[job.node];
      node.feature = static_cast<std::int32_t>(split.feature);
      node.threshold = split.threshold;
      double total = 0.0;
      for (std::size_t c = 0; c < q; ++c) {
        tree.gain_by_coordinate[c] += split.coordinate_gain[c];
        total += split.coordinate_gain[c];
      }
      node.gain = total;
      partition(job.begin, job.end, split);
      const std::size_t left = tree.nodes.size();
      tree.nodes[job.node].left = static_cast<std::int32_t>(left);
      tree.nodes[job.node].right = static_cast<std::int32_t>(left + 1);
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      const std::size_t mid = job.begin + split.left_count;
      stack.push_back({left + 1, mid, job.end});
      stack.push_back({left, job.begin, mid});
    }
    return tree;
  }

 private:
  struct Split {
    bool valid = false;
    std::size_t feature = 0;
    std::size_t left_count = 0;
    double threshold = 0.0;
    std::vector<double> coordinate_gain;
  };

  void make_leaf(Tree& tree, std::size_t node_id, std::size_t begin, std::size_t end) {
    TreeNode& node = tree.nodes[node_id];
    node.feature = -1;
    node.member_begin = static_cast<std::uint32_t>(tree.members.size());
    node.member_count = static_cast<std::uint32_t>(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
      const std::uint32_t r = order_[i];
      tree.members.push_back({r, mult_[r]});
    }
  }

  Split find_split(std::size_t begin, std::size_t end, std::vector<std::size_t>& features, std::size_t n_try,
                   RngStream& rng) {
    Split best;
    const std::size_t count = end - begin;
    const std::size_t msl = static_cast<std::size_t>(config_.min_samples_leaf);
    const std::size_t q = static_cast<std::size_t>(Y_.cols());
    if (n_try == 0 || count < 2 * msl) return best;

    // Node mean, centered total sum of squares, and a node-local copy of the
    // weighted centered targets so the per-feature scans stay cache-resident.
    double W = 0.0;
    std::fill(mean_.begin(), mean_.end(), 0.0);
    for (std::size_t i = begin; i < end; ++i) {
      const std::uint32_t r = order_[i];
      const double w = mult_[r];
      W += w;
      const double* y = Y_.row(r).data();
      for (std::size_t c = 0; c < q; ++c) mean_[c] += w * y[c];
    }
    for (std::size_t c = 0; c < q; ++c) mean_[c] /= W;
    double sst = 0.0;
    zloc_.resize(count * q);
    wloc_.resize(count);
    for (std::size_t i = begin; i < end; ++i) {
      const std::uint32_t r = order_[i];
      const std::size_t j = i - begin;
      local_[r] = static_cast<std::uint32_t>(j);
      const double w = mult_[r];
      wloc_[j] = w;
      const double* y = Y_.row(r).data();
      double* z = zloc_.data() + j * q;
      double s = 0.0;
      for (std::size_t c = 0; c < q; ++c) {
        const double dlt = y[c] - mean_[c];
        s += dlt * dlt;
        z[c] = w * dlt;
      }
      sst += w * s;
    }
    if (!(sst > 0.0)) return best;

    // Random feature subset, visited in ascending index order.
    const std::size_t p = features.size();
    if (n_try < p) {
      for (std::size_t i = 0; i < n_try; ++i) std::swap(features[i], features[i + rng.index(p - i)]);
      std::sort(features.begin(), features.begin() + static_cast<std::ptrdiff_t>(n_try));
    }

    double best_gain = 0.0;
    std::size_t best_pos = 0;
    for (std::size_t fi = 0; fi < n_try; ++fi) {
      const std::size_t f = features[fi];
      const std::uint32_t* ord = order_.data() + f * m_;
      const double* xs = xs_.data() + f * m_;
      std::fill(acc_.begin(), acc_.end(), 0.0);
      double* acc = acc_.data();
      double WL = 0.0;
      for (std::size_t i = begin; i + 1 < end; ++i) {
        const std::uint32_t j = local_[ord[i]];
        WL += wloc_[j];
        const double* z = zloc_.data() + std::size_t{j} * q;
        for (std::size_t c = 0; c < q; ++c) acc[c] += z[c];
        const std::size_t left = i - begin + 1;
        if (left < msl) continue;
        if (end - i - 1 < msl) break;
        const double xl = xs[i];
        const double xr = xs[i + 1];
        if (!(xl < xr)) continue;
        double s = 0.0;
        for (std::size_t c = 0; c < q; ++c) s += acc[c] * acc[c];
        const double gain = s * (1.0 / WL + 1.0 / (W - WL));
        if (gain > best_gain) {
          best_gain = gain;
          best.feature = f;
          best_pos = i;
          double thr = 0.5 * (xl + xr);
          if (!(thr < xr)) thr = xl;
          best.threshold = thr;
          best.left_count = left;
          best.valid = true;
        }
      }
    }
    if (!best.valid || !(best_gain > 1e-12 * sst)) {
      best.valid = false;
      return best;
    }

    // Per-coordinate decomposition of the chosen split.
    const std::uint32_t* ord = order_.data() + best.feature * m_;
    std::fill(best_acc_.begin(), best_acc_.end(), 0.0);
    double WL = 0.0;
    for (std::size_t i = begin; i <= best_pos; ++i) {
      const std::uint32_t j = local_[ord[i]];
      WL += wloc_[j];
      const double* z = zloc_.data() + std::size_t{j} * q;
      for (std::size_t c = 0; c < q; ++c) best_acc_[c] += z[c];
    }
    best.coordinate_gain.resize(q);
    const double scale = 1.0 / WL + 1.0 / (W - WL);
    for (std::size_t c = 0; c < q; ++c) best.coordinate_gain[c] = best_acc_[c] * best_acc_[c] * scale;
    return best;
  }

  void partition(std::size_t begin, std::size_t end, const Split& split) {
    const std::uint32_t* ord = order_.data() + split.feature * m_;
    for (std::size_t i = begin; i < end; ++i) goes_left_[ord[i]] = i < begin + split.left_count ? 1 : 0;
    const std::size_t lists = order_.size() / std::max<std::size_t>(m_, 1);
    for (std::size_t f = 0; f < lists; ++f) {
      if (f == split.feature) continue;
      std::uint32_t* o = order_.data() + f * m_;
      double* xs = xs_.empty() ? nullptr : xs_.data() + f * m_;
      std::size_t l = begin;
      std::size_t rcount = 0;
      for (std::size_t i = begin; i < end; ++i) {
        const std::uint32_t r = o[i];
        if (goes_left_[r]) {
          if (xs) xs[l] = xs[i];
          o[l++] = r;
        } else {
          if (xs) xscratch_[rcount] = xs[i];
          scratch_[rcount++] = r;
        }
      }
      std::copy(scratch_.begin(), scratch_.begin() + static_cast<std::ptrdiff_t>(rcount), o + l);
      if (xs) std::copy(xscratch_.begin(), xscratch_.begin() + static_cast<std::ptrdiff_t>(rcount), xs + l);
    }
  }

  const Matrix& X_;
  const Matrix& Y_;
  const std::vector<std::vector<std::uint32_t>>& presorted_;
  const ForestConfig& config_;
  std::vector<std::uint32_t> mult_;
  std::vector<std::uint32_t> order_;
  std::size_t m_ = 0;
  std::vector<std::uint8_t> goes_left_;
  std::vector<std::uint32_t> scratch_;
  std::vector<double> xs_;        // feature values in the order of order_
  std::vector<double> xscratch_;
  std::vector<std::uint32_t> local_;  // row -> position within the current node
  std::vector<double> zloc_;      // weighted centered targets of the current node
  std::vector<double> wloc_;
  std::vector<double> mean_;
  std::vector<double> acc_;
  std::vector<double> best_acc_;
};

}  // namespace

QuantileForestModel QuantileForestModel::fit(const Matrix& X, const Matrix& split_targets,
                                             std::span<const double> raw_targets, const ForestConfig& config) {
  config.validate();
  const std::size_t n = static_cast<std::size_t>(X.rows());
  require(n >= 1, ErrorKind::Data, "forest fit: no training rows");
  require(static_cast<std::size_t>(split_targets.rows()) == n && raw_targets.size() == n, ErrorKind::Data,
          "forest fit: row counts of features and targets differ");
  require(split_targets.cols() >= 1, ErrorKind::Data, "forest fit: no split targets");
  require(n >= static_cast<std::size_t>(config.min_samples_leaf), ErrorKind::Data,
          "forest fit: fewer training rows than min_samples_leaf");
  require(n < (1ULL << 32), ErrorKind::Data, "forest fit: too many rows");
  require(X.allFinite() && split_targets.allFinite(), ErrorKind::Data, "forest fit: non-finite entries");
  for (double v : raw_targets) require(std::isfinite(v), ErrorKind::Data, "forest fit: non-finite raw target");

  QuantileForestModel model;
  model.config_ = config;
  model.raw_targets_.assign(raw_targets.begin(), raw_targets.end());
  model.split_targets_ = split_targets;
  model.n_features_ = static_cast<std::size_t>(X.cols());
  model.n_outputs_ = static_cast<std::size_t>(split_targets.cols());

  const std::size_t p = model.n_features_;
  std::vector<std::vector<std::uint32_t>> presorted(p);
  for (std::size_t f = 0; f < p; ++f) {
    auto& o = presorted[f];
    o.resize(n);
    std::iota(o.begin(), o.end(), 0u);
    const auto col = static_cast<Eigen::Index>(f);
    std::stable_sort(o.begin(), o.end(), [&](std::uint32_t a, std::uint32_t b) { return X(a, col) < X(b, col); });
  }

  model.trees_.resize(static_cast<std::size_t>(config.n_trees));
  const RngStream root(config.seed, 0);
  detail::parallel_for(static_cast<std::size_t>(config.n_trees), detail::thread_count_from_env(config.n_threads),
                       [&](std::size_t t) {
                         TreeBuilder builder(X, split_targets, presorted, config);
                         model.trees_[t] = builder.build(root.substream(t));
                       });
  model.build_rank();
  return model;
}

void QuantileForestModel::build_rank() {
  const std::size_t n = raw_targets_.size();
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return raw_targets_[a] < raw_targets_[b]; });
  rank_.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) rank_[order[i]] = static_cast<std::uint32_t>(i);
}

void QuantileForestModel::accumulate(std::span<const double> x, std::vector<double>& acc,
                                     std::vector<std::uint32_t>& touched) const {
  require(x.size() == n_features_, ErrorKind::Data,
          "query has " + std::to_string(x.size()) + " features, model expects " + std::to_string(n_features_));
  const double per_tree = 1.0 / static_cast<double>(trees_.size());
  for (const Tree& tree : trees_) {
    const TreeNode& leaf = tree.nodes[tree.leaf_index(x)];
    const LeafMember* mem = tree.members.data() + leaf.member_begin;
    double total = 0.0;
    for (std::uint32_t i = 0; i < leaf.member_count; ++i) total += mem[i].multiplicity;
    const double scale = per_tree / total;
    for (std::uint32_t i = 0; i < leaf.member_count; ++i) {
      const std::uint32_t r = mem[i].row;
      if (acc[r] == 0.0) touched.push_back(r);
      acc[r] += mem[i].multiplicity * scale;
    }
  }
}

std::vector<double> QuantileForestModel::neighbor_weights(std::span<const double> x) const {
  std::vector<double> acc(raw_targets_.size(), 0.0);
  std::vector<std::uint32_t> touched;
  accumulate(x, acc, touched);
  return acc;
}

namespace {

struct QueryScratch {
  std::vector<double> acc;
  std::vector<std::uint32_t> touched;
  std::vector<double> values;
  std::vector<double> weights;
};

QueryScratch& scratch_for(std::size_t n) {
  thread_local QueryScratch s;
  if (s.acc.size() != n) s.acc.assign(n, 0.0);
  return s;
}

}  // namespace

std::vector<double> QuantileForestModel::predict_quantiles(std::span<const double> x,
                                                           std::span<const double> levels) const {
  for (double q : levels) require(q > 0.0 && q < 1.0, ErrorKind::Usage, "quantile level must lie in (0,1)");
  QueryScratch& s = scratch_for(raw_targets_.size());
  s.touched.clear();
  accumulate(x, s.acc, s.touched);
  std::sort(s.touched.begin(), s.touched.end(), [&](std::uint32_t a, std::uint32_t b) { return rank_[a] < rank_[b]; });
  s.values.resize(s.touched.size());
  s.weights.resize(s.touched.size());
  double total = 0.0;
  for (std::size_t i = 0; i < s.touched.size(); ++i) {
    const std::uint32_t r = s.touched[i];
    s.values[i] = raw_targets_[r];
    s.weights[i] = s.acc[r];
    total += s.acc[r];
    s.acc[r] = 0.0;
  }
  std::vector<double> out(levels.size());
  hazen_quantiles_sorted(s.values, s.weights, total, levels, out);
  return out;
}

double QuantileForestModel::predict_mean(std::span<const double> x) const {
  QueryScratch& s = scratch_for(raw_targets_.size());
  s.touched.clear();
  accumulate(x, s.acc, s.touched);
  double mean = 0.0;
  for (std::uint32_t r : s.touched) {
    mean += s.acc[r] * raw_targets_[r];
    s.acc[r] = 0.0;
  }
  return mean;
}

TargetImportance QuantileForestModel::target_importance() const {
  const std::size_t q = n_outputs_;
  std::vector<std::vector<double>> per_tree;
  for (const Tree& tree : trees_) {
    double total = 0.0;
    for (double g : tree.gain_by_coordinate) total += g;
    if (!(total > 0.0)) continue;
    std::vector<double> imp(q);
    for (std::size_t c = 0; c < q; ++c) imp[c] = tree.gain_by_coordinate[c] / total;
    per_tree.push_back(std::move(imp));
  }
  require(!per_tree.empty(), ErrorKind::Numerical, "no splits");
  TargetImportance out;
  out.mean.assign(q, 0.0);
  out.sd.assign(q, 0.0);
  const double T = static_cast<double>(per_tree.size());
  for (const auto& imp : per_tree)
    for (std::size_t c = 0; c < q; ++c) out.mean[c] += imp[c] / T;
  for (const auto& imp : per_tree)
    for (std::size_t c = 0; c < q; ++c) out.sd[c] += (imp[c] - out.mean[c]) * (imp[c] - out.mean[c]) / T;
  for (double& v : out.sd) v = std::sqrt(v);
  return out;
}

double QuantileForestModel::mean_depth() const {
  if (trees_.empty()) return 0.0;
  double acc = 0.0;
  for (const Tree& t : trees_) acc += t.depth();
  return acc / static_cast<double>(trees_.size());
}

// Layout (little-endian): u32 version, config, sizes, raw targets, then per
// tree the node array, member array and per-coordinate gains.
void QuantileForestModel::write(std::ostream& os) const {
  using namespace detail;
  write_pod<std::uint32_t>(os, 1);
  write_pod<std::int32_t>(os, config_.n_trees);
  write_pod<std::int32_t>(os, config_.min_samples_leaf);
  write_pod<double>(os, config_.max_features);
  write_pod<std::uint8_t>(os, config_.bootstrap ? 1 : 0);
  write_pod<std::uint64_t>(os, config_.seed);
  write_pod<std::uint64_t>(os, n_features_);
  write_pod<std::uint64_t>(os, n_outputs_);
  write_vector(os, raw_targets_);
  write_pod<std::uint64_t>(os, trees_.size());
  for (const Tree& t : trees_) {
    write_pod<std::uint64_t>(os, t.nodes.size());
    for (const TreeNode& n : t.nodes) {
      write_pod(os, n.feature);
      write_pod(os, n.threshold);
      write_pod(os, n.left);
      write_pod(os, n.right);
      write_pod(os, n.member_begin);
      write_pod(os, n.member_count);
      write_pod(os, n.gain);
    }
    write_pod<std::uint64_t>(os, t.members.size());
    for (const LeafMember& m : t.members) {
      write_pod(os, m.row);
      write_pod(os, m.multiplicity);
    }
    write_vector(os, t.gain_by_coordinate);
  }
}

QuantileForestModel QuantileForestModel::read(std::istream& is) {
  using namespace detail;
  const auto version = read_pod<std::uint32_t>(is);
  require(version == 1, ErrorKind::Data, "unsupported forest format version " + std::to_string(version));
  QuantileForestModel m;
  m.config_.n_trees = read_pod<std::int32_t>(is);
  m.config_.min_samples_leaf = read_pod<std::int32_t>(is);
  m.config_.max_features = read_pod<double>(is);
  m.config_.bootstrap = read_pod<std::uint8_t>(is) != 0;
  m.config_.seed = read_pod<std::uint64_t>(is);
  m.n_features_ = read_pod<std::uint64_t>(is);
  m.n_outputs_ = read_pod<std::uint64_t>(is);
  m.raw_targets_ = read_vector<double>(is);
  const auto n_rows = m.raw_targets_.size();
  const auto n_trees = read_pod<std::uint64_t>(is);
  require(n_trees == static_cast<std::uint64_t>(m.config_.n_trees), ErrorKind::Data, "forest tree count mismatch");
  m.trees_.resize(n_trees);
  for (Tree& t : m.trees_) {
    t.nodes.resize(read_count(is, 40));
    for (TreeNode& n : t.nodes) {
      n.feature = read_pod<std::int32_t>(is);
      n.threshold = read_pod<double>(is);
      n.left = read_pod<std::int32_t>(is);
      n.right = read_pod<std::int32_t>(is);
      n.member_begin = read_pod<std::uint32_t>(is);
      n.member_count = read_pod<std::uint32_t>(is);
      n.gain = read_pod<double>(is);
    }
    t.members.resize(read_count(is, 8));
    for (LeafMember& mem : t.members) {
      mem.row = read_pod<std::uint32_t>(is);
      mem.multiplicity = read_pod<std::uint32_t>(is);
      require(mem.row < n_rows, ErrorKind::Data, "forest leaf member out of range");
    }
    t.gain_by_coordinate = read_vector<double>(is);
    // Structural checks so a corrupt file cannot send traversal out of bounds.
    for (const TreeNode& n : t.nodes) {
      if (n.is_leaf()) {
        require(n.member_count > 0 && static_cast<std::size_t>(n.member_begin) + n.member_count <= t.members.size(),
                ErrorKind::Data, "forest leaf range out of bounds");
      } else {
        require(static_cast<std::size_t>(n.feature) < m.n_features_ && n.left > 0 && n.right > 0 &&
                    static_cast<std::size_t>(n.left) < t.nodes.size() &&
                    static_cast<std::size_t>(n.right) < t.nodes.size(),
                ErrorKind::Data, "forest node references out of bounds");
      }
    }
  }
  m.build_rank();
  return m;
}

}  // namespace tqf
