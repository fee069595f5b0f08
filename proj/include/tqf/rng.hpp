#pragma once

#include "tqf/common.hpp"

#include <random>

namespace tqf {

/// Seeded random stream identified by (seed, stream_id).
///
/// Streams are cheap value types. `substream(i)` derives a child stream whose
/// identity depends only on the parent identity and `i`, never on how many
/// draws the parent has made, so parallel consumers get independent and
/// schedule-independent randomness.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  RngStream substream(std::uint64_t child) const;

  double uniform();                                  // [0, 1)
  double uniform(double lo, double hi);
  double normal();                                   // N(0, 1)
  std::size_t index(std::size_t n);                  // uniform in [0, n)

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

std::uint64_t splitmix64(std::uint64_t x);

/// `count` i.i.d. uniform directions on S^{d-1}, one per row.
Matrix sample_directions(RngStream& rng, int d, int count);

/// Haar-distributed d×d orthogonal matrix (QR of a Gaussian matrix with the
/// signs of R's diagonal folded into Q).
Matrix sample_orthogonal(RngStream& rng, int d);

}  // namespace tqf
