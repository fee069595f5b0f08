#include "tqf/rng.hpp"

#include <cmath>

namespace tqf {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

namespace {

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream_id) {
  const std::uint64_t a = splitmix64(seed);
  const std::uint64_t b = splitmix64(stream_id ^ 0xD1B54A32D192ED03ULL);
  const std::uint64_t c = splitmix64(a ^ b);
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
                    static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(c >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), engine_(make_engine(seed, stream_id)) {}

RngStream RngStream::substream(std::uint64_t child) const {
  return RngStream(seed_, splitmix64(stream_id_ * 0x2545F4914F6CDD1DULL + splitmix64(child + 1)));
}

double RngStream::uniform() { return std::generate_canonical<double, 53>(engine_); }

double RngStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double RngStream::normal() { return normal_(engine_); }

std::size_t RngStream::index(std::size_t n) {
  std::uniform_int_distribution<std::size_t> dist(0, n - 1);
  return dist(engine_);
}

Matrix sample_directions(RngStream& rng, int d, int count) {
  require(d >= 1 && count >= 1, ErrorKind::Usage, "sample_directions: d and count must be positive");
  Matrix out(count, d);
  for (int i = 0; i < count; ++i) {
    double norm2 = 0.0;
    do {
      norm2 = 0.0;
      for (int j = 0; j < d; ++j) {
        out(i, j) = rng.normal();
        norm2 += out(i, j) * out(i, j);
      }
    } while (norm2 == 0.0);
    out.row(i) /= std::sqrt(norm2);
  }
  return out;
}

Matrix sample_orthogonal(RngStream& rng, int d) {
  require(d >= 1, ErrorKind::Usage, "sample_orthogonal: d must be positive");
  for (;;) {
    Eigen::MatrixXd g(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) g(i, j) = rng.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
    bool degenerate = false;
    for (int i = 0; i < d; ++i)
      if (r(i, i) == 0.0) degenerate = true;
    if (degenerate) continue;
    Eigen::MatrixXd q = qr.householderQ();
    for (int j = 0; j < d; ++j)
      if (r(j, j) < 0.0) q.col(j) = -q.col(j);
    return Matrix(q);
  }
}

}  // namespace tqf
