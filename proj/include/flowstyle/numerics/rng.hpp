#pragma once

#include <cstdint>

namespace flowstyle {

/// Counter-based random stream. Draw i of stream (seed, id) is a pure
/// function of (seed, id, i), so results are reproducible on any platform
/// and independent streams can be created without coordination.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 bits of precision.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t uniform_int(std::uint64_t n);
  /// Standard normal via Box-Muller (one output per two uniforms).
  double normal();

  /// Child stream keyed on this stream's identity and `child_id`; does not
  /// advance this stream.
  RngStream split(std::uint64_t child_id) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }
  std::uint64_t counter() const { return counter_; }
  void set_counter(std::uint64_t c) { counter_ = c; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace flowstyle
