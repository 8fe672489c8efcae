#include "flowstyle/numerics/rng.hpp"

#include <cmath>
#include <numbers>

#include "flowstyle/numerics/error.hpp"

namespace flowstyle {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t splitmix64(std::uint64_t x) {
  std::uint64_t z = x + kGolden;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed),
      stream_id_(stream_id),
      key_(splitmix64(splitmix64(seed) ^ (stream_id * 0xD1B54A32D192ED03ULL))) {}

std::uint64_t RngStream::next_u64() {
  const std::uint64_t x = key_ + counter_ * kGolden;
  ++counter_;
  return splitmix64(x);
}

double RngStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::uniform_int(std::uint64_t n) {
  if (n == 0) throw Error("uniform_int: empty range");
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

double RngStream::normal() {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

RngStream RngStream::split(std::uint64_t child_id) const {
  return RngStream(splitmix64(key_ ^ 0x5851F42D4C957F2DULL),
                   splitmix64(child_id) ^ stream_id_);
}

}  // namespace flowstyle
