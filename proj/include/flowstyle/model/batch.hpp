#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "flowstyle/numerics/graph.hpp"

namespace flowstyle {

/// Variable-length sequences packed time-major: frames is F x (T * B) and
/// column t * B + b holds step t of sequence b (zero past its length).
struct SeqBatch {
  Matrix frames;
  std::vector<int> lengths;
  int steps = 0;  // T, the longest length
  int batch = 0;  // B

  /// 1 for sequences still running at step t.
  std::vector<std::uint8_t> active(int t) const;
};

/// Packs T_b x F frame matrices. Throws on empty input or empty sequences.
SeqBatch pack_frames(std::span<const Matrix* const> frames);
SeqBatch pack_frames(const Matrix& frames);

/// Inverse of pack_frames for one column block: T_b x F frames of b.
Matrix unpack_frames(const Matrix& packed, int batch, int b, int length);

/// Token ids packed the same way: ids[t * B + b], 0 past the length.
struct TokenBatch {
  std::vector<int> ids;
  std::vector<int> lengths;
  int steps = 0;
  int batch = 0;
};

TokenBatch pack_tokens(std::span<const std::vector<int>* const> tokens);

/// Column indices that reverse each sequence within its length and leave
/// padding in place.
std::vector<int> reversal_columns(std::span<const int> lengths, int steps);

/// Runs `step(x_t, h)` over time with h frozen past each length; returns the
/// per-step states.
template <typename StepFn>
std::vector<Var> scan(Var h0, int steps, std::span<const int> lengths, StepFn&& step);

}  // namespace flowstyle

#include "flowstyle/numerics/ops.hpp"

namespace flowstyle {

template <typename StepFn>
std::vector<Var> scan(Var h0, int steps, std::span<const int> lengths, StepFn&& step) {
  std::vector<Var> out;
  out.reserve(steps);
  Var h = h0;
  const int batch = static_cast<int>(lengths.size());
  std::vector<std::uint8_t> mask(batch);
  for (int t = 0; t < steps; ++t) {
    bool all = true;
    for (int b = 0; b < batch; ++b) {
      mask[b] = t < lengths[b];
      all = all && mask[b];
    }
    Var next = step(t, h);
    h = all ? next : ad::select_cols(mask, next, h);
    out.push_back(h);
  }
  return out;
}

}  // namespace flowstyle
