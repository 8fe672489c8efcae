#include "flowstyle/model/batch.hpp"

#include <algorithm>

#include "flowstyle/numerics/error.hpp"

namespace flowstyle {

std::vector<std::uint8_t> SeqBatch::active(int t) const {
  std::vector<std::uint8_t> m(batch);
  for (int b = 0; b < batch; ++b) m[b] = t < lengths[b];
  return m;
}

SeqBatch pack_frames(std::span<const Matrix* const> frames) {
  if (frames.empty()) throw ShapeError("pack_frames", "empty batch");
  SeqBatch s;
  s.batch = static_cast<int>(frames.size());
  const Eigen::Index F = frames[0]->cols();
  for (const Matrix* f : frames) {
    if (f->rows() < 1) throw ShapeError("pack_frames", "sequence with no frames");
    if (f->cols() != F) throw ShapeError("pack_frames", "inconsistent frame width");
    s.lengths.push_back(static_cast<int>(f->rows()));
    s.steps = std::max(s.steps, static_cast<int>(f->rows()));
  }
  s.frames = Matrix::Zero(F, Eigen::Index(s.steps) * s.batch);
  for (int b = 0; b < s.batch; ++b)
    for (int t = 0; t < s.lengths[b]; ++t) s.frames.col(Eigen::Index(t) * s.batch + b) = frames[b]->row(t).transpose();
  return s;
}

SeqBatch pack_frames(const Matrix& frames) {
  const Matrix* p = &frames;
  return pack_frames(std::span<const Matrix* const>(&p, 1));
}

Matrix unpack_frames(const Matrix& packed, int batch, int b, int length) {
  Matrix out(length, packed.rows());
  for (int t = 0; t < length; ++t) out.row(t) = packed.col(Eigen::Index(t) * batch + b).transpose();
  return out;
}

TokenBatch pack_tokens(std::span<const std::vector<int>* const> tokens) {
  if (tokens.empty()) throw ShapeError("pack_tokens", "empty batch");
  TokenBatch tb;
  tb.batch = static_cast<int>(tokens.size());
  for (const auto* t : tokens) {
    if (t->empty()) throw ShapeError("pack_tokens", "empty token sequence");
    tb.lengths.push_back(static_cast<int>(t->size()));
    tb.steps = std::max(tb.steps, static_cast<int>(t->size()));
  }
  tb.ids.assign(std::size_t(tb.steps) * tb.batch, 0);
  for (int b = 0; b < tb.batch; ++b)
    for (int t = 0; t < tb.lengths[b]; ++t) tb.ids[std::size_t(t) * tb.batch + b] = (*tokens[b])[t];
  return tb;
}

std::vector<int> reversal_columns(std::span<const int> lengths, int steps) {
  const int batch = static_cast<int>(lengths.size());
  std::vector<int> cols(std::size_t(steps) * batch);
  for (int t = 0; t < steps; ++t)
    for (int b = 0; b < batch; ++b) {
      const int src = t < lengths[b] ? lengths[b] - 1 - t : t;
      cols[std::size_t(t) * batch + b] = src * batch + b;
    }
  return cols;
}

}  // namespace flowstyle
