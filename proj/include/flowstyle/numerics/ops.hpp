#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "flowstyle/numerics/graph.hpp"

/// Differentiable operations on Graph nodes. No op broadcasts implicitly:
/// column/row broadcasting has its own named op and mismatched shapes raise
/// ShapeError naming the op.
///
/// Sequence batches use a time-major column layout: a sequence tensor has
/// shape features x (T * B) and column t * B + b holds step t of example b.
namespace flowstyle::ad {

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// X (n x m) + b (n x 1) added to every column.
Var add_bias(Var x, Var b);
/// X (n x m) with column j scaled by r(0, j); r is 1 x m.
Var scale_cols(Var x, Var r);
Var scale(Var x, double c);
Var add_scalar(Var x, double c);
Var neg(Var x);

Var sigmoid(Var x);
Var tanh(Var x);
Var relu(Var x);
/// log(1 + e^x), computed stably.
Var softplus(Var x);
Var exp(Var x);
Var log(Var x);
Var square(Var x);
/// Gradient passes only where lo <= x <= hi.
Var clamp(Var x, double lo, double hi);

Var sum(Var x);
Var mean(Var x);
/// Column sums, 1 x m.
Var sum_rows(Var x);
/// Row sums, n x 1.
Var sum_cols(Var x);

Var slice_rows(Var x, Eigen::Index start, Eigen::Index count);
Var slice_cols(Var x, Eigen::Index start, Eigen::Index count);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var gather_cols(Var x, std::span<const int> columns);
/// n x B -> n x (times * B), block t equal to x.
Var tile_cols(Var x, Eigen::Index times);
/// Reinterprets the row-major data with a new shape.
Var reshape(Var x, Eigen::Index rows, Eigen::Index cols);
Var transpose(Var x);
Var permute_rows(Var x, std::span<const int> order);
Var detach(Var x);

/// Column j taken from `a` where take_a[j] != 0, else from `b`. No
/// arithmetic is performed, so skipped columns are carried bit-exactly.
Var select_cols(std::span<const std::uint8_t> take_a, Var a, Var b);

/// Softmax down each column over its first lengths[j] rows; remaining rows
/// are exactly zero.
Var softmax_cols(Var logits, std::span<const int> lengths);

/// Masked mean over time of a sequence tensor F x (T * B) -> F x B.
Var masked_time_mean(Var x, std::span<const int> lengths);

/// Attention read-out. memory is M x (L * B), weights is L x B; returns the
/// M x B matrix of weighted sums sum_j weights(j, b) * memory(:, j*B + b).
Var attend(Var memory, Var weights);

/// Location features for attention: a 1-D convolution (zero padded, odd
/// kernel width k) over two L x B weight maps. kernel is nf x (2 * k).
/// Returns nf x (L * B) in sequence layout.
Var location_conv(Var prev, Var cumulative, Var kernel);

/// Rows of `table` selected by `ids`, one column per id.
Var embedding(Var table, std::span<const int> ids);

}  // namespace flowstyle::ad
