#include "flowstyle/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "flowstyle/numerics/error.hpp"

namespace flowstyle::ad {
namespace {

std::string dims(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_graph(const char* op, Var a, Var b) {
  if (&a.graph() != &b.graph()) throw ShapeError(op, "operands from different graphs");
}

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(op, "shape mismatch " + dims(a) + " vs " + dims(b));
  }
}

// Elementwise unary op; `deriv(x, y)` returns dy/dx as an array expression.
template <typename Fwd, typename Deriv>
Var unary(const char* op, Var x, Fwd fwd, Deriv deriv) {
  Graph& g = x.graph();
  Matrix y = fwd(x.value().array()).matrix();
  return g.push(op, std::move(y), {x.id()}, [xi = x.id(), deriv](Graph& g, int self) {
    if (!g.requires_grad(xi)) return;
    const auto xa = g.value(xi).array();
    const auto ya = g.value(self).array();
    g.grad_buffer(xi).array() += g.upstream(self).array() * deriv(xa, ya);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_graph("matmul", a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul", "inner dimensions differ " + dims(av) + " * " + dims(bv));
  }
  Matrix y = av * bv;
  return a.graph().push("matmul", std::move(y), {a.id(), b.id()},
                        [ai = a.id(), bi = b.id()](Graph& g, int self) {
                          const Matrix& gy = g.upstream(self);
                          if (g.requires_grad(ai)) {
                            g.grad_buffer(ai).noalias() += gy * g.value(bi).transpose();
                          }
                          if (g.requires_grad(bi)) {
                            g.grad_buffer(bi).noalias() += g.value(ai).transpose() * gy;
                          }
                        });
}

Var add(Var a, Var b) {
  require_same_graph("add", a, b);
  require_same_shape("add", a.value(), b.value());
  Matrix y = a.value() + b.value();
  return a.graph().push("add", std::move(y), {a.id(), b.id()},
                        [ai = a.id(), bi = b.id()](Graph& g, int self) {
                          if (g.requires_grad(ai)) g.grad_buffer(ai) += g.upstream(self);
                          if (g.requires_grad(bi)) g.grad_buffer(bi) += g.upstream(self);
                        });
}

Var sub(Var a, Var b) {
  require_same_graph("sub", a, b);
  require_same_shape("sub", a.value(), b.value());
  Matrix y = a.value() - b.value();
  return a.graph().push("sub", std::move(y), {a.id(), b.id()},
                        [ai = a.id(), bi = b.id()](Graph& g, int self) {
                          if (g.requires_grad(ai)) g.grad_buffer(ai) += g.upstream(self);
                          if (g.requires_grad(bi)) g.grad_buffer(bi) -= g.upstream(self);
                        });
}

Var mul(Var a, Var b) {
  require_same_graph("mul", a, b);
  require_same_shape("mul", a.value(), b.value());
  Matrix y = a.value().cwiseProduct(b.value());
  return a.graph().push("mul", std::move(y), {a.id(), b.id()},
                        [ai = a.id(), bi = b.id()](Graph& g, int self) {
                          const Matrix& gy = g.upstream(self);
                          if (g.requires_grad(ai)) {
                            g.grad_buffer(ai) += gy.cwiseProduct(g.value(bi));
                          }
                          if (g.requires_grad(bi)) {
                            g.grad_buffer(bi) += gy.cwiseProduct(g.value(ai));
                          }
                        });
}

Var add_bias(Var x, Var b) {
  require_same_graph("add_bias", x, b);
  const Matrix& xv = x.value();
  const Matrix& bv = b.value();
  if (bv.cols() != 1 || bv.rows() != xv.rows()) {
    throw ShapeError("add_bias", "bias " + dims(bv) + " incompatible with " + dims(xv));
  }
  Matrix y = xv.colwise() + bv.col(0);
  return x.graph().push("add_bias", std::move(y), {x.id(), b.id()},
                        [xi = x.id(), bi = b.id()](Graph& g, int self) {
                          const Matrix& gy = g.upstream(self);
                          if (g.requires_grad(xi)) g.grad_buffer(xi) += gy;
                          if (g.requires_grad(bi)) g.grad_buffer(bi) += gy.rowwise().sum();
                        });
}

Var scale_cols(Var x, Var r) {
  require_same_graph("scale_cols", x, r);
  const Matrix& xv = x.value();
  const Matrix& rv = r.value();
  if (rv.rows() != 1 || rv.cols() != xv.cols()) {
    throw ShapeError("scale_cols", "scale " + dims(rv) + " incompatible with " + dims(xv));
  }
  Matrix y = xv.array().rowwise() * rv.row(0).array();
  return x.graph().push("scale_cols", std::move(y), {x.id(), r.id()},
                        [xi = x.id(), ri = r.id()](Graph& g, int self) {
                          const Matrix& gy = g.upstream(self);
                          if (g.requires_grad(xi)) {
                            g.grad_buffer(xi).array() +=
                                gy.array().rowwise() * g.value(ri).row(0).array();
                          }
                          if (g.requires_grad(ri)) {
                            g.grad_buffer(ri) +=
                                gy.cwiseProduct(g.value(xi)).colwise().sum();
                          }
                        });
}

Var scale(Var x, double c) {
  Matrix y = x.value() * c;
  return x.graph().push("scale", std::move(y), {x.id()}, [xi = x.id(), c](Graph& g, int self) {
    if (g.requires_grad(xi)) g.grad_buffer(xi) += c * g.upstream(self);
  });
}

Var add_scalar(Var x, double c) {
  Matrix y = x.value().array() + c;
  return x.graph().push("add_scalar", std::move(y), {x.id()}, [xi = x.id()](Graph& g, int self) {
    if (g.requires_grad(xi)) g.grad_buffer(xi) += g.upstream(self);
  });
}

Var neg(Var x) { return scale(x, -1.0); }

Var sigmoid(Var x) {
  return unary(
      "sigmoid", x, [](const auto& a) { return 1.0 / (1.0 + (-a).exp()); },
      [](const auto&, const auto& y) { return y * (1.0 - y); });
}

Var tanh(Var x) {
  return unary(
      "tanh", x, [](const auto& a) { return a.tanh(); },
      [](const auto&, const auto& y) { return 1.0 - y.square(); });
}

Var relu(Var x) {
  return unary(
      "relu", x, [](const auto& a) { return a.max(0.0); },
      [](const auto& xa, const auto&) { return (xa > 0.0).template cast<double>(); });
}

Var softplus(Var x) {
  return unary(
      "softplus", x,
      [](const auto& a) { return a.max(0.0) + (-a.abs()).exp().log1p(); },
      [](const auto& xa, const auto&) { return 1.0 / (1.0 + (-xa).exp()); });
}

Var exp(Var x) {
  return unary(
      "exp", x, [](const auto& a) { return a.exp(); },
      [](const auto&, const auto& y) { return y; });
}

Var log(Var x) {
  return unary(
      "log", x, [](const auto& a) { return a.log(); },
      [](const auto& xa, const auto&) { return 1.0 / xa; });
}

Var square(Var x) {
  return unary(
      "square", x, [](const auto& a) { return a.square(); },
      [](const auto& xa, const auto&) { return 2.0 * xa; });
}

Var clamp(Var x, double lo, double hi) {
  return unary(
      "clamp", x, [lo, hi](const auto& a) { return a.max(lo).min(hi); },
      [lo, hi](const auto& xa, const auto&) {
        return ((xa >= lo) && (xa <= hi)).template cast<double>();
      });
}

Var sum(Var x) {
  Matrix y(1, 1);
  y(0, 0) = x.value().sum();
  return x.graph().push("sum", std::move(y), {x.id()}, [xi = x.id()](Graph& g, int self) {
    if (g.requires_grad(xi)) g.grad_buffer(xi).array() += g.upstream(self)(0, 0);
  });
}

Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var sum_rows(Var x) {
  Matrix y = x.value().colwise().sum();
  return x.graph().push("sum_rows", std::move(y), {x.id()}, [xi = x.id()](Graph& g, int self) {
    if (!g.requires_grad(xi)) return;
    g.grad_buffer(xi).rowwise() += g.upstream(self).row(0);
  });
}

Var sum_cols(Var x) {
  Matrix y = x.value().rowwise().sum();
  return x.graph().push("sum_cols", std::move(y), {x.id()}, [xi = x.id()](Graph& g, int self) {
    if (!g.requires_grad(xi)) return;
    g.grad_buffer(xi).colwise() += g.upstream(self).col(0);
  });
}

Var slice_rows(Var x, Eigen::Index start, Eigen::Index count) {
  const Matrix& xv = x.value();
  if (start < 0 || count <= 0 || start + count > xv.rows()) {
    throw ShapeError("slice_rows", "range [" + std::to_string(start) + ", " +
                                       std::to_string(start + count) + ") outside " + dims(xv));
  }
  Matrix y = xv.middleRows(start, count);
  return x.graph().push("slice_rows", std::move(y), {x.id()},
                        [xi = x.id(), start, count](Graph& g, int self) {
                          if (!g.requires_grad(xi)) return;
                          g.grad_buffer(xi).middleRows(start, count) += g.upstream(self);
                        });
}

Var slice_cols(Var x, Eigen::Index start, Eigen::Index count) {
  const Matrix& xv = x.value();
  if (start < 0 || count <= 0 || start + count > xv.cols()) {
    throw ShapeError("slice_cols", "range [" + std::to_string(start) + ", " +
                                       std::to_string(start + count) + ") outside " + dims(xv));
  }
  Matrix y = xv.middleCols(start, count);
  return x.graph().push("slice_cols", std::move(y), {x.id()},
                        [xi = x.id(), start, count](Graph& g, int self) {
                          if (!g.requires_grad(xi)) return;
                          g.grad_buffer(xi).middleCols(start, count) += g.upstream(self);
                        });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows", "no operands");
  Graph& g = parts.front().graph();
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  std::vector<int> ids;
  for (const Var& p : parts) {
    if (&p.graph() != &g) throw ShapeError("concat_rows", "operands from different graphs");
    if (p.cols() != cols) {
      throw ShapeError("concat_rows", "column count mismatch " + dims(p.value()) +
                                          " vs " + std::to_string(cols));
    }
    rows += p.rows();
    ids.push_back(p.id());
  }
  Matrix y(rows, cols);
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    y.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return g.push("concat_rows", std::move(y), ids, [ids](Graph& g, int self) {
    Eigen::Index r = 0;
    for (int id : ids) {
      const Eigen::Index n = g.value(id).rows();
      if (g.requires_grad(id)) g.grad_buffer(id) += g.upstream(self).middleRows(r, n);
      r += n;
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols", "no operands");
  Graph& g = parts.front().graph();
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  std::vector<int> ids;
  for (const Var& p : parts) {
    if (&p.graph() != &g) throw ShapeError("concat_cols", "operands from different graphs");
    if (p.rows() != rows) {
      throw ShapeError("concat_cols", "row count mismatch " + dims(p.value()) + " vs " +
                                          std::to_string(rows));
    }
    cols += p.cols();
    ids.push_back(p.id());
  }
  Matrix y(rows, cols);
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    y.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return g.push("concat_cols", std::move(y), ids, [ids](Graph& g, int self) {
    Eigen::Index c = 0;
    for (int id : ids) {
      const Eigen::Index n = g.value(id).cols();
      if (g.requires_grad(id)) g.grad_buffer(id) += g.upstream(self).middleCols(c, n);
      c += n;
    }
  });
}

Var gather_cols(Var x, std::span<const int> columns) {
  const Matrix& xv = x.value();
  if (columns.empty()) throw ShapeError("gather_cols", "empty index list");
  Matrix y(xv.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] < 0 || columns[i] >= xv.cols()) {
      throw ShapeError("gather_cols", "column " + std::to_string(columns[i]) +
                                          " outside " + dims(xv));
    }
    y.col(static_cast<Eigen::Index>(i)) = xv.col(columns[i]);
  }
  std::vector<int> idx(columns.begin(), columns.end());
  return x.graph().push("gather_cols", std::move(y), {x.id()},
                        [xi = x.id(), idx = std::move(idx)](Graph& g, int self) {
                          if (!g.requires_grad(xi)) return;
                          Matrix& gx = g.grad_buffer(xi);
                          const Matrix& gy = g.upstream(self);
                          for (std::size_t i = 0; i < idx.size(); ++i) {
                            gx.col(idx[i]) += gy.col(static_cast<Eigen::Index>(i));
                          }
                        });
}

Var tile_cols(Var x, Eigen::Index times) {
  if (times <= 0) throw ShapeError("tile_cols", "repeat count must be positive");
  const Matrix& xv = x.value();
  const Eigen::Index b = xv.cols();
  Matrix y(xv.rows(), b * times);
  for (Eigen::Index t = 0; t < times; ++t) y.middleCols(t * b, b) = xv;
  return x.graph().push("tile_cols", std::move(y), {x.id()},
                        [xi = x.id(), times, b](Graph& g, int self) {
                          if (!g.requires_grad(xi)) return;
                          Matrix& gx = g.grad_buffer(xi);
                          const Matrix& gy = g.upstream(self);
                          for (Eigen::Index t = 0; t < times; ++t) gx += gy.middleCols(t * b, b);
                        });
}

Var reshape(Var x, Eigen::Index rows, Eigen::Index cols) {
  const Matrix& xv = x.value();
  if (rows * cols != xv.size()) {
    throw ShapeError("reshape", "cannot view " + dims(xv) + " as " + std::to_string(rows) +
                                    "x" + std::to_string(cols));
  }
  Matrix y = Eigen::Map<const Matrix>(xv.data(), rows, cols);
  return x.graph().push("reshape", std::move(y), {x.id()}, [xi = x.id()](Graph& g, int self) {
    if (!g.requires_grad(xi)) return;
    Matrix& gx = g.grad_buffer(xi);
    gx += Eigen::Map<const Matrix>(g.upstream(self).data(), gx.rows(), gx.cols());
  });
}

Var transpose(Var x) {
  Matrix y = x.value().transpose();
  return x.graph().push("transpose", std::move(y), {x.id()}, [xi = x.id()](Graph& g, int self) {
    if (g.requires_grad(xi)) g.grad_buffer(xi) += g.upstream(self).transpose();
  });
}

Var permute_rows(Var x, std::span<const int> order) {
  const Matrix& xv = x.value();
  if (static_cast<Eigen::Index>(order.size()) != xv.rows()) {
    throw ShapeError("permute_rows", "order length " + std::to_string(order.size()) +
                                         " vs " + dims(xv));
  }
  Matrix y(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < order.size(); ++i) {
    y.row(static_cast<Eigen::Index>(i)) = xv.row(order[i]);
  }
  std::vector<int> ord(order.begin(), order.end());
  return x.graph().push("permute_rows", std::move(y), {x.id()},
                        [xi = x.id(), ord = std::move(ord)](Graph& g, int self) {
                          if (!g.requires_grad(xi)) return;
                          Matrix& gx = g.grad_buffer(xi);
                          const Matrix& gy = g.upstream(self);
                          for (std::size_t i = 0; i < ord.size(); ++i) {
                            gx.row(ord[i]) += gy.row(static_cast<Eigen::Index>(i));
                          }
                        });
}

Var detach(Var x) { return x.graph().constant(x.value()); }

Var select_cols(std::span<const std::uint8_t> take_a, Var a, Var b) {
  require_same_graph("select_cols", a, b);
  require_same_shape("select_cols", a.value(), b.value());
  if (static_cast<Eigen::Index>(take_a.size()) != a.cols()) {
    throw ShapeError("select_cols", "mask length " + std::to_string(take_a.size()) +
                                        " vs " + dims(a.value()));
  }
  Matrix y = b.value();
  for (std::size_t j = 0; j < take_a.size(); ++j) {
    if (take_a[j]) y.col(static_cast<Eigen::Index>(j)) = a.value().col(static_cast<Eigen::Index>(j));
  }
  std::vector<std::uint8_t> mask(take_a.begin(), take_a.end());
  return a.graph().push("select_cols", std::move(y), {a.id(), b.id()},
                        [ai = a.id(), bi = b.id(), mask = std::move(mask)](Graph& g, int self) {
                          const Matrix& gy = g.upstream(self);
                          for (std::size_t j = 0; j < mask.size(); ++j) {
                            const auto c = static_cast<Eigen::Index>(j);
                            const int target = mask[j] ? ai : bi;
                            if (g.requires_grad(target)) g.grad_buffer(target).col(c) += gy.col(c);
                          }
                        });
}

Var softmax_cols(Var logits, std::span<const int> lengths) {
  const Matrix& e = logits.value();
  if (static_cast<Eigen::Index>(lengths.size()) != e.cols()) {
    throw ShapeError("softmax_cols", "lengths size " + std::to_string(lengths.size()) +
                                         " vs " + dims(e));
  }
  Matrix y = Matrix::Zero(e.rows(), e.cols());
  for (Eigen::Index b = 0; b < e.cols(); ++b) {
    const int n = lengths[static_cast<std::size_t>(b)];
    if (n <= 0 || n > e.rows()) {
      throw ShapeError("softmax_cols", "column length " + std::to_string(n) + " outside " +
                                           dims(e));
    }
    const double m = e.col(b).head(n).maxCoeff();
    double z = 0.0;
    for (int i = 0; i < n; ++i) {
      y(i, b) = std::exp(e(i, b) - m);
      z += y(i, b);
    }
    y.col(b).head(n) /= z;
  }
  return logits.graph().push("softmax_cols", std::move(y), {logits.id()},
                             [xi = logits.id()](Graph& g, int self) {
                               if (!g.requires_grad(xi)) return;
                               const Matrix& yv = g.value(self);
                               const Matrix& gy = g.upstream(self);
                               // Masked rows have y == 0 and receive nothing.
                               const Eigen::RowVectorXd dot = yv.cwiseProduct(gy).colwise().sum();
                               Matrix gx = yv.array() * (gy.array().rowwise() - dot.array());
                               g.grad_buffer(xi) += gx;
                             });
}

Var masked_time_mean(Var x, std::span<const int> lengths) {
  const Matrix& xv = x.value();
  const auto batch = static_cast<Eigen::Index>(lengths.size());
  if (batch == 0 || xv.cols() % batch != 0) {
    throw ShapeError("masked_time_mean", "columns " + std::to_string(xv.cols()) +
                                             " not a multiple of batch " + std::to_string(batch));
  }
  const Eigen::Index steps = xv.cols() / batch;
  Matrix y = Matrix::Zero(xv.rows(), batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const int n = lengths[static_cast<std::size_t>(b)];
    if (n <= 0 || n > steps) {
      throw ShapeError("masked_time_mean", "length " + std::to_string(n) + " outside [1, " +
                                               std::to_string(steps) + "]");
    }
    for (int t = 0; t < n; ++t) y.col(b) += xv.col(t * batch + b);
    y.col(b) /= static_cast<double>(n);
  }
  std::vector<int> lens(lengths.begin(), lengths.end());
  return x.graph().push("masked_time_mean", std::move(y), {x.id()},
                        [xi = x.id(), lens = std::move(lens)](Graph& g, int self) {
                          if (!g.requires_grad(xi)) return;
                          Matrix& gx = g.grad_buffer(xi);
                          const Matrix& gy = g.upstream(self);
                          const auto batch = static_cast<Eigen::Index>(lens.size());
                          for (Eigen::Index b = 0; b < batch; ++b) {
                            const int n = lens[static_cast<std::size_t>(b)];
                            for (int t = 0; t < n; ++t) {
                              gx.col(t * batch + b) += gy.col(b) / static_cast<double>(n);
                            }
                          }
                        });
}

Var attend(Var memory, Var weights) {
  require_same_graph("attend", memory, weights);
  const Matrix& m = memory.value();
  const Matrix& w = weights.value();
  const Eigen::Index len = w.rows();
  const Eigen::Index batch = w.cols();
  if (m.cols() != len * batch) {
    throw ShapeError("attend", "memory " + dims(m) + " incompatible with weights " + dims(w));
  }
  Matrix y = Matrix::Zero(m.rows(), batch);
  for (Eigen::Index j = 0; j < len; ++j) {
    for (Eigen::Index b = 0; b < batch; ++b) y.col(b) += w(j, b) * m.col(j * batch + b);
  }
  return memory.graph().push(
      "attend", std::move(y), {memory.id(), weights.id()},
      [mi = memory.id(), wi = weights.id(), len, batch](Graph& g, int self) {
        const Matrix& gy = g.upstream(self);
        if (g.requires_grad(mi)) {
          Matrix& gm = g.grad_buffer(mi);
          const Matrix& w = g.value(wi);
          for (Eigen::Index j = 0; j < len; ++j) {
            for (Eigen::Index b = 0; b < batch; ++b) gm.col(j * batch + b) += w(j, b) * gy.col(b);
          }
        }
        if (g.requires_grad(wi)) {
          Matrix& gw = g.grad_buffer(wi);
          const Matrix& m = g.value(mi);
          for (Eigen::Index j = 0; j < len; ++j) {
            for (Eigen::Index b = 0; b < batch; ++b) gw(j, b) += m.col(j * batch + b).dot(gy.col(b));
          }
        }
      });
}

Var location_conv(Var prev, Var cumulative, Var kernel) {
  require_same_graph("location_conv", prev, kernel);
  require_same_graph("location_conv", cumulative, kernel);
  const Matrix& p = prev.value();
  const Matrix& c = cumulative.value();
  const Matrix& k = kernel.value();
  require_same_shape("location_conv", p, c);
  if (k.cols() % 2 != 0 || (k.cols() / 2) % 2 != 1) {
    throw ShapeError("location_conv", "kernel " + dims(k) + " must be nf x (2 * odd width)");
  }
  const Eigen::Index width = k.cols() / 2;
  const Eigen::Index pad = width / 2;
  const Eigen::Index len = p.rows();
  const Eigen::Index batch = p.cols();
  // Window matrix: row (ch * width + u), column j * B + b holds in_ch[j+u-pad, b].
  Matrix window = Matrix::Zero(2 * width, len * batch);
  for (Eigen::Index j = 0; j < len; ++j) {
    for (Eigen::Index u = 0; u < width; ++u) {
      const Eigen::Index src = j + u - pad;
      if (src < 0 || src >= len) continue;
      for (Eigen::Index b = 0; b < batch; ++b) {
        window(u, j * batch + b) = p(src, b);
        window(width + u, j * batch + b) = c(src, b);
      }
    }
  }
  Matrix y = k * window;
  return prev.graph().push(
      "location_conv", std::move(y), {prev.id(), cumulative.id(), kernel.id()},
      [pi = prev.id(), ci = cumulative.id(), ki = kernel.id(), window = std::move(window), width,
       pad, len, batch](Graph& g, int self) {
        const Matrix& gy = g.upstream(self);
        if (g.requires_grad(ki)) g.grad_buffer(ki).noalias() += gy * window.transpose();
        const bool need_p = g.requires_grad(pi);
        const bool need_c = g.requires_grad(ci);
        if (!need_p && !need_c) return;
        const Matrix gw = g.value(ki).transpose() * gy;
        for (Eigen::Index j = 0; j < len; ++j) {
          for (Eigen::Index u = 0; u < width; ++u) {
            const Eigen::Index src = j + u - pad;
            if (src < 0 || src >= len) continue;
            for (Eigen::Index b = 0; b < batch; ++b) {
              if (need_p) g.grad_buffer(pi)(src, b) += gw(u, j * batch + b);
              if (need_c) g.grad_buffer(ci)(src, b) += gw(width + u, j * batch + b);
            }
          }
        }
      });
}

Var embedding(Var table, std::span<const int> ids) {
  const Matrix& t = table.value();
  if (ids.empty()) throw ShapeError("embedding", "empty id list");
  Matrix y(t.cols(), static_cast<Eigen::Index>(ids.size()));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= t.rows()) {
      throw ShapeError("embedding", "id " + std::to_string(ids[i]) + " outside table " + dims(t));
    }
    y.col(static_cast<Eigen::Index>(i)) = t.row(ids[i]).transpose();
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return table.graph().push("embedding", std::move(y), {table.id()},
                            [ti = table.id(), idx = std::move(idx)](Graph& g, int self) {
                              if (!g.requires_grad(ti)) return;
                              Matrix& gt = g.grad_buffer(ti);
                              const Matrix& gy = g.upstream(self);
                              for (std::size_t i = 0; i < idx.size(); ++i) {
                                gt.row(idx[i]) += gy.col(static_cast<Eigen::Index>(i)).transpose();
                              }
                            });
}

}  // namespace flowstyle::ad
