#include "flowstyle/numerics/nn.hpp"

#include <cmath>

#include "flowstyle/numerics/ops.hpp"

namespace flowstyle::nn {

Tensor glorot(RngStream& rng, std::size_t rows, std::size_t cols) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::vector<double> data(rows * cols);
  for (auto& v : data) v = rng.uniform(-a, a);
  return Tensor({rows, cols}, std::move(data));
}

namespace {
Tensor filled(std::size_t n, double v) {
  return Tensor({n}, std::vector<double>(n, v));
}
}  // namespace

void Linear::init(ParamStore& ps, RngStream& rng, double bias) const {
  ps.add(name + "/W", glorot(rng, static_cast<std::size_t>(out), static_cast<std::size_t>(in)));
  ps.add(name + "/b", filled(static_cast<std::size_t>(out), bias));
}

void Linear::init_zero(ParamStore& ps) const {
  ps.add(name + "/W", Tensor({static_cast<std::size_t>(out), static_cast<std::size_t>(in)}));
  ps.add(name + "/b", Tensor({static_cast<std::size_t>(out)}));
}

Var Linear::operator()(Graph& g, const ParamStore& ps, Var x) const {
  return ad::add_bias(ad::matmul(g.param(ps, name + "/W"), x), g.param(ps, name + "/b"));
}

void GruCell::init(ParamStore& ps, RngStream& rng) const {
  const auto h = static_cast<std::size_t>(hidden);
  ps.add(name + "/Wx", glorot(rng, 3 * h, static_cast<std::size_t>(in)));
  ps.add(name + "/Wh", glorot(rng, 3 * h, h));
  ps.add(name + "/bx", filled(3 * h, 0.0));
  ps.add(name + "/bh", filled(3 * h, 0.0));
}

Var GruCell::project_input(Graph& g, const ParamStore& ps, Var x) const {
  return ad::add_bias(ad::matmul(g.param(ps, name + "/Wx"), x), g.param(ps, name + "/bx"));
}

Var GruCell::step_projected(Graph& g, const ParamStore& ps, Var gx, Var h) const {
  const Eigen::Index n = hidden;
  Var gh = ad::add_bias(ad::matmul(g.param(ps, name + "/Wh"), h), g.param(ps, name + "/bh"));
  Var r = ad::sigmoid(ad::add(ad::slice_rows(gx, 0, n), ad::slice_rows(gh, 0, n)));
  Var u = ad::sigmoid(ad::add(ad::slice_rows(gx, n, n), ad::slice_rows(gh, n, n)));
  Var cand = ad::tanh(ad::add(ad::slice_rows(gx, 2 * n, n), ad::mul(r, ad::slice_rows(gh, 2 * n, n))));
  // h' = (1 - u) * cand + u * h
  return ad::add(cand, ad::mul(u, ad::sub(h, cand)));
}

void LstmCell::init(ParamStore& ps, RngStream& rng) const {
  const auto h = static_cast<std::size_t>(hidden);
  ps.add(name + "/Wx", glorot(rng, 4 * h, static_cast<std::size_t>(in)));
  ps.add(name + "/Wh", glorot(rng, 4 * h, h));
  std::vector<double> b(4 * h, 0.0);
  for (std::size_t i = h; i < 2 * h; ++i) b[i] = 1.0;
  ps.add(name + "/b", Tensor({4 * h}, std::move(b)));
}

Var LstmCell::project_input(Graph& g, const ParamStore& ps, Var x) const {
  return ad::add_bias(ad::matmul(g.param(ps, name + "/Wx"), x), g.param(ps, name + "/b"));
}

std::pair<Var, Var> LstmCell::step_projected(Graph& g, const ParamStore& ps, Var gx, Var h,
                                             Var c) const {
  const Eigen::Index n = hidden;
  Var gates = ad::add(gx, ad::matmul(g.param(ps, name + "/Wh"), h));
  Var i = ad::sigmoid(ad::slice_rows(gates, 0, n));
  Var f = ad::sigmoid(ad::slice_rows(gates, n, n));
  Var cand = ad::tanh(ad::slice_rows(gates, 2 * n, n));
  Var o = ad::sigmoid(ad::slice_rows(gates, 3 * n, n));
  Var c_next = ad::add(ad::mul(f, c), ad::mul(i, cand));
  Var h_next = ad::mul(o, ad::tanh(c_next));
  return {h_next, c_next};
}

}  // namespace flowstyle::nn
