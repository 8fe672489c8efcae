#include "flowstyle/numerics/graph.hpp"

#include "flowstyle/numerics/error.hpp"

namespace flowstyle {

const Matrix& Var::value() const { return graph_->value(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) {
    throw ShapeError("scalar", "expected 1x1 value, got " +
                                   std::to_string(v.rows()) + "x" +
                                   std::to_string(v.cols()));
  }
  return v(0, 0);
}

Var Graph::constant(Matrix value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::scalar(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return constant(std::move(m));
}

Var Graph::variable(Matrix value) {
  Node n;
  n.op = "variable";
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

bool Graph::is_frozen(std::string_view name) const {
  for (const auto& p : frozen_) {
    if (name.starts_with(p)) return true;
  }
  return false;
}

Var Graph::param(const ParamStore& store, const std::string& name) {
  if (auto it = param_cache_.find(name); it != param_cache_.end()) {
    return Var(this, it->second);
  }
  const Tensor& t = store.at(name);
  Node n;
  n.op = "param";
  n.external = &t.matrix();
  n.param_tensor = &t;
  n.requires_grad = !is_frozen(name);
  n.param_name = name;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_cache_.emplace(name, id);
  return Var(this, id);
}

const Matrix& Graph::value(int id) const {
  const Node& n = nodes_[id];
  return n.external ? *n.external : n.value;
}

Var Graph::push(std::string_view op, Matrix value, std::vector<int> parents,
                BackwardFn backward) {
  if (checked_ && !value.allFinite()) throw NonFiniteError(std::string(op));
  Node n;
  n.op = op;
  n.value = std::move(value);
  for (int p : parents) {
    if (nodes_[p].requires_grad) n.requires_grad = true;
  }
  n.parents = std::move(parents);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Matrix& Graph::grad_buffer(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) {
    const Matrix& v = value(id);
    n.grad = Matrix::Zero(v.rows(), v.cols());
  }
  return n.grad;
}

ParamStore Graph::backward(Var output) {
  if (output.graph_ != this) throw Error("backward: output from another graph");
  const Matrix& out = value(output.id());
  if (out.rows() != 1 || out.cols() != 1) {
    throw ShapeError("backward", "output must be scalar, got " +
                                     std::to_string(out.rows()) + "x" +
                                     std::to_string(out.cols()));
  }
  for (auto& n : nodes_) n.grad.resize(0, 0);
  grad_buffer(output.id())(0, 0) = 1.0;
  for (int id = output.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.size() == 0 || !n.backward) continue;
    n.backward(*this, id);
  }
  ParamStore grads;
  for (const auto& n : nodes_) {
    if (n.op != "param" || !n.requires_grad) continue;
    const Matrix& v = *n.external;
    Matrix g = n.grad.size() ? n.grad : Matrix::Zero(v.rows(), v.cols());
    grads.set(n.param_name, Tensor(n.param_tensor->shape(), std::move(g)));
  }
  return grads;
}

}  // namespace flowstyle
