#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "flowstyle/numerics/param_store.hpp"
#include "flowstyle/numerics/tensor.hpp"

namespace flowstyle {

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;

  Graph& graph() const { return *graph_; }
  int id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }
  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;

 private:
  friend class Graph;
  Var(Graph* g, int id) : graph_(g), id_(id) {}
  Graph* graph_ = nullptr;
  int id_ = -1;
};

/// Reverse-mode tape. Nodes are appended in evaluation order; backward()
/// walks them in reverse. Every value is a 2-D matrix; vectors are columns
/// and batched quantities put one example per column.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, int self)>;

  explicit Graph(bool checked = true) : checked_(checked) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Matrix value);
  Var scalar(double v);
  /// Leaf that receives a gradient but is not a named parameter.
  Var variable(Matrix value);
  /// Leaf bound to `store[name]`; one node per name per graph. The store
  /// must outlive the graph and stay unmodified while it is in use.
  Var param(const ParamStore& store, const std::string& name);

  /// Parameters whose name starts with `prefix` are treated as constants.
  void freeze_prefix(std::string prefix) { frozen_.push_back(std::move(prefix)); }
  bool is_frozen(std::string_view name) const;

  const Matrix& value(int id) const;
  const Matrix& value(Var v) const { return value(v.id()); }
  /// Gradient accumulated by the last backward(); zero-sized if none reached.
  const Matrix& grad(Var v) const { return nodes_[v.id()].grad; }

  /// d output / d parameter for every trainable parameter leaf. `output`
  /// must be 1 x 1.
  ParamStore backward(Var output);

  std::size_t size() const { return nodes_.size(); }
  bool checked() const { return checked_; }

  // Op construction interface (see ops.hpp).
  Var push(std::string_view op, Matrix value, std::vector<int> parents,
           BackwardFn backward);
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  /// Gradient buffer of node `id`, zero-initialised on first access.
  Matrix& grad_buffer(int id);
  const Matrix& upstream(int id) const { return nodes_[id].grad; }

 private:
  struct Node {
    std::string_view op;
    Matrix value;
    const Matrix* external = nullptr;
    const Tensor* param_tensor = nullptr;
    Matrix grad;
    bool requires_grad = false;
    std::string param_name;
    std::vector<int> parents;
    BackwardFn backward;
  };

  std::deque<Node> nodes_;
  std::unordered_map<std::string, int> param_cache_;
  std::vector<std::string> frozen_;
  bool checked_;
};

}  // namespace flowstyle
