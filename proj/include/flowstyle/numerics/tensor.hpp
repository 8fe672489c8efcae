#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace flowstyle {

// Row-major so that Tensor::data() is the flat row-major view used on disk.
using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense real array. Rank-1 tensors are stored as n x 1 matrices; higher
/// ranks are flattened to shape[0] x product(rest).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);
  Tensor(std::vector<std::size_t> shape, Matrix values);

  static Tensor vector(std::span<const double> values);
  static Tensor from_matrix(const Matrix& m);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return static_cast<std::size_t>(values_.size()); }

  std::span<const double> data() const {
    return {values_.data(), static_cast<std::size_t>(values_.size())};
  }
  std::span<double> data() {
    return {values_.data(), static_cast<std::size_t>(values_.size())};
  }

  const Matrix& matrix() const { return values_; }
  Matrix& matrix() { return values_; }

  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.values_ == b.values_;
  }

 private:
  std::vector<std::size_t> shape_;
  Matrix values_;
};

std::size_t shape_product(const std::vector<std::size_t>& shape);

}  // namespace flowstyle
