#include "flowstyle/numerics/tensor.hpp"

#include <cmath>
#include <string>

#include "flowstyle/numerics/error.hpp"

namespace flowstyle {
namespace {

std::pair<Eigen::Index, Eigen::Index> matrix_dims(
    const std::vector<std::size_t>& shape) {
  if (shape.empty()) throw ShapeError("tensor", "shape must not be empty");
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor", "shape entries must be positive");
  }
  const auto rows = static_cast<Eigen::Index>(shape[0]);
  const auto cols = static_cast<Eigen::Index>(shape_product(shape) / shape[0]);
  return {rows, cols};
}

}  // namespace

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
  auto [r, c] = matrix_dims(shape_);
  values_ = Matrix::Zero(r, c);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)) {
  auto [r, c] = matrix_dims(shape_);
  if (data.size() != shape_product(shape_)) {
    throw ShapeError("tensor", "data length " + std::to_string(data.size()) +
                                   " does not match shape product " +
                                   std::to_string(shape_product(shape_)));
  }
  values_ = Eigen::Map<const Matrix>(data.data(), r, c);
}

Tensor::Tensor(std::vector<std::size_t> shape, Matrix values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  auto [r, c] = matrix_dims(shape_);
  if (values_.rows() != r || values_.cols() != c) {
    throw ShapeError("tensor", "matrix dimensions do not match shape");
  }
}

Tensor Tensor::vector(std::span<const double> values) {
  return Tensor({values.size()},
                std::vector<double>(values.begin(), values.end()));
}

Tensor Tensor::from_matrix(const Matrix& m) {
  if (m.cols() == 1) return Tensor({static_cast<std::size_t>(m.rows())}, m);
  return Tensor({static_cast<std::size_t>(m.rows()),
                 static_cast<std::size_t>(m.cols())},
                m);
}

bool Tensor::all_finite() const { return values_.allFinite(); }

}  // namespace flowstyle
