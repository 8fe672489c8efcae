#pragma once

#include <stdexcept>
#include <string>

namespace flowstyle {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when an op receives operands whose shapes do not line up. The
// message always starts with the op name.
class ShapeError : public Error {
 public:
  ShapeError(const std::string& op, const std::string& detail)
      : Error(op + ": " + detail), op_(op) {}
  const std::string& op() const { return op_; }

 private:
  std::string op_;
};

// Raised in checked mode when an op produces NaN or Inf.
class NonFiniteError : public Error {
 public:
  explicit NonFiniteError(const std::string& op)
      : Error(op + ": produced a non-finite value"), op_(op) {}
  const std::string& op() const { return op_; }

 private:
  std::string op_;
};

}  // namespace flowstyle
