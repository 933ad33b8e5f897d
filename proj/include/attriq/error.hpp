#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace attriq {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform to what an operation expects.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A NaN or infinity appeared during evaluation.
class NonFiniteError : public Error {
 public:
  NonFiniteError(std::size_t node, const std::string& what)
      : Error("non-finite value at node " + std::to_string(node) + ": " + what), node_(node) {}

  std::size_t node() const { return node_; }

 private:
  std::size_t node_;
};

/// A program step cannot be executed against a table.
class ExecError : public Error {
 public:
  using Error::Error;
};

/// Malformed input data (files, records, checkpoints).
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace attriq
