#pragma once

#include <stdexcept>
#include <string>

namespace hbm {

/// Raised when an operation is called with arguments that violate its contract
/// (dimension mismatch, under-resolved grid, wrong period mode, ...).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A DAE evaluation produced a non-finite value.
class EvaluationError : public std::runtime_error {
 public:
  EvaluationError(const std::string& what, long node)
      : std::runtime_error(what + " (node " + std::to_string(node) + ")"), node_(node) {}

  /// Grid node index, or -1 for an off-grid evaluation.
  long node() const noexcept { return node_; }

 private:
  long node_;
};

class QuadratureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hbm
