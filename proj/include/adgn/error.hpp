#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace adgn {

// Precondition or shape contract broken by the caller.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Input outside a function's mathematical domain (log of non-positive, empty mask boundary, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Quadrature did not stabilise under grid refinement.
class PrecisionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad run configuration; the CLI maps it to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Any failure during a training run; the CLI maps it to exit code 3.
class RunFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NodeTimeout : public RunFailure {
 public:
  NodeTimeout(std::uint16_t node, const std::string& what)
      : RunFailure("node " + std::to_string(node) + ": " + what), node_(node) {}
  std::uint16_t node() const noexcept { return node_; }

 private:
  std::uint16_t node_;
};

}  // namespace adgn
