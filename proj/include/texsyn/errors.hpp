#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace texsyn {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);

// Incompatible extents or ranks.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Violated precondition that is neither a shape nor a domain problem.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Non-finite values produced during training.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, long step)
      : std::runtime_error(what), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

}  // namespace texsyn
