#pragma once

#include <stdexcept>
#include <string>

namespace maskcert {

// Operand extents do not agree (matmul inner dims, image vs config, ...).
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// An attention mask that leaves nothing (or only the [class] token) to attend to.
class InvalidMaskError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// The requested adversary cannot be certified on this backbone geometry.
class GeometryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A caller-side contract was broken (empty dataset, non-admissible patch pair, ...).
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace maskcert
