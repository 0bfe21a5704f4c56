#pragma once

#include <stdexcept>
#include <string>

namespace milora {

// Bad user-supplied configuration (files, CLI values, hyper-parameters).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Operands with incompatible dimensions.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// An API precondition was violated by the caller.
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File could not be read/written or has a corrupt layout.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace milora
