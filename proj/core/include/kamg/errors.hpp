#pragma once

#include <stdexcept>
#include <string>

namespace kamg {

// Failure taxonomy shared by the whole pipeline. The CLI maps these onto
// exit codes: ConfigError -> 1, DataError -> 2, everything else -> 3.

// Bad configuration or usage: unknown keys, out-of-range settings.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent on-disk data: corpora, graphs, checkpoints.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numeric breakdown at runtime: divergence, non-finite values.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Violated precondition inside the library (shape mismatch etc.).
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

}  // namespace kamg
