#pragma once

#include <stdexcept>

namespace lid {

// Error categories map onto CLI exit codes: config/usage -> 1, data -> 2,
// numerical failure -> 3. Shape-contract violations throw
// std::invalid_argument directly.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace lid
