#pragma once

#include <stdexcept>
#include <string>

namespace wsod {

// Thrown when an input file or dataset is malformed. Maps to exit code 2
// in the CLI.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when a computation produced non-finite values or otherwise failed
// numerically. Maps to exit code 3 in the CLI.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace wsod
