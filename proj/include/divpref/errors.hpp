#pragma once

#include <stdexcept>
#include <string>

namespace divpref {

// Bad input data: malformed files, out-of-range scores, duplicate ids,
// unusable service responses. The CLI maps this to exit code 2.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure at runtime: non-finite loss, degenerate statistics.
// The CLI maps this to exit code 3.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace divpref
