#pragma once

#include <stdexcept>
#include <string>

namespace fundmatch {

// Malformed or inconsistent input data (bad records, unknown ids, format errors).
class DataError : public std::runtime_error {
public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure (non-finite values, diverged training).
class NumericError : public std::runtime_error {
public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace fundmatch
