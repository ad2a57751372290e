#pragma once

#include <stdexcept>
#include <string>

namespace mvdam {

// Runtime failure inside the library (I/O, numerical breakdown, ...).
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Caller handed in something that violates a documented precondition.
// The CLI maps this to exit code 2.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(what) {}
};

}  // namespace mvdam
