#pragma once

#include <stdexcept>
#include <string>

namespace cqa {

// Bad arguments, broken invariants, unmet preconditions. CLI exit code 1.
class ValidationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Filesystem failures and malformed files. CLI exit code 2.
class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class FormatError : public IoError {
public:
  using IoError::IoError;
};

// Iterative procedures that stop without reaching their goal.
class ConvergenceError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace cqa
