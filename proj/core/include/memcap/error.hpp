#pragma once

#include <stdexcept>
#include <string>

namespace memcap {

// Bad input: malformed files, violated preconditions, unknown config keys.
// The CLI maps this to exit status 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values, divergence, failed factorizations. CLI exit status 2.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Filesystem failures; the message carries the OS error verbatim.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace memcap
