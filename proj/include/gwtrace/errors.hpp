#pragma once

#include <stdexcept>
#include <string>

namespace gwtrace {

/// A configured memory or step budget was exceeded.
class ResourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The model parameters violate the hypotheses a routine relies on
/// (non-critical bias, undefined variance, psi(2) >= 1, ...).
class RegimeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Two inputs that must describe the same object disagree.
class ConsistencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Rejection sampling gave up.
class RetryExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gwtrace
