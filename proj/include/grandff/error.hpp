#pragma once

#include <stdexcept>
#include <string>

namespace grandff {

/// Bad input: malformed scenario, non-monotone configuration set, bad flags.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical routine failed to reach its tolerance.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An event referenced a server that the ranked state does not have.
class CountMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace grandff
