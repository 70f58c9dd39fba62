#pragma once

#include <stdexcept>
#include <string>

namespace cquant {

/// Malformed shapes, measures or scenario files.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Wrong call sequence or arguments outside an operation's domain.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Work budgets exceeded (atom counts, enumeration sizes).
class ResourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite input or a computation that cannot produce a number.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cquant
