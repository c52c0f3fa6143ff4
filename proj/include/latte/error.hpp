#pragma once

#include <stdexcept>
#include <string>

namespace latte {

/// Base class of every error raised by the library. The CLI maps the
/// concrete subclass to a process exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SchemaError : public Error { using Error::Error; };
class ParseError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class ShapeError : public Error { using Error::Error; };
class DomainError : public Error { using Error::Error; };
class FormatError : public Error { using Error::Error; };
class DataError : public Error { using Error::Error; };
class IoError : public Error { using Error::Error; };
class ContractViolation : public Error { using Error::Error; };
class NumericalError : public Error { using Error::Error; };
class TaskConstructionError : public Error { using Error::Error; };
class UndefinedMetricError : public Error { using Error::Error; };
class MissingArtifactError : public Error { using Error::Error; };

/// Raised when the hidden-states endpoint cannot be reached.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, int attempts)
      : Error(what + " (after " + std::to_string(attempts) + " attempts)"), attempts_(attempts) {}
  int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};

/// Throws ContractViolation with `message` unless `condition` holds.
inline void expects(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

}  // namespace latte
