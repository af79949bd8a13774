#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace gnes {

enum class ErrorKind {
  dimension,
  parameter,
  validation,
  numeric,
  tolerance,
  config,
  locality,
  deadlock,
  io,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Base of every error thrown by the library. The kind is machine readable
/// (the CLI reports it verbatim in its error document).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& m) : Error(ErrorKind::dimension, m) {}
};

class ParameterError : public Error {
 public:
  explicit ParameterError(const std::string& m) : Error(ErrorKind::parameter, m) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& m) : Error(ErrorKind::validation, m) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& m) : Error(ErrorKind::config, m) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& m) : Error(ErrorKind::io, m) {}
};

/// Non-finite value produced by an oracle or by the iteration.
class NumericError : public Error {
 public:
  NumericError(const std::string& m, std::optional<std::size_t> agent = std::nullopt)
      : Error(ErrorKind::numeric, m), agent_(agent) {}

  std::optional<std::size_t> agent() const noexcept { return agent_; }

 private:
  std::optional<std::size_t> agent_;
};

/// An inner iterative procedure ran out of budget; carries the gap it reached.
class ToleranceError : public Error {
 public:
  ToleranceError(const std::string& m, double achieved)
      : Error(ErrorKind::tolerance, m), achieved_(achieved) {}

  double achieved() const noexcept { return achieved_; }

 private:
  double achieved_;
};

class LocalityError : public Error {
 public:
  explicit LocalityError(const std::string& m) : Error(ErrorKind::locality, m) {}
};

class DeadlockError : public Error {
 public:
  explicit DeadlockError(const std::string& m) : Error(ErrorKind::deadlock, m) {}
};

}  // namespace gnes
