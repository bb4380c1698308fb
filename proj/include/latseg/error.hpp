#pragma once

#include <stdexcept>
#include <string>

namespace latseg {

/// Error categories map one-to-one onto CLI exit codes.
enum class ErrorKind { invalid_argument, numerical, non_convergence, io, malformed };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what) : Error(ErrorKind::invalid_argument, what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ErrorKind::numerical, what) {}
};

/// Raised by the ODE solver when the step budget runs out.
class NonConvergence : public Error {
 public:
  NonConvergence(const std::string& what, double last_time)
      : Error(ErrorKind::non_convergence, what), last_time_(last_time) {}
  double last_time() const noexcept { return last_time_; }

 private:
  double last_time_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

/// Truncated or corrupt files, version mismatches.
class MalformedFile : public Error {
 public:
  explicit MalformedFile(const std::string& what) : Error(ErrorKind::malformed, what) {}
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw InvalidArgument(what);
}

}  // namespace latseg
