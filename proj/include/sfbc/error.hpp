#pragma once

#include <stdexcept>
#include <string>

namespace sfbc {

enum class ErrorKind {
  ShapeMismatch,
  InvalidArgument,
  NonFinite,
  Parse,
  Io,
  NotConverged,
  Unsupported,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ShapeMismatch: return "shape mismatch";
    case ErrorKind::InvalidArgument: return "invalid argument";
    case ErrorKind::NonFinite: return "non-finite value";
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::Io: return "i/o error";
    case ErrorKind::NotConverged: return "not converged";
    case ErrorKind::Unsupported: return "unsupported";
  }
  return "error";
}

/// Every failure raised by the library. `kind()` lets callers branch on the
/// category without parsing the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Parse failure that remembers the 1-based line it happened on.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(ErrorKind::Parse, "line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Convergence failure carrying the last sup-norm residual.
class NotConvergedError : public Error {
 public:
  NotConvergedError(std::size_t iterations, double residual)
      : Error(ErrorKind::NotConverged,
              "no convergence after " + std::to_string(iterations) +
                  " iterations (residual " + std::to_string(residual) + ")"),
        residual_(residual) {}

  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) throw Error(kind, what);
}

}  // namespace sfbc
