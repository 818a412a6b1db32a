#pragma once

#include <stdexcept>
#include <string>

namespace paramshift {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

class ShapeError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "shape"; }
};

/// NaN/Inf reached a graph boundary, or a computation diverged.
class NumericError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "numeric"; }
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "convergence"; }
};

class FormatError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "format"; }
};

class ValueError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "value"; }
};

/// Orthogonal projection left (numerically) nothing behind.
class DegenerateDirection : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "degenerate"; }
};

}  // namespace paramshift
