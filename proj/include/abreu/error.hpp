#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace abreu {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed text input (polytope files, expressions, run configs).
/// `position` is a 1-based byte position into the offending text, 0 if unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position = 0)
      : Error(position ? what + " (at position " + std::to_string(position) + ")" : what),
        position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

/// Invalid geometry: empty or unbounded polytope, degenerate body, ...
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// Pointwise evaluation outside the domain of a function (log of a
/// non-positive number, division by zero, point outside the polytope).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A finite-difference quantity was requested where its stencil does not fit.
class BandError : public Error {
 public:
  using Error::Error;
};

/// Loss of strict convexity of a potential.
class ConvexityError : public Error {
 public:
  using Error::Error;
};

/// Bad run configuration (CLI layer).
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace abreu
