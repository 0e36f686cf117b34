#ifndef SNUTS_ERROR_HPP
#define SNUTS_ERROR_HPP

#include <stdexcept>
#include <string>

namespace snuts {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// A nonpositive pivot was met during a Cholesky factorization.
class NotPositiveDefinite : public Error {
 public:
  explicit NotPositiveDefinite(const std::string& what, int column = -1)
      : Error(what), column_(column) {}
  int column() const noexcept { return column_; }

 private:
  int column_;
};

class DimensionTooLarge : public Error {
 public:
  using Error::Error;
};

class MaxIterations : public Error {
 public:
  using Error::Error;
};

class NonFiniteObjective : public Error {
 public:
  using Error::Error;
};

/// The Laplace machinery could not find a usable interior mode.
class NoInteriorMode : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class SamplingError : public Error {
 public:
  using Error::Error;
};

}  // namespace snuts

#endif  // SNUTS_ERROR_HPP
