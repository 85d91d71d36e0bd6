#pragma once

#include <stdexcept>
#include <string>

namespace tpca {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on shapes, ranks or parameters was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// The inputs were well formed but the computation could not proceed
/// (ill-conditioned Gram matrix, degenerate contraction, no convergence).
class NumericalError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require(bool cond, const std::string& what) {
  if (!cond) throw InvalidArgument(what);
}

}  // namespace detail
}  // namespace tpca
