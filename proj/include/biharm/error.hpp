#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace biharm {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Grid too coarse for the requested operation (cells per radius, shell width, stencil reach).
class ResolutionError : public Error {
 public:
  using Error::Error;
};

/// Region or support leaves the domain, or two fields live on different domains.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A derived value was read at a node tagged invalid (no stencil support).
class MaskedOutError : public Error {
 public:
  using Error::Error;
};

/// Nearest-point projection requested at (or too close to) the origin.
class DegeneratePointError : public Error {
 public:
  using Error::Error;
};

/// A map that should be sphere-valued is not (beyond tolerance).
class ConstraintError : public Error {
 public:
  using Error::Error;
};

/// Invalid parameter value (exponents, empty scans, unknown config keys).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// u - phi does not vanish to first order on the flat boundary.
class BoundaryDataError : public Error {
 public:
  using Error::Error;
};

/// Quantity degenerates (zero norm in a ratio, singular average in a polar projection).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// Iterative method failed to reach its tolerance; carries the residual history.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, std::vector<double> history)
      : Error(what), history_(std::move(history)) {}
  const std::vector<double>& history() const { return history_; }

 private:
  std::vector<double> history_;
};

}  // namespace biharm
