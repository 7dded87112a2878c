// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace msqg {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid parameters or configuration documents.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File could not be read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Evaluation of the unregularized kernel at a coincident point.
class SingularityError : public Error {
 public:
  using Error::Error;
};

/// Operands with incompatible spectral cutoffs.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A numerical tolerance could not be met; carries the worst location.
class ToleranceError : public Error {
 public:
  ToleranceError(const std::string& what, double worst_u, double worst_v, double worst_error)
      : Error(what), worst_u_(worst_u), worst_v_(worst_v), worst_error_(worst_error) {}

  [[nodiscard]] double worst_u() const { return worst_u_; }
  [[nodiscard]] double worst_v() const { return worst_v_; }
  [[nodiscard]] double worst_error() const { return worst_error_; }

 private:
  double worst_u_;
  double worst_v_;
  double worst_error_;
};

/// Coincident vortices under unregularized dynamics.
class CollisionError : public Error {
 public:
  CollisionError(const std::string& what, std::size_t i, std::size_t j)
      : Error(what), i_(i), j_(j) {}
  [[nodiscard]] std::size_t first() const { return i_; }
  [[nodiscard]] std::size_t second() const { return j_; }

 private:
  std::size_t i_;
  std::size_t j_;
};

/// Non-finite state reached during integration.
class BlowUpError : public Error {
 public:
  BlowUpError(const std::string& what, std::size_t step) : Error(what), step_(step) {}
  [[nodiscard]] std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

}  // namespace msqg
