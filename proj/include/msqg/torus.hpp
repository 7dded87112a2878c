// SPDX-License-Identifier: Apache-2.0
/**
 * @file torus.hpp
 * @brief Points and minimal-image displacements on the unit torus R^2/Z^2.
 */
#pragma once

#include <cmath>
#include <limits>
#include <numbers>

namespace msqg {

/// Plain 2-vector used for velocities and gradients.
struct Vec2 {
  double u = 0.0;
  double v = 0.0;

  constexpr Vec2 operator+(Vec2 o) const { return {u + o.u, v + o.v}; }
  constexpr Vec2 operator-(Vec2 o) const { return {u - o.u, v - o.v}; }
  constexpr Vec2 operator-() const { return {-u, -v}; }
  constexpr Vec2 operator*(double s) const { return {u * s, v * s}; }
  constexpr Vec2& operator+=(Vec2 o) {
    u += o.u;
    v += o.v;
    return *this;
  }
  constexpr Vec2& operator-=(Vec2 o) {
    u -= o.u;
    v -= o.v;
    return *this;
  }
  constexpr bool operator==(const Vec2&) const = default;

  [[nodiscard]] constexpr double dot(Vec2 o) const { return u * o.u + v * o.v; }
  [[nodiscard]] constexpr double norm2() const { return u * u + v * v; }
  [[nodiscard]] double norm() const { return std::hypot(u, v); }
};

/// Reduce a real coordinate into [0,1).
inline double reduce_unit(double a) {
  double r = a - std::floor(a);
  // a tiny negative a rounds up to exactly 1
  if (r >= 1.0) r = 0.0;
  return r;
}

/// Reduce a real difference into (-1/2, 1/2]; ties resolve to +1/2.
inline double wrap_half(double a) {
  double r = a - std::floor(a + 0.5);
  if (r <= -0.5) r += 1.0;
  if (r > 0.5) r -= 1.0;
  return r;
}

class TorusPoint {
 public:
  constexpr TorusPoint() = default;
  TorusPoint(double u, double v) : u_(reduce_unit(u)), v_(reduce_unit(v)) {}

  [[nodiscard]] double u() const { return u_; }
  [[nodiscard]] double v() const { return v_; }
  bool operator==(const TorusPoint&) const = default;

 private:
  double u_ = 0.0;
  double v_ = 0.0;
};

/// Minimal-image difference of two torus points, components in (-1/2, 1/2].
class Displacement {
 public:
  constexpr Displacement() = default;

  /// Wraps arbitrary components into the fundamental cell.
  static Displacement wrap(double du, double dv) {
    Displacement d;
    d.du_ = wrap_half(du);
    d.dv_ = wrap_half(dv);
    return d;
  }

  [[nodiscard]] double du() const { return du_; }
  [[nodiscard]] double dv() const { return dv_; }
  [[nodiscard]] Vec2 vec() const { return {du_, dv_}; }
  [[nodiscard]] double norm2() const { return du_ * du_ + dv_ * dv_; }
  [[nodiscard]] double norm() const { return std::hypot(du_, dv_); }
  [[nodiscard]] bool is_zero() const { return du_ == 0.0 && dv_ == 0.0; }

  /// Exact involutive negation within the cell (+1/2 maps to itself).
  [[nodiscard]] Displacement negated() const {
    Displacement d;
    d.du_ = du_ == 0.5 ? 0.5 : -du_;
    d.dv_ = dv_ == 0.5 ? 0.5 : -dv_;
    return d;
  }

  /// True when negated() returns the same displacement.
  [[nodiscard]] bool self_negating() const {
    return (du_ == 0.0 || du_ == 0.5) && (dv_ == 0.0 || dv_ == 0.5);
  }

  /// Canonical half of the cell; every displacement is either canonical,
  /// self-negating, or the negation of a canonical one.
  [[nodiscard]] bool canonical() const {
    if (du_ > 0.0 && du_ < 0.5) return true;
    return (du_ == 0.0 || du_ == 0.5) && dv_ > 0.0 && dv_ < 0.5;
  }

  bool operator==(const Displacement&) const = default;

 private:
  double du_ = 0.0;
  double dv_ = 0.0;
};

inline Displacement wrap_displacement(const TorusPoint& p, const TorusPoint& q) {
  return Displacement::wrap(p.u() - q.u(), p.v() - q.v());
}

/// Minimal-image distance between two points.
inline double torus_distance(const TorusPoint& p, const TorusPoint& q) {
  return wrap_displacement(p, q).norm();
}

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace msqg
