// SPDX-License-Identifier: Apache-2.0
/**
 * @file kernel.hpp
 * @brief Periodic Green function of Lambda^{-1-eps} on the unit torus and its
 *        orthogonal gradient, with optional smoothing inside a radius delta.
 *
 * The Green function is the lattice sum
 *
 *   G(x) = sum_{n != 0} (2 pi |n|)^{-1-eps} exp(2 pi i n.x),
 *
 * and K = grad^perp G = (-dG/dy, dG/dx). The sum converges too slowly to be
 * truncated directly near the singularity, so it is evaluated through a
 * Gaussian splitting at a fixed time tau:
 *
 *   G = [damped spectral sum over |n| <= M]
 *     + [sum over periodic images of an incomplete-gamma real-space term]
 *     - tau^alpha / Gamma(alpha + 1),           alpha = (1 + eps) / 2.
 *
 * Both pieces decay like exp(-z) in their index, so the result equals the
 * full sum to roughly machine precision. The real-space term of the central
 * image contains the whole singularity c_s |x|^{-(1-eps)}; it is split off
 * analytically, leaving a regular remainder R that is smooth on the closed
 * fundamental square. Tables interpolate only R.
 */
#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <sstream>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "errors.hpp"
#include "torus.hpp"

namespace msqg {

struct KernelConfig {
  double epsilon = 0.5;
  int spectral_cutoff = 256;
  /// Regularization radius; 0 means the singular kernel.
  double delta = 0.0;
  /// Number of radial derivatives matched at |x| = delta by the inner
  /// polynomial; the regularized Green function is C^smoothness.
  int smoothness = 4;

  void validate() const {
    if (!(epsilon > 0.0 && epsilon < 1.0)) {
      throw ConfigError("epsilon must lie strictly inside (0,1)");
    }
    if (spectral_cutoff < 1) throw ConfigError("spectral_cutoff must be positive");
    if (!(delta >= 0.0)) throw ConfigError("delta must be non-negative");
    if (delta > 0.0 && !(delta < 0.25)) throw ConfigError("delta must be below 1/4");
    if (smoothness < 1 || smoothness > 8) throw ConfigError("smoothness must be in [1,8]");
  }

  bool operator==(const KernelConfig&) const = default;
};

/// Value of G and K = grad^perp G at one displacement.
struct KernelSample {
  double g = 0.0;
  Vec2 k;
};

/// Value, gradient and mixed derivative of the smooth remainder R.
struct RegularJet {
  double value = 0.0;
  double dx = 0.0;
  double dy = 0.0;
  double dxy = 0.0;
};

/// The radial singular part c_s rho^{alpha-1} (rho = |x|^2), replaced inside
/// rho < delta^2 by its Taylor polynomial in rho about delta^2.
class SingularPart {
 public:
  SingularPart() = default;
  SingularPart(double epsilon, double delta, int smoothness)
      : alpha_(0.5 * (1.0 + epsilon)), delta_(delta) {
    const double a = 1.0 - alpha_;
    coeff_ = boost::math::tgamma(a) * std::pow(4.0, a) /
             (4.0 * kPi * boost::math::tgamma(alpha_));
    if (delta_ > 0.0) {
      rho0_ = delta_ * delta_;
      taylor_.resize(static_cast<std::size_t>(smoothness) + 1);
      double falling = 1.0;
      double factorial = 1.0;
      for (int k = 0; k <= smoothness; ++k) {
        if (k > 0) {
          falling *= (alpha_ - static_cast<double>(k));
          factorial *= k;
        }
        taylor_[static_cast<std::size_t>(k)] =
            coeff_ * falling * std::pow(rho0_, alpha_ - 1.0 - k) / factorial;
      }
    }
  }

  /// Whole-space constant c_s in G ~ c_s |x|^{-(1-eps)}.
  [[nodiscard]] double coefficient() const { return coeff_; }
  [[nodiscard]] double delta() const { return delta_; }

  /// Returns (S, dS/drho). Requires rho > 0 unless delta > 0.
  [[nodiscard]] std::array<double, 2> eval(double rho) const {
    if (delta_ > 0.0 && rho < rho0_) {
      const double t = rho - rho0_;
      double p = 0.0;
      double dp = 0.0;
      for (std::size_t k = taylor_.size(); k-- > 0;) {
        dp = dp * t + p;
        p = p * t + taylor_[k];
      }
      return {p, dp};
    }
    const double s = coeff_ * std::pow(rho, alpha_ - 1.0);
    return {s, (alpha_ - 1.0) * s / rho};
  }

 private:
  double alpha_ = 0.75;
  double delta_ = 0.0;
  double coeff_ = 0.0;
  double rho0_ = 0.0;
  std::vector<double> taylor_;
};

/// Exact evaluation of G, K and their delta-regularized versions.
class DirectKernel {
 public:
  static constexpr double kSplitTime = 0.01;
  static constexpr double kDecayCut = 42.0;

  explicit DirectKernel(const KernelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    alpha_ = 0.5 * (1.0 + cfg_.epsilon);
    a_ = 1.0 - alpha_;
    tau_ = kSplitTime;
    norm_ = 1.0 / (4.0 * kPi * boost::math::tgamma(alpha_));
    gamma_a_ = boost::math::tgamma(a_);
    constant_ = -std::pow(tau_, alpha_) / boost::math::tgamma(alpha_ + 1.0);
    singular_ = SingularPart(cfg_.epsilon, cfg_.delta, cfg_.smoothness);

    const double nmax_decay = std::sqrt(kDecayCut / (4.0 * kPi * kPi * tau_));
    const double nmax = std::min(nmax_decay, static_cast<double>(cfg_.spectral_cutoff));
    nmax_ = static_cast<int>(std::floor(nmax));
    const double s = 1.0 + cfg_.epsilon;
    for (int n1 = 0; n1 <= nmax_; ++n1) {
      for (int n2 = -nmax_; n2 <= nmax_; ++n2) {
        if (n1 == 0 && n2 <= 0) continue;
        const double n2sq = static_cast<double>(n1 * n1 + n2 * n2);
        if (n2sq > nmax * nmax) continue;
        const double z = 4.0 * kPi * kPi * n2sq * tau_;
        const double c = 2.0 * std::pow(kTwoPi * std::sqrt(n2sq), -s) *
                         boost::math::gamma_q(alpha_, z);
        modes_.push_back({n1, n2, c});
      }
    }
    reciprocal_truncated_ = nmax < nmax_decay;
  }

  [[nodiscard]] const KernelConfig& config() const { return cfg_; }
  [[nodiscard]] double epsilon() const { return cfg_.epsilon; }
  [[nodiscard]] double delta() const { return cfg_.delta; }
  [[nodiscard]] const SingularPart& singular() const { return singular_; }
  /// True when the spectral cutoff, not the Gaussian decay, limits the sum.
  [[nodiscard]] bool reciprocal_truncated() const { return reciprocal_truncated_; }

  /// Smooth remainder R = G - c_s |x|^{-(1-eps)} at unwrapped coordinates
  /// inside the closed fundamental square [-1/2,1/2]^2.
  [[nodiscard]] RegularJet regular_jet(double x, double y) const {
    RegularJet out;
    out.value = constant_;
    add_reciprocal(x, y, out);
    for (int m1 = -2; m1 <= 2; ++m1) {
      for (int m2 = -2; m2 <= 2; ++m2) {
        const double px = x + m1;
        const double py = y + m2;
        const double rho = px * px + py * py;
        std::array<double, 3> d{};
        if (m1 == 0 && m2 == 0) {
          d = central_regular(rho);
        } else {
          const double z = rho / (4.0 * tau_);
          if (z > kDecayCut) continue;
          d = image_term(rho, z);
        }
        out.value += d[0];
        out.dx += 2.0 * px * d[1];
        out.dy += 2.0 * py * d[1];
        out.dxy += 4.0 * px * py * d[2];
      }
    }
    return out;
  }

  /// G and K at a displacement; K(0) = 0 and exact odd/even symmetry.
  /// With delta = 0 the value of G at d = 0 is reported as +infinity.
  [[nodiscard]] KernelSample eval(const Displacement& d) const {
    if (d.self_negating()) {
      KernelSample s = raw(d);
      s.k = Vec2{};
      return s;
    }
    if (d.canonical()) return raw(d);
    KernelSample s = raw(d.negated());
    s.k = -s.k;
    return s;
  }

  /// G (or G^(delta) when delta > 0). Throws at d = 0 without regularization.
  [[nodiscard]] double green(const Displacement& d) const {
    if (d.is_zero() && cfg_.delta == 0.0) {
      throw SingularityError("Green function evaluated at the singularity");
    }
    return eval(d).g;
  }

  /// K = grad^perp G with the convention K(0) = 0.
  [[nodiscard]] Vec2 biot_savart(const Displacement& d) const { return eval(d).k; }

 private:
  struct Mode {
    int n1;
    int n2;
    double coeff;
  };

  KernelSample raw(const Displacement& d) const {
    const double x = d.du();
    const double y = d.dv();
    const double rho = x * x + y * y;
    if (rho == 0.0 && cfg_.delta == 0.0) {
      return {kInf, Vec2{}};
    }
    const RegularJet r = regular_jet(x, y);
    const auto s = singular_.eval(rho);
    const double gx = r.dx + 2.0 * x * s[1];
    const double gy = r.dy + 2.0 * y * s[1];
    return {r.value + s[0], Vec2{-gy, gx}};
  }

  void add_reciprocal(double x, double y, RegularJet& out) const {
    // powers exp(2 pi i k x) by repeated multiplication from a single sincos
    std::array<double, 64> cx{};
    std::array<double, 64> sx{};
    std::array<double, 128> cy{};
    std::array<double, 128> sy{};
    const double c1 = std::cos(kTwoPi * x);
    const double s1 = std::sin(kTwoPi * x);
    const double c2 = std::cos(kTwoPi * y);
    const double s2 = std::sin(kTwoPi * y);
    cx[0] = 1.0;
    sx[0] = 0.0;
    for (int k = 1; k <= nmax_; ++k) {
      cx[k] = cx[k - 1] * c1 - sx[k - 1] * s1;
      sx[k] = sx[k - 1] * c1 + cx[k - 1] * s1;
    }
    const int off = nmax_;
    cy[off] = 1.0;
    sy[off] = 0.0;
    for (int k = 1; k <= nmax_; ++k) {
      cy[off + k] = cy[off + k - 1] * c2 - sy[off + k - 1] * s2;
      sy[off + k] = sy[off + k - 1] * c2 + cy[off + k - 1] * s2;
      cy[off - k] = cy[off + k];
      sy[off - k] = -sy[off + k];
    }
    double val = 0.0;
    double dx = 0.0;
    double dy = 0.0;
    double dxy = 0.0;
    for (const Mode& m : modes_) {
      const double ca = cx[m.n1];
      const double sa = sx[m.n1];
      const double cb = cy[off + m.n2];
      const double sb = sy[off + m.n2];
      const double c = ca * cb - sa * sb;
      const double s = sa * cb + ca * sb;
      val += m.coeff * c;
      dx -= m.coeff * m.n1 * s;
      dy -= m.coeff * m.n2 * s;
      dxy -= m.coeff * m.n1 * m.n2 * c;
    }
    out.value += val;
    out.dx += kTwoPi * dx;
    out.dy += kTwoPi * dy;
    out.dxy += kTwoPi * kTwoPi * dxy;
  }

  /// Real-space term of a non-central image and its first two rho-derivatives.
  [[nodiscard]] std::array<double, 3> image_term(double rho, double z) const {
    const double g0 = boost::math::tgamma(a_, z);
    const double ez = std::exp(-z);
    const double za = std::pow(z, a_);
    const double g1 = a_ * g0 + za * ez;
    const double g2 = (a_ + 1.0) * g1 + za * z * ez;
    const double q = rho / 4.0;
    const double base = norm_ * std::pow(q, alpha_ - 1.0);
    return {base * g0, -0.25 * base / q * g1, 0.0625 * base / (q * q) * g2};
  }

  /// Central image minus its singular part c_s rho^{alpha-1}.
  [[nodiscard]] std::array<double, 3> central_regular(double rho) const {
    const double z = rho / (4.0 * tau_);
    std::array<double, 3> lk{};
    if (z <= 2.0) {
      for (int k = 0; k < 3; ++k) {
        const double ak = 1.0 + k - alpha_;
        double term = 1.0;
        double sum = 1.0 / ak;
        for (int j = 1; j < 60; ++j) {
          term *= -z / j;
          const double add = term / (ak + j);
          sum += add;
          if (std::abs(add) < 1e-18 * std::abs(sum)) break;
        }
        lk[static_cast<std::size_t>(k)] = std::pow(tau_, -ak) * sum;
      }
    } else {
      const double ez = std::exp(-z);
      const double za = std::pow(z, a_);
      const double l0 = boost::math::tgamma_lower(a_, z);
      const double l1 = a_ * l0 - za * ez;
      const double l2 = (a_ + 1.0) * l1 - za * z * ez;
      const double q = rho / 4.0;
      const double p0 = std::pow(q, alpha_ - 1.0);
      lk = {p0 * l0, p0 / q * l1, p0 / (q * q) * l2};
    }
    return {-norm_ * lk[0], 0.25 * norm_ * lk[1], -0.0625 * norm_ * lk[2]};
  }

  KernelConfig cfg_;
  double alpha_ = 0.75;
  double a_ = 0.25;
  double tau_ = kSplitTime;
  double norm_ = 0.0;
  double gamma_a_ = 0.0;
  double constant_ = 0.0;
  int nmax_ = 0;
  bool reciprocal_truncated_ = false;
  std::vector<Mode> modes_;
  SingularPart singular_;
};

}  // namespace msqg
