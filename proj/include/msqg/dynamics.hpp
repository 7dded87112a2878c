// SPDX-License-Identifier: Apache-2.0
/**
 * @file dynamics.hpp
 * @brief Point-vortex system dx_i/dt = (1/sqrt N) sum_{j != i} xi_j K(x_i - x_j)
 *        with fixed-step RK4, diagnostics and the finite-difference flow
 *        Jacobian.
 *
 * Any kernel evaluator works: it must expose eval(Displacement) returning a
 * KernelSample, delta() and epsilon(). DirectKernel and KernelTable qualify.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "ensemble.hpp"
#include "errors.hpp"
#include "kernel.hpp"
#include "torus.hpp"

namespace msqg {

template <class E>
concept KernelEvaluator = requires(const E& e, const Displacement& d) {
  { e.eval(d) } -> std::same_as<KernelSample>;
  { e.delta() } -> std::convertible_to<double>;
  { e.epsilon() } -> std::convertible_to<double>;
};

struct IntegratorConfig {
  double dt = 1e-3;
  double T = 1.0;
  /// Unregularized runs halt once the minimal distance drops below this.
  double guard_distance = 1e-4;
  /// Keep every k-th step in the snapshot list (0: first and last only).
  int record_every = 1;
  /// Optional step cap: dt_k <= max_rotation * min_{i<j} d_ij / |v_i - v_j|.
  double max_rotation = 0.0;
  /// Optional early stop once the minimal distance is below this value.
  double stop_distance = 0.0;

  void validate() const {
    if (!(dt > 0.0)) throw ConfigError("dt must be positive");
    if (!(T >= 0.0)) throw ConfigError("T must be non-negative");
    if (T > 0.0 && dt > T) throw ConfigError("dt must not exceed T");
    if (!(guard_distance >= 0.0 && guard_distance < 0.25)) {
      throw ConfigError("guard_distance must lie in [0, 1/4)");
    }
    if (record_every < 0) throw ConfigError("record_every must be non-negative");
    if (!(max_rotation >= 0.0)) throw ConfigError("max_rotation must be non-negative");
    if (!(stop_distance >= 0.0)) throw ConfigError("stop_distance must be non-negative");
  }
};

struct GuardEvent {
  std::size_t step = 0;
  std::size_t i = 0;
  std::size_t j = 0;
  double distance = 0.0;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<std::vector<TorusPoint>> snapshots;
  std::vector<double> xi;
  /// Minimal pairwise distance at every step boundary, starting at t = 0.
  std::vector<double> min_distance_series;
  /// Final state without reduction modulo 1 (x_0, y_0, x_1, y_1, ...).
  std::vector<double> final_unwrapped;
  double final_time = 0.0;
  std::optional<GuardEvent> guard;
  bool stopped_early = false;

  [[nodiscard]] VortexEnsemble final_ensemble(double epsilon) const {
    VortexEnsemble e;
    e.epsilon = epsilon;
    e.xi = xi;
    for (std::size_t k = 0; k + 1 < final_unwrapped.size(); k += 2) {
      e.positions.emplace_back(final_unwrapped[k], final_unwrapped[k + 1]);
    }
    return e;
  }
};

/// Minimum over all recorded steps; +infinity when N < 2.
inline double min_pairwise_distance(const Trajectory& t) {
  double m = kInf;
  for (double d : t.min_distance_series) m = std::min(m, d);
  return m;
}

/// Minimal pairwise torus distance of a configuration (+infinity when N < 2).
inline double min_pairwise_distance(const std::vector<TorusPoint>& x) {
  double m2 = kInf;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      m2 = std::min(m2, wrap_displacement(x[i], x[j]).norm2());
    }
  }
  return std::sqrt(m2);
}

namespace detail {

struct PairScan {
  double min_d2 = kInf;
  std::size_t i = 0;
  std::size_t j = 0;
};

/// Velocities of the unwrapped state s (length 2N) into v.
template <KernelEvaluator E>
PairScan rhs(const E& kernel, const std::vector<double>& xi, const std::vector<double>& s,
             std::vector<double>& v) {
  const std::size_t n = xi.size();
  std::fill(v.begin(), v.end(), 0.0);
  PairScan scan;
  const bool singular = kernel.delta() == 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double xi_i = xi[i];
    const double xu = s[2 * i];
    const double xv = s[2 * i + 1];
    double vu = 0.0;
    double vv = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const Displacement d = Displacement::wrap(xu - s[2 * j], xv - s[2 * j + 1]);
      const double d2 = d.norm2();
      if (d2 < scan.min_d2) scan = {d2, i, j};
      if (singular && d2 == 0.0) throw CollisionError("coincident vortices", i, j);
      const Vec2 k = kernel.eval(d).k;
      vu += xi[j] * k.u;
      vv += xi[j] * k.v;
      v[2 * j] -= xi_i * k.u;
      v[2 * j + 1] -= xi_i * k.v;
    }
    v[2 * i] += vu;
    v[2 * i + 1] += vv;
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (double& c : v) c *= scale;
  return scan;
}

inline std::vector<double> flatten(const std::vector<TorusPoint>& x) {
  std::vector<double> s;
  s.reserve(2 * x.size());
  for (const auto& p : x) {
    s.push_back(p.u());
    s.push_back(p.v());
  }
  return s;
}

inline std::vector<TorusPoint> reduce(const std::vector<double>& s) {
  std::vector<TorusPoint> x;
  x.reserve(s.size() / 2);
  for (std::size_t k = 0; k + 1 < s.size(); k += 2) x.emplace_back(s[k], s[k + 1]);
  return x;
}

}  // namespace detail

/// v_i = (1/sqrt N) sum_{j != i} xi_j K(x_i - x_j).
template <KernelEvaluator E>
std::vector<Vec2> velocity_rhs(const VortexEnsemble& e, const E& kernel) {
  e.validate();
  std::vector<double> v(2 * e.size());
  detail::rhs(kernel, e.xi, detail::flatten(e.positions), v);
  std::vector<Vec2> out(e.size());
  for (std::size_t k = 0; k < e.size(); ++k) out[k] = {v[2 * k], v[2 * k + 1]};
  return out;
}

/// RK4 from an unwrapped initial state.
template <KernelEvaluator E>
Trajectory integrate_unwrapped(std::vector<double> s, const std::vector<double>& xi,
                               const IntegratorConfig& cfg, const E& kernel) {
  cfg.validate();
  const std::size_t n = xi.size();
  if (n == 0 || s.size() != 2 * n) throw ConfigError("state and intensities differ in length");
  const bool singular = kernel.delta() == 0.0;
  Trajectory tr;
  tr.xi = xi;
  tr.times.push_back(0.0);
  tr.snapshots.push_back(detail::reduce(s));

  std::vector<double> k1(2 * n);
  std::vector<double> k2(2 * n);
  std::vector<double> k3(2 * n);
  std::vector<double> k4(2 * n);
  std::vector<double> tmp(2 * n);

  // fixed-step grid t_k = k dt with the last step shortened to land on T
  const double steps_real = cfg.T / cfg.dt;
  const auto fixed_steps = static_cast<std::size_t>(std::ceil(steps_real - 1e-9));
  double t = 0.0;
  std::size_t step = 0;
  while (true) {
    const detail::PairScan scan = detail::rhs(kernel, xi, s, k1);
    const double dmin = std::sqrt(scan.min_d2);
    tr.min_distance_series.push_back(dmin);
    if (singular && n > 1 && dmin < cfg.guard_distance) {
      tr.guard = GuardEvent{step, scan.i, scan.j, dmin};
      tr.stopped_early = true;
      break;
    }
    if (cfg.stop_distance > 0.0 && dmin < cfg.stop_distance) {
      tr.stopped_early = true;
      break;
    }
    if (cfg.T == 0.0 || t >= cfg.T) break;

    double h = cfg.dt;
    double t_next = 0.0;
    if (cfg.max_rotation > 0.0) {
      double rate = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
          const Displacement d = Displacement::wrap(s[2 * i] - s[2 * j], s[2 * i + 1] - s[2 * j + 1]);
          const double rel = std::hypot(k1[2 * i] - k1[2 * j], k1[2 * i + 1] - k1[2 * j + 1]);
          rate = std::max(rate, rel / d.norm());
        }
      }
      if (rate > 0.0) h = std::min(h, cfg.max_rotation / rate);
      h = std::min(h, cfg.T - t);
      t_next = (cfg.T - t - h <= 1e-12 * cfg.T) ? cfg.T : t + h;
      h = t_next - t;
    } else {
      t_next = (step + 1 >= fixed_steps) ? cfg.T : static_cast<double>(step + 1) * cfg.dt;
      h = t_next - t;
    }

    for (std::size_t c = 0; c < 2 * n; ++c) tmp[c] = s[c] + 0.5 * h * k1[c];
    detail::rhs(kernel, xi, tmp, k2);
    for (std::size_t c = 0; c < 2 * n; ++c) tmp[c] = s[c] + 0.5 * h * k2[c];
    detail::rhs(kernel, xi, tmp, k3);
    for (std::size_t c = 0; c < 2 * n; ++c) tmp[c] = s[c] + h * k3[c];
    detail::rhs(kernel, xi, tmp, k4);
    for (std::size_t c = 0; c < 2 * n; ++c) {
      s[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
      if (!std::isfinite(s[c])) throw BlowUpError("non-finite vortex position", step + 1);
    }
    ++step;
    t = t_next;
    if (t >= cfg.T || (cfg.record_every > 0 && step % static_cast<std::size_t>(cfg.record_every) == 0)) {
      tr.times.push_back(t);
      tr.snapshots.push_back(detail::reduce(s));
    }
  }
  if (tr.times.back() != t) {
    tr.times.push_back(t);
    tr.snapshots.push_back(detail::reduce(s));
  }
  tr.final_time = t;
  tr.final_unwrapped = std::move(s);
  return tr;
}

template <KernelEvaluator E>
Trajectory integrate(const VortexEnsemble& e, const IntegratorConfig& cfg, const E& kernel) {
  e.validate();
  return integrate_unwrapped(detail::flatten(e.positions), e.xi, cfg, kernel);
}

/// E = sum_{i<j} xi_i xi_j G(x_i - x_j), without the 1/sqrt N prefactor.
template <KernelEvaluator E>
double interaction_energy(const VortexEnsemble& e, const E& kernel) {
  e.validate();
  const bool singular = kernel.delta() == 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    for (std::size_t j = i + 1; j < e.size(); ++j) {
      const Displacement d = wrap_displacement(e.positions[i], e.positions[j]);
      if (singular && d.is_zero()) {
        throw SingularityError("energy of coincident vortices");
      }
      acc += e.xi[i] * e.xi[j] * kernel.eval(d).g;
    }
  }
  return acc;
}

/// Default offset k = 1 + max over a grid of -G^(delta), so that every
/// summand G^(delta) + k of the Lyapunov function is at least 1.
template <KernelEvaluator E>
double default_lyapunov_k(const E& kernel, int grid = 64) {
  double worst = -kInf;
  for (int i = 0; i <= grid / 2; ++i) {
    for (int j = 0; j <= grid / 2; ++j) {
      if (i == 0 && j == 0) continue;
      const double g = kernel.eval(Displacement::wrap(double(i) / grid, double(j) / grid)).g;
      worst = std::max(worst, -g);
    }
  }
  return 1.0 + worst;
}

/// L = sum_{i != j} (G^(delta)(x_i - x_j) + k), non-negative for admissible k
/// and growing without bound as a pair approaches (up to the radius delta).
template <KernelEvaluator E>
double lyapunov(const VortexEnsemble& e, const E& kernel, double k) {
  e.validate();
  if (!(kernel.delta() > 0.0)) throw ConfigError("the Lyapunov function needs delta > 0");
  double acc = 0.0;
  double gmin = kInf;
  for (std::size_t i = 0; i < e.size(); ++i) {
    for (std::size_t j = i + 1; j < e.size(); ++j) {
      const double g = kernel.eval(wrap_displacement(e.positions[i], e.positions[j])).g;
      gmin = std::min(gmin, g);
      acc += 2.0 * (g + k);
    }
  }
  if (gmin + k < 0.0) {
    throw ConfigError("non-admissible Lyapunov offset k; max of -G^(delta) is " +
                      std::to_string(-gmin));
  }
  return acc;
}

/// Determinant of the finite-difference Jacobian of the time-T flow map.
template <KernelEvaluator E>
double flow_jacobian_det(const VortexEnsemble& e, const IntegratorConfig& cfg, const E& kernel,
                         double h, const std::vector<std::size_t>& column_order = {}) {
  e.validate();
  if (!(h > 0.0)) throw ConfigError("finite-difference step must be positive");
  const std::size_t dim = 2 * e.size();
  const std::vector<double> x0 = detail::flatten(e.positions);
  std::vector<std::size_t> order = column_order;
  if (order.empty()) {
    for (std::size_t k = 0; k < dim; ++k) order.push_back(k);
  }
  if (order.size() != dim) throw ConfigError("column order must list every coordinate");
  IntegratorConfig c = cfg;
  c.record_every = 0;
  c.guard_distance = 0.0;
  Eigen::MatrixXd jac(dim, dim);
  for (std::size_t col = 0; col < dim; ++col) {
    const std::size_t k = order[col];
    std::vector<double> plus = x0;
    std::vector<double> minus = x0;
    plus[k] += h;
    minus[k] -= h;
    const double span = plus[k] - minus[k];
    const auto tp = integrate_unwrapped(plus, e.xi, c, kernel).final_unwrapped;
    const auto tm = integrate_unwrapped(minus, e.xi, c, kernel).final_unwrapped;
    for (std::size_t r = 0; r < dim; ++r) {
      const double v = (tp[r] - tm[r]) / span;
      if (!std::isfinite(v)) throw BlowUpError("non-finite Jacobian entry", 0);
      jac(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(col)) = v;
    }
  }
  // permuting columns flips the sign with the permutation parity
  double sign = 1.0;
  std::vector<std::size_t> p = order;
  for (std::size_t a = 0; a < p.size(); ++a) {
    while (p[a] != a) {
      std::swap(p[a], p[p[a]]);
      sign = -sign;
    }
  }
  return sign * jac.determinant();
}

/// Richardson extrapolation of the Jacobian determinant over h and h/2,
/// assuming an O(h^2) central-difference error.
template <KernelEvaluator E>
double flow_jacobian_det_extrapolated(const VortexEnsemble& e, const IntegratorConfig& cfg,
                                      const E& kernel, double h) {
  const double d1 = flow_jacobian_det(e, cfg, kernel, h);
  const double d2 = flow_jacobian_det(e, cfg, kernel, 0.5 * h);
  return (4.0 * d2 - d1) / 3.0;
}

}  // namespace msqg
