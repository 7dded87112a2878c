// SPDX-License-Identifier: Apache-2.0
/**
 * @file pairing.hpp
 * @brief The symmetrized nonlinearity H_phi(x,y) = K(x - y).(grad phi(x) - grad phi(y)),
 *        its diagonal cutoffs, L2 norms, vortex pairings and white-noise
 *        pairings <omega (x) omega, f>.
 */
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <vector>

#include <fftw3.h>

#include "dynamics.hpp"
#include "ensemble.hpp"
#include "errors.hpp"
#include "kernel.hpp"
#include "parallel.hpp"
#include "spectral.hpp"
#include "stats.hpp"

namespace msqg {

/// C^2 quintic step on [0,1].
inline double smoothstep(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * t * (t * (6.0 * t - 15.0) + 10.0);
}

/// Radial bump: 1 on [0,1/2], 0 on [1,inf), quintic in between.
inline double bump_profile(double r) { return 1.0 - smoothstep(2.0 * r - 1.0); }

/// Factor 1 - bump(n r) applied by the diagonal cutoff of index n.
inline double cutoff_factor(int n, double r) { return smoothstep(2.0 * n * r - 1.0); }

template <KernelEvaluator E>
class HphiEvaluator {
 public:
  HphiEvaluator(TestFunction phi, const E& kernel, std::optional<int> cutoff = std::nullopt)
      : phi_(std::move(phi)), kernel_(&kernel), cutoff_(cutoff) {
    if (cutoff_ && *cutoff_ < 1) throw ConfigError("cutoff index must be at least 1");
  }

  [[nodiscard]] const TestFunction& phi() const { return phi_; }
  [[nodiscard]] const E& kernel() const { return *kernel_; }
  [[nodiscard]] std::optional<int> cutoff() const { return cutoff_; }

  [[nodiscard]] HphiEvaluator with_cutoff(std::optional<int> n) const {
    return HphiEvaluator(phi_, *kernel_, n);
  }

  /// Symmetric in (x, y) bit for bit: arguments are put in a fixed order first.
  [[nodiscard]] double operator()(const TorusPoint& x, const TorusPoint& y) const {
    const bool swap = y.u() < x.u() || (y.u() == x.u() && y.v() < x.v());
    const TorusPoint& a = swap ? y : x;
    const TorusPoint& b = swap ? x : y;
    const Displacement d = wrap_displacement(a, b);
    if (d.is_zero()) return 0.0;
    double factor = 1.0;
    if (cutoff_) {
      factor = cutoff_factor(*cutoff_, d.norm());
      if (factor == 0.0) return 0.0;
    }
    const Vec2 k = kernel_->eval(d).k;
    const Vec2 dg = phi_.gradient(a) - phi_.gradient(b);
    return factor * k.dot(dg);
  }

 private:
  TestFunction phi_;
  const E* kernel_;
  std::optional<int> cutoff_;
};

/// (1/N) sum over ordered pairs of xi_n xi_i H(X_n, X_i); the diagonal is zero.
template <class H>
double pairing_vortex(const VortexEnsemble& e, const H& h) {
  e.validate();
  double acc = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    for (std::size_t j = i + 1; j < e.size(); ++j) {
      acc += e.xi[i] * e.xi[j] * h(e.positions[i], e.positions[j]);
    }
  }
  return 2.0 * acc / static_cast<double>(e.size());
}

/// <theta^N, phi> = (1/sqrt N) sum_k xi_k phi(X_k).
inline double pair_ensemble(const VortexEnsemble& e, const TestFunction& phi) {
  double acc = 0.0;
  for (std::size_t k = 0; k < e.size(); ++k) acc += e.xi[k] * phi.value(e.positions[k]);
  return acc / std::sqrt(static_cast<double>(e.size()));
}

// ---------------------------------------------------------------------------
// L2 norms by quadrature in the separation variable

/// Which part of H_phi is integrated.
struct SeparationWeight {
  enum class Kind { kFull, kCutoff, kRemainder };
  Kind kind = Kind::kFull;
  int n = 1;

  static SeparationWeight full() { return {}; }
  /// H_phi^n = (1 - bump_n) H_phi.
  static SeparationWeight cutoff(int n) { return {Kind::kCutoff, n}; }
  /// H_phi - H_phi^n = bump_n H_phi.
  static SeparationWeight remainder(int n) { return {Kind::kRemainder, n}; }

  [[nodiscard]] double factor(double r) const {
    switch (kind) {
      case Kind::kFull:
        return 1.0;
      case Kind::kCutoff:
        return cutoff_factor(n, r);
      case Kind::kRemainder:
        return bump_profile(n * r);
    }
    return 1.0;
  }
};

struct QuadratureOptions {
  double rel_tol = 1e-3;
  int min_order = 16;
  int max_order = 128;
};

struct QuadratureResult {
  double value = 0.0;
  double error = 0.0;
  int order = 0;
  std::size_t evaluations = 0;
};

/// Gauss-Legendre nodes and weights on [0,1].
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int n) {
  std::vector<double> x(static_cast<std::size_t>(n));
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0;
      double p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0;
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    const double wi = 2.0 / ((1.0 - z * z) * dp * dp);
    x[static_cast<std::size_t>(i)] = 0.5 * (1.0 - z);
    x[static_cast<std::size_t>(n - 1 - i)] = 0.5 * (1.0 + z);
    w[static_cast<std::size_t>(i)] = 0.5 * wi;
    w[static_cast<std::size_t>(n - 1 - i)] = 0.5 * wi;
  }
  return {x, w};
}

namespace detail {

/// Inner x-integral of H_phi(x, x - d)^2, exact by Parseval:
/// 16 pi^2 sum_n |phi_hat(n)|^2 (K(d).n)^2 sin^2(pi n.d), summed over the
/// stored half lattice and doubled.
inline double parseval_inner(const TestFunction& phi, const Vec2& k, double du, double dv) {
  double s = 0.0;
  for (const auto& t : phi.terms()) {
    const double kn = k.u * t.n.n1 + k.v * t.n.n2;
    const double sn = std::sin(kPi * (t.n.n1 * du + t.n.n2 * dv));
    s += std::norm(t.c) * kn * kn * sn * sn;
  }
  return 32.0 * kPi * kPi * s;
}

template <KernelEvaluator E>
double separation_integral(const TestFunction& phi, const E& kernel, const SeparationWeight& w,
                           double epsilon, int order, std::size_t& evals) {
  const auto [gx, gw] = gauss_legendre(order);
  const double p = 1.0 / epsilon;
  double total = 0.0;
  // the integrand is even in d; four of the eight sectors suffice
  for (int sector = 0; sector < 4; ++sector) {
    const double th0 = sector * kPi / 4.0;
    double sector_sum = 0.0;
    for (int a = 0; a < order; ++a) {
      const double th = th0 + gx[static_cast<std::size_t>(a)] * kPi / 4.0;
      const double c = std::cos(th);
      const double s = std::sin(th);
      const double rmax = 0.5 / std::max(std::abs(c), std::abs(s));
      // radial segments: the first one carries the r^{2 eps - 1} behaviour
      std::array<double, 4> br{};
      int nb = 0;
      double first = 0.0;
      switch (w.kind) {
        case SeparationWeight::Kind::kFull:
          first = std::min(0.05, rmax);
          br = {0.0, first, rmax, 0.0};
          nb = first < rmax ? 3 : 2;
          break;
        case SeparationWeight::Kind::kRemainder:
          first = std::min(0.5 / w.n, rmax);
          br = {0.0, first, std::min(1.0 / w.n, rmax), 0.0};
          nb = br[2] > first ? 3 : 2;
          break;
        case SeparationWeight::Kind::kCutoff:
          first = std::min(0.5 / w.n, rmax);
          br = {first, std::min(1.0 / w.n, rmax), rmax, 0.0};
          nb = 3;
          break;
      }
      double ray = 0.0;
      for (int seg = 0; seg + 1 < nb; ++seg) {
        const double r0 = br[static_cast<std::size_t>(seg)];
        const double r1 = br[static_cast<std::size_t>(seg + 1)];
        if (!(r1 > r0)) continue;
        const bool singular = r0 == 0.0;
        for (int b = 0; b < order; ++b) {
          const double u = gx[static_cast<std::size_t>(b)];
          double r = 0.0;
          double jac = 0.0;
          if (singular) {
            r = r1 * std::pow(u, p);
            jac = r1 * p * std::pow(u, p - 1.0);
          } else {
            r = r0 + (r1 - r0) * u;
            jac = r1 - r0;
          }
          const double f = w.factor(r);
          if (f == 0.0) continue;
          const double du = r * c;
          const double dv = r * s;
          const Vec2 k = kernel.eval(Displacement::wrap(du, dv)).k;
          ++evals;
          ray += gw[static_cast<std::size_t>(b)] * jac * r * f * f * parseval_inner(phi, k, du, dv);
        }
      }
      sector_sum += gw[static_cast<std::size_t>(a)] * ray;
    }
    total += sector_sum * kPi / 4.0;
  }
  return 2.0 * total;
}

}  // namespace detail

/// ||w H_phi||^2_{L2(T^2 x T^2)} with an error estimate from order doubling.
template <KernelEvaluator E>
QuadratureResult hphi_l2_norm2(const TestFunction& phi, const E& kernel,
                               const SeparationWeight& weight = SeparationWeight::full(),
                               const QuadratureOptions& opt = {}) {
  if (kernel.delta() != 0.0) throw ConfigError("H_phi norms use the unregularized kernel");
  QuadratureResult res;
  if (phi.terms().empty()) return res;  // constant phi: grad phi = 0
  int q = opt.min_order;
  double prev = detail::separation_integral(phi, kernel, weight, kernel.epsilon(), q, res.evaluations);
  while (true) {
    const int q2 = 2 * q;
    const double cur =
        detail::separation_integral(phi, kernel, weight, kernel.epsilon(), q2, res.evaluations);
    res.value = cur;
    res.error = std::abs(cur - prev);
    res.order = q2;
    if (res.error <= opt.rel_tol * std::abs(cur)) return res;
    if (q2 >= opt.max_order) {
      throw ToleranceError("H_phi quadrature misses its tolerance at maximal order", 0.0, 0.0,
                           res.error / std::max(std::abs(cur), 1e-300));
    }
    prev = cur;
    q = q2;
  }
}

// ---------------------------------------------------------------------------
// White-noise pairings <omega (x) omega, f>

/// FFTW planning is not thread safe.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex mu;
  return mu;
}

/// Dense coefficient array over the square [-M, M]^2 (zero outside the ball).
class DenseSpectrum {
 public:
  explicit DenseSpectrum(const SpectralField& f) : m_(f.cutoff()), w_(2 * m_ + 1) {
    c_.assign(static_cast<std::size_t>(w_) * w_, cplx{});
    at(0, 0) = f.coeff0();
    const auto& lat = f.lattice();
    for (std::size_t k = 0; k < lat.size(); ++k) {
      at(lat[k].n1, lat[k].n2) = f.half()[k];
      at(-lat[k].n1, -lat[k].n2) = std::conj(f.half()[k]);
    }
  }
  [[nodiscard]] int cutoff() const { return m_; }
  [[nodiscard]] cplx get(int n1, int n2) const {
    return c_[static_cast<std::size_t>((n1 + m_) * w_ + (n2 + m_))];
  }

 private:
  cplx& at(int n1, int n2) { return c_[static_cast<std::size_t>((n1 + m_) * w_ + (n2 + m_))]; }
  int m_;
  int w_;
  std::vector<cplx> c_;
};

/// sum_k a_k phi_k(x) psi_k(y); <omega (x) omega, f> = sum_k a_k <omega,phi_k><omega,psi_k>.
class FiniteRankForm {
 public:
  struct Term {
    double a;
    TestFunction phi;
    TestFunction psi;
  };

  FiniteRankForm& add(double a, TestFunction phi, TestFunction psi) {
    terms_.push_back({a, std::move(phi), std::move(psi)});
    return *this;
  }

  [[nodiscard]] double value(const TorusPoint& x, const TorusPoint& y) const {
    double s = 0.0;
    for (const Term& t : terms_) s += t.a * t.phi.value(x) * t.psi.value(y);
    return s;
  }

  [[nodiscard]] double pair(const SpectralField& w) const {
    double s = 0.0;
    for (const Term& t : terms_) s += t.a * pair_field(w, t.phi) * pair_field(w, t.psi);
    return s;
  }

  /// int f(x,x) dx.
  [[nodiscard]] double trace() const {
    double s = 0.0;
    for (const Term& t : terms_) s += t.a * t.phi.inner(t.psi);
    return s;
  }

  /// int int f^2.
  [[nodiscard]] double l2_norm2() const {
    double s = 0.0;
    for (const Term& p : terms_) {
      for (const Term& q : terms_) s += p.a * q.a * p.phi.inner(q.phi) * p.psi.inner(q.psi);
    }
    return s;
  }

 private:
  std::vector<Term> terms_;
};

/// f = H_phi^n evaluated spectrally: with W = (1 - bump_n) K and g = grad phi,
/// <omega (x) omega, f> = 2 sum_p sum_q g_hat(p).W_hat(q) omega_hat(q) omega_hat(-p-q).
/// W_hat comes from an FFT of W sampled on a uniform grid.
template <KernelEvaluator E>
class CutoffHphiForm {
 public:
  CutoffHphiForm(const TestFunction& phi, const E& kernel, int n, int field_cutoff, int grid = 512)
      : h_(phi, kernel, n), m_(field_cutoff) {
    if (field_cutoff < 1) throw ConfigError("field cutoff must be positive");
    if (grid < 4 * field_cutoff + 4 || grid % 2 != 0) {
      throw ConfigError("FFT grid must be even and exceed four times the field cutoff");
    }
    if (phi.band() * 4.0 > field_cutoff) {
      throw ConfigError("field cutoff must be at least four times the test-function band");
    }
    compute_w_hat(kernel, n, grid);
    build_terms(phi);
  }

  [[nodiscard]] int field_cutoff() const { return m_; }
  [[nodiscard]] double value(const TorusPoint& x, const TorusPoint& y) const { return h_(x, y); }

  [[nodiscard]] double pair(const SpectralField& w) const {
    if (w.cutoff() != m_) throw ShapeError("white-noise sample has the wrong cutoff");
    const DenseSpectrum d(w);
    cplx s{};
    for (const Term& t : terms_) s += t.c * d.get(t.q1, t.q2) * d.get(t.r1, t.r2);
    return 2.0 * s.real();
  }

  /// W_hat(q) for |q_i| <= field cutoff.
  [[nodiscard]] std::array<cplx, 2> w_hat(int q1, int q2) const {
    const std::size_t k = static_cast<std::size_t>((q1 + m_) * (2 * m_ + 1) + (q2 + m_));
    return {wu_[k], wv_[k]};
  }

  /// Exact variance 2 sum_{a,b in ball} |f_hat(a,b)|^2 of the truncated
  /// statistic, with f_hat(a,b) = g_hat(a+b).(W_hat(-b) - W_hat(a)).
  [[nodiscard]] double truncated_variance() const {
    const int m2 = m_ * m_;
    double acc = 0.0;
    for (const Grad& g : grad_) {
      for (int a1 = -m_; a1 <= m_; ++a1) {
        for (int a2 = -m_; a2 <= m_; ++a2) {
          if (a1 * a1 + a2 * a2 > m2) continue;
          const int b1 = g.p1 - a1;
          const int b2 = g.p2 - a2;
          if (b1 * b1 + b2 * b2 > m2) continue;
          const auto wb = w_hat(-b1, -b2);
          const auto wa = w_hat(a1, a2);
          const cplx f = g.gu * (wb[0] - wa[0]) + g.gv * (wb[1] - wa[1]);
          acc += std::norm(f);
        }
      }
    }
    return 2.0 * acc;
  }

 private:
  struct Term {
    int q1, q2, r1, r2;
    cplx c;
  };
  struct Grad {
    int p1, p2;
    cplx gu, gv;
  };

  void compute_w_hat(const E& kernel, int n, int grid) {
    const std::size_t gg = static_cast<std::size_t>(grid) * grid;
    const int hc = grid / 2 + 1;
    double* in = fftw_alloc_real(gg);
    fftw_complex* out = fftw_alloc_complex(static_cast<std::size_t>(grid) * hc);
    fftw_plan plan;
    {
      std::lock_guard<std::mutex> lock(fftw_planner_mutex());
      plan = fftw_plan_dft_r2c_2d(grid, grid, in, out, FFTW_ESTIMATE);
    }
    std::vector<Vec2> samples(gg);
    for (int a = 0; a < grid; ++a) {
      for (int b = 0; b < grid; ++b) {
        const Displacement d = Displacement::wrap(double(a) / grid, double(b) / grid);
        const double f = d.is_zero() ? 0.0 : cutoff_factor(n, d.norm());
        samples[static_cast<std::size_t>(a) * grid + b] = f == 0.0 ? Vec2{} : kernel.eval(d).k * f;
      }
    }
    const int w = 2 * m_ + 1;
    wu_.assign(static_cast<std::size_t>(w) * w, cplx{});
    wv_.assign(static_cast<std::size_t>(w) * w, cplx{});
    for (int comp = 0; comp < 2; ++comp) {
      for (std::size_t k = 0; k < gg; ++k) in[k] = comp == 0 ? samples[k].u : samples[k].v;
      fftw_execute(plan);
      auto& dst = comp == 0 ? wu_ : wv_;
      const double norm = 1.0 / static_cast<double>(gg);
      for (int q1 = -m_; q1 <= m_; ++q1) {
        for (int q2 = -m_; q2 <= m_; ++q2) {
          cplx v;
          if (q2 >= 0) {
            const int r = ((q1 % grid) + grid) % grid;
            const auto& o = out[static_cast<std::size_t>(r) * hc + q2];
            v = cplx(o[0], o[1]);
          } else {
            const int r = ((-q1 % grid) + grid) % grid;
            const auto& o = out[static_cast<std::size_t>(r) * hc + (-q2)];
            v = cplx(o[0], -o[1]);
          }
          dst[static_cast<std::size_t>((q1 + m_) * w + (q2 + m_))] = v * norm;
        }
      }
    }
    {
      std::lock_guard<std::mutex> lock(fftw_planner_mutex());
      fftw_destroy_plan(plan);
    }
    fftw_free(in);
    fftw_free(out);
  }

  void build_terms(const TestFunction& phi) {
    const int m2 = m_ * m_;
    auto add_grad = [&](int p1, int p2, cplx c) {
      // g_hat(p) = 2 pi i p phi_hat(p)
      const cplx f = cplx(0.0, kTwoPi) * c;
      grad_.push_back({p1, p2, f * double(p1), f * double(p2)});
    };
    for (const auto& t : phi.terms()) {
      add_grad(t.n.n1, t.n.n2, t.c);
      add_grad(-t.n.n1, -t.n.n2, std::conj(t.c));
    }
    for (const Grad& g : grad_) {
      for (int q1 = -m_; q1 <= m_; ++q1) {
        for (int q2 = -m_; q2 <= m_; ++q2) {
          if (q1 * q1 + q2 * q2 > m2) continue;
          const int r1 = -g.p1 - q1;
          const int r2 = -g.p2 - q2;
          if (r1 * r1 + r2 * r2 > m2) continue;
          const auto wq = w_hat(q1, q2);
          const cplx c = g.gu * wq[0] + g.gv * wq[1];
          terms_.push_back({q1, q2, r1, r2, c});
        }
      }
    }
  }

  HphiEvaluator<E> h_;
  int m_;
  std::vector<cplx> wu_;
  std::vector<cplx> wv_;
  std::vector<Grad> grad_;
  std::vector<Term> terms_;
};

/// True when f(x,y) == f(y,x) to relative 1e-12 at deterministic probes.
template <class F>
bool is_symmetric(const F& f, int probes = 256) {
  std::mt19937_64 rng(0x73796d6dULL);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int i = 0; i < probes; ++i) {
    const TorusPoint x(uni(rng), uni(rng));
    const TorusPoint y(uni(rng), uni(rng));
    const double a = f.value(x, y);
    const double b = f.value(y, x);
    if (std::abs(a - b) > 1e-12 * std::max({std::abs(a), std::abs(b), 1.0})) return false;
  }
  return true;
}

/// int f(x,x) dx by the trapezoid rule on a uniform grid (exact for
/// trigonometric polynomials below the grid Nyquist frequency).
template <class F>
double diagonal_trace(const F& f, int grid = 64) {
  double acc = 0.0;
  for (int a = 0; a < grid; ++a) {
    for (int b = 0; b < grid; ++b) {
      const TorusPoint x(double(a) / grid, double(b) / grid);
      acc += f.value(x, x);
    }
  }
  return acc / (static_cast<double>(grid) * grid);
}

struct WnPairingStats {
  std::size_t samples = 0;
  double mean = 0.0;
  double mean_stderr = 0.0;
  /// E[P^2] (raw second moment).
  double second_moment = 0.0;
  double second_moment_stderr = 0.0;
  /// E[(P - E P)^2].
  double variance = 0.0;
  double variance_stderr = 0.0;
  std::vector<double> values;
};

/// Monte Carlo statistics of <omega (x) omega, f> over truncated white noise.
/// Sample i draws from derive_seed(seed, stream, i).
template <class Form>
WnPairingStats wn_pairing_stats(const Form& f, std::size_t samples, int field_cutoff,
                                std::uint64_t seed, unsigned workers = 1,
                                std::uint64_t stream = 0x776e) {
  if (!is_symmetric(f)) throw ConfigError("white-noise pairing requires a symmetric f");
  if (samples < 2) throw ConfigError("need at least two samples");
  auto lattice = std::make_shared<const HalfLattice>(field_cutoff);
  std::vector<double> vals(samples);
  parallel_for(samples, workers, [&](std::size_t i) {
    std::mt19937_64 rng(derive_seed(seed, stream, i));
    vals[i] = f.pair(sample_white_noise(lattice, rng));
  });
  WnPairingStats out;
  out.samples = samples;
  const auto m = stats::moments(vals);
  out.mean = m.mean;
  out.mean_stderr = m.stderr_mean;
  std::vector<double> sq(samples);
  for (std::size_t i = 0; i < samples; ++i) sq[i] = vals[i] * vals[i];
  const auto m2 = stats::moments(sq);
  out.second_moment = m2.mean;
  out.second_moment_stderr = m2.stderr_mean;
  const auto v = stats::variance_with_error(vals);
  out.variance = v.value;
  out.variance_stderr = v.stderr_value;
  out.values = std::move(vals);
  return out;
}

}  // namespace msqg
