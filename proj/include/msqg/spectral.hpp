// SPDX-License-Identifier: Apache-2.0
/**
 * @file spectral.hpp
 * @brief Truncated real Fourier fields on the torus, white noise, Sobolev
 *        norms and the empirical spectrum of a vortex ensemble.
 *
 * Fields keep the Euclidean ball |n| <= M. Only the constant mode and the
 * half lattice (n1 > 0) or (n1 = 0, n2 > 0) are stored; coefficients on the
 * other half follow from coeff(-n) = conj(coeff(n)).
 */
#pragma once

#include <complex>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ensemble.hpp"
#include "errors.hpp"
#include "torus.hpp"

namespace msqg {

using cplx = std::complex<double>;

struct Mode {
  int n1 = 0;
  int n2 = 0;
  [[nodiscard]] double norm2() const { return static_cast<double>(n1 * n1 + n2 * n2); }
  bool operator==(const Mode&) const = default;
};

inline bool in_half_lattice(int n1, int n2) { return n1 > 0 || (n1 == 0 && n2 > 0); }

/// Half-lattice modes of the ball |n| <= M in storage order.
class HalfLattice {
 public:
  explicit HalfLattice(int cutoff) : m_(cutoff), offset_(static_cast<std::size_t>(cutoff) + 1) {
    if (cutoff < 1) throw ConfigError("spectral cutoff must be at least 1");
    const int m2 = cutoff * cutoff;
    row_start_.assign(offset_, 0);
    for (int n1 = 0; n1 <= cutoff; ++n1) {
      row_start_[static_cast<std::size_t>(n1)] = modes_.size();
      for (int n2 = -cutoff; n2 <= cutoff; ++n2) {
        if (!in_half_lattice(n1, n2) || n1 * n1 + n2 * n2 > m2) continue;
        modes_.push_back({n1, n2});
      }
    }
  }

  [[nodiscard]] int cutoff() const { return m_; }
  [[nodiscard]] std::size_t size() const { return modes_.size(); }
  [[nodiscard]] const Mode& operator[](std::size_t k) const { return modes_[k]; }
  [[nodiscard]] const std::vector<Mode>& modes() const { return modes_; }

  /// Storage index of a half-lattice mode, or -1 when outside the ball.
  [[nodiscard]] std::ptrdiff_t index(int n1, int n2) const {
    if (!in_half_lattice(n1, n2) || n1 * n1 + n2 * n2 > m_ * m_) return -1;
    const std::size_t start = row_start_[static_cast<std::size_t>(n1)];
    const int first = modes_[start].n2;
    return static_cast<std::ptrdiff_t>(start) + (n2 - first);
  }

 private:
  int m_;
  std::size_t offset_;
  std::vector<Mode> modes_;
  std::vector<std::size_t> row_start_;
};

/// Real-valued field with Hermitian coefficients on |n| <= M.
class SpectralField {
 public:
  explicit SpectralField(int cutoff)
      : lattice_(std::make_shared<HalfLattice>(cutoff)), half_(lattice_->size()) {}

  SpectralField(std::shared_ptr<const HalfLattice> lattice)
      : lattice_(std::move(lattice)), half_(lattice_->size()) {}

  [[nodiscard]] int cutoff() const { return lattice_->cutoff(); }
  [[nodiscard]] const HalfLattice& lattice() const { return *lattice_; }
  [[nodiscard]] std::shared_ptr<const HalfLattice> lattice_ptr() const { return lattice_; }

  [[nodiscard]] double coeff0() const { return c0_; }
  void set_coeff0(double c) { c0_ = c; }
  [[nodiscard]] const std::vector<cplx>& half() const { return half_; }
  std::vector<cplx>& half() { return half_; }

  /// Coefficient at any lattice point; zero outside the ball.
  [[nodiscard]] cplx coeff(int n1, int n2) const {
    if (n1 == 0 && n2 == 0) return c0_;
    if (in_half_lattice(n1, n2)) {
      const auto k = lattice_->index(n1, n2);
      return k < 0 ? cplx{} : half_[static_cast<std::size_t>(k)];
    }
    const auto k = lattice_->index(-n1, -n2);
    return k < 0 ? cplx{} : std::conj(half_[static_cast<std::size_t>(k)]);
  }

  /// Sets coeff(n) and, implicitly, coeff(-n).
  void set_coeff(int n1, int n2, cplx c) {
    if (n1 == 0 && n2 == 0) {
      c0_ = c.real();
      return;
    }
    if (!in_half_lattice(n1, n2)) {
      n1 = -n1;
      n2 = -n2;
      c = std::conj(c);
    }
    const auto k = lattice_->index(n1, n2);
    if (k < 0) throw ShapeError("mode outside the field cutoff");
    half_[static_cast<std::size_t>(k)] = c;
  }

  /// Real field value; sum over the half lattice doubled.
  [[nodiscard]] double value(const TorusPoint& x) const {
    double s = 0.0;
    for (std::size_t k = 0; k < half_.size(); ++k) {
      const Mode& m = (*lattice_)[k];
      const double a = kTwoPi * (m.n1 * x.u() + m.n2 * x.v());
      s += half_[k].real() * std::cos(a) - half_[k].imag() * std::sin(a);
    }
    return c0_ + 2.0 * s;
  }

  /// Full complex sum over the ball, both halves evaluated separately.
  [[nodiscard]] cplx value_complex(const TorusPoint& x) const {
    cplx s = c0_;
    for (std::size_t k = 0; k < half_.size(); ++k) {
      const Mode& m = (*lattice_)[k];
      const double a = kTwoPi * (m.n1 * x.u() + m.n2 * x.v());
      s += half_[k] * std::polar(1.0, a);
      s += std::conj(half_[k]) * std::polar(1.0, -a);
    }
    return s;
  }

  SpectralField& operator-=(const SpectralField& o) {
    require_same(o);
    c0_ -= o.c0_;
    for (std::size_t k = 0; k < half_.size(); ++k) half_[k] -= o.half_[k];
    return *this;
  }

  void require_same(const SpectralField& o) const {
    if (cutoff() != o.cutoff()) throw ShapeError("spectral fields have different cutoffs");
  }

 private:
  std::shared_ptr<const HalfLattice> lattice_;
  double c0_ = 0.0;
  std::vector<cplx> half_;
};

/// Band-limited real test function with analytic value and gradient.
class TestFunction {
 public:
  struct Term {
    Mode n;
    cplx c;
  };

  TestFunction() = default;

  /// phi(x) = amplitude * sqrt 2 cos(2 pi k.x), unit L2 norm when amplitude 1.
  static TestFunction cosine(int k1, int k2, double amplitude = 1.0) {
    TestFunction f;
    f.add(k1, k2, cplx(amplitude / std::sqrt(2.0), 0.0));
    return f;
  }
  /// phi(x) = amplitude * sqrt 2 sin(2 pi k.x).
  static TestFunction sine(int k1, int k2, double amplitude = 1.0) {
    TestFunction f;
    f.add(k1, k2, cplx(0.0, -amplitude / std::sqrt(2.0)));
    return f;
  }
  static TestFunction constant(double c) {
    TestFunction f;
    f.add(0, 0, cplx(c, 0.0));
    return f;
  }

  /// Adds c at n and conj(c) at -n (the constant mode takes the real part).
  TestFunction& add(int n1, int n2, cplx c) {
    if (n1 == 0 && n2 == 0) {
      c0_ += c.real();
      return *this;
    }
    if (!in_half_lattice(n1, n2)) {
      n1 = -n1;
      n2 = -n2;
      c = std::conj(c);
    }
    for (Term& t : terms_) {
      if (t.n.n1 == n1 && t.n.n2 == n2) {
        t.c += c;
        return *this;
      }
    }
    terms_.push_back({{n1, n2}, c});
    return *this;
  }

  [[nodiscard]] TestFunction operator+(const TestFunction& o) const {
    TestFunction f = *this;
    f.add(0, 0, o.c0_);
    for (const Term& t : o.terms_) f.add(t.n.n1, t.n.n2, t.c);
    return f;
  }
  [[nodiscard]] TestFunction scaled(double s) const {
    TestFunction f = *this;
    f.c0_ *= s;
    for (Term& t : f.terms_) t.c *= s;
    return f;
  }

  [[nodiscard]] double coeff0() const { return c0_; }
  [[nodiscard]] const std::vector<Term>& terms() const { return terms_; }

  /// Largest |n| among nonzero modes.
  [[nodiscard]] double band() const {
    double b = 0.0;
    for (const Term& t : terms_) b = std::max(b, std::sqrt(t.n.norm2()));
    return b;
  }

  [[nodiscard]] cplx coeff(int n1, int n2) const {
    if (n1 == 0 && n2 == 0) return c0_;
    const bool flip = !in_half_lattice(n1, n2);
    if (flip) {
      n1 = -n1;
      n2 = -n2;
    }
    for (const Term& t : terms_) {
      if (t.n.n1 == n1 && t.n.n2 == n2) return flip ? std::conj(t.c) : t.c;
    }
    return {};
  }

  [[nodiscard]] double value(double x, double y) const {
    double s = 0.0;
    for (const Term& t : terms_) {
      const double a = kTwoPi * (t.n.n1 * x + t.n.n2 * y);
      s += t.c.real() * std::cos(a) - t.c.imag() * std::sin(a);
    }
    return c0_ + 2.0 * s;
  }
  [[nodiscard]] double value(const TorusPoint& p) const { return value(p.u(), p.v()); }

  [[nodiscard]] Vec2 gradient(double x, double y) const {
    Vec2 g;
    for (const Term& t : terms_) {
      const double a = kTwoPi * (t.n.n1 * x + t.n.n2 * y);
      // d/dx 2 Re(c e^{ia}) = -2 * 2 pi n Im(c e^{ia})
      const double im = t.c.real() * std::sin(a) + t.c.imag() * std::cos(a);
      g.u -= 2.0 * kTwoPi * t.n.n1 * im;
      g.v -= 2.0 * kTwoPi * t.n.n2 * im;
    }
    return g;
  }
  [[nodiscard]] Vec2 gradient(const TorusPoint& p) const { return gradient(p.u(), p.v()); }

  [[nodiscard]] double l2_norm2() const {
    double s = c0_ * c0_;
    for (const Term& t : terms_) s += 2.0 * std::norm(t.c);
    return s;
  }

  /// L2 inner product.
  [[nodiscard]] double inner(const TestFunction& o) const {
    double s = c0_ * o.c0_;
    for (const Term& t : terms_) {
      s += 2.0 * (t.c * std::conj(o.coeff(t.n.n1, t.n.n2))).real();
    }
    return s;
  }

 private:
  double c0_ = 0.0;
  std::vector<Term> terms_;
};

/// Truncated white noise: coeff(0) ~ N(0,1), coeff(n) = (a + ib)/sqrt 2 on
/// the half lattice. Draw order follows the storage order.
template <class Rng>
SpectralField sample_white_noise(const std::shared_ptr<const HalfLattice>& lattice, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  SpectralField f(lattice);
  f.set_coeff0(gauss(rng));
  const double s = 1.0 / std::sqrt(2.0);
  for (cplx& c : f.half()) {
    const double a = gauss(rng);
    const double b = gauss(rng);
    c = cplx(a * s, b * s);
  }
  return f;
}

template <class Rng>
SpectralField sample_white_noise(int cutoff, Rng& rng) {
  return sample_white_noise(std::make_shared<const HalfLattice>(cutoff), rng);
}

/// sqrt of sum_{|n| <= M} (1 + |n|^2)^s |coeff(n)|^2.
inline double sobolev_norm(const SpectralField& f, double s) {
  double acc = f.coeff0() * f.coeff0();
  const auto& lat = f.lattice();
  for (std::size_t k = 0; k < f.half().size(); ++k) {
    acc += 2.0 * std::pow(1.0 + lat[k].norm2(), s) * std::norm(f.half()[k]);
  }
  return std::sqrt(acc);
}

/// sum_{|n| <= M} (1 + |n|^2)^s, the squared norm of a unit-modulus field.
inline double lattice_weight_sum(int cutoff, double s) {
  HalfLattice lat(cutoff);
  double acc = 1.0;
  for (const Mode& m : lat.modes()) acc += 2.0 * std::pow(1.0 + m.norm2(), s);
  return acc;
}

/// Truncated metric sum_{k=1}^{terms} 2^{-k} min(||a - b||_{H^{-1-1/k}}, 1).
inline double hminus_distance(const SpectralField& a, const SpectralField& b, int terms) {
  a.require_same(b);
  if (terms < 1) throw ConfigError("terms must be positive");
  SpectralField d = a;
  d -= b;
  double acc = 0.0;
  double w = 1.0;
  for (int k = 1; k <= terms; ++k) {
    w *= 0.5;
    acc += w * std::min(sobolev_norm(d, -1.0 - 1.0 / k), 1.0);
  }
  return acc;
}

/// <omega, phi> = sum_n coeff(n) conj(phi_hat(n)); modes of phi outside the
/// field cutoff contribute nothing.
inline double pair_field(const SpectralField& f, const TestFunction& phi) {
  double s = f.coeff0() * phi.coeff0();
  for (const auto& t : phi.terms()) {
    s += 2.0 * (f.coeff(t.n.n1, t.n.n2) * std::conj(t.c)).real();
  }
  return s;
}

/// coeff(n) = (1/sqrt N) sum_k xi_k exp(-2 pi i n.X_k).
inline SpectralField empirical_spectrum(const VortexEnsemble& e,
                                        const std::shared_ptr<const HalfLattice>& lattice) {
  e.validate();
  SpectralField f(lattice);
  const int m = lattice->cutoff();
  const double scale = 1.0 / std::sqrt(static_cast<double>(e.size()));
  std::vector<cplx> px(static_cast<std::size_t>(m) + 1);
  std::vector<cplx> py(2 * static_cast<std::size_t>(m) + 1);
  double c0 = 0.0;
  auto& half = f.half();
  for (std::size_t k = 0; k < e.size(); ++k) {
    const double xi = e.xi[k];
    c0 += xi;
    const cplx wx = std::polar(1.0, -kTwoPi * e.positions[k].u());
    const cplx wy = std::polar(1.0, -kTwoPi * e.positions[k].v());
    px[0] = xi;
    for (int j = 1; j <= m; ++j) px[static_cast<std::size_t>(j)] = px[static_cast<std::size_t>(j - 1)] * wx;
    py[static_cast<std::size_t>(m)] = 1.0;
    for (int j = 1; j <= m; ++j) {
      py[static_cast<std::size_t>(m + j)] = py[static_cast<std::size_t>(m + j - 1)] * wy;
      py[static_cast<std::size_t>(m - j)] = std::conj(py[static_cast<std::size_t>(m + j)]);
    }
    for (std::size_t q = 0; q < half.size(); ++q) {
      const Mode& n = (*lattice)[q];
      half[q] += px[static_cast<std::size_t>(n.n1)] * py[static_cast<std::size_t>(m + n.n2)];
    }
  }
  f.set_coeff0(c0 * scale);
  for (cplx& c : half) c *= scale;
  return f;
}

inline SpectralField empirical_spectrum(const VortexEnsemble& e, int cutoff) {
  return empirical_spectrum(e, std::make_shared<const HalfLattice>(cutoff));
}

/// CSV with columns n1,n2,re,im over the whole ball, lattice order, -n after n.
inline void write_field_csv(const SpectralField& f, std::ostream& out) {
  out << "n1,n2,re,im\n";
  out << std::setprecision(17);
  out << "0,0," << f.coeff0() << ",0\n";
  const auto& lat = f.lattice();
  for (std::size_t k = 0; k < lat.size(); ++k) {
    const cplx c = f.half()[k];
    out << lat[k].n1 << ',' << lat[k].n2 << ',' << c.real() << ',' << c.imag() << '\n';
    out << -lat[k].n1 << ',' << -lat[k].n2 << ',' << c.real() << ',' << -c.imag() << '\n';
  }
}

/// Binary layout: "MSQGSPF1", int64 M, float64 coeff0, then (re, im) pairs
/// over the half lattice in storage order.
inline void write_field_binary(const SpectralField& f, std::ostream& out) {
  out.write("MSQGSPF1", 8);
  const std::int64_t m = f.cutoff();
  out.write(reinterpret_cast<const char*>(&m), sizeof m);
  const double c0 = f.coeff0();
  out.write(reinterpret_cast<const char*>(&c0), sizeof c0);
  out.write(reinterpret_cast<const char*>(f.half().data()),
            static_cast<std::streamsize>(f.half().size() * sizeof(cplx)));
}

inline SpectralField read_field_binary(std::istream& in) {
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != "MSQGSPF1") throw IoError("not a spectral field stream");
  std::int64_t m = 0;
  in.read(reinterpret_cast<char*>(&m), sizeof m);
  if (!in || m < 1 || m > 100000) throw IoError("invalid spectral field header");
  SpectralField f(static_cast<int>(m));
  double c0 = 0.0;
  in.read(reinterpret_cast<char*>(&c0), sizeof c0);
  f.set_coeff0(c0);
  in.read(reinterpret_cast<char*>(f.half().data()),
          static_cast<std::streamsize>(f.half().size() * sizeof(cplx)));
  if (!in) throw IoError("truncated spectral field stream");
  return f;
}

}  // namespace msqg
