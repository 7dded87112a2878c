// SPDX-License-Identifier: Apache-2.0
/**
 * @file kernel_table.hpp
 * @brief Interpolated kernel for the O(N^2) summation path.
 *
 * The table samples only the smooth remainder R = G - c_s |x|^{-(1-eps)} on a
 * uniform (res+1) x (res+1) node grid covering the closed cell [-1/2,1/2]^2.
 * At lookup the singular part (or its inner polynomial when delta > 0) is added
 * back analytically, so accuracy does not degrade near the origin.
 *
 * Order 3 uses a Hermite bicubic patch built from R, R_x, R_y and R_xy; the
 * velocity is the exact perpendicular gradient of that patch, so the tabulated
 * velocity field is divergence free and Hamiltonian with respect to the
 * tabulated G. Order 1 interpolates R, -R_y and R_x bilinearly.
 */
#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "errors.hpp"
#include "kernel.hpp"

namespace msqg {

struct TableOptions {
  int resolution = 512;
  int order = 3;
  /// Relative tolerance checked against direct evaluation after building.
  double tolerance = 1e-6;
  /// Denominator floor for the relative error, in units of the largest
  /// probed magnitude of the same quantity.
  double relative_floor = 1e-3;
  int probes = 512;
};

/// Result of comparing a table against direct evaluation.
struct TableCheck {
  double max_error = 0.0;
  double worst_u = 0.0;
  double worst_v = 0.0;
  int probes = 0;
};

class KernelTable {
 public:
  static constexpr char kMagic[8] = {'M', 'S', 'Q', 'G', 'K', 'T', 'B', 'L'};
  static constexpr std::uint32_t kVersion = 1;

  /// Builds and validates. Throws ToleranceError when the check fails.
  KernelTable(const KernelConfig& cfg, const TableOptions& opt = {})
      : cfg_(cfg), res_(opt.resolution), order_(opt.order) {
    cfg_.validate();
    if (res_ < 64 || res_ % 2 != 0) {
      throw ConfigError("grid_resolution must be an even integer >= 64");
    }
    if (order_ != 1 && order_ != 3) throw ConfigError("interpolation order must be 1 or 3");
    singular_ = SingularPart(cfg_.epsilon, cfg_.delta, cfg_.smoothness);
    DirectKernel direct(cfg_);
    grids_ = std::make_shared<Grids>(build(direct));
    check_ = compare(direct, opt);
    if (check_.max_error > opt.tolerance) {
      throw ToleranceError("kernel table misses tolerance " + std::to_string(opt.tolerance) +
                               " (worst relative error " + std::to_string(check_.max_error) +
                               ")",
                           check_.worst_u, check_.worst_v, check_.max_error);
    }
  }

  /// Same regular grids with a different regularization radius.
  [[nodiscard]] KernelTable with_delta(double delta) const {
    KernelTable t(*this);
    t.cfg_.delta = delta;
    t.cfg_.validate();
    t.singular_ = SingularPart(t.cfg_.epsilon, delta, t.cfg_.smoothness);
    return t;
  }

  [[nodiscard]] const KernelConfig& config() const { return cfg_; }
  [[nodiscard]] double epsilon() const { return cfg_.epsilon; }
  [[nodiscard]] double delta() const { return cfg_.delta; }
  [[nodiscard]] int resolution() const { return res_; }
  [[nodiscard]] int order() const { return order_; }
  [[nodiscard]] const TableCheck& check() const { return check_; }

  /// Mirrors DirectKernel::eval: exact oddness of K and evenness of G.
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

  /// Raw node values (regular part), index (i, j) at (-1/2 + i/res, -1/2 + j/res).
  [[nodiscard]] double node_regular(int i, int j) const { return grids_->r[idx(i, j)]; }

  /// Compares against direct evaluation at deterministic probes with
  /// norm >= 4 grid cells.
  [[nodiscard]] TableCheck compare(const DirectKernel& direct, const TableOptions& opt) const {
    std::mt19937_64 rng(0x6b65726e656cULL);
    std::uniform_real_distribution<double> uni(-0.5, 0.5);
    const double rmin = 4.0 / res_;
    std::vector<Displacement> pts;
    while (static_cast<int>(pts.size()) < opt.probes) {
      // half the probes concentrate just outside the excluded disc
      Displacement d;
      if (pts.size() % 2 == 0) {
        d = Displacement::wrap(uni(rng), uni(rng));
      } else {
        const double r = rmin * (1.0 + 4.0 * (uni(rng) + 0.5));
        const double a = kTwoPi * (uni(rng) + 0.5);
        d = Displacement::wrap(r * std::cos(a), r * std::sin(a));
      }
      if (d.norm() >= rmin) pts.push_back(d);
    }
    std::vector<KernelSample> exact(pts.size());
    double gscale = 0.0;
    double kscale = 0.0;
    for (std::size_t p = 0; p < pts.size(); ++p) {
      exact[p] = direct.eval(pts[p]);
      gscale = std::max(gscale, std::abs(exact[p].g));
      kscale = std::max(kscale, exact[p].k.norm());
    }
    TableCheck out;
    out.probes = static_cast<int>(pts.size());
    for (std::size_t p = 0; p < pts.size(); ++p) {
      const KernelSample t = eval(pts[p]);
      const double eg =
          std::abs(t.g - exact[p].g) / std::max(std::abs(exact[p].g), opt.relative_floor * gscale);
      const double ek = (t.k - exact[p].k).norm() /
                        std::max(exact[p].k.norm(), opt.relative_floor * kscale);
      const double e = std::max(eg, ek);
      if (e > out.max_error) {
        out.max_error = e;
        out.worst_u = pts[p].du();
        out.worst_v = pts[p].dv();
      }
    }
    return out;
  }

  /// Flat binary layout: magic, version, epsilon, delta, M, resolution, order,
  /// smoothness, then row-major float64 grids R, K_u, K_v, R_xy.
  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write(kMagic, sizeof kMagic);
    put(out, kVersion);
    put(out, cfg_.epsilon);
    put(out, cfg_.delta);
    put(out, static_cast<std::int64_t>(cfg_.spectral_cutoff));
    put(out, static_cast<std::int64_t>(res_));
    put(out, static_cast<std::int32_t>(order_));
    put(out, static_cast<std::int32_t>(cfg_.smoothness));
    for (const auto* g : {&grids_->r, &grids_->ku, &grids_->kv, &grids_->rxy}) {
      out.write(reinterpret_cast<const char*>(g->data()),
                static_cast<std::streamsize>(g->size() * sizeof(double)));
    }
    if (!out) throw IoError("write failed: " + path);
  }

  static KernelTable load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) {
      throw IoError(path + " is not a kernel table");
    }
    if (get<std::uint32_t>(in) != kVersion) throw IoError(path + ": unsupported table version");
    KernelTable t;
    t.cfg_.epsilon = get<double>(in);
    t.cfg_.delta = get<double>(in);
    t.cfg_.spectral_cutoff = static_cast<int>(get<std::int64_t>(in));
    t.res_ = static_cast<int>(get<std::int64_t>(in));
    t.order_ = get<std::int32_t>(in);
    t.cfg_.smoothness = get<std::int32_t>(in);
    if (!in) throw IoError(path + ": truncated header");
    t.cfg_.validate();
    if (t.res_ < 64 || t.res_ > (1 << 14) || (t.order_ != 1 && t.order_ != 3)) {
      throw IoError(path + ": invalid table header");
    }
    const std::size_t n = static_cast<std::size_t>(t.res_ + 1) * (t.res_ + 1);
    auto g = std::make_shared<Grids>();
    for (auto* v : {&g->r, &g->ku, &g->kv, &g->rxy}) {
      v->resize(n);
      in.read(reinterpret_cast<char*>(v->data()), static_cast<std::streamsize>(n * sizeof(double)));
    }
    if (!in) throw IoError(path + ": truncated grid data");
    t.grids_ = std::move(g);
    t.singular_ = SingularPart(t.cfg_.epsilon, t.cfg_.delta, t.cfg_.smoothness);
    return t;
  }

 private:
  struct Grids {
    std::vector<double> r;
    std::vector<double> ku;
    std::vector<double> kv;
    std::vector<double> rxy;
  };

  KernelTable() = default;

  [[nodiscard]] std::size_t idx(int i, int j) const {
    return static_cast<std::size_t>(i) * static_cast<std::size_t>(res_ + 1) +
           static_cast<std::size_t>(j);
  }

  /// Fills one quadrant and mirrors; R is even in each coordinate.
  [[nodiscard]] Grids build(const DirectKernel& direct) const {
    const std::size_t n = static_cast<std::size_t>(res_ + 1) * (res_ + 1);
    Grids g{std::vector<double>(n), std::vector<double>(n), std::vector<double>(n),
            std::vector<double>(n)};
    const int half = res_ / 2;
    const double h = 1.0 / res_;
    for (int i = 0; i <= half; ++i) {
      for (int j = 0; j <= half; ++j) {
        const RegularJet jet = direct.regular_jet(i * h, j * h);
        for (int si : {1, -1}) {
          for (int sj : {1, -1}) {
            const std::size_t k = idx(half + si * i, half + sj * j);
            g.r[k] = jet.value;
            g.ku[k] = -sj * jet.dy;
            g.kv[k] = si * jet.dx;
            g.rxy[k] = si * sj * jet.dxy;
          }
        }
      }
    }
    // exact zeros on the symmetry lines
    for (int i = 0; i <= res_; ++i) {
      g.kv[idx(half, i)] = 0.0;
      g.ku[idx(i, half)] = 0.0;
      g.rxy[idx(half, i)] = 0.0;
      g.rxy[idx(i, half)] = 0.0;
    }
    return g;
  }

  [[nodiscard]] KernelSample raw(const Displacement& d) const {
    const double x = d.du();
    const double y = d.dv();
    const double rho = x * x + y * y;
    if (rho == 0.0 && cfg_.delta == 0.0) return {kInf, Vec2{}};
    const double fx = (x + 0.5) * res_;
    const double fy = (y + 0.5) * res_;
    const int i = std::min(static_cast<int>(fx), res_ - 1);
    const int j = std::min(static_cast<int>(fy), res_ - 1);
    const double t = fx - i;
    const double s = fy - j;
    double val = 0.0;
    double rx = 0.0;
    double ry = 0.0;
    const Grids& g = *grids_;
    const std::size_t k00 = idx(i, j);
    const std::size_t k01 = k00 + 1;
    const std::size_t k10 = idx(i + 1, j);
    const std::size_t k11 = k10 + 1;
    if (order_ == 3) {
      const double h = 1.0 / res_;
      double bt[4];
      double dbt[4];
      double bs[4];
      double dbs[4];
      hermite(t, h, bt, dbt);
      hermite(s, h, bs, dbs);
      // rows: value at x-node 0/1, x-derivative at x-node 0/1
      const double c[4][4] = {
          {g.r[k00], g.r[k01], -g.ku[k00], -g.ku[k01]},
          {g.r[k10], g.r[k11], -g.ku[k10], -g.ku[k11]},
          {g.kv[k00], g.kv[k01], g.rxy[k00], g.rxy[k01]},
          {g.kv[k10], g.kv[k11], g.rxy[k10], g.rxy[k11]},
      };
      for (int a = 0; a < 4; ++a) {
        const double cs = c[a][0] * bs[0] + c[a][1] * bs[1] + c[a][2] * bs[2] + c[a][3] * bs[3];
        const double cds =
            c[a][0] * dbs[0] + c[a][1] * dbs[1] + c[a][2] * dbs[2] + c[a][3] * dbs[3];
        val += bt[a] * cs;
        rx += dbt[a] * cs;
        ry += bt[a] * cds;
      }
    } else {
      const double w00 = (1 - t) * (1 - s);
      const double w01 = (1 - t) * s;
      const double w10 = t * (1 - s);
      const double w11 = t * s;
      val = w00 * g.r[k00] + w01 * g.r[k01] + w10 * g.r[k10] + w11 * g.r[k11];
      rx = w00 * g.kv[k00] + w01 * g.kv[k01] + w10 * g.kv[k10] + w11 * g.kv[k11];
      ry = -(w00 * g.ku[k00] + w01 * g.ku[k01] + w10 * g.ku[k10] + w11 * g.ku[k11]);
    }
    const auto sp = singular_.eval(rho);
    return {val + sp[0], Vec2{-(ry + 2.0 * y * sp[1]), rx + 2.0 * x * sp[1]}};
  }

  /// Cubic Hermite basis {h00, h01, h*h10, h*h11} and its x-derivatives.
  static void hermite(double t, double h, double* b, double* db) {
    const double t2 = t * t;
    const double t3 = t2 * t;
    b[0] = 2 * t3 - 3 * t2 + 1;
    b[1] = -2 * t3 + 3 * t2;
    b[2] = h * (t3 - 2 * t2 + t);
    b[3] = h * (t3 - t2);
    db[0] = (6 * t2 - 6 * t) / h;
    db[1] = (-6 * t2 + 6 * t) / h;
    db[2] = 3 * t2 - 4 * t + 1;
    db[3] = 3 * t2 - 2 * t;
  }

  template <class T>
  static void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  template <class T>
  static T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  }

  KernelConfig cfg_;
  int res_ = 0;
  int order_ = 3;
  SingularPart singular_;
  std::shared_ptr<const Grids> grids_;
  TableCheck check_;
};

}  // namespace msqg
