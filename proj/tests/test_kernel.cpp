// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>

#include <msqg/kernel.hpp>
#include <msqg/stats.hpp>

#include "oracles.hpp"

using namespace msqg;

namespace {

DirectKernel make(double eps, double delta = 0.0, int m = 256) {
  KernelConfig kc;
  kc.epsilon = eps;
  kc.delta = delta;
  kc.spectral_cutoff = m;
  return DirectKernel(kc);
}

}  // namespace

TEST(KernelConfig, RejectsInvalidParameters) {
  KernelConfig kc;
  for (double e : {0.0, 1.0, -0.1, 1.5}) {
    kc.epsilon = e;
    EXPECT_THROW(kc.validate(), ConfigError);
  }
  kc.epsilon = 0.5;
  kc.delta = 0.25;
  EXPECT_THROW(kc.validate(), ConfigError);
  kc.delta = -0.01;
  EXPECT_THROW(kc.validate(), ConfigError);
  kc.delta = 0.1;
  kc.spectral_cutoff = 0;
  EXPECT_THROW(kc.validate(), ConfigError);
  kc.spectral_cutoff = 256;
  EXPECT_NO_THROW(kc.validate());
  EXPECT_THROW(DirectKernel(KernelConfig{1.0}), ConfigError);
}

TEST(Kernel, GreenMatchesTaperedLatticeSum) {
  for (double eps : {0.25, 0.5, 0.75}) {
    const DirectKernel k = make(eps);
    for (auto [x, y] : {std::pair{0.3, 0.2}, std::pair{-0.11, 0.43}, std::pair{0.5, 0.05}}) {
      const oracle::GreenValue o = oracle::green(eps, x, y);
      const KernelSample s = k.eval(Displacement::wrap(x, y));
      EXPECT_NEAR(s.g, o.g, 1e-8) << "eps=" << eps << " x=" << x << " y=" << y;
      if (eps >= 0.5) {
        const double kn = std::hypot(o.ku, o.kv);
        EXPECT_NEAR(s.k.u, o.ku, 1e-4 * kn);
        EXPECT_NEAR(s.k.v, o.kv, 1e-4 * kn);
      }
    }
  }
}

TEST(Kernel, EvenGreenOddBiotSavart) {
  const DirectKernel k = make(0.5);
  const Displacement d = Displacement::wrap(0.3, 0.2);
  EXPECT_DOUBLE_EQ(k.green(d), k.green(d.negated()));
  const Vec2 a = k.biot_savart(d);
  const Vec2 b = k.biot_savart(d.negated());
  EXPECT_EQ(a.u + b.u, 0.0);
  EXPECT_EQ(a.v + b.v, 0.0);

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> uni(-0.5, 0.5);
  for (int i = 0; i < 2000; ++i) {
    const Displacement r = Displacement::wrap(uni(rng), uni(rng));
    const KernelSample p = k.eval(r);
    const KernelSample q = k.eval(r.negated());
    ASSERT_EQ(p.k.u, -q.k.u);
    ASSERT_EQ(p.k.v, -q.k.v);
    ASSERT_EQ(p.g, q.g);
  }
}

TEST(Kernel, OriginConventions) {
  const DirectKernel k = make(0.5);
  const Vec2 k0 = k.biot_savart(Displacement::wrap(0.0, 0.0));
  EXPECT_EQ(k0.u, 0.0);
  EXPECT_EQ(k0.v, 0.0);
  EXPECT_THROW((void)k.green(Displacement::wrap(0.0, 0.0)), SingularityError);
  // half-cell points are their own negation, so K vanishes there
  const Vec2 kh = k.biot_savart(Displacement::wrap(0.5, 0.5));
  EXPECT_EQ(kh.u, 0.0);
  EXPECT_EQ(kh.v, 0.0);
}

TEST(Kernel, CellIntegralVanishes) {
  // midpoint rule on a grid offset from the origin; the singularity is
  // integrable and the error decays like h^{1+eps}
  const DirectKernel k = make(0.75);
  const int n = 128;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      acc += k.green(Displacement::wrap((i + 0.5) / n - 0.5, (j + 0.5) / n - 0.5));
    }
  }
  EXPECT_NEAR(acc / (n * n), 0.0, 2e-3);
}

TEST(Kernel, BiotSavartIsPerpGradientOfGreen) {
  const DirectKernel k = make(0.5);
  const Displacement d = Displacement::wrap(0.17, -0.23);
  const Vec2 kk = k.biot_savart(d);
  std::vector<double> lh;
  std::vector<double> le;
  for (double h : {1e-2, 1e-3}) {
    const double gx = (k.green(Displacement::wrap(d.du() + h, d.dv())) -
                       k.green(Displacement::wrap(d.du() - h, d.dv()))) / (2 * h);
    const double gy = (k.green(Displacement::wrap(d.du(), d.dv() + h)) -
                       k.green(Displacement::wrap(d.du(), d.dv() - h))) / (2 * h);
    const double err = std::hypot(kk.u + gy, kk.v - gx);
    lh.push_back(std::log(h));
    le.push_back(std::log(err));
  }
  EXPECT_NEAR(stats::linear_fit(lh, le).slope, 2.0, 0.1);
  EXPECT_LT(std::exp(le.back()), 1e-5);
}

TEST(Kernel, NearFieldSlopes) {
  for (double eps : {0.25, 0.5, 0.75}) {
    const DirectKernel k = make(eps);
    std::vector<double> lr;
    std::vector<double> lg;
    std::vector<double> lk;
    std::vector<double> scaled;
    for (int i = 0; i <= 10; ++i) {
      const double r = 1e-3 * std::pow(10.0, i / 10.0);
      const double g1 = k.green(Displacement::wrap(r, 0.0));
      const double g2 = k.green(Displacement::wrap(2 * r, 0.0));
      const double kn = k.biot_savart(Displacement::wrap(r, 0.0)).norm();
      lr.push_back(std::log(r));
      lg.push_back(std::log(g1 - g2));
      lk.push_back(std::log(kn));
      scaled.push_back(kn * std::pow(r, 2.0 - eps));
    }
    EXPECT_NEAR(stats::linear_fit(lr, lg).slope, -(1.0 - eps), 0.05 * (1.0 - eps));
    EXPECT_NEAR(stats::linear_fit(lr, lk).slope, -(2.0 - eps), 0.05 * (2.0 - eps));
    const auto [lo, hi] = std::minmax_element(scaled.begin(), scaled.end());
    EXPECT_GT(*lo, 0.0);
    EXPECT_LT(*hi / *lo, 1.1);
  }
}

TEST(Kernel, RegularizationAgreesOutsideRadius) {
  const DirectKernel k = make(0.5);
  const DirectKernel kd = make(0.5, 0.1);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> uni(-0.5, 0.5);
  int checked = 0;
  for (int i = 0; i < 2000; ++i) {
    const Displacement d = Displacement::wrap(uni(rng), uni(rng));
    if (d.norm() < 0.1) continue;
    const KernelSample a = k.eval(d);
    const KernelSample b = kd.eval(d);
    ASSERT_EQ(a.g, b.g);
    ASSERT_EQ(a.k.u, b.k.u);
    ASSERT_EQ(a.k.v, b.k.v);
    ++checked;
  }
  EXPECT_GT(checked, 1000);
  const KernelSample e = kd.eval(Displacement::wrap(0.3, 0.0));
  EXPECT_EQ(e.g, k.eval(Displacement::wrap(0.3, 0.0)).g);
}

TEST(Kernel, RegularizedOriginAndBound) {
  const double delta = 0.05;
  const DirectKernel kd = make(0.5, delta);
  const KernelSample o = kd.eval(Displacement::wrap(0.0, 0.0));
  EXPECT_TRUE(std::isfinite(o.g));
  EXPECT_EQ(o.k.u, 0.0);
  EXPECT_EQ(o.k.v, 0.0);
  EXPECT_EQ(kd.green(Displacement::wrap(0.0, 0.0)), o.g);

  // |G^(delta)| |x|^{1-eps} inside the radius is bounded by its value scale
  // on the boundary circle
  double inside = 0.0;
  double boundary = 0.0;
  for (int a = 0; a < 64; ++a) {
    const double th = 2.0 * oracle::kPi * a / 64;
    boundary = std::max(boundary, std::abs(kd.green(Displacement::wrap(delta * std::cos(th),
                                                                      delta * std::sin(th)))) *
                                      std::pow(delta, 0.5));
    for (int i = 1; i < 200; ++i) {
      const double r = delta * i / 200.0;
      inside = std::max(inside, std::abs(kd.green(Displacement::wrap(r * std::cos(th),
                                                                     r * std::sin(th)))) *
                                    std::pow(r, 0.5));
    }
  }
  EXPECT_TRUE(std::isfinite(inside));
  EXPECT_LE(inside, 1.5 * boundary);
}

TEST(Kernel, RegularizationIsSmoothAcrossRadius) {
  const double delta = 0.05;
  const DirectKernel kd = make(0.5, delta);
  // K is continuous across |x| = delta: the difference over a gap of 2 eta
  // stays within the radial derivative scale |K| / delta
  for (double eta : {1e-4, 1e-6}) {
    const Vec2 a = kd.biot_savart(Displacement::wrap(delta - eta, 0.0));
    const Vec2 b = kd.biot_savart(Displacement::wrap(delta + eta, 0.0));
    EXPECT_LT((a - b).norm(), 4.0 * eta * a.norm() / delta);
  }
  // the Taylor polynomial matches value and slope at the join
  const SingularPart sp(0.5, delta, 4);
  const SingularPart raw(0.5, 0.0, 4);
  const double rho = delta * delta;
  const auto in = sp.eval(rho * (1 - 1e-12));
  const auto out = raw.eval(rho);
  EXPECT_NEAR(in[0], out[0], 1e-9 * std::abs(out[0]));
  EXPECT_NEAR(in[1], out[1], 1e-8 * std::abs(out[1]));
}

TEST(Kernel, SingularCoefficientMatchesNearFieldAmplitude) {
  // G(r) - G(2r) = c (1 - 2^{-(1-eps)}) r^{-(1-eps)} + O(r^2) near the origin
  for (double eps : {0.25, 0.5, 0.75}) {
    const DirectKernel k = make(eps);
    const double r = 1e-4;
    const double p = 1.0 - eps;
    const double fitted = (k.green(Displacement::wrap(r, 0.0)) - k.green(Displacement::wrap(2 * r, 0.0))) /
                          ((1.0 - std::pow(2.0, -p)) * std::pow(r, -p));
    EXPECT_NEAR(k.singular().coefficient(), fitted, 1e-6 * fitted);
  }
}
