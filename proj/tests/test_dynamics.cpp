// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include <msqg/dynamics.hpp>
#include <msqg/ensemble.hpp>
#include <msqg/kernel.hpp>
#include <msqg/kernel_table.hpp>
#include <msqg/stats.hpp>

using namespace msqg;

namespace {

DirectKernel direct(double delta = 0.0, double eps = 0.5) {
  KernelConfig kc;
  kc.epsilon = eps;
  kc.delta = delta;
  return DirectKernel(kc);
}

IntegratorConfig steps(double dt, double T, int record_every = 1) {
  IntegratorConfig ic;
  ic.dt = dt;
  ic.T = T;
  ic.record_every = record_every;
  return ic;
}

VortexEnsemble pair(TorusPoint a, TorusPoint b, double xa, double xb) {
  return VortexEnsemble{{a, b}, {xa, xb}, 0.5};
}

VortexEnsemble random_ensemble(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_initial(n, 0.5, rng);
}

}  // namespace

TEST(Ensemble, InitialLawMoments) {
  std::mt19937_64 rng(1);
  std::vector<double> u;
  std::vector<double> xi;
  for (int i = 0; i < 10000; ++i) {
    const VortexEnsemble e = sample_initial(1, 0.5, rng);
    u.push_back(e.positions[0].u());
    xi.push_back(e.xi[0]);
  }
  const auto mu = stats::moments(u);
  EXPECT_NEAR(mu.mean, 0.5, 3.0 * mu.stderr_mean);
  const auto vx = stats::variance_with_error(xi);
  EXPECT_NEAR(vx.value, 1.0, 3.0 * vx.stderr_value);
  const auto c = stats::covariance(xi, u);
  EXPECT_NEAR(c.value, 0.0, 3.0 * c.stderr_value);
}

TEST(Dynamics, SingleVortexIsAtRest) {
  const VortexEnsemble e{{TorusPoint(0.3, 0.4)}, {2.0}, 0.5};
  const auto v = velocity_rhs(e, direct());
  EXPECT_EQ(v[0].u, 0.0);
  EXPECT_EQ(v[0].v, 0.0);
}

TEST(Dynamics, DipoleTranslates) {
  const DirectKernel k = direct();
  const VortexEnsemble e = pair(TorusPoint(0.2, 0.3), TorusPoint(0.35, 0.41), 1.0, -1.0);
  const auto v = velocity_rhs(e, k);
  const Vec2 kk = k.eval(wrap_displacement(e.positions[0], e.positions[1])).k;
  const double s = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(v[0].u, -s * kk.u, 1e-15);
  EXPECT_NEAR(v[0].v, -s * kk.v, 1e-15);
  EXPECT_EQ(v[0].u, v[1].u);
  EXPECT_EQ(v[0].v, v[1].v);

  const Trajectory tr = integrate(e, steps(1e-3, 1.0), k);
  const Displacement d0 = wrap_displacement(e.positions[0], e.positions[1]);
  const Vec2 speed = v[0];
  for (std::size_t i = 0; i < tr.snapshots.size(); ++i) {
    const auto& s = tr.snapshots[i];
    EXPECT_NEAR(torus_distance(s[0], s[1]), d0.norm(), 1e-8);
    // midpoint moves with the initial velocity
    const Displacement shift =
        Displacement::wrap(s[0].u() - e.positions[0].u() - speed.u * tr.times[i],
                           s[0].v() - e.positions[0].v() - speed.v * tr.times[i]);
    EXPECT_LT(shift.norm(), 1e-8);
  }
}

TEST(Dynamics, CoRotatingPairConservesPairEnergy) {
  const DirectKernel k = direct();
  const VortexEnsemble e = pair(TorusPoint(0.4, 0.5), TorusPoint(0.6, 0.5), 1.0, 1.0);
  const auto v = velocity_rhs(e, k);
  EXPECT_NEAR(v[0].u, -v[1].u, 1e-15);
  EXPECT_NEAR(v[0].v, -v[1].v, 1e-15);
  // on the axis the torus kernel is orthogonal to the separation by symmetry
  const Displacement d = wrap_displacement(e.positions[0], e.positions[1]);
  EXPECT_NEAR(k.eval(d).k.dot(d.vec()), 0.0, 1e-15);

  // G(x1 - x2) is the exact invariant; the separation itself drifts slightly
  // because G is not radial on the torus
  const Trajectory tr = integrate(e, steps(1e-3, 1.0), k);
  const double g0 = k.eval(d).g;
  for (const auto& s : tr.snapshots) {
    EXPECT_NEAR(k.eval(wrap_displacement(s[0], s[1])).g, g0, 1e-8);
    EXPECT_NEAR(torus_distance(s[0], s[1]), 0.2, 1e-3);
  }
}

TEST(Dynamics, ZeroHorizonKeepsInitialState) {
  const VortexEnsemble e = random_ensemble(6, 2);
  const Trajectory tr = integrate(e, steps(1e-3, 0.0), direct(0.02));
  ASSERT_EQ(tr.snapshots.size(), 1U);
  EXPECT_EQ(tr.times[0], 0.0);
  for (std::size_t i = 0; i < e.size(); ++i) {
    EXPECT_EQ(tr.snapshots[0][i].u(), e.positions[i].u());
    EXPECT_EQ(tr.snapshots[0][i].v(), e.positions[i].v());
  }
}

TEST(Dynamics, TrajectoryBookkeeping) {
  const VortexEnsemble e = random_ensemble(4, 3);
  const Trajectory tr = integrate(e, steps(0.03, 0.1, 2), direct(0.05));
  // steps end at 0.03, 0.06, 0.09, 0.1; stride 2 plus the final time
  ASSERT_EQ(tr.times.size(), 3U);
  EXPECT_EQ(tr.times[0], 0.0);
  EXPECT_DOUBLE_EQ(tr.times[1], 0.06);
  EXPECT_EQ(tr.times[2], 0.1);
  EXPECT_EQ(tr.final_time, 0.1);
  EXPECT_EQ(tr.min_distance_series.size(), 5U);
  EXPECT_EQ(tr.xi, e.xi);
}

TEST(Dynamics, EnergyConservedAtFourthOrder) {
  // well separated vortices keep the step in the asymptotic regime
  const DirectKernel k = direct(0.05);
  const VortexEnsemble e{{TorusPoint(0.1, 0.1), TorusPoint(0.5, 0.2), TorusPoint(0.3, 0.6),
                          TorusPoint(0.8, 0.7), TorusPoint(0.7, 0.4)},
                         {1.0, -0.7, 0.5, 1.2, -0.9},
                         0.5};
  const double e0 = interaction_energy(e, k);
  auto drift = [&](double dt) {
    return std::abs(interaction_energy(integrate(e, steps(dt, 1.0, 0), k).final_ensemble(0.5), k) - e0);
  };
  const double d1 = drift(1e-2);
  const double d2 = drift(5e-3);
  // halving dt divides the drift by about 2^4
  EXPECT_GT(d1 / d2, 11.0);
  EXPECT_LT(d1 / d2, 23.0);
}

TEST(Dynamics, EnergyBasics) {
  const DirectKernel k = direct(0.05);
  const VortexEnsemble one{{TorusPoint(0.1, 0.2)}, {1.0}, 0.5};
  EXPECT_EQ(interaction_energy(one, k), 0.0);
  VortexEnsemble e = random_ensemble(6, 6);
  const double a = interaction_energy(e, k);
  std::reverse(e.positions.begin(), e.positions.end());
  std::reverse(e.xi.begin(), e.xi.end());
  EXPECT_NEAR(interaction_energy(e, k), a, 1e-14 * std::max(1.0, std::abs(a)));
  VortexEnsemble c{{TorusPoint(0.1, 0.2), TorusPoint(0.1, 0.2)}, {1.0, 1.0}, 0.5};
  EXPECT_THROW(interaction_energy(c, direct()), SingularityError);
}

TEST(Dynamics, TimeReversal) {
  const DirectKernel k = direct(0.05);
  const VortexEnsemble e = random_ensemble(5, 7);
  const Trajectory fwd = integrate(e, steps(1e-3, 0.5, 0), k);
  std::vector<double> back_xi = e.xi;
  for (double& x : back_xi) x = -x;
  const Trajectory back = integrate_unwrapped(fwd.final_unwrapped, back_xi, steps(1e-3, 0.5, 0), k);
  for (std::size_t i = 0; i < e.size(); ++i) {
    EXPECT_NEAR(back.final_unwrapped[2 * i], e.positions[i].u(), 1e-6);
    EXPECT_NEAR(back.final_unwrapped[2 * i + 1], e.positions[i].v(), 1e-6);
  }
}

TEST(Dynamics, VelocityFieldIsDivergenceFree) {
  const DirectKernel k = direct(0.02);
  const VortexEnsemble e = random_ensemble(5, 8);
  auto divergence = [&](double h) {
    double worst = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) {
      auto moved = [&](double du, double dv) {
        VortexEnsemble m = e;
        m.positions[i] = TorusPoint(e.positions[i].u() + du, e.positions[i].v() + dv);
        return velocity_rhs(m, k)[i];
      };
      const double div = (moved(h, 0).u - moved(-h, 0).u) / (2 * h) +
                         (moved(0, h).v - moved(0, -h).v) / (2 * h);
      worst = std::max(worst, std::abs(div));
    }
    return worst;
  };
  const double a = divergence(1e-3);
  const double b = divergence(1e-4);
  EXPECT_LT(b, 1e-4);
  EXPECT_LT(b, a / 20.0);
}

TEST(Dynamics, LyapunovFunction) {
  const double delta = 0.01;
  const DirectKernel k = direct(delta);
  const double kk = default_lyapunov_k(k);
  const VortexEnsemble one{{TorusPoint(0.1, 0.2)}, {1.0}, 0.5};
  EXPECT_EQ(lyapunov(one, k, kk), 0.0);

  // growth like s^{-(1-eps)} as a pair approaches; differencing at s and 2s
  // removes the smooth part
  auto at = [&](double s) {
    return lyapunov(pair(TorusPoint(0.3, 0.3), TorusPoint(0.3 + s, 0.3), 1.0, 1.0), k, kk);
  };
  std::vector<double> ls;
  std::vector<double> ll;
  for (double s : {0.08, 0.04, 0.02}) {
    ls.push_back(std::log(s));
    ll.push_back(std::log(at(s) - at(2 * s)));
  }
  EXPECT_NEAR(stats::linear_fit(ls, ll).slope, -0.5, 0.1);

  // agreement with the unregularized sum when all distances exceed delta
  const VortexEnsemble e = random_ensemble(4, 9);
  ASSERT_GT(min_pairwise_distance(e.positions), delta);
  const DirectKernel k0 = direct();
  double raw = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    for (std::size_t j = 0; j < e.size(); ++j) {
      if (i != j) raw += k0.eval(wrap_displacement(e.positions[i], e.positions[j])).g;
    }
  }
  EXPECT_NEAR(lyapunov(e, k, kk), raw + 4.0 * 3.0 * kk, 1e-10);
  EXPECT_THROW(lyapunov(e, k0, kk), ConfigError);
  EXPECT_THROW(lyapunov(pair(TorusPoint(0.3, 0.3), TorusPoint(0.3, 0.3), 1, 1), k, -1e6), ConfigError);
}

TEST(Dynamics, JacobianDeterminant) {
  const DirectKernel k = direct(0.05);
  const VortexEnsemble e = random_ensemble(3, 10);
  EXPECT_EQ(flow_jacobian_det(e, steps(1e-3, 0.0), k, 1e-5), 1.0);
  VortexEnsemble frozen = e;
  std::fill(frozen.xi.begin(), frozen.xi.end(), 0.0);
  EXPECT_NEAR(flow_jacobian_det(frozen, steps(1e-3, 0.5), k, 1e-5), 1.0, 1e-12);

  const IntegratorConfig ic = steps(1e-3, 0.5, 0);
  EXPECT_NEAR(flow_jacobian_det_extrapolated(e, ic, k, 1e-5), 1.0, 1e-4);
  const double a = flow_jacobian_det(e, ic, k, 1e-5);
  const double b = flow_jacobian_det(e, ic, k, 1e-5, {3, 1, 0, 5, 2, 4});
  EXPECT_NEAR(a, b, 1e-12);
}

TEST(Dynamics, MinimalDistance) {
  Trajectory empty;
  empty.snapshots.push_back({TorusPoint(0.1, 0.1)});
  EXPECT_EQ(min_pairwise_distance(empty), kInf);
  const VortexEnsemble still = pair(TorusPoint(0.1, 0.1), TorusPoint(0.4, 0.1), 0.0, 0.0);
  const Trajectory tr = integrate(still, steps(1e-2, 0.5), direct());
  EXPECT_NEAR(min_pairwise_distance(tr), 0.3, 1e-15);
}

TEST(Dynamics, CollisionGuardAndErrors) {
  const VortexEnsemble close = pair(TorusPoint(0.1, 0.1), TorusPoint(0.1 + 5e-5, 0.1), 1.0, 1.0);
  const Trajectory tr = integrate(close, steps(1e-3, 0.1), direct());
  ASSERT_TRUE(tr.guard.has_value());
  EXPECT_TRUE(tr.stopped_early);
  EXPECT_EQ(tr.guard->step, 0U);
  EXPECT_NEAR(tr.guard->distance, 5e-5, 1e-12);
  // regularized runs ignore the guard
  EXPECT_FALSE(integrate(close, steps(1e-3, 0.01), direct(0.01)).guard.has_value());

  const VortexEnsemble same = pair(TorusPoint(0.1, 0.1), TorusPoint(0.1, 0.1), 1.0, 1.0);
  EXPECT_THROW(velocity_rhs(same, direct()), CollisionError);
  IntegratorConfig bad = steps(0.0, 1.0);
  EXPECT_THROW(integrate(close, bad, direct(0.01)), ConfigError);
  bad = steps(0.2, 0.1);
  EXPECT_THROW(integrate(close, bad, direct(0.01)), ConfigError);
}

TEST(Dynamics, TableAndDirectTrajectoriesAgree) {
  KernelConfig kc;
  kc.epsilon = 0.5;
  kc.delta = 0.02;
  const KernelTable t(kc);
  const DirectKernel d(kc);
  const VortexEnsemble e = random_ensemble(6, 11);
  const auto a = integrate(e, steps(1e-3, 0.2, 0), t).final_unwrapped;
  const auto b = integrate(e, steps(1e-3, 0.2, 0), d).final_unwrapped;
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-6);
}
