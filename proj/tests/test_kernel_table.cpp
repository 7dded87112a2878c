// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include <msqg/kernel_table.hpp>

using namespace msqg;

namespace {

KernelConfig cfg(double eps, double delta = 0.0) {
  KernelConfig kc;
  kc.epsilon = eps;
  kc.delta = delta;
  return kc;
}

TableOptions res(int r, int order = 3) {
  TableOptions o;
  o.resolution = r;
  o.order = order;
  // coarse grids only serve structural checks; accuracy is tested at 512
  if (r < 512) o.tolerance = 1e-3;
  return o;
}

}  // namespace

TEST(KernelTable, NodesMatchDirectEvaluation) {
  const KernelTable t(cfg(0.5), res(128));
  const DirectKernel d(cfg(0.5));
  for (int i = 0; i <= 128; i += 7) {
    for (int j = 0; j <= 128; j += 5) {
      const double x = i / 128.0 - 0.5;
      const double y = j / 128.0 - 0.5;
      const double ref = d.regular_jet(x, y).value;
      EXPECT_NEAR(t.node_regular(i, j), ref, 1e-12 * std::max(1.0, std::abs(ref)));
      if (i == 64 && j == 64) continue;
      const Displacement p = Displacement::wrap(x, y);
      const double g = d.eval(p).g;
      EXPECT_NEAR(t.eval(p).g, g, 1e-12 * std::max(1.0, std::abs(g)));
    }
  }
}

TEST(KernelTable, OriginNode) {
  const KernelTable t(cfg(0.5, 0.05), res(128));
  const DirectKernel d(cfg(0.5, 0.05));
  const KernelSample s = t.eval(Displacement::wrap(0.0, 0.0));
  EXPECT_NEAR(s.g, d.eval(Displacement::wrap(0.0, 0.0)).g, 1e-12);
  EXPECT_EQ(s.k.u, 0.0);
  EXPECT_EQ(s.k.v, 0.0);
}

TEST(KernelTable, ExactAntisymmetry) {
  const KernelTable t(cfg(0.5), res(128));
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> uni(-0.5, 0.5);
  for (int i = 0; i < 100000; ++i) {
    const Displacement d = Displacement::wrap(uni(rng), uni(rng));
    const KernelSample a = t.eval(d);
    const KernelSample b = t.eval(d.negated());
    ASSERT_EQ(a.k.u + b.k.u, 0.0);
    ASSERT_EQ(a.k.v + b.k.v, 0.0);
    ASSERT_EQ(a.g, b.g);
  }
}

TEST(KernelTable, BicubicAccuracyAgainstDirect) {
  const KernelTable t(cfg(0.7), res(512));
  const DirectKernel d(cfg(0.7));
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> uni(-0.5, 0.5);
  double worst = 0.0;
  int n = 0;
  while (n < 500) {
    const Displacement p = Displacement::wrap(uni(rng), uni(rng));
    if (p.norm() < 0.05) continue;
    const KernelSample a = t.eval(p);
    const KernelSample b = d.eval(p);
    worst = std::max(worst, std::abs(a.g - b.g) / std::abs(b.g));
    worst = std::max(worst, (a.k - b.k).norm() / b.k.norm());
    ++n;
  }
  EXPECT_LT(worst, 1e-6);
  EXPECT_LT(t.check().max_error, 1e-6);
}

TEST(KernelTable, ToleranceMissReportsWorstLocation) {
  TableOptions o = res(64, 1);
  o.tolerance = 1e-6;
  try {
    const KernelTable t(cfg(0.5), o);
    FAIL() << "expected a tolerance error";
  } catch (const ToleranceError& e) {
    EXPECT_GT(e.worst_error(), 1e-6);
    EXPECT_LE(std::abs(e.worst_u()), 0.5);
    EXPECT_LE(std::abs(e.worst_v()), 0.5);
  }
}

TEST(KernelTable, RejectsInvalidOptions) {
  EXPECT_THROW(KernelTable(cfg(0.5), res(65)), ConfigError);
  EXPECT_THROW(KernelTable(cfg(0.5), res(32)), ConfigError);
  EXPECT_THROW(KernelTable(cfg(0.5), res(64, 2)), ConfigError);
}

TEST(KernelTable, SaveLoadRoundTrip) {
  const KernelTable t(cfg(0.5, 0.02), res(64));
  const auto path = (std::filesystem::temp_directory_path() / "msqg_table_test.bin").string();
  t.save(path);
  const KernelTable u = KernelTable::load(path);
  EXPECT_EQ(u.resolution(), 64);
  EXPECT_EQ(u.delta(), 0.02);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> uni(-0.5, 0.5);
  for (int i = 0; i < 1000; ++i) {
    const Displacement d = Displacement::wrap(uni(rng), uni(rng));
    ASSERT_EQ(t.eval(d).g, u.eval(d).g);
    ASSERT_EQ(t.eval(d).k.u, u.eval(d).k.u);
  }
  {
    std::ofstream bad(path, std::ios::binary | std::ios::trunc);
    bad << "not a table";
  }
  EXPECT_THROW(KernelTable::load(path), IoError);
  std::filesystem::remove(path);
  EXPECT_THROW(KernelTable::load(path), IoError);
}

TEST(KernelTable, WithDeltaSharesGridsAndRegularizes) {
  const KernelTable t(cfg(0.5), res(256));
  const KernelTable td = t.with_delta(0.05);
  const DirectKernel d(cfg(0.5, 0.05));
  EXPECT_EQ(td.delta(), 0.05);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> uni(-0.5, 0.5);
  for (int i = 0; i < 500; ++i) {
    const Displacement p = Displacement::wrap(uni(rng), uni(rng));
    if (p.norm() >= 0.05) {
      ASSERT_EQ(t.eval(p).g, td.eval(p).g);
    }
    const double ref = d.eval(p).g;
    EXPECT_NEAR(td.eval(p).g, ref, 1e-5 * std::max(1.0, std::abs(ref)));
  }
}
