// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>

#include <msqg/stats.hpp>

using namespace msqg::stats;

TEST(Stats, MomentsOfSmallSample) {
  const Moments m = moments({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(m.mean, 2.5);
  EXPECT_DOUBLE_EQ(m.variance, 5.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.stderr_mean, std::sqrt(5.0 / 12.0));
  const Covariance c = covariance({1.0, 2.0, 3.0}, {2.0, 4.0, 6.0});
  EXPECT_DOUBLE_EQ(c.value, 2.0);
}

TEST(Stats, KolmogorovTailKnownValues) {
  // Q(1) and the 1% critical value 1.628
  EXPECT_NEAR(kolmogorov_q(1.0), 0.26999967167735456, 1e-12);
  EXPECT_NEAR(kolmogorov_q(1.628), 0.01, 2e-4);
  EXPECT_EQ(kolmogorov_q(0.0), 1.0);
}

TEST(Stats, KsDetectsShiftAndAcceptsTruth) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> x(5000);
  for (double& v : x) v = g(rng);
  EXPECT_GT(ks_one_sample(x, [](double t) { return normal_cdf(t); }).p_value, 0.01);
  EXPECT_LT(ks_one_sample(x, [](double t) { return normal_cdf(t - 0.2); }).p_value, 1e-6);
  std::vector<double> y(5000);
  for (double& v : y) v = g(rng);
  EXPECT_GT(ks_two_sample(x, y).p_value, 0.01);
  for (double& v : y) v += 0.2;
  EXPECT_LT(ks_two_sample(x, y).p_value, 1e-6);
}

TEST(Stats, KsStatisticOfSingleSample) {
  // one point at 0.5 against Uniform: D = 0.5
  EXPECT_DOUBLE_EQ(ks_one_sample({0.5}, uniform_cdf).statistic, 0.5);
}

TEST(Stats, LinearFits) {
  const LinearFit f = linear_fit({0, 1, 2, 3}, {1, 3, 5, 7});
  EXPECT_NEAR(f.slope, 2.0, 1e-14);
  EXPECT_NEAR(f.intercept, 1.0, 1e-14);
  EXPECT_NEAR(f.slope_stderr, 0.0, 1e-12);
  const LinearFit w = weighted_fit({0, 1, 2}, {0, 1, 2}, {1, 1, 1});
  EXPECT_NEAR(w.slope, 1.0, 1e-14);
  // three unit-variance points at 0,1,2: var(slope) = 1 / sum (x - mean)^2 = 1/2
  EXPECT_NEAR(w.slope_stderr, std::sqrt(0.5), 1e-14);
  EXPECT_THROW(linear_fit({1.0}, {1.0}), msqg::Error);
}

TEST(Stats, TailProbabilities) {
  EXPECT_NEAR(student_upper_tail(0.0, 10.0), 0.5, 1e-15);
  EXPECT_NEAR(student_upper_tail(1.959963984540054, INFINITY), 0.025, 1e-12);
  EXPECT_NEAR(student_upper_tail(2.228138851986274, 10.0), 0.025, 1e-10);
  EXPECT_NEAR(normal_cdf(0.0), 0.5, 1e-16);
}
