// SPDX-License-Identifier: Apache-2.0
/**
 * @file stats.hpp
 * @brief Sample moments, Kolmogorov-Smirnov tests and least-squares fits.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "errors.hpp"

namespace msqg::stats {

struct Moments {
  std::size_t n = 0;
  double mean = 0.0;
  /// Unbiased sample variance.
  double variance = 0.0;
  double stderr_mean = 0.0;
};

inline Moments moments(const std::vector<double>& x) {
  Moments m;
  m.n = x.size();
  if (m.n == 0) return m;
  double s = 0.0;
  for (double v : x) s += v;
  m.mean = s / static_cast<double>(m.n);
  if (m.n > 1) {
    double q = 0.0;
    for (double v : x) q += (v - m.mean) * (v - m.mean);
    m.variance = q / static_cast<double>(m.n - 1);
    m.stderr_mean = std::sqrt(m.variance / static_cast<double>(m.n));
  }
  return m;
}

/// Sample covariance and the standard error of the covariance estimate,
/// taken as the standard error of the mean of centered products.
struct Covariance {
  double value = 0.0;
  double stderr_value = 0.0;
};

inline Covariance covariance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw Error("covariance needs paired samples");
  const double ma = moments(a).mean;
  const double mb = moments(b).mean;
  std::vector<double> prod(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) prod[i] = (a[i] - ma) * (b[i] - mb);
  const Moments mp = moments(prod);
  const double n = static_cast<double>(a.size());
  return {mp.mean * n / (n - 1.0), mp.stderr_mean};
}

/// Variance estimate with a standard error from the delta method.
inline Covariance variance_with_error(const std::vector<double>& a) { return covariance(a, a); }

/// Asymptotic Kolmogorov tail Q(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2).
inline double kolmogorov_q(double lambda) {
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += sign * term;
    if (term < 1e-17) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// One-sample test against a continuous cdf; p-value uses the effective
/// sample size correction sqrt(n) + 0.12 + 0.11/sqrt(n).
inline KsResult ks_one_sample(std::vector<double> x, const std::function<double(double)>& cdf) {
  if (x.empty()) throw Error("KS test needs samples");
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  const double sn = std::sqrt(n);
  return {d, kolmogorov_q((sn + 0.12 + 0.11 / sn) * d)};
}

inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw Error("KS test needs samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double ne = std::sqrt(na * nb / (na + nb));
  return {d, kolmogorov_q((ne + 0.12 + 0.11 / ne) * d)};
}

inline double normal_cdf(double x, double sd = 1.0) {
  return 0.5 * std::erfc(-x / (sd * std::sqrt(2.0)));
}

inline double uniform_cdf(double x) { return std::clamp(x, 0.0, 1.0); }

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;
};

/// Ordinary least squares y = intercept + slope x.
inline LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw Error("fit needs at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) throw Error("fit abscissae are all equal");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  if (x.size() > 2) {
    double rss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r = y[i] - f.intercept - f.slope * x[i];
      rss += r * r;
    }
    f.slope_stderr = std::sqrt(rss / (n - 2.0) / sxx);
  }
  return f;
}

/// Weighted least squares with known standard errors; the slope error is
/// propagated from the point errors.
inline LinearFit weighted_fit(const std::vector<double>& x, const std::vector<double>& y,
                              const std::vector<double>& sigma) {
  if (x.size() != y.size() || x.size() != sigma.size() || x.size() < 2) {
    throw Error("fit needs at least two weighted points");
  }
  double sw = 0.0;
  double swx = 0.0;
  double swy = 0.0;
  double swxx = 0.0;
  double swxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(sigma[i] > 0.0)) throw Error("weighted fit needs positive errors");
    const double w = 1.0 / (sigma[i] * sigma[i]);
    sw += w;
    swx += w * x[i];
    swy += w * y[i];
    swxx += w * x[i] * x[i];
    swxy += w * x[i] * y[i];
  }
  const double det = sw * swxx - swx * swx;
  if (det <= 0.0) throw Error("degenerate weighted fit");
  LinearFit f;
  f.slope = (sw * swxy - swx * swy) / det;
  f.intercept = (swxx * swy - swx * swxy) / det;
  f.slope_stderr = std::sqrt(sw / det);
  return f;
}

/// Upper tail P(T > t) of Student's t with dof degrees of freedom; falls back
/// to the normal tail for infinite dof.
inline double student_upper_tail(double t, double dof) {
  if (!std::isfinite(dof)) return 1.0 - normal_cdf(t);
  boost::math::students_t dist(dof);
  return boost::math::cdf(boost::math::complement(dist, t));
}

}  // namespace msqg::stats
