// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>
#include <vector>

#include "errors.hpp"
#include "torus.hpp"

namespace msqg {

/// N point vortices with Gaussian intensities; vorticity is
/// (1/sqrt N) sum_k xi_k delta_{X_k}.
struct VortexEnsemble {
  std::vector<TorusPoint> positions;
  std::vector<double> xi;
  double epsilon = 0.5;

  [[nodiscard]] std::size_t size() const { return positions.size(); }

  void validate() const {
    if (positions.empty()) throw ConfigError("ensemble must contain at least one vortex");
    if (positions.size() != xi.size()) throw ConfigError("positions and intensities differ in length");
  }
};

/// Draws from the product of Uniform(T^2)^N and N(0,1)^N. Positions are drawn
/// first, then intensities, so the stream layout is fixed.
template <class Rng>
VortexEnsemble sample_initial(std::size_t n, double epsilon, Rng& rng) {
  if (n == 0) throw ConfigError("N must be at least 1");
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  VortexEnsemble e;
  e.epsilon = epsilon;
  e.positions.reserve(n);
  e.xi.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double u = uni(rng);
    const double v = uni(rng);
    e.positions.emplace_back(u, v);
  }
  for (std::size_t k = 0; k < n; ++k) e.xi.push_back(gauss(rng));
  return e;
}

}  // namespace msqg
