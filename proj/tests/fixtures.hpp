#pragma once

// Shared data sets for the estimation, confidence and acceptance tests.

#include <random>
#include <vector>

#include "odekit/common_models.hpp"
#include "odekit/estimation.hpp"
#include "odekit/integrator.hpp"
#include "odekit/random.hpp"

namespace fixture {

inline const std::vector<double> kSirTruth{0.5, 1.0 / 3.0};

/// SIR in proportions observed through R at 49 times on (0, 100], with
/// multiplicative noise 0.9 + U(0,1)/5. noisy=false gives exact data.
inline odekit::LossProblem sir_fit(std::uint64_t seed, bool noisy = true, std::vector<double> theta0 = {0.5, 0.5}) {
  using namespace odekit;
  OdeModel m = models::sir({{"beta", kSirTruth[0]}, {"gamma", kSirTruth[1]}});
  const std::vector<double> x0{1.0, 1.27e-6, 0.0};
  m.set_initial_values(x0, 0.0);
  const auto grid = linspace(0.0, 100.0, 50);
  const std::vector<double> t(grid.begin() + 1, grid.end());
  const Trajectory sol = integrate(m, t, SolverConfig{.rtol = 1e-12, .atol = 1e-14});
  Rng rng = stream(seed, 0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd y(static_cast<Eigen::Index>(t.size()), 1);
  for (Eigen::Index i = 0; i < y.rows(); ++i) y(i, 0) = sol.values(i, 2) * (noisy ? 0.9 + u(rng) / 5.0 : 1.0);

  LossSetup s{.model = m, .theta = std::move(theta0), .x0 = x0, .t0 = 0.0, .t = t, .y = y, .state_names = {"R"}};
  return LossProblem(std::move(s));
}

inline const odekit::Bounds kSirBounds{{0.0, 2.0}, {0.0, 2.0}};

}  // namespace fixture
