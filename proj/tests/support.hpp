#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "tdbsde/tdbsde.hpp"

namespace support {

using namespace tdbsde;

/// Small deterministic generator for hand-rolled property tests.
struct Gen {
  std::mt19937_64 rng;
  explicit Gen(std::uint64_t seed) : rng(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  std::size_t index(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  }
  std::vector<double> values(std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (double& x : v) x = uniform(lo, hi);
    return v;
  }
};

inline ProblemSpec base_problem(std::string name, double delta = 0.1) {
  ProblemSpec pb;
  pb.name = std::move(name);
  pb.T = 1.0;
  pb.delta = delta;
  pb.constants = Constants{1.0, 1.0, 0.1, 1.0 / 1000.0};
  return pb;
}

inline Driver make_F(const std::string& name, const Params& p = {}, AtomMeasure rho = AtomMeasure::dirac(0.0)) {
  return GeneratorRegistry::instance().make_F(name, p, GeneratorContext{1, 1, std::move(rho)});
}

inline Driver make_G(const std::string& name, const Params& p = {}, AtomMeasure rho = AtomMeasure::dirac(0.0)) {
  return GeneratorRegistry::instance().make_G(name, p, GeneratorContext{1, 1, std::move(rho)});
}

inline Terminal make_xi(const std::string& name, const Params& p = {}) {
  return GeneratorRegistry::instance().make_terminal(name, p, GeneratorContext{});
}

inline PathEnsemble brownian(std::size_t n_steps, std::size_t n_paths, std::uint64_t seed, double delta = 0.0,
                             std::size_t d = 1) {
  return simulate_brownian(make_grid(TimeGrid::uniform(1.0, n_steps, delta)), n_paths, d, seed);
}

/// Mean of Y(0) over paths.
inline double mean_Y0(const SolveResult& r) {
  double s = 0.0;
  for (std::size_t p = 0; p < r.solution.Y.paths(); ++p) s += r.solution.Y(0, p);
  return s / static_cast<double>(r.solution.Y.paths());
}

/// Backward Euler for dY = -(a Y dt + b Y dA), Y(T) = 1, with A deterministic.
inline double linear_ode_oracle(double a, double b, const std::function<double(double)>& A, std::size_t steps) {
  double y = 1.0;
  const double h = 1.0 / static_cast<double>(steps);
  for (std::size_t i = steps; i-- > 0;) {
    const double t0 = h * static_cast<double>(i), t1 = h * static_cast<double>(i + 1);
    y /= 1.0 - a * h - b * (A(t1) - A(t0));
  }
  return y;
}

/// Forward method of steps for Y'(t) = -kappa Y(t - delta), Y = Y(0) before 0,
/// Y(T) = 1; the solution is linear in Y(0), so one shot suffices.
inline double delay_ode_oracle(double kappa, double delta, std::size_t steps) {
  const double h = 1.0 / static_cast<double>(steps);
  const auto k = static_cast<std::size_t>(std::llround(delta / h));
  std::vector<double> y(steps + 1);
  y[0] = 1.0;
  for (std::size_t i = 0; i < steps; ++i) {
    const double lag = i >= k ? y[i - k] : y[0];
    y[i + 1] = y[i] - kappa * lag * h;
  }
  return 1.0 / y[steps];
}

}  // namespace support
