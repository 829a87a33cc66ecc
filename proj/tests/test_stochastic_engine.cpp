#include <catch_amalgamated.hpp>

#include <filesystem>
#include <numbers>

#include "support.hpp"

using namespace tdbsde;
using Catch::Approx;

TEST_CASE("Brownian paths are reproducible per path", "[engine]") {
  auto g = make_grid(TimeGrid::uniform(1.0, 20));
  const auto a = simulate_brownian(g, 10, 2, 42);
  const auto b = simulate_brownian(g, 25, 2, 42, 4);
  const auto c = simulate_brownian(g, 10, 2, 43);
  bool differs = false;
  for (std::size_t i = 0; i < g->size(); ++i) {
    for (std::size_t p = 0; p < 10; ++p) {
      for (std::size_t j = 0; j < 2; ++j) {
        REQUIRE((*a.W)(i, p, j) == (*b.W)(i, p, j));
        differs = differs || (*a.W)(i, p, j) != (*c.W)(i, p, j);
      }
    }
  }
  REQUIRE(differs);
  REQUIRE((*a.W)(0, 3, 1) == 0.0);
}

TEST_CASE("Brownian moments", "[engine][statistics]") {
  const std::size_t n = 20000;
  auto ens = support::brownian(10, n, 7, 0.0, 2);
  double m0 = 0.0, v0 = 0.0, v1 = 0.0, cov = 0.0, half = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    const double w0 = (*ens.W)(10, p, 0), w1 = (*ens.W)(10, p, 1), wh = (*ens.W)(5, p, 0);
    m0 += w0;
    v0 += w0 * w0;
    v1 += w1 * w1;
    cov += w0 * w1;
    half += wh * (w0 - wh);
  }
  const double inv = 1.0 / static_cast<double>(n);
  const double se = 1.0 / std::sqrt(static_cast<double>(n));
  REQUIRE(std::abs(m0 * inv) < 4.0 * se);
  REQUIRE(std::abs(v0 * inv - 1.0) < 4.0 * std::sqrt(2.0) * se);
  REQUIRE(std::abs(v1 * inv - 1.0) < 4.0 * std::sqrt(2.0) * se);
  REQUIRE(std::abs(cov * inv) < 4.0 * se);
  REQUIRE(std::abs(half * inv) < 4.0 * 0.5 * se);
}

TEST_CASE("simulate_brownian rejects empty requests", "[engine][errors]") {
  auto g = make_grid(TimeGrid::uniform(1.0, 4));
  REQUIRE_THROWS_AS(simulate_brownian(g, 0, 1, 1), DomainError);
  REQUIRE_THROWS_AS(simulate_brownian(g, 3, 0, 1), DomainError);
  REQUIRE_THROWS_AS(ensemble_from_paths(g, PathArray(3, 2, 1)), GridAlignmentError);
}

TEST_CASE("running maximum is increasing, starts at zero and is adapted", "[engine]") {
  auto ens = support::brownian(64, 50, 9);
  const auto with_A = realize_increasing_process(IncreasingProcessSpec::running_maximum(), ens);
  REQUIRE(with_A.A_is_stochastic());
  for (std::size_t p = 0; p < 50; ++p) {
    REQUIRE((*with_A.A)(0, p) == 0.0);
    for (std::size_t i = 1; i <= 64; ++i) REQUIRE((*with_A.A)(i, p) >= (*with_A.A)(i - 1, p));
  }
  PathArray W = *ens.W;
  const std::size_t cut = 20;
  for (std::size_t i = cut + 1; i <= 64; ++i) W(i, 0) += 5.0 * static_cast<double>(i);
  const auto bumped = realize_increasing_process(IncreasingProcessSpec::running_maximum(),
                                                 ensemble_from_paths(ens.grid, W));
  for (std::size_t i = 0; i <= cut; ++i) REQUIRE((*bumped.A)(i, 0) == (*with_A.A)(i, 0));
  REQUIRE((*bumped.A)(64, 0) > (*with_A.A)(64, 0));
}

TEST_CASE("time integral and deterministic increasing processes", "[engine]") {
  auto ens = support::brownian(10, 5, 1);
  const auto A = realize_increasing_process(
      IncreasingProcessSpec::time_integral([](double w) { return w * w; }, "square"), ens);
  for (std::size_t p = 0; p < 5; ++p) {
    double acc = 0.0;
    for (std::size_t i = 1; i <= 10; ++i) {
      acc += (*ens.W)(i - 1, p) * (*ens.W)(i - 1, p) * 0.1;
      REQUIRE((*A.A)(i, p) == Approx(acc).margin(1e-15));
    }
  }
  const auto sq = realize_increasing_process(IncreasingProcessSpec::power(2.0), ens);
  REQUIRE_FALSE(sq.A_is_stochastic());
  REQUIRE((*sq.A)(5, 2) == Approx(0.25));
}

TEST_CASE("oscillatory perturbation is uniformly close with fixed variation", "[engine]") {
  for (double n : {1.0, 3.0, 8.0}) {
    auto ens = support::brownian(static_cast<std::size_t>(64 * n), 2, 1);
    const auto base = realize_increasing_process(IncreasingProcessSpec::identity(), ens);
    const auto osc = realize_increasing_process(IncreasingProcessSpec::oscillatory(IncreasingProcessSpec::identity(), n), ens);
    double sup = 0.0, var = 0.0;
    for (std::size_t i = 0; i < ens.nodes(); ++i) {
      sup = std::max(sup, std::abs((*osc.A)(i, 0) - (*base.A)(i, 0)));
      if (i > 0) {
        var += std::abs(((*osc.A)(i, 0) - (*base.A)(i, 0)) - ((*osc.A)(i - 1, 0) - (*base.A)(i - 1, 0)));
      }
    }
    REQUIRE(sup == Approx(1.0 / (4.0 * std::numbers::pi * n)).epsilon(1e-12));
    REQUIRE(var == Approx(1.0 / std::numbers::pi).epsilon(1e-12));
  }
}

TEST_CASE("increasing processes must start at zero and not decrease", "[engine][errors]") {
  auto ens = support::brownian(20, 3, 1);
  REQUIRE_THROWS_AS(realize_increasing_process(
                        IncreasingProcessSpec::deterministic([](double t) { return 1.0 + t; }, "shifted"), ens),
                    MonotonicityViolation);
  REQUIRE_THROWS_AS(realize_increasing_process(
                        IncreasingProcessSpec::deterministic([](double t) { return std::sin(6.0 * t); }, "sin"), ens),
                    MonotonicityViolation);
  REQUIRE_THROWS_AS(IncreasingProcessSpec::oscillatory(IncreasingProcessSpec::identity(), 0.0), DomainError);
  PathEnsemble no_W;
  no_W.grid = ens.grid;
  REQUIRE_THROWS_AS(realize_increasing_process(IncreasingProcessSpec::running_maximum(), no_W), DomainError);
}

TEST_CASE("omega_delta modulus", "[engine]") {
  auto g = make_grid(TimeGrid::uniform(1.0, 100));
  REQUIRE(omega_delta(GridFunction::sample(g, [](double t) { return t; }), 0.2) == Approx(0.2));
  REQUIRE(omega_delta(GridFunction::sample(g, [](double t) { return t * t; }), 0.2) == Approx(1.0 - 0.64));
  REQUIRE(omega_delta(GridFunction::sample(g, [](double) { return 0.0; }), 0.5) == 0.0);
  REQUIRE_THROWS_AS(omega_delta(GridFunction::sample(g, [](double t) { return t; }), 0.205), GridAlignmentError);
  REQUIRE_THROWS_AS(omega_delta(GridFunction::sample(g, [](double t) { return t; }), 1.5), DomainError);
}

TEST_CASE("ensemble save and load round trip", "[engine][io]") {
  const auto dir = std::filesystem::temp_directory_path() / "tdbsde_ensemble_roundtrip";
  std::filesystem::remove_all(dir);
  auto ens = realize_increasing_process(IncreasingProcessSpec::running_maximum(1), support::brownian(12, 7, 5, 0.25, 2));
  save_ensemble(dir, ens);
  const auto back = load_ensemble(dir);
  REQUIRE(back.seed == 5);
  REQUIRE(*back.grid == *ens.grid);
  REQUIRE(*back.W == *ens.W);
  REQUIRE(*back.A == *ens.A);
  REQUIRE(back.A_is_stochastic());
  std::filesystem::remove_all(dir);
}
