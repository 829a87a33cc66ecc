#include <catch_amalgamated.hpp>

#include <cmath>

#include "support.hpp"

using namespace tdbsde;
using Catch::Approx;

namespace {

SolverOptions quick() {
  SolverOptions o;
  o.tol = 1e-12;
  o.max_iter = 40;
  return o;
}

}  // namespace

TEST_CASE("zero data gives the zero solution", "[solver]") {
  ProblemSpec pb = support::base_problem("zero");
  const auto r = solve(pb, support::brownian(20, 100, 1, 0.1), quick());
  REQUIRE(r.converged);
  REQUIRE(r.diagnostics.size() == 1);
  REQUIRE(r.diagnostics[0].norm == 0.0);
  for (std::size_t i = 0; i <= 20; ++i) {
    for (std::size_t p = 0; p < 100; ++p) {
      REQUIRE(r.solution.Y(i, p) == 0.0);
      REQUIRE(r.solution.Z(i, p) == 0.0);
    }
  }
}

TEST_CASE("constant terminal is reproduced exactly", "[solver]") {
  ProblemSpec pb = support::base_problem("const");
  pb.xi = support::make_xi("constant", {{"k", 0.7}});
  const auto r = solve(pb, support::brownian(20, 100, 1, 0.1), quick());
  for (std::size_t i = 0; i <= 20; ++i) {
    for (std::size_t p = 0; p < 100; ++p) {
      REQUIRE(r.solution.Y(i, p) == 0.7);
      REQUIRE(r.solution.Z(i, p) == 0.0);
    }
  }
}

TEST_CASE("martingale terminal recovers W and unit Z", "[solver][statistics]") {
  ProblemSpec pb = support::base_problem("martingale");
  pb.xi = support::make_xi("brownian");
  const auto r = solve(pb, support::brownian(20, 3000, 4, 0.1), quick());
  REQUIRE(r.converged);
  REQUIRE(r.diagnostics.size() == 2);
  double ey = 0.0, ez = 0.0;
  for (std::size_t i = 0; i <= 20; ++i) {
    for (std::size_t p = 0; p < 3000; ++p) {
      ey += std::pow(r.solution.Y(i, p) - (*r.ensemble.W)(i, p), 2);
      ez += std::pow(r.solution.Z(i, p) - 1.0, 2);
    }
  }
  REQUIRE(std::sqrt(ey / (21.0 * 3000.0)) < 0.05);
  REQUIRE(std::sqrt(ez / (21.0 * 3000.0)) < 0.1);
}

TEST_CASE("linear F against the exponential", "[solver][oracle]") {
  ProblemSpec pb = support::base_problem("linear");
  pb.xi = support::make_xi("constant");
  pb.F = support::make_F("linear", {{"a", 0.5}});
  for (Scheme s : {Scheme::explicit_euler, Scheme::implicit_euler}) {
    SolverOptions o = quick();
    o.scheme = s;
    const auto r = solve(pb, support::brownian(50, 200, 1, 0.1), o);
    const double expected = s == Scheme::explicit_euler ? std::pow(1.01, 50) : std::pow(1.0 / 0.99, 50);
    REQUIRE(support::mean_Y0(r) == Approx(expected).epsilon(1e-12));
    REQUIRE(std::abs(support::mean_Y0(r) - std::exp(0.5)) / std::exp(0.5) < 0.01);
  }
}

TEST_CASE("Stieltjes G against the ODE oracle", "[solver][oracle]") {
  ProblemSpec pb = support::base_problem("stieltjes");
  pb.constants = Constants{4.0, 1.0, 0.5, 1e-3};
  pb.xi = support::make_xi("constant");
  pb.F = support::make_F("linear", {{"a", 0.3}});
  pb.G = support::make_G("linear", {{"b", 0.4}});
  pb.A = IncreasingProcessSpec::power(2.0);
  const auto r = solve(pb, support::brownian(100, 200, 1, 0.1), quick());
  REQUIRE(r.converged);
  const double oracle = support::linear_ode_oracle(0.3, 0.4, [](double t) { return t * t; }, 100000);
  REQUIRE(oracle == Approx(std::exp(0.3 + 0.4)).epsilon(1e-4));
  REQUIRE(std::abs(support::mean_Y0(r) - oracle) / oracle < 0.01);
  const auto rep = contraction_report(r.diagnostics);
  REQUIRE(rep.verdict == Verdict::pass);
}

TEST_CASE("delayed generator against the delay ODE", "[solver][oracle]") {
  ProblemSpec pb = support::base_problem("delayed", 0.2);
  pb.constants = Constants{0.1, std::sqrt(1.25), 0.01, 1.5e-3};
  pb.xi = support::make_xi("constant");
  pb.rho = AtomMeasure::dirac(-0.2);
  pb.F = support::make_F("rho-integral", {{"kappa", 0.03}}, pb.rho);
  pb.K = BoundedProcess::constant(9e-4);
  const auto r = solve(pb, support::brownian(100, 200, 1, 0.2), quick());
  REQUIRE(r.converged);
  REQUIRE(r.H1->all_pass());
  const double oracle = support::delay_ode_oracle(0.03, 0.2, 100000);
  REQUIRE(std::abs(support::mean_Y0(r) - oracle) / oracle < 0.01);
  double z2 = 0.0;
  for (std::size_t i = 0; i <= 100; ++i) {
    for (std::size_t p = 0; p < 200; ++p) z2 += r.solution.Z(i, p) * r.solution.Z(i, p);
  }
  REQUIRE(std::sqrt(z2 / (101.0 * 200.0)) < 1e-6);
}

TEST_CASE("strong delay with the override flag", "[solver][oracle]") {
  ProblemSpec pb = support::base_problem("strong-delay", 0.2);
  pb.xi = support::make_xi("constant");
  pb.rho = AtomMeasure::dirac(-0.2);
  pb.F = support::make_F("rho-integral", {{"kappa", 0.5}}, pb.rho);
  pb.K = BoundedProcess::constant(0.25);
  REQUIRE_THROWS_AS(solve(pb, support::brownian(200, 50, 1, 0.2), quick()), AssumptionError);
  SolverOptions o = quick();
  o.override_assumptions = true;
  o.max_iter = 200;
  const auto r = solve(pb, support::brownian(200, 50, 1, 0.2), o);
  REQUIRE(r.converged);
  REQUIRE_FALSE(r.warnings.empty());
  const double oracle = support::delay_ode_oracle(0.5, 0.2, 100000);
  REQUIRE(std::abs(support::mean_Y0(r) - oracle) / oracle < 0.01);
}

TEST_CASE("non-contracting iteration is reported", "[solver][errors]") {
  ProblemSpec pb = support::base_problem("explode", 0.2);
  pb.xi = support::make_xi("constant");
  pb.rho = AtomMeasure::dirac(-0.2);
  pb.F = support::make_F("rho-integral", {{"kappa", 40.0}}, pb.rho);
  pb.K = BoundedProcess::constant(1600.0);
  SolverOptions o = quick();
  o.override_assumptions = true;
  o.max_iter = 4;
  REQUIRE_THROWS_AS(solve(pb, support::brownian(20, 50, 1, 0.2), o), NonContractionError);
}

TEST_CASE("generator failures carry time and path", "[solver][errors]") {
  ProblemSpec pb = support::base_problem("nan");
  Driver bad;
  bad.name = "nan";
  bad.eval = [](const GeneratorArgs& a, std::span<double> out) {
    out[0] = a.t > 0.5 && a.path == 3 ? std::nan("") : 0.0;
  };
  pb.F = bad;
  try {
    solve(pb, support::brownian(20, 50, 1, 0.1), quick());
    FAIL("expected GeneratorError");
  } catch (const GeneratorError& e) {
    REQUIRE(std::string(e.what()).find("path 3") != std::string::npos);
  }
  pb.F = Driver{};
  pb.G = bad;
  REQUIRE_THROWS_AS(solve(pb, support::brownian(20, 50, 1, 0.1), quick()), GeneratorError);
}

TEST_CASE("misaligned delays are rejected with a hint", "[solver][errors]") {
  ProblemSpec pb = support::base_problem("misaligned", 0.33);
  try {
    solve(pb, support::brownian(50, 50, 1), quick());
    FAIL("expected GridAlignmentError");
  } catch (const GridAlignmentError& e) {
    REQUIRE(std::string(e.what()).find("nearest valid n_steps = 100") != std::string::npos);
  }
}

TEST_CASE("B accumulates G dA with left points", "[solver]") {
  ProblemSpec pb = support::base_problem("B");
  pb.G = support::make_G("linear", {{"b", 2.0}, {"c", 1.0}});
  pb.A = IncreasingProcessSpec::power(2.0);
  auto ens = realize_increasing_process(pb.A, support::brownian(10, 3, 1, 0.1));
  SolutionPair U = zero_solution(pb, ens);
  for (std::size_t i = 0; i <= 10; ++i) {
    for (std::size_t p = 0; p < 3; ++p) U.Y(i, p) = 0.1 * static_cast<double>(i);
  }
  const auto art = build_B(U.Y, pb, ens);
  double b = 0.0;
  for (std::size_t i = 0; i < 10; ++i) {
    b += (2.0 * 0.1 * static_cast<double>(i) + 1.0) * ((*ens.A)(i + 1, 0) - (*ens.A)(i, 0));
    REQUIRE(art.B(i + 1, 1) == Approx(b).margin(1e-15));
  }
  REQUIRE(art.shifted_terminal[1] == Approx(b));
}

TEST_CASE("solutions are adapted: shared prefixes give equal values", "[solver][property]") {
  ProblemSpec pb = support::base_problem("adapted", 0.1);
  pb.xi = support::make_xi("brownian-square");
  pb.F = support::make_F("delayed-linear", {{"a", 0.2}, {"kappa", 0.05}}, AtomMeasure::dirac(-0.1));
  pb.rho = AtomMeasure::dirac(-0.1);
  pb.K = BoundedProcess::constant(2.5e-4);
  pb.G = support::make_G("linear", {{"b", 0.05}});
  pb.A = IncreasingProcessSpec::running_maximum();
  const auto base = support::brownian(20, 400, 8, 0.1);
  PathArray W = *base.W;
  support::Gen gen(1);
  for (int pair = 0; pair < 20; ++pair) {
    const std::size_t p = 2 * static_cast<std::size_t>(pair), q = p + 1;
    const std::size_t cut = gen.index(1, 18);
    for (std::size_t i = 0; i <= cut; ++i) W(i, q) = W(i, p);
    for (std::size_t i = cut + 1; i <= 20; ++i) W(i, q) = W(i - 1, q) + ((*base.W)(i, q) - (*base.W)(i - 1, q));
  }
  SolverOptions o = quick();
  o.override_assumptions = true;
  const auto r = solve(pb, ensemble_from_paths(base.grid, W), o);
  gen = support::Gen(1);
  for (int pair = 0; pair < 20; ++pair) {
    const std::size_t p = 2 * static_cast<std::size_t>(pair), q = p + 1;
    const std::size_t cut = gen.index(1, 18);
    for (std::size_t i = 0; i <= cut; ++i) {
      REQUIRE(r.solution.Y(i, p) == r.solution.Y(i, q));
      if (i < cut) REQUIRE(r.solution.Z(i, p) == r.solution.Z(i, q));
    }
  }
}

TEST_CASE("thread count does not change the solution", "[solver][determinism]") {
  ProblemSpec pb = support::base_problem("threads", 0.1);
  pb.xi = support::make_xi("brownian");
  pb.F = support::make_F("linear", {{"a", 0.3}, {"b", 0.1}});
  pb.G = support::make_G("linear", {{"b", 0.2}});
  pb.A = IncreasingProcessSpec::running_maximum();
  SolverOptions o1 = quick(), o3 = quick();
  o3.threads = 3;
  const auto ens = support::brownian(20, 500, 2, 0.1);
  const auto a = solve(pb, ens, o1);
  const auto b = solve(pb, ens, o3);
  REQUIRE(a.solution.Y == b.solution.Y);
  REQUIRE(a.solution.Z == b.solution.Z);
  REQUIRE(a.diagnostics.size() == b.diagnostics.size());
}

TEST_CASE("contraction report", "[solver]") {
  std::vector<IterationRecord> d(2);
  d[0].norm = 1.0;
  d[0].mu_lambda = 0.3;
  d[1].norm = 0.1;
  REQUIRE(contraction_report(d).verdict == Verdict::inconclusive);
  d.push_back(IterationRecord{3, 0.01, 0.1, 0.3, 0.0});
  auto rep = contraction_report(d);
  REQUIRE(rep.verdict == Verdict::pass);
  REQUIRE(rep.ratios.size() == 2);
  REQUIRE(rep.max_tail == Approx(0.1));
  d.push_back(IterationRecord{4, 0.009, 0.9, 0.3, 0.0});
  REQUIRE(contraction_report(d).verdict == Verdict::fail);
  REQUIRE(std::string(to_string(Verdict::inconclusive)) == "INCONCLUSIVE");
}

TEST_CASE("solver input checks", "[solver][errors]") {
  ProblemSpec pb = support::base_problem("checks");
  SolverOptions o = quick();
  o.tol = 0.0;
  REQUIRE_THROWS_AS(solve(pb, support::brownian(10, 50, 1, 0.1), o), DomainError);
  PathEnsemble empty;
  empty.grid = make_grid(TimeGrid::uniform(1.0, 10));
  REQUIRE_THROWS_AS(solve(pb, empty, quick()), DomainError);
  REQUIRE_THROWS_AS(solve(pb, simulate_brownian(make_grid(TimeGrid::uniform(2.0, 20)), 50, 1, 1), quick()),
                    GridAlignmentError);
}
