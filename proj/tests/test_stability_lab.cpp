#include <catch_amalgamated.hpp>

#include <numbers>

#include "support.hpp"

using namespace tdbsde;
using Catch::Approx;

namespace {

constexpr double kPi = std::numbers::pi;

ProblemSpec oscillation_base() {
  ProblemSpec pb = support::base_problem("osc-base", 0.0625);
  pb.G = support::make_G("constant");
  return pb;
}

PerturbationFamily oscillation_family(const std::vector<double>& ns) {
  PerturbationFamily fam;
  fam.base = oscillation_base();
  for (double n : ns) {
    ProblemSpec mb = fam.base;
    mb.A = IncreasingProcessSpec::oscillatory(IncreasingProcessSpec::identity(), n);
    fam.index.push_back(n);
    fam.members.push_back(mb);
  }
  return fam;
}

PathArray single(const std::function<double(double)>& f, const TimeGrid& g) {
  PathArray a(g.size(), 1, 1);
  for (std::size_t i = 0; i < g.size(); ++i) a(i, 0) = f(g[i]);
  return a;
}

}  // namespace

TEST_CASE("Halton radical inverse and primes", "[stability]") {
  REQUIRE(radical_inverse(1, 2) == 0.5);
  REQUIRE(radical_inverse(2, 2) == 0.25);
  REQUIRE(radical_inverse(3, 2) == 0.75);
  REQUIRE(radical_inverse(1, 3) == Approx(1.0 / 3.0));
  REQUIRE(radical_inverse(5, 3) == Approx(2.0 / 3.0 + 1.0 / 9.0));
  REQUIRE(first_primes(6) == std::vector<unsigned>{2, 3, 5, 7, 11, 13});
}

TEST_CASE("Spearman and KS statistics", "[stability]") {
  REQUIRE(spearman({1, 2, 3, 4}, {10, 5, 2, 1}) == Approx(-1.0));
  REQUIRE(spearman({1, 2, 3, 4}, {1, 5, 7, 100}) == Approx(1.0));
  REQUIRE(spearman({1, 2, 3}, {4, 4, 4}) == 0.0);
  REQUIRE(spearman({1, 2, 3, 4}, {1, 1, 2, 2}) == Approx(0.8944271909999159));
  REQUIRE(ks_statistic({1, 2, 3}, {1, 2, 3}) == 0.0);
  REQUIRE(ks_statistic({1, 2, 3}, {4, 5}) == 1.0);
  REQUIRE(ks_statistic({1, 2, 3, 4}, {3, 4, 5, 6}) == Approx(0.5));
  REQUIRE_THROWS_AS(ks_statistic({}, {1.0}), DomainError);
}

TEST_CASE("sup estimate of generator differences", "[stability]") {
  SupSampleSpec spec;
  const Driver zero = support::make_F("zero");
  const Driver shifted = support::make_F("linear", {{"c", 0.1}});
  REQUIRE(delta_sup_estimate(shifted, zero, DriverRole::F, spec).value == Approx(0.1));
  REQUIRE(delta_sup_estimate(zero, zero, DriverRole::F, spec).value == 0.0);
  const Driver lin = support::make_F("linear", {{"a", 0.01}});
  const auto est = delta_sup_estimate(lin, zero, DriverRole::F, spec);
  REQUIRE(est.value <= 0.05 + 1e-12);
  REQUIRE(est.value > 0.049);
  REQUIRE(est.box == 5.0);
}

TEST_CASE("bv tail curves", "[stability]") {
  const TimeGrid g = TimeGrid::uniform(1.0, 256);
  const std::vector<double> grid{0.1, 0.3, 0.31, 0.32, 0.5};
  const auto flat = bv_tail_curve({PathArray(g.size(), 5, 1)}, grid);
  for (const auto& t : flat) REQUIRE(t.fraction == 0.0);
  std::vector<PathArray> osc;
  for (double n : {1.0, 2.0, 4.0}) osc.push_back(single([n](double t) { return std::sin(2 * kPi * n * t) / (4 * kPi * n); }, g));
  const auto curve = bv_tail_curve(osc, grid);
  REQUIRE(curve[0].fraction == 1.0);
  REQUIRE(curve[1].fraction == 1.0);
  REQUIRE(curve[2].fraction == 1.0);
  REQUIRE(curve[3].fraction == 0.0);
  REQUIRE(curve[4].fraction == 0.0);
}

TEST_CASE("bv tail of Gaussian-scaled paths matches the normal tail", "[stability][statistics]") {
  const std::size_t n = 20000;
  const auto ens = support::brownian(1, n, 12);
  const TimeGrid g = TimeGrid::uniform(1.0, 16);
  PathArray H(g.size(), n, 1);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t i = 0; i < g.size(); ++i) H(i, p) = (*ens.W)(1, p) * g[i];
  }
  const std::vector<double> nus{0.25, 0.5, 1.0, 2.0};
  const auto curve = bv_tail_curve({H}, nus);
  for (std::size_t k = 0; k < nus.size(); ++k) {
    const double prob = std::erfc(nus[k] / std::sqrt(2.0));
    const double se = std::sqrt(prob * (1.0 - prob) / static_cast<double>(n));
    REQUIRE(std::abs(curve[k].fraction - prob) < 4.0 * se);
  }
}

TEST_CASE("family validation", "[stability][errors]") {
  PerturbationFamily fam = oscillation_family({1, 2});
  REQUIRE_NOTHROW(fam.validate());
  fam.members[1].constants.beta = 2.0;
  REQUIRE_THROWS_AS(fam.validate(), FamilyInvalidError);
  fam = oscillation_family({1, 2});
  fam.members[0].delta = 0.125;
  REQUIRE_THROWS_AS(fam.validate(), FamilyInvalidError);
  fam = oscillation_family({1, 2});
  fam.index.pop_back();
  REQUIRE_THROWS_AS(fam.validate(), DomainError);
  fam = oscillation_family({1});
  fam.members[0].K = BoundedProcess::constant(10.0);
  REQUIRE_THROWS_AS(run_stability(fam, support::brownian(32, 50, 1, 0.0625)), FamilyInvalidError);
}

TEST_CASE("identical members have zero error", "[stability][property]") {
  PerturbationFamily fam;
  fam.base = support::base_problem("base", 0.125);
  fam.base.xi = support::make_xi("brownian");
  fam.base.F = support::make_F("linear", {{"a", 0.2}});
  fam.base.G = support::make_G("linear", {{"b", 0.1}});
  fam.base.A = IncreasingProcessSpec::running_maximum();
  fam.members = {fam.base, fam.base};
  fam.index = {1, 2};
  const auto rep = run_stability(fam, support::brownian(16, 300, 3, 0.125));
  for (const auto& row : rep.rows) {
    REQUIRE(row.error == 0.0);
    REQUIRE(row.delta_xi == 0.0);
    REQUIRE(row.delta_F == 0.0);
    REQUIRE(row.sup_A_diff == 0.0);
    REQUIRE(row.bv_H == 0.0);
  }
  REQUIRE(rep.base_norm > 0.0);
}

TEST_CASE("solution distance is symmetric", "[stability][property]") {
  ProblemSpec a = support::base_problem("a");
  a.xi = support::make_xi("brownian");
  ProblemSpec b = a;
  b.F = support::make_F("linear", {{"a", 0.3}});
  const auto ens = support::brownian(20, 200, 6, 0.1);
  const auto ra = solve(a, ens), rb = solve(b, ens);
  const double ab = solution_distance(ra.solution, rb.solution);
  REQUIRE(ab > 0.0);
  REQUIRE(ab == Approx(solution_distance(rb.solution, ra.solution)).epsilon(1e-12));
  REQUIRE(solution_distance(ra.solution, ra.solution) == 0.0);
}

TEST_CASE("oscillating A converges uniformly but not in variation", "[stability]") {
  const auto fam = oscillation_family({1, 2, 4, 8});
  const auto rep = run_stability(fam, support::brownian(128, 200, 2, 0.0625));
  REQUIRE(rep.verdict() == Verdict::pass);
  REQUIRE(rep.spearman == Approx(-1.0));
  for (const auto& row : rep.rows) {
    REQUIRE(row.sup_A_diff == Approx(1.0 / (4.0 * kPi * row.n)).epsilon(1e-3));
    REQUIRE(row.bv_H == Approx(1.0 / kPi).epsilon(1e-2));
    // Y^n - Y = A^n - A pathwise since G = 1 and xi = 0
    REQUIRE(row.error == Approx(std::pow(1.0 / (4.0 * kPi * row.n), 2)).epsilon(2e-2));
  }
}

TEST_CASE("stochastic Helly-Bray check reduces to the deterministic distance", "[stability]") {
  auto g = make_grid(TimeGrid::uniform(1.0, 1024));
  const auto x = GridFunction::sample(g, [](double t) { return t; });
  const auto eta = BVFunction::sample(g, [](double t) { return t; });
  std::vector<GridFunction> xs;
  std::vector<BVFunction> etas;
  std::vector<PathArray> X_n, H_n;
  const std::vector<double> ns{1, 2, 4, 8};
  for (double n : ns) {
    auto h = [n](double t) { return t + std::sin(2 * kPi * n * t) / (4 * kPi * n); };
    xs.push_back(x);
    etas.push_back(BVFunction::sample(g, h));
    X_n.push_back(single([](double t) { return t; }, *g));
    H_n.push_back(single(h, *g));
  }
  const auto det = helly_bray_distance(xs, etas, x, eta);
  const auto rep = helly_bray_stochastic_check(ns, X_n, H_n, single([](double t) { return t; }, *g),
                                               single([](double t) { return t; }, *g));
  REQUIRE(rep.precondition_ok);
  for (std::size_t j = 0; j < ns.size(); ++j) REQUIRE(rep.rows[j].pathwise_sup == Approx(det[j]).margin(1e-12));
}

TEST_CASE("unbounded variation makes the Helly-Bray check inconclusive", "[stability]") {
  const TimeGrid g = TimeGrid::uniform(1.0, 4096);
  std::vector<double> ns{1, 2, 4, 8, 16};
  std::vector<PathArray> X_n, H_n;
  for (double n : ns) {
    X_n.push_back(single([n](double t) { return std::cos(2 * kPi * n * n * t) / std::sqrt(n); }, g));
    H_n.push_back(single([n](double t) { return std::sin(2 * kPi * n * n * t) / (4 * n); }, g));
  }
  const PathArray zero(g.size(), 1, 1);
  const auto rep = helly_bray_stochastic_check(ns, X_n, H_n, zero, zero);
  REQUIRE_FALSE(rep.precondition_ok);
  REQUIRE(rep.verdict == Verdict::inconclusive);
  REQUIRE(rep.rows.back().pathwise_sup > 1.0);
}

TEST_CASE("Helly-Bray check input errors", "[stability][errors]") {
  const TimeGrid g = TimeGrid::uniform(1.0, 8);
  const PathArray one(g.size(), 1, 1), other(g.size() + 1, 1, 1);
  REQUIRE_THROWS_AS(helly_bray_stochastic_check({}, {}, {}, one, one), DomainError);
  REQUIRE_THROWS_AS(helly_bray_stochastic_check({1}, {other}, {one}, one, one), GridAlignmentError);
  REQUIRE_THROWS_AS(helly_bray_stochastic_check({1}, {PathArray(g.size(), 1, 2)}, {one}, one, one), DomainError);
}
