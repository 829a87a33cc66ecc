#include <catch_amalgamated.hpp>

#include "support.hpp"

using namespace tdbsde;
using Catch::Approx;

namespace {

std::size_t binomial(std::size_t n, std::size_t k) {
  std::size_t r = 1;
  for (std::size_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

Eigen::MatrixXd column(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

TEST_CASE("monomial count is a binomial coefficient", "[regression]") {
  for (std::size_t k = 0; k <= 4; ++k) {
    for (std::size_t deg = 0; deg <= 4; ++deg) REQUIRE(monomial_exponents(k, deg).size() == binomial(k + deg, deg));
  }
  const auto e = monomial_exponents(2, 1);
  REQUIRE(e[0] == std::vector<int>{0, 0});
  REQUIRE(e[1] == std::vector<int>{1, 0});
  REQUIRE(e[2] == std::vector<int>{0, 1});
}

TEST_CASE("constant targets are reproduced exactly", "[regression]") {
  support::Gen gen(1);
  const Eigen::MatrixXd state = column(gen.values(200, -2.0, 2.0));
  const Eigen::MatrixXd target = Eigen::MatrixXd::Constant(200, 2, 0.1 + 0.2);
  const Eigen::MatrixXd fit = conditional_expectation(target, state);
  REQUIRE((fit.array() == 0.1 + 0.2).all());
}

TEST_CASE("polynomial targets inside the basis are recovered", "[regression]") {
  support::Gen gen(2);
  const auto x = gen.values(500, -3.0, 3.0);
  Eigen::MatrixXd target(500, 1);
  for (std::size_t i = 0; i < x.size(); ++i) target(static_cast<Eigen::Index>(i), 0) = 1.0 + 2.0 * x[i] - 0.5 * x[i] * x[i];
  const Eigen::MatrixXd fit = conditional_expectation(target, column(x), RegressionBasis{2, 0.0});
  REQUIRE((fit - target).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("zero-variance state columns are dropped", "[regression]") {
  support::Gen gen(3);
  Eigen::MatrixXd state(100, 2);
  state.col(0) = column(gen.values(100, 0.0, 1.0));
  state.col(1).setConstant(4.0);
  REQUIRE(polynomial_design(state, 2).cols() == 3);
}

TEST_CASE("Brownian conditional expectations", "[regression][statistics]") {
  const std::size_t n = 20000;
  auto ens = support::brownian(10, n, 3);
  Eigen::MatrixXd state(n, 1), target(n, 2), exact(n, 2);
  for (std::size_t p = 0; p < n; ++p) {
    const double wt = (*ens.W)(4, p), wT = (*ens.W)(10, p);
    state(static_cast<Eigen::Index>(p), 0) = wt;
    target(static_cast<Eigen::Index>(p), 0) = wT;
    target(static_cast<Eigen::Index>(p), 1) = wT * wT;
    exact(static_cast<Eigen::Index>(p), 0) = wt;
    exact(static_cast<Eigen::Index>(p), 1) = wt * wt + 0.6;
  }
  const Eigen::MatrixXd fit = conditional_expectation(target, state);
  const double rmse0 = std::sqrt((fit.col(0) - exact.col(0)).squaredNorm() / n);
  const double rmse1 = std::sqrt((fit.col(1) - exact.col(1)).squaredNorm() / n);
  REQUIRE(rmse0 < 0.02);
  REQUIRE(rmse1 < 0.05);
}

TEST_CASE("regression failures", "[regression][errors]") {
  support::Gen gen(4);
  const auto x = gen.values(50, -1.0, 1.0);
  Eigen::MatrixXd dup(50, 2);
  dup.col(0) = column(x);
  dup.col(1) = column(x);
  REQUIRE_THROWS_AS(LeastSquaresProjector(polynomial_design(dup, 1), 0.0), SingularSystemError);
  REQUIRE_NOTHROW(LeastSquaresProjector(polynomial_design(dup, 1), 1e-8));
  REQUIRE_THROWS_AS(LeastSquaresProjector(polynomial_design(column({0.1, 0.2, 0.3}), 2), 0.0), DomainError);
  REQUIRE_THROWS_AS(LeastSquaresProjector(polynomial_design(column(x), 2), -1.0), DomainError);
  const LeastSquaresProjector proj(polynomial_design(column(x), 2), 0.0);
  REQUIRE_THROWS_AS(proj.project(Eigen::MatrixXd::Zero(49, 1)), DomainError);
  Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(50, 1);
  bad(3, 0) = std::nan("");
  REQUIRE_THROWS_AS(proj.project(bad), DomainError);
}

TEST_CASE("property: projection is idempotent and linear", "[regression][property]") {
  support::Gen gen(9);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = gen.index(30, 300);
    const std::size_t k = gen.index(1, 3);
    Eigen::MatrixXd state(n, k);
    for (std::size_t j = 0; j < k; ++j) state.col(static_cast<Eigen::Index>(j)) = column(gen.values(n, -2.0, 2.0));
    const LeastSquaresProjector proj(polynomial_design(state, gen.index(1, 2)), 0.0);
    const Eigen::MatrixXd y1 = column(gen.values(n, -5.0, 5.0));
    const Eigen::MatrixXd y2 = column(gen.values(n, -5.0, 5.0));
    const Eigen::MatrixXd p1 = proj.project(y1);
    REQUIRE((proj.project(p1) - p1).cwiseAbs().maxCoeff() < 1e-9);
    const double a = gen.uniform(-2.0, 2.0);
    const Eigen::MatrixXd lin = proj.project(a * y1 + y2) - (a * p1 + proj.project(y2));
    REQUIRE(lin.cwiseAbs().maxCoeff() < 1e-9);
    // residual is orthogonal to the design
    REQUIRE((proj.design().transpose() * (y1 - p1)).cwiseAbs().maxCoeff() / static_cast<double>(n) < 1e-9);
  }
}
