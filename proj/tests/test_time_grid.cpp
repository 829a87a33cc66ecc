#include <catch_amalgamated.hpp>

#include <sstream>

#include "support.hpp"

using namespace tdbsde;
using Catch::Approx;

TEST_CASE("uniform grid nodes", "[time_grid]") {
  const TimeGrid g = TimeGrid::uniform(2.0, 8);
  REQUIRE(g.size() == 9);
  REQUIRE(g.steps() == 8);
  REQUIRE(g[0] == 0.0);
  REQUIRE(g.horizon() == 2.0);
  REQUIRE(g.step(3) == Approx(0.25));
  REQUIRE(g.is_uniform());
  REQUIRE(g.delay_steps() == 0);
}

TEST_CASE("grid construction rejects bad nodes", "[time_grid][errors]") {
  REQUIRE_THROWS_AS(TimeGrid({0.0}), DomainError);
  REQUIRE_THROWS_AS(TimeGrid({0.1, 0.5}), DomainError);
  REQUIRE_THROWS_AS(TimeGrid({0.0, 0.5, 0.5}), DomainError);
  REQUIRE_THROWS_AS(TimeGrid::uniform(0.0, 4), DomainError);
  REQUIRE_THROWS_AS(TimeGrid::uniform(1.0, 0), DomainError);
  REQUIRE_THROWS_AS(TimeGrid::uniform(1.0, 10, 2.0), DomainError);
}

TEST_CASE("delay must be a whole number of steps", "[time_grid]") {
  REQUIRE(TimeGrid::uniform(1.0, 50, 0.2).delay_steps() == 10);
  REQUIRE(TimeGrid::uniform(1.0, 100, 0.33).delay_steps() == 33);
  REQUIRE_THROWS_AS(TimeGrid::uniform(1.0, 50, 0.33), GridAlignmentError);
  REQUIRE_THROWS_AS(TimeGrid({0.0, 0.1, 0.3, 0.6}, 0.3), GridAlignmentError);
}

TEST_CASE("nearest aligned step count", "[time_grid]") {
  REQUIRE(nearest_aligned_steps(1.0, 0.33, 50) == 100u);
  REQUIRE(nearest_aligned_steps(1.0, 0.2, 50) == 50u);
  REQUIRE(nearest_aligned_steps(1.0, 0.25, 7) == 8u);
}

TEST_CASE("index_of finds nodes and rejects off-grid times", "[time_grid]") {
  const TimeGrid g = TimeGrid::uniform(1.0, 10);
  REQUIRE(g.index_of(0.3) == 3);
  REQUIRE(g.index_of(0.3 + 1e-12) == 3);
  REQUIRE_THROWS_AS(g.index_of(0.35), GridAlignmentError);
}

TEST_CASE("property: aligned delays report their step count", "[time_grid][property]") {
  support::Gen gen(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = gen.index(1, 400);
    const std::size_t k = gen.index(1, n);
    const double T = gen.uniform(0.1, 5.0);
    const double delay = T * static_cast<double>(k) / static_cast<double>(n);
    const TimeGrid g = TimeGrid::uniform(T, n, delay);
    REQUIRE(g.delay_steps() == k);
    REQUIRE(nearest_aligned_steps(T, delay, n) == n);
  }
}

TEST_CASE("grid function CSV round trip is exact", "[time_grid][io]") {
  support::Gen gen(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> nodes{0.0};
    const std::size_t n = gen.index(1, 30);
    for (std::size_t i = 0; i < n; ++i) nodes.push_back(nodes.back() + gen.uniform(1e-3, 1.0));
    const std::size_t dim = gen.index(1, 3);
    auto grid = make_grid(TimeGrid(nodes));
    GridFunction f(grid, gen.values(grid->size() * dim, -1e3, 1e3), dim);
    std::stringstream ss;
    write_csv(ss, f);
    const GridFunction back = read_csv(ss);
    REQUIRE(back.dim() == dim);
    REQUIRE(back.grid() == f.grid());
    for (std::size_t i = 0; i < f.values().size(); ++i) REQUIRE(back.values()[i] == f.values()[i]);
  }
}

TEST_CASE("grid function rejects mismatched value counts", "[time_grid][errors]") {
  auto grid = make_grid(TimeGrid::uniform(1.0, 4));
  REQUIRE_THROWS_AS(GridFunction(grid, std::vector<double>(4)), DomainError);
  REQUIRE_THROWS_AS(GridFunction(nullptr, std::vector<double>(5)), DomainError);
  std::stringstream ragged("t,v_1\n0,1\n0.5,2,3\n");
  REQUIRE_THROWS_AS(read_csv(ragged), DomainError);
}
