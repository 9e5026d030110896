#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "hk/optimize.hpp"

using namespace hk;
using Catch::Matchers::WithinAbs;

namespace {
const MarketParams kDerived{0.05, 0.2, 0.1, 1.0, 0.01};
}

TEST_CASE("solve_pointwise on the Derived configuration", "[optimize]") {
  CHECK_THAT(solve_pointwise(kDerived, {0.0, 1.0, 0.5, 1.0}), WithinAbs(1.0188411329591559, 1e-10));
  CHECK_THAT(solve_pointwise({0.05, 0.2, 0.0, 1.0, 0.01}, {0.1, 1.0, 0.0, 1.0}),
             WithinAbs((0.05 + 0.2 * 0.1) / 0.04, 1e-14));
  const HorizonParams h2{0.0, 2.0, 0.5, 1.0};
  CHECK_THAT(solve_pointwise(transformed_params(kDerived, h2), transformed_horizon(h2)),
             WithinAbs(2.6900841847812942 / 2.0, 1e-10));
}

TEST_CASE("solve_pointwise agrees with the closed form on a randomized sweep", "[optimize][property]") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> mu(-0.3, 0.4), sigma(0.03, 0.8), zeta(-0.95, 2.0), lam(0.01, 8.0),
      phi(-0.6, 0.6), psi(0.1, 4.0);
  for (int i = 0; i < 1000; ++i) {
    MarketParams p{mu(rng), sigma(rng), zeta(rng), lam(rng), 1e-3};
    if (std::abs(p.zeta) < 1e-3) p.zeta = 1e-3;
    const HorizonParams h{phi(rng), psi(rng), 0.0, 1.0};
    const double closed = theta_tilde(p, h).theta_tilde;
    const double solved = solve_pointwise(p, h);
    CHECK(std::abs(closed - solved) <= 1e-10 * std::max(1.0, std::abs(closed)));
    // r changes sign across the root
    CHECK(kkt_residual(solved - 1e-6 * (1 + std::abs(solved)), p, h) > 0.0);
  }
}

TEST_CASE("golden_section_refine", "[optimize]") {
  auto f = [](double x) { return -(x - 1.0) * (x - 1.0); };
  CHECK_THAT(golden_section_refine(f, -2.0, 0.5, 3.0, 1e-8), WithinAbs(1.0, 1e-8));
  CHECK_THROWS_AS(golden_section_refine(f, -2.0, 0.5, 3.0, 0.0), InvalidParams);
  CHECK_THROWS_AS(golden_section_refine(f, 2.0, 3.0, 4.0, 1e-3), BracketError);
}

TEST_CASE("default theta grid", "[optimize]") {
  const Model m = Model::constant(kDerived, {0.0, 1.0, 0.5, 1.0});
  const auto g = default_theta_grid(m, 1.0188411329591559);
  REQUIRE(g.size() == 41);
  CHECK(g[20] == 1.0188411329591559);
  CHECK_THAT(g[1] - g[0], WithinAbs(0.1, 1e-12));
  // clipping near the pole -1/zeta = -2 when zeta = 0.5
  const Model steep = Model::constant({0.05, 0.2, 0.5, 1.0, 0.01}, {0.0, 1.0, 0.5, 1.0});
  const auto c = default_theta_grid(steep, -1.0);
  CHECK(c.front() > -2.0);
  CHECK(admissible_everywhere(steep, c.front()));
  CHECK(c.size() == 41);
}

TEST_CASE("log-utility objective equals the direct weighted wealth estimator", "[optimize]") {
  Model m;
  m.regimes = {Regime{0.0, kDerived, {0.1, 1.5, 0.5, 1.0}},
               Regime{0.4, {0.02, 0.3, -0.2, 2.0, 0.01}, {-0.1, 0.8, 1.0, 1.0}}};
  PathGenerator gen(m, {1.0, 32});
  LogUtilityObjective obj(gen, 200, 6);
  for (double th : {-0.5, 0.7, 2.0}) {
    const auto s = StrategySpec::constant(th);
    for (std::size_t i = 0; i < 200; ++i) {
      const auto b = gen.generate(6, i);
      const auto lv = wealth_path(b, s);
      const auto lj = left_limits(b, lv, wealth_jumps(b, s));
      CHECK_THAT(obj.path_value(i, th), WithinAbs(weighted_expect_stopped(b, lv, lj), 1e-12));
    }
  }
}

TEST_CASE("grid search in the zero-drift market peaks at 0", "[optimize][mc]") {
  const Model m = Model::constant({0.0, 0.2, 0.1, 1.0, 0.01}, {0.0, 1.0, 0.5, 1.0});
  SearchSpec s;
  s.theta_grid = default_theta_grid(m, 0.0);
  s.n_paths = 20000;
  const auto res = grid_search_log_utility(m, {1.0, 64}, s);
  CHECK(std::abs(res.theta_star) <= 0.1 + 1e-12);
  CHECK(res.curve.size() == 41);
}

TEST_CASE("grid search recovers theta_tilde and refines it", "[optimize][mc]") {
  const Model m = Model::constant(kDerived, {0.0, 1.0, 0.5, 1.0});
  const double th = theta_tilde(kDerived, {0.0, 1.0, 0.5, 1.0}).theta_tilde;
  SearchSpec s;
  s.theta_grid = default_theta_grid(m, th);
  s.n_paths = 100000;
  s.refine = true;
  s.tolerance = 1e-4;
  const auto res = grid_search_log_utility(m, {1.0, 64}, s);
  CHECK(std::abs(res.theta_star - th) <= 0.1 + 1e-12);
  REQUIRE(res.refined.has_value());
  CHECK(std::abs(*res.refined - th) <= 0.05);
  CHECK_THROWS_AS(grid_search_log_utility(m, {1.0, 4}, SearchSpec{{-20.0, 0.0}, false, 1e-3, 10, 1}), NonAdmissible);
}
