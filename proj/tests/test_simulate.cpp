#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "hk/evaluate.hpp"
#include "hk/model_core.hpp"
#include "hk/simulate.hpp"

using namespace hk;
using Catch::Matchers::WithinAbs;

namespace {

const MarketParams kMarket{0.05, 0.2, 0.1, 1.0, 0.01};
const HorizonParams kHorizon{0.1, 1.5, 0.5, 1.0};

double sum_dw(const PathBundle& b) {
  double w = 0;
  for (double d : b.dW) w += d;
  return w;
}

}  // namespace

TEST_CASE("pure diffusion is exact", "[simulate]") {
  const MarketParams p{0.05, 0.2, 0.1, 0.0, 0.01};
  const GridSpec g{1.0, 256};
  for (std::uint64_t i = 0; i < 20; ++i) {
    const auto b = gen_path(Model::constant(p, {0.0, 1.0, 0.0, 1.0}, 1.0), g, 42, i);
    CHECK(b.jump_times.empty());
    CHECK(b.n_nodes() == 257);
    CHECK_THAT(b.log_s.back(), WithinAbs(p.sigma * sum_dw(b) + (p.mu - 0.5 * p.sigma * p.sigma) * 1.0, 1e-12));
  }
}

TEST_CASE("gen_path is deterministic in (seed, path_index)", "[simulate]") {
  PathGenerator gen(Model::constant(kMarket, kHorizon), {1.0, 64});
  const auto a = gen.generate(5, 17), b = gen.generate(5, 17), c = gen.generate(5, 18);
  CHECK(a.t == b.t);
  CHECK(a.dW == b.dW);
  CHECK(a.log_s == b.log_s);
  CHECK(a.g == b.g);
  CHECK(a.dW != c.dW);
}

TEST_CASE("jump bookkeeping", "[simulate]") {
  PathGenerator gen(Model::constant(kMarket, kHorizon), {2.0, 32});
  std::size_t total = 0;
  for (std::uint64_t i = 0; i < 200; ++i) {
    const auto b = gen.generate(1, i);
    std::size_t jumps = 0;
    for (std::size_t k = 1; k < b.n_nodes(); ++k) {
      REQUIRE(b.t[k] > b.t[k - 1]);
      if (!b.is_jump[k]) {
        CHECK(b.g[k] == b.g_left[k]);
        continue;
      }
      ++jumps;
      const double dt = b.t[k] - b.t[k - 1];
      const double cont = kMarket.sigma * b.dW[k - 1] + (kMarket.mu - kMarket.lambda * kMarket.zeta - 0.02) * dt;
      CHECK_THAT(b.log_s[k] - b.log_s[k - 1] - cont, WithinAbs(std::log1p(kMarket.zeta), 1e-12));
      CHECK_THAT(b.g[k] / b.g_left[k], WithinAbs(kHorizon.psi_m, 1e-12));
    }
    CHECK(jumps == b.jump_times.size());
    CHECK(b.base_nodes.size() == 33);
    for (std::size_t j = 0; j < b.base_nodes.size(); ++j) CHECK_THAT(b.t[b.base_nodes[j]], WithinAbs(2.0 * j / 32.0, 1e-15));
    total += jumps;
  }
  CHECK(total > 300);  // ~400 expected
}

TEST_CASE("MC mean of S_T / S0 is e^{mu T}", "[simulate][mc]") {
  PathGenerator gen(Model::constant(kMarket, kHorizon, 2.0), {1.0, 16});
  const auto e = mc_run(gen, [](const PathBundle& b) { return std::exp(b.log_s.back() - b.log_s.front()); }, 100000, 42);
  CHECK(std::abs(e.mean - std::exp(0.05)) <= 3.0 * e.std_err);
}

TEST_CASE("E(G_-^{-1}.m) path", "[simulate]") {
  SECTION("pseudo-stopping case is identically one") {
    const auto b = gen_path(Model::constant(kMarket, {0.0, 1.0, 0.5, 1.0}), {1.0, 64}, 3, 0);
    for (double v : zm_path(b)) CHECK(v == 0.0);
  }
  SECTION("matches the bundle and jumps by psi") {
    PathGenerator gen(Model::constant(kMarket, kHorizon), {1.0, 64});
    for (std::uint64_t i = 0; i < 50; ++i) {
      const auto b = gen.generate(9, i);
      const auto lz = zm_path(b);
      for (std::size_t k = 0; k < b.n_nodes(); ++k) CHECK_THAT(lz[k], WithinAbs(b.log_zm[k], 1e-13));
      // G = G0 Zm exp(-hazard t)
      CHECK_THAT(b.g.back(), WithinAbs(std::exp(lz.back() - 0.5), 1e-12));
    }
  }
  SECTION("martingale mean at T") {
    PathGenerator gen(Model::constant(kMarket, kHorizon), {1.0, 16});
    const auto e = mc_run(gen, [](const PathBundle& b) { return std::exp(b.log_zm.back()); }, 100000, 42);
    CHECK(std::abs(e.mean - 1.0) <= 3.0 * e.std_err);
  }
}

TEST_CASE("m = G + D^{o,F} reconstructs a martingale", "[simulate][mc]") {
  PathGenerator gen(Model::constant(kMarket, kHorizon), {1.0, 64});
  const auto m = run_paths(gen, 50000, 4, 5, [](const PathBundle& b, std::span<double> out) {
    const auto cps = checkpoint_nodes(b, 5);
    for (std::size_t j = 0; j < cps.size(); ++j) out[j] = b.g[cps[j]] + b.dof[cps[j]];
  });
  for (std::size_t j = 0; j < 5; ++j) {
    const auto e = m.estimate_column(j);
    CHECK(std::abs(e.mean - 1.0) <= 3.0 * std::max(e.std_err, 1e-15));
  }
}

TEST_CASE("Azema diagnostic", "[simulate]") {
  PathGenerator cox(Model::constant(kMarket, {0.0, 1.0, 0.5, 0.9}), {1.0, 32});
  for (std::uint64_t i = 0; i < 100; ++i) CHECK_FALSE(cox.generate(1, i).azema_violation);
  PathGenerator loaded(Model::constant(kMarket, {0.1, 1.5, 0.5, 1.0}), {1.0, 32});
  std::size_t viol = 0;
  for (std::uint64_t i = 0; i < 500; ++i) viol += loaded.generate(1, i).azema_violation;
  CHECK(viol > 0);
}

TEST_CASE("wealth_path", "[simulate]") {
  PathGenerator gen(Model::constant(kMarket, kHorizon, 3.0), {1.0, 64});
  for (std::uint64_t i = 0; i < 30; ++i) {
    const auto b = gen.generate(2, i);
    for (double v : wealth_path(b, StrategySpec::constant(0.0))) CHECK(v == 0.0);
    const auto one = wealth_path(b, StrategySpec::constant(1.0));
    for (std::size_t k = 0; k < b.n_nodes(); ++k) CHECK_THAT(one[k], WithinAbs(b.log_s[k] - std::log(3.0), 1e-12));
  }
  // theta zeta = 1 doubles wealth across a jump
  const auto b = gen.generate(2, 0);
  const auto lv = wealth_path(b, StrategySpec::constant(10.0));
  const auto jumps = wealth_jumps(b, StrategySpec::constant(10.0));
  for (std::size_t k = 1; k < b.n_nodes(); ++k)
    if (b.is_jump[k]) CHECK_THAT(std::exp(jumps[k]), WithinAbs(2.0, 1e-14));
  CHECK(lv.size() == b.n_nodes());
  CHECK_THROWS_AS(wealth_path(b, StrategySpec::constant(-10.0)), NonAdmissible);
  CHECK_THROWS_AS(wealth_path(b, StrategySpec{{0.0, 0.123456}, {1.0, 2.0}}), InvalidParams);
}

TEST_CASE("log-optimal deflator: duality product and Hellinger decomposition", "[simulate]") {
  const Model m = Model::constant(kMarket, kHorizon);
  PathGenerator gen(m, {1.0, 256});
  const auto opt = optimal_strategy(m);
  for (std::uint64_t i = 0; i < 100; ++i) {
    const auto b = gen.generate(7, i);
    const auto lv = wealth_path(b, opt);
    const auto d = deflator_path(b, opt);
    std::vector<double> jumps;
    for (std::size_t k = 0; k < b.n_nodes(); ++k) {
      CHECK(std::abs(std::exp(d.log_z[k] + lv[k]) - 1.0) <= 1e-10);
      if (b.is_jump[k]) jumps.push_back(d.kernel_jumps[k]);
    }
    const std::size_t L = b.last();
    CHECK_THAT(-d.log_z[L], WithinAbs(-d.kernel[L] + hellinger0_pathwise(d.kernel_qv[L], jumps), 1e-12));
  }
  // perturbed kernel breaks the product identity
  const auto b = gen.generate(7, 0);
  const auto d = deflator_path(b, StrategySpec::constant(opt.theta[0] + 0.1));
  const auto lv = wealth_path(b, opt);
  CHECK(std::abs(std::exp(d.log_z.back() + lv.back()) - 1.0) > 1e-6);
}

TEST_CASE("zero-drift market has Z~ identically one", "[simulate]") {
  const Model m = Model::constant({0.0, 0.2, 0.1, 1.0, 0.01}, {0.0, 1.0, 0.5, 1.0});
  const auto opt = optimal_strategy(m);
  CHECK(opt.theta[0] == 0.0);
  const auto b = gen_path(m, {1.0, 64}, 1, 0);
  for (double v : deflator_path(b, opt).log_z) CHECK(v == 0.0);
}

TEST_CASE("F-side deflator divided by Z^(m) equals Z~", "[simulate]") {
  const Model m = Model::constant(kMarket, kHorizon);
  PathGenerator gen(m, {1.0, 128});
  const auto opt = optimal_strategy(m);
  for (std::uint64_t i = 0; i < 50; ++i) {
    const auto b = gen.generate(8, i);
    const auto zf = f_deflator_path(b, opt);
    const auto d = deflator_path(b, opt);
    for (std::size_t k = 0; k < b.n_nodes(); ++k) CHECK_THAT(zf[k] - b.log_zm[k], WithinAbs(d.log_z[k], 1e-10));
  }
}

TEST_CASE("Cox horizon sampling", "[simulate]") {
  const MarketParams p = kMarket;
  SECTION("no hazard never defaults") {
    const auto b = gen_path(Model::constant(p, {0.0, 1.0, 0.0, 1.0}), {1.0, 16}, 1, 0);
    for (double u : {0.01, 0.5, 0.999}) CHECK_FALSE(cox_sample_tau(b, u).has_value());
  }
  SECTION("u -> 1 gives tau -> 0, u >= G0 gives tau = 0") {
    const auto b = gen_path(Model::constant(p, {0.0, 1.0, 0.7, 1.0}), {1.0, 16}, 1, 0);
    CHECK(*cox_sample_tau(b, 1.0 - 1e-12) < 1e-10);
    CHECK(*cox_sample_tau(b, 0.9) > *cox_sample_tau(b, 0.99));
    const auto b2 = gen_path(Model::constant(p, {0.0, 1.0, 0.7, 0.8}), {1.0, 16}, 1, 0);
    CHECK(*cox_sample_tau(b2, 0.85) == 0.0);
  }
  SECTION("survival law is exponential") {
    const double hz = 0.8;
    const auto b = gen_path(Model::constant(p, {0.0, 1.0, hz, 1.0}), {2.0, 16}, 1, 0);
    CounterStream s(11, StreamId::tau, 0);
    const int n = 100000;
    for (double t : {0.25, 1.0, 1.7}) {
      int alive = 0;
      CounterStream ss = s;
      for (int i = 0; i < n; ++i) {
        const auto tau = cox_sample_tau(b, ss.uniform());
        alive += !tau.has_value() || *tau > t;
      }
      const double ph = static_cast<double>(alive) / n;
      const double q = std::exp(-hz * t);
      CHECK(std::abs(ph - q) <= 3.0 * std::sqrt(q * (1 - q) / n));
    }
  }
  SECTION("outside the Cox regime") {
    const auto b = gen_path(Model::constant(p, kHorizon), {1.0, 16}, 1, 0);
    CHECK_THROWS_AS(cox_sample_tau(b, 0.5), UnsupportedRegime);
  }
}

TEST_CASE("log_wealth_at interpolates by Brownian bridge", "[simulate]") {
  const Model m = Model::constant(kMarket, {0.0, 1.0, 0.5, 1.0});
  const auto b = gen_path(m, {1.0, 8}, 3, 1);
  const auto s = StrategySpec::constant(1.3);
  const auto lv = wealth_path(b, s);
  for (std::size_t k = 0; k < b.n_nodes(); ++k) CHECK(log_wealth_at(b, s, lv, b.t[k], 0.7) == lv[k]);
  // bridge mean (z = 0) is linear in time within a jump-free cell
  const double a = b.t[0], e = b.t[1];
  const double mid = log_wealth_at(b, s, lv, 0.5 * (a + e), 0.0);
  if (!b.is_jump[1]) CHECK_THAT(mid, WithinAbs(0.5 * (lv[0] + lv[1]), 1e-14));
}

TEST_CASE("piecewise-constant regimes", "[simulate]") {
  Model m;
  m.regimes = {Regime{0.0, {0.05, 0.2, 0.1, 0.0, 0.01}, {0.0, 1.0, 0.2, 1.0}},
               Regime{0.3, {-0.02, 0.4, 0.1, 0.0, 0.01}, {0.0, 1.0, 1.0, 1.0}}};
  PathGenerator gen(m, {1.0, 10});
  const auto b = gen.generate(1, 2);
  CHECK(std::binary_search(b.t.begin(), b.t.end(), 0.3));
  double w1 = 0, w2 = 0;
  for (std::size_t c = 0; c < b.n_cells(); ++c) {
    CHECK(b.cell_regime[c] == (b.t[c] < 0.3 ? 0u : 1u));
    (b.t[c] < 0.3 ? w1 : w2) += b.dW[c];
  }
  const double expect = 0.2 * w1 + (0.05 - 0.02) * 0.3 + 0.4 * w2 + (-0.02 - 0.08) * 0.7;
  CHECK_THAT(b.log_s.back(), WithinAbs(expect, 1e-12));
  // G = exp(-int hazard)
  CHECK_THAT(b.g.back(), WithinAbs(std::exp(-(0.2 * 0.3 + 1.0 * 0.7)), 1e-13));
  // per-regime optimal strategy has knots on the grid
  const auto opt = optimal_strategy(m);
  CHECK(opt.theta.size() == 2);
  CHECK_NOTHROW(wealth_path(b, opt));
}

TEST_CASE("antithetic pairs negate Brownian increments", "[simulate]") {
  const Model m = Model::constant({0.05, 0.2, 0.1, 0.0, 0.01}, {0.0, 1.0, 0.0, 1.0});
  PathGenerator gen(m, {1.0, 16, true});
  const auto a = gen.generate(3, 4), b = gen.generate(3, 5);
  for (std::size_t c = 0; c < a.n_cells(); ++c) CHECK(a.dW[c] == -b.dW[c]);
}
