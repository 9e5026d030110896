// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hk/cli.hpp"
#include "hk/model_core.hpp"
#include "hk/optimize.hpp"
#include "hk/verify.hpp"

using namespace hk;
namespace fs = std::filesystem;

namespace {

const MarketParams kMarket{0.05, 0.2, 0.1, 1.0, 0.01};
const HorizonParams kLoaded{0.1, 1.5, 0.5, 1.0};  // criteria 2, 6, 7, 8
const HorizonParams kDerived{0.0, 1.0, 0.5, 1.0};  // criteria 3, 4, 5
const GridSpec kGrid{1.0, 256};
const std::size_t kPaths = 100000;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string f(double x, int prec = 6) {
  std::ostringstream os;
  os.precision(prec);
  os << x;
  return os.str();
}

VerifySettings settings(std::size_t n, std::uint64_t seed = 42) {
  VerifySettings s;
  s.n_paths = n;
  s.seed = seed;
  s.threads = default_threads();
  return s;
}

std::string failed_checks(const VerifyReport& r) {
  std::string out;
  for (const auto& c : r.checks)
    if (!c.passed) out += " " + c.name + "(" + f(c.statistic) + ")";
  return out.empty() ? "" : " failed:" + out;
}

Outcome criterion1() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> mu(-0.3, 0.4), sigma(0.03, 0.8), zeta(0.01, 2.0), lam(0.01, 8.0), phi(-0.6, 0.6),
      psi(0.1, 4.0), sign(0.0, 1.0);
  double worst_solver = 0.0, worst_root = 0.0;
  for (int i = 0; i < 1000; ++i) {
    MarketParams p{mu(rng), sigma(rng), zeta(rng), lam(rng), 1e-3};
    if (sign(rng) < 0.35) p.zeta = -std::min(0.95, p.zeta * 0.45);
    const HorizonParams h{phi(rng), psi(rng), 0.0, 1.0};
    const double th = theta_tilde(p, h).theta_tilde;
    worst_solver = std::max(worst_solver, std::abs(th - solve_pointwise(p, h)));
    const double via_root = (quadratic_root(p, h) - 1.0) / p.zeta;
    worst_root = std::max(worst_root, std::abs(th - via_root) / std::max(1.0, std::abs(th)));
  }
  const double secs = seconds_since(t0);
  return {worst_solver <= 1e-10 && worst_root <= 1e-12 && secs < 1.0,
          "max |theta~ - solver| = " + f(worst_solver, 3) + ", max rel root-form gap = " + f(worst_root, 3) + ", " +
              f(secs, 3) + " s"};
}

Outcome criterion2() {
  const auto t0 = Clock::now();
  const auto r = duality_check(Model::constant(kMarket, kLoaded), kGrid, settings(1000));
  const double secs = seconds_since(t0);
  const auto& c = r.check("pathwise_product");
  return {c.passed && secs < 5.0, "max node |Z~ E(theta~.X) - 1| = " + f(c.statistic, 3) + " on 1000 paths, " + f(secs, 3) + " s"};
}

Outcome criterion3() {
  const auto t0 = Clock::now();
  const Model m = Model::constant(kMarket, kDerived);
  const double th = theta_tilde(kMarket, kDerived).theta_tilde;
  const PathGenerator gen(m, kGrid);
  const LogUtilityObjective obj(gen, kPaths, 42, default_threads());
  SearchSpec s;
  s.theta_grid = default_theta_grid(m, th);
  s.n_paths = kPaths;
  const auto res = grid_search_log_utility(obj, m, s);
  const double cell = s.theta_grid[1] - s.theta_grid[0];
  const bool in_cell = std::abs(res.theta_star - th) <= cell * (1 + 1e-9);
  const auto at = obj(th), lo = obj(th - 0.5), hi = obj(th + 0.5);
  const double z_lo = (at.mean - lo.mean) / combined_stderr(at, lo);
  const double z_hi = (at.mean - hi.mean) / combined_stderr(at, hi);
  const double secs = seconds_since(t0);
  return {s.theta_grid.size() == 41 && in_cell && z_lo > 2.0 && z_hi > 2.0 && secs < 60.0,
          "argmax " + f(res.theta_star) + " vs theta~ " + f(th) + " (cell " + f(cell, 3) + "), gaps " + f(z_lo, 3) + " / " +
              f(z_hi, 3) + " combined se, " + f(secs, 3) + " s"};
}

Outcome criterion4() {
  bool same = true;
  const double base = theta_tilde(kMarket, {0.0, 1.0, 0.0, 1.0}).theta_tilde;
  for (double hz : {0.0, 0.25, 1.0}) same = same && theta_tilde(kMarket, {0.0, 1.0, hz, 1.0}).theta_tilde == base;
  const auto r = pseudo_stopping_check(Model::constant(kMarket, kDerived), kGrid, settings(kPaths));
  const auto& c = r.check("weighted_vs_direct_tau");
  return {same && r.pass(), std::string("theta~ bit-identical across hazards: ") + (same ? "yes" : "no") +
                                ", estimator gap " + f(c.statistic, 3) + " combined se (" + c.detail + ")" +
                                failed_checks(r)};
}

Outcome criterion5() {
  bool ok = true;
  std::string detail;
  for (double psi : {0.5, 1.0, 2.0}) {
    SearchResult sr;
    const auto r = sbar_equivalence_check(Model::constant(kMarket, {0.0, psi, 0.5, 1.0}), kGrid, settings(kPaths), &sr);
    ok = ok && r.pass();
    detail += "psi " + f(psi) + ": root gap " + f(r.check("root_equals_theta_over_psi").statistic, 2) + ", peak " +
              f(sr.theta_star) + failed_checks(r) + "; ";
  }
  return {ok, detail};
}

Outcome criterion6() {
  const auto r = numeraire_check(Model::constant(kMarket, kLoaded), kGrid, settings(kPaths));
  double worst = -1e300;
  for (const auto& c : r.checks)
    if (c.name.rfind("f_side_", 0) == 0 || c.name.rfind("g_side_", 0) == 0) worst = std::max(worst, c.statistic);
  const auto& p = r.check("perturbed_candidate_fails");
  return {r.pass(), "worst z over 8 ratios " + f(worst, 3) + " (threshold " + f(p.tolerance, 4) +
                        "), perturbed candidate worst z " + f(p.statistic, 3) + failed_checks(r)};
}

Outcome criterion7() {
  const auto r = entropy_condition_check(Model::constant(kMarket, kLoaded), kGrid, settings(kPaths));
  const auto cox = entropy_condition_check(Model::constant(kMarket, kDerived), kGrid, settings(1000));
  const bool zero = cox.check("analytic_finite").statistic == 0.0 && cox.check("mc_matches_analytic").detail.rfind("0 vs 0", 0) == 0;
  return {r.pass() && zero, "analytic " + f(r.check("analytic_finite").statistic, 10) + ", MC " +
                                r.check("mc_matches_analytic").detail + ", Cox case exactly 0: " + (zero ? "yes" : "no") +
                                failed_checks(r)};
}

Outcome criterion8() {
  const auto r = martingale_check(Model::constant(kMarket, kLoaded), kGrid, settings(kPaths));
  return {r.pass(), "E[Zm_T] " + r.check("zm_mean_one").detail + "; E[G_T + D_T] " + r.check("g_plus_d_mean_g0").detail +
                        "; G > 1 on " + f(100 * r.check("azema_violation_rate").statistic, 3) + "% of paths (reported only)" +
                        failed_checks(r)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Outcome criterion9() {
  const std::string cfg = std::string(HK_SOURCE_DIR) + "/configs/loaded_horizon.json";
  const auto root = fs::temp_directory_path() / "hk_acceptance_determinism";
  fs::remove_all(root);
  std::size_t files = 0;
  std::string bad;
  for (const auto& cmd : command_names()) {
    std::vector<fs::path> dirs;
    for (std::size_t th : {1, 4, 8, 1}) {
      dirs.push_back(root / (cmd + "_" + std::to_string(th) + "_" + std::to_string(dirs.size())));
      std::ostringstream out, err;
      const int code = run_command({cmd, cfg, 2024, 5000, dirs.back().string(), th}, out, err);
      if (code != kExitOk) bad += " " + cmd + " exit " + std::to_string(code);
    }
    for (const auto& e : fs::directory_iterator(dirs[0])) {
      ++files;
      const auto ref = slurp(e.path());
      for (std::size_t i = 1; i < dirs.size(); ++i)
        if (slurp(dirs[i] / e.path().filename()) != ref) bad += " " + cmd + "/" + e.path().filename().string();
    }
  }
  return {bad.empty() && files > 0,
          std::to_string(files) + " CSVs from 6 commands compared at threads 1, 4, 8 and a repeat" +
              (bad.empty() ? "" : "; mismatches:" + bad)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"closed form vs solver and root form", criterion1},
      {"pathwise duality product", criterion2},
      {"grid-search optimality", criterion3},
      {"pseudo-stopping invariance", criterion4},
      {"transformed-model equivalence", criterion5},
      {"numeraire supermartingale property", criterion6},
      {"entropy-Hellinger certificate", criterion7},
      {"martingale sanity", criterion8},
      {"determinism across thread counts", criterion9},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::printf("criterion %zu: %s  %s  [%s]\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
