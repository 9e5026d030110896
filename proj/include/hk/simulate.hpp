#pragma once

// Exact-in-distribution path generation for (W, N, S, G) and the processes built
// on top of a path: log-wealth, the log-optimal deflator, E(G_-^{-1}.m) and the
// Cox horizon. Every stochastic exponential is advanced by its exact
// log-increment, so piecewise-constant coefficients carry no time-step bias.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hk/error.hpp"
#include "hk/model_core.hpp"
#include "hk/params.hpp"
#include "hk/rng.hpp"

namespace hk {

/// Uniform base grid on [0, horizon]. Regime starts and Poisson jump times are
/// always inserted as extra nodes.
struct GridSpec {
  double horizon = 1.0;
  std::size_t n_steps = 256;
  bool antithetic = false;  // pair Brownian increments of paths 2k and 2k+1
};

inline void validate_grid(const GridSpec& g) {
  if (!(g.horizon > 0.0) || !std::isfinite(g.horizon)) throw InvalidParams("grid horizon T > 0 violated");
  if (g.n_steps < 1) throw InvalidParams("grid n_steps >= 1 violated");
}

/// Piecewise-constant proportion: theta[i] on [starts[i], starts[i+1]).
struct StrategySpec {
  std::vector<double> starts{0.0};
  std::vector<double> theta{0.0};

  static StrategySpec constant(double th) { return StrategySpec{{0.0}, {th}}; }

  double at(double t) const {
    std::size_t i = 0;
    while (i + 1 < starts.size() && starts[i + 1] <= t) ++i;
    return theta[i];
  }
};

/// Per-regime log-optimal proportion as a strategy.
inline StrategySpec optimal_strategy(const Model& m) {
  StrategySpec s{{}, {}};
  for (const auto& r : m.regimes) {
    const auto rep = theta_tilde(r.market, r.horizon);
    if (!rep.admissible) throw NumericalFailure("theta_tilde not admissible");
    s.starts.push_back(r.start);
    s.theta.push_back(rep.theta_tilde);
  }
  return s;
}

/// One simulated scenario on the refined grid. Node arrays have size n_nodes(),
/// cell arrays have size n_nodes() - 1. Values at a jump node are post-jump.
struct PathBundle {
  std::shared_ptr<const Model> model;
  std::uint64_t seed = 0;
  std::uint64_t path_index = 0;

  std::vector<double> t;
  std::vector<std::uint8_t> is_jump;
  std::vector<std::size_t> base_nodes;  // refined index of uniform node i * T / n

  std::vector<std::uint32_t> cell_regime;
  std::vector<double> dW;

  std::vector<double> jump_times;
  std::vector<double> log_s;
  std::vector<double> g;
  std::vector<double> g_left;  // G_{t-}
  std::vector<double> log_zm;  // ln E(G_-^{-1}.m)
  std::vector<double> d_dof;   // per cell, trapezoid of G hazard dt
  std::vector<double> dof;     // cumulative D^{o,F}
  std::vector<double> tdrift_w;  // int phi_m dt, the [W,m]/G correction of T(W)
  std::vector<double> tdrift_n;  // sum (psi_m - 1)/psi_m over jumps, the [N,m]/G correction of T(N^F)

  bool azema_violation = false;
  double max_g = 0.0;

  std::size_t n_nodes() const { return t.size(); }
  std::size_t n_cells() const { return t.empty() ? 0 : t.size() - 1; }
  const Regime& regime(std::size_t cell) const { return model->regimes[cell_regime[cell]]; }
  std::size_t last() const { return t.size() - 1; }
};

class PathGenerator {
 public:
  PathGenerator(Model model, GridSpec grid) : model_(std::make_shared<Model>(std::move(model))), grid_(grid) {
    validate_model(*model_);
    validate_grid(grid_);
    const double T = grid_.horizon;
    const std::size_t n = grid_.n_steps;
    std::vector<double> knots;
    for (const auto& r : model_->regimes)
      if (r.start > 0.0 && r.start < T) knots.push_back(r.start);
    const double tol = 1e-12 * T;
    std::size_t k = 0;
    for (std::size_t i = 1; i <= n; ++i) {
      double ti = (i == n) ? T : T * static_cast<double>(i) / static_cast<double>(n);
      while (k < knots.size() && knots[k] < ti - tol) {
        if (knots[k] > base_t_.back() + tol) base_t_.push_back(knots[k]);
        ++k;
      }
      if (k < knots.size() && std::abs(knots[k] - ti) <= tol) ti = knots[k++];
      uniform_index_.push_back(base_t_.size());
      base_t_.push_back(ti);
    }
    for (std::size_t c = 0; c + 1 < base_t_.size(); ++c)
      base_regime_.push_back(static_cast<std::uint32_t>(model_->regime_at(0.5 * (base_t_[c] + base_t_[c + 1]))));
  }

  const Model& model() const { return *model_; }
  std::shared_ptr<const Model> model_ptr() const { return model_; }
  const GridSpec& grid() const { return grid_; }

  void generate(std::uint64_t seed, std::uint64_t path_index, PathBundle& b) const;

  PathBundle generate(std::uint64_t seed, std::uint64_t path_index) const {
    PathBundle b;
    generate(seed, path_index, b);
    return b;
  }

 private:
  std::shared_ptr<const Model> model_;
  GridSpec grid_;
  std::vector<double> base_t_{0.0};
  std::vector<std::size_t> uniform_index_;
  std::vector<std::uint32_t> base_regime_;
};

inline void PathGenerator::generate(std::uint64_t seed, std::uint64_t path_index, PathBundle& b) const {
  const std::size_t nb = base_t_.size() - 1;
  const auto& regimes = model_->regimes;

  // Poisson jump times by inverting the cumulative intensity.
  b.jump_times.clear();
  {
    CounterStream js(seed, StreamId::jumps, path_index);
    double e = js.exponential();
    for (std::size_t c = 0; c < nb; ++c) {
      const double lam = regimes[base_regime_[c]].market.lambda;
      double tcur = base_t_[c];
      const double tend = base_t_[c + 1];
      if (lam <= 0.0) continue;
      while (e <= lam * (tend - tcur)) {
        tcur += e / lam;
        b.jump_times.push_back(std::min(tcur, tend));
        e = js.exponential();
      }
      e -= lam * (tend - tcur);
    }
  }

  // Brownian motion on the base grid, then bridged into the jump times.
  b.t.clear();
  b.is_jump.clear();
  b.cell_regime.clear();
  b.dW.clear();
  b.base_nodes.assign(uniform_index_.size() + 1, 0);
  {
    CounterStream ws(seed, StreamId::brownian, grid_.antithetic ? path_index / 2 : path_index);
    CounterStream bs(seed, StreamId::bridge, path_index);
    const double sign = (grid_.antithetic && (path_index & 1u)) ? -1.0 : 1.0;
    std::size_t jp = 0;
    std::size_t ui = 0;
    b.t.push_back(0.0);
    b.is_jump.push_back(0);
    b.base_nodes[0] = 0;
    double wprev = 0.0;
    for (std::size_t c = 0; c < nb; ++c) {
      const double a = base_t_[c];
      const double e = base_t_[c + 1];
      const double dw_cell = sign * std::sqrt(e - a) * ws.normal();
      const double w_end = wprev + dw_cell;
      double p = a, wp = wprev;
      while (jp < b.jump_times.size() && b.jump_times[jp] < e) {
        const double s = b.jump_times[jp++];
        const double ws_val = wp + (s - p) / (e - p) * (w_end - wp) + std::sqrt((s - p) * (e - s) / (e - p)) * bs.normal();
        b.dW.push_back(ws_val - wp);
        b.cell_regime.push_back(base_regime_[c]);
        b.t.push_back(s);
        b.is_jump.push_back(1);
        p = s;
        wp = ws_val;
      }
      b.dW.push_back(w_end - wp);
      b.cell_regime.push_back(base_regime_[c]);
      b.t.push_back(e);
      b.is_jump.push_back(0);
      while (jp < b.jump_times.size() && b.jump_times[jp] == e) {
        b.is_jump.back() = 1;  // jump exactly on a base node (measure zero)
        ++jp;
      }
      if (ui < uniform_index_.size() && uniform_index_[ui] == c + 1) b.base_nodes[++ui] = b.t.size() - 1;
      wprev = w_end;
    }
    b.base_nodes.resize(ui + 1);
  }

  const std::size_t nn = b.t.size();
  b.log_s.assign(nn, 0.0);
  b.g.assign(nn, 0.0);
  b.g_left.assign(nn, 0.0);
  b.log_zm.assign(nn, 0.0);
  b.d_dof.assign(nn - 1, 0.0);
  b.dof.assign(nn, 0.0);
  b.tdrift_w.assign(nn, 0.0);
  b.tdrift_n.assign(nn, 0.0);
  b.model = model_;
  b.seed = seed;
  b.path_index = path_index;

  const double g0 = model_->g0();
  b.log_s[0] = std::log(model_->s0);
  b.g[0] = b.g_left[0] = g0;
  double log_hz = 0.0;  // - int hazard
  b.azema_violation = false;
  b.max_g = g0;
  for (std::size_t c = 0; c + 1 < nn; ++c) {
    const Regime& r = regimes[b.cell_regime[c]];
    const MarketParams& p = r.market;
    const HorizonParams& h = r.horizon;
    const double dt = b.t[c + 1] - b.t[c];
    const double dw = b.dW[c];
    double ls = b.log_s[c] + p.sigma * dw + (p.mu - p.lambda * p.zeta - 0.5 * p.sigma * p.sigma) * dt;
    double lz = b.log_zm[c] + h.phi_m * dw - (0.5 * h.phi_m * h.phi_m + p.lambda * (h.psi_m - 1.0)) * dt;
    log_hz -= h.hazard * dt;
    const double gl = g0 * std::exp(lz + log_hz);
    double tn = b.tdrift_n[c];
    if (b.is_jump[c + 1]) {
      ls += std::log1p(p.zeta);
      lz += std::log(h.psi_m);
      tn += (h.psi_m - 1.0) / h.psi_m;
    }
    b.log_s[c + 1] = ls;
    b.log_zm[c + 1] = lz;
    b.g_left[c + 1] = gl;
    b.g[c + 1] = g0 * std::exp(lz + log_hz);
    b.tdrift_w[c + 1] = b.tdrift_w[c] + h.phi_m * dt;
    b.tdrift_n[c + 1] = tn;
    b.d_dof[c] = 0.5 * h.hazard * dt * (b.g[c] + gl);
    b.dof[c + 1] = b.dof[c] + b.d_dof[c];
    b.max_g = std::max(b.max_g, b.g[c + 1]);
  }
  b.azema_violation = b.max_g > 1.0;
  for (std::size_t i = 0; i < nn; ++i)
    if (!(b.g[i] > 0.0) || !std::isfinite(b.g[i]) || !std::isfinite(b.log_s[i]))
      throw NumericalFailure("path invariant broken at node " + std::to_string(i) + " of path " + std::to_string(path_index));
}

inline PathBundle gen_path(const Model& m, const GridSpec& g, std::uint64_t seed, std::uint64_t path_index) {
  return PathGenerator(m, g).generate(seed, path_index);
}

namespace detail {

inline void check_strategy_knots(const PathBundle& b, const StrategySpec& s) {
  if (s.starts.empty() || s.starts.size() != s.theta.size() || s.starts.front() != 0.0)
    throw InvalidParams("strategy must have matching starts/theta and start at t = 0");
  for (std::size_t i = 1; i < s.starts.size(); ++i) {
    const double k = s.starts[i];
    if (k >= b.t.back()) continue;
    if (!std::binary_search(b.t.begin(), b.t.end(), k))
      throw InvalidParams("strategy knot " + std::to_string(k) + " is not a grid node");
  }
}

/// Strategy value on each cell (predictable: fixed on [t_c, t_{c+1})).
inline std::vector<double> strategy_per_cell(const PathBundle& b, const StrategySpec& s) {
  check_strategy_knots(b, s);
  std::vector<double> out(b.n_cells());
  std::size_t k = 0;
  for (std::size_t c = 0; c < b.n_cells(); ++c) {
    while (k + 1 < s.starts.size() && s.starts[k + 1] <= b.t[c]) ++k;
    out[c] = s.theta[k];
  }
  return out;
}

}  // namespace detail

/// ln E(theta.X) at every node.
inline std::vector<double> wealth_path(const PathBundle& b, const StrategySpec& s) {
  const auto th = detail::strategy_per_cell(b, s);
  std::vector<double> lv(b.n_nodes(), 0.0);
  for (std::size_t c = 0; c < b.n_cells(); ++c) {
    const MarketParams& p = b.regime(c).market;
    const double dt = b.t[c + 1] - b.t[c];
    const double x = th[c];
    double v = lv[c] + x * p.sigma * b.dW[c] + (x * p.mu - x * p.lambda * p.zeta - 0.5 * x * x * p.sigma * p.sigma) * dt;
    if (p.lambda > 0.0 && !(1.0 + x * p.zeta > 0.0))
      throw NonAdmissible("1 + theta*zeta <= 0 on cell " + std::to_string(c));
    if (b.is_jump[c + 1]) v += std::log1p(x * p.zeta);
    lv[c + 1] = v;
  }
  return lv;
}

/// Left limits of a node functional that jumps by `jump_log` at jump nodes.
inline std::vector<double> left_limits(const PathBundle& b, std::span<const double> f, std::span<const double> jump_part) {
  std::vector<double> out(f.begin(), f.end());
  for (std::size_t i = 1; i < out.size(); ++i)
    if (b.is_jump[i]) out[i] -= jump_part[i];
  return out;
}

/// Jump of ln E(theta.X) at each node (0 off jumps).
inline std::vector<double> wealth_jumps(const PathBundle& b, const StrategySpec& s) {
  const auto th = detail::strategy_per_cell(b, s);
  std::vector<double> out(b.n_nodes(), 0.0);
  for (std::size_t c = 0; c < b.n_cells(); ++c)
    if (b.is_jump[c + 1]) out[c + 1] = std::log1p(th[c] * b.regime(c).market.zeta);
  return out;
}

/// ln Z~ of the log-optimal deflator Z~ = E(K~),
///   K~ = -sigma theta T(W) - (psi zeta theta / (1 + theta zeta)) T(N^F),
/// with T(W) = W - int phi_m dt and T(N^F) = N / psi - lambda t on [0, tau].
struct DeflatorPath {
  std::vector<double> log_z;
  std::vector<double> kernel;        // K~
  std::vector<double> kernel_qv;     // <K~^c>
  std::vector<double> kernel_jumps;  // jump of K~ per node (0 off jumps)
};

inline DeflatorPath deflator_path(const PathBundle& b, const StrategySpec& theta_tilde) {
  const auto th = detail::strategy_per_cell(b, theta_tilde);
  const std::size_t nn = b.n_nodes();
  DeflatorPath d{std::vector<double>(nn, 0.0), std::vector<double>(nn, 0.0), std::vector<double>(nn, 0.0),
                 std::vector<double>(nn, 0.0)};
  for (std::size_t c = 0; c + 1 < nn; ++c) {
    const MarketParams& p = b.regime(c).market;
    const HorizonParams& h = b.regime(c).horizon;
    const double dt = b.t[c + 1] - b.t[c];
    const double x = th[c];
    const double one_plus = 1.0 + x * p.zeta;
    if (p.lambda > 0.0 && !(one_plus > 0.0)) throw NonAdmissible("1 + theta*zeta <= 0 in deflator_path");
    const double load_n = p.lambda > 0.0 ? h.psi_m * p.zeta * x / one_plus : 0.0;
    const double dk = -p.sigma * x * (b.dW[c] - h.phi_m * dt) + load_n * p.lambda * dt;
    const double dqv = p.sigma * p.sigma * x * x * dt;
    double k = d.kernel[c] + dk;
    double lz = d.log_z[c] + dk - 0.5 * dqv;
    if (b.is_jump[c + 1]) {
      const double jump = -load_n / h.psi_m;
      if (!(1.0 + jump > 0.0)) throw NumericalFailure("deflator jump <= -1 at node " + std::to_string(c + 1));
      k += jump;
      lz += std::log1p(jump);
      d.kernel_jumps[c + 1] = jump;
    }
    d.kernel[c + 1] = k;
    d.kernel_qv[c + 1] = d.kernel_qv[c] + dqv;
    d.log_z[c + 1] = lz;
  }
  return d;
}

/// ln of the F-side deflator Z = E(K^F) exp(-V~), with
///   K^F = (phi_m - theta sigma).W + ((psi - 1 - theta zeta)/(1 + theta zeta)).(N - lambda t),
///   V~  = int theta r(theta) dt.
/// For the optimal theta, Z / E(G_-^{-1}.m) reproduces Z~ on [0, tau].
inline std::vector<double> f_deflator_path(const PathBundle& b, const StrategySpec& theta) {
  const auto th = detail::strategy_per_cell(b, theta);
  std::vector<double> lz(b.n_nodes(), 0.0);
  for (std::size_t c = 0; c < b.n_cells(); ++c) {
    const MarketParams& p = b.regime(c).market;
    const HorizonParams& h = b.regime(c).horizon;
    const double dt = b.t[c + 1] - b.t[c];
    const double x = th[c];
    const double cont = h.phi_m - x * p.sigma;
    const double one_plus = 1.0 + x * p.zeta;
    const double kj = p.lambda > 0.0 ? (h.psi_m - 1.0 - x * p.zeta) / one_plus : 0.0;
    const double v_rate = x * kkt_residual(x, p, h);
    double v = lz[c] + cont * b.dW[c] - 0.5 * cont * cont * dt - p.lambda * kj * dt - v_rate * dt;
    if (b.is_jump[c + 1]) v += std::log1p(kj);
    lz[c + 1] = v;
  }
  return lz;
}

/// ln Z^(m) = ln E(G_-^{-1}.m), recomputed from the driving noise.
inline std::vector<double> zm_path(const PathBundle& b) {
  std::vector<double> lz(b.n_nodes(), 0.0);
  for (std::size_t c = 0; c < b.n_cells(); ++c) {
    const MarketParams& p = b.regime(c).market;
    const HorizonParams& h = b.regime(c).horizon;
    const double dt = b.t[c + 1] - b.t[c];
    double v = lz[c] + h.phi_m * b.dW[c] - (0.5 * h.phi_m * h.phi_m + p.lambda * (h.psi_m - 1.0)) * dt;
    if (b.is_jump[c + 1]) v += std::log(h.psi_m);
    lz[c + 1] = v;
  }
  return lz;
}

/// Cox horizon: tau > t iff u < G0 exp(-int_0^t hazard). Returns 0 when
/// u >= G0 and nullopt when tau is beyond the grid horizon.
inline std::optional<double> cox_sample_tau(const PathBundle& b, double u) {
  if (!b.model->is_cox()) throw UnsupportedRegime("cox_sample_tau requires phi_m = 0 and psi_m = 1");
  if (!(u > 0.0 && u < 1.0)) throw DomainError("uniform variate must lie in (0, 1)");
  const double threshold = std::log(b.model->g0() / u);
  if (threshold <= 0.0) return 0.0;
  double cum = 0.0;
  for (std::size_t c = 0; c < b.n_cells(); ++c) {
    const double hz = b.regime(c).horizon.hazard;
    const double dt = b.t[c + 1] - b.t[c];
    if (cum + hz * dt >= threshold && hz > 0.0) return b.t[c] + (threshold - cum) / hz;
    cum += hz * dt;
  }
  return std::nullopt;
}

/// ln E(theta.X) at an arbitrary time t in [0, T]. Off the grid, W(t) is drawn
/// from the Brownian bridge of its cell using the standard normal `z`.
inline double log_wealth_at(const PathBundle& b, const StrategySpec& s, std::span<const double> log_wealth, double t, double z) {
  if (t <= 0.0) return 0.0;
  if (t >= b.t.back()) return log_wealth.back();
  const auto it = std::upper_bound(b.t.begin(), b.t.end(), t);
  const std::size_t c = static_cast<std::size_t>(it - b.t.begin()) - 1;
  if (b.t[c] == t) return log_wealth[c];
  const MarketParams& p = b.regime(c).market;
  const double x = s.at(b.t[c]);
  const double a = b.t[c], e = b.t[c + 1];
  const double dw = (t - a) / (e - a) * b.dW[c] + std::sqrt((t - a) * (e - t) / (e - a)) * z;
  return log_wealth[c] + x * p.sigma * dw + (x * p.mu - x * p.lambda * p.zeta - 0.5 * x * x * p.sigma * p.sigma) * (t - a);
}

}  // namespace hk
