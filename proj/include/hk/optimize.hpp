#pragma once

// Numerical oracles for the log-optimal proportion: a safeguarded root solver on
// the first-order condition and a Monte Carlo grid search with common random
// numbers, optionally refined by golden-section search.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "hk/error.hpp"
#include "hk/evaluate.hpp"
#include "hk/model_core.hpp"
#include "hk/simulate.hpp"

namespace hk {

/// Root of kkt_residual by Newton steps safeguarded with bisection. The bracket
/// sits 1e-6 inside the pole theta = -1/zeta (in units of 1 + theta zeta) and
/// is pushed closer if r does not change sign there.
inline double solve_pointwise(const MarketParams& p_in, const HorizonParams& h_in) {
  const MarketParams& p = validate_market(p_in);
  const HorizonParams& h = validate_horizon(h_in);
  const double s2 = p.sigma * p.sigma;
  if (std::abs(p.zeta) < kDiffusionZetaThreshold || p.lambda == 0.0)
    return (p.mu + p.sigma * h.phi_m + p.lambda * p.zeta * (h.psi_m - 1.0)) / s2;

  auto r = [&](double th) { return kkt_residual(th, p, h); };
  const double pole = -1.0 / p.zeta;
  double lo, hi;
  // The admissible side of the pole is where r -> +inf (zeta > 0) or -inf (zeta < 0).
  double gap = 1e-6;
  double near = pole + gap / std::abs(p.zeta) * (p.zeta > 0 ? 1.0 : -1.0);
  auto far_point = [&](double start, double dir) {
    double step = 1.0 + std::abs(start);
    double x = start + dir * step;
    for (int i = 0; i < 200; ++i) {
      const double v = r(x);
      if ((dir > 0 && v < 0.0) || (dir < 0 && v > 0.0)) return x;
      step *= 2.0;
      x = start + dir * step;
    }
    throw NumericalFailure("solve_pointwise: no sign change found");
  };
  if (p.zeta > 0) {
    for (int i = 0; i < 10 && !(r(near) > 0.0); ++i) {
      gap *= 1e-2;
      near = pole + gap / p.zeta;
    }
    if (!(r(near) > 0.0)) throw NumericalFailure("solve_pointwise: r(a) > 0 fails near the pole");
    lo = near;
    hi = far_point(std::max(near, 0.0), +1.0);
  } else {
    for (int i = 0; i < 10 && !(r(near) < 0.0); ++i) {
      gap *= 1e-2;
      near = pole - gap / -p.zeta;
    }
    if (!(r(near) < 0.0)) throw NumericalFailure("solve_pointwise: r(b) < 0 fails near the pole");
    hi = near;
    lo = far_point(std::min(near, 0.0), -1.0);
  }
  if (!(r(lo) > 0.0 && r(hi) < 0.0)) throw NumericalFailure("solve_pointwise: bracket has no sign change");

  double x = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double fx = r(x);
    if (fx == 0.0) return x;
    if (fx > 0.0) lo = x; else hi = x;
    double nx = x - fx / kkt_residual_slope(x, p, h);
    if (!(nx > lo && nx < hi)) nx = 0.5 * (lo + hi);
    if (std::abs(nx - x) <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(nx)) ||
        hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(nx)))
      return nx;
    x = nx;
  }
  return x;
}

/// True when theta keeps 1 + theta zeta > 0 in every regime that can jump.
inline bool admissible_everywhere(const Model& m, double theta) {
  for (const auto& r : m.regimes)
    if (r.market.lambda > 0.0 && !(1.0 + theta * r.market.zeta > 0.0)) return false;
  return true;
}

/// n points spanning [center - half_width, center + half_width], clipped 1e-6
/// inside the admissibility poles of every jumping regime.
inline std::vector<double> default_theta_grid(const Model& m, double center, std::size_t n = 41, double half_width = 2.0) {
  if (n < 2) throw InvalidParams("theta grid needs at least 2 points");
  double lo = center - half_width, hi = center + half_width;
  for (const auto& r : m.regimes) {
    if (r.market.lambda <= 0.0 || r.market.zeta == 0.0) continue;
    const double pole = -1.0 / r.market.zeta;
    const double margin = 1e-6 / std::abs(r.market.zeta);
    if (r.market.zeta > 0) lo = std::max(lo, pole + margin);
    else hi = std::min(hi, pole - margin);
  }
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) {
    // Symmetric construction keeps the center exactly on the grid for odd n.
    const double u = static_cast<double>(i) / static_cast<double>(n - 1);
    g[i] = (lo == center - half_width && hi == center + half_width)
               ? center + half_width * (2.0 * u - 1.0)
               : lo + (hi - lo) * u;
  }
  return g;
}

/// Per-path sufficient statistics of the stopped expected log-utility of a
/// constant proportion theta:
///   value(theta) = theta A - theta^2 C + sum_r J_r ln(1 + theta zeta_r).
class LogUtilityObjective {
 public:
  LogUtilityObjective(const PathGenerator& gen, std::size_t n_paths, std::uint64_t seed, std::size_t threads = 1,
                      double ci_level = 0.99)
      : model_(gen.model_ptr()), ci_level_(ci_level) {
    const std::size_t nr = model_->regimes.size();
    samples_ = run_paths(
        gen, n_paths, seed, 2 + nr,
        [nr](const PathBundle& b, std::span<double> out) {
          const auto w = stopping_weights(b, b.last());
          double sw = 0.0, hv = 0.0;
          std::vector<double> nj(nr, 0.0);
          double a = 0.0, c = 0.0;
          std::vector<double> j(nr, 0.0);
          for (std::size_t k = 1; k < b.n_nodes(); ++k) {
            const MarketParams& p = b.regime(k - 1).market;
            const double dt = b.t[k] - b.t[k - 1];
            sw += p.sigma * b.dW[k - 1] + (p.mu - p.lambda * p.zeta) * dt;
            hv += 0.5 * p.sigma * p.sigma * dt;
            const std::uint32_t rg = b.cell_regime[k - 1];
            if (b.is_jump[k]) nj[rg] += 1.0;
            const double wk = w.value_w[k] + w.left_w[k];
            a += wk * sw;
            c += wk * hv;
            for (std::size_t r = 0; r < nr; ++r) j[r] += wk * nj[r];
            if (b.is_jump[k]) j[rg] -= w.left_w[k];
          }
          out[0] = a;
          out[1] = c;
          for (std::size_t r = 0; r < nr; ++r) out[2 + r] = j[r];
        },
        threads);
  }

  double path_value(std::size_t i, double theta) const {
    const auto row = samples_.row(i);
    double v = theta * row[0] - theta * theta * row[1];
    for (std::size_t r = 0; r < model_->regimes.size(); ++r) {
      if (row[2 + r] == 0.0) continue;
      const double one_plus = 1.0 + theta * model_->regimes[r].market.zeta;
      if (!(one_plus > 0.0)) throw NonAdmissible("1 + theta*zeta <= 0 in log-utility objective");
      v += row[2 + r] * std::log(one_plus);
    }
    return v;
  }

  std::vector<double> path_values(double theta) const {
    std::vector<double> v(samples_.n_paths);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = path_value(i, theta);
    return v;
  }

  McEstimate operator()(double theta) const { return estimate(path_values(theta), ci_level_, samples_.paired); }

  /// Paired standard error of value(a) - value(b) on the common paths.
  McEstimate difference(double a, double b) const {
    auto va = path_values(a);
    const auto vb = path_values(b);
    for (std::size_t i = 0; i < va.size(); ++i) va[i] -= vb[i];
    return estimate(va, ci_level_, samples_.paired);
  }

  std::size_t n_paths() const { return samples_.n_paths; }

 private:
  std::shared_ptr<const Model> model_;
  double ci_level_;
  SampleMatrix samples_;
};

/// Maximizes a unimodal f on [lo, hi]; `mid` must satisfy f(mid) >= f(lo), f(hi).
template <class F>
double golden_section_refine(F&& f, double lo, double mid, double hi, double tolerance) {
  if (!(tolerance > 0.0)) throw InvalidParams("golden_section_refine: tolerance must be > 0");
  if (!(lo < mid && mid < hi)) throw BracketError("golden_section_refine: need lo < mid < hi");
  const double fm = f(mid);
  if (fm < f(lo) || fm < f(hi)) throw BracketError("golden_section_refine: initial triple is not unimodal");
  constexpr double kInvPhi = 0.6180339887498949;
  double a = lo, b = hi;
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tolerance) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

struct SearchSpec {
  std::vector<double> theta_grid;
  bool refine = false;
  double tolerance = 1e-3;
  std::size_t n_paths = 100000;
  std::uint64_t seed = 42;
};

struct CurvePoint {
  double theta = 0.0;
  McEstimate value;
};

struct SearchResult {
  double theta_star = 0.0;
  std::size_t argmax = 0;
  std::vector<CurvePoint> curve;
  std::optional<double> refined;
};

/// Grid search of theta -> E[ln E(theta.X)_{tau ^ T}] on common random numbers.
inline SearchResult grid_search_log_utility(const LogUtilityObjective& obj, const Model& m, const SearchSpec& s) {
  if (s.theta_grid.size() < 2) throw InvalidParams("theta grid needs at least 2 points");
  for (double th : s.theta_grid)
    if (!admissible_everywhere(m, th)) throw NonAdmissible("grid point " + std::to_string(th) + " is not admissible");
  SearchResult res;
  for (double th : s.theta_grid) res.curve.push_back({th, obj(th)});
  for (std::size_t i = 1; i < res.curve.size(); ++i)
    if (res.curve[i].value.mean > res.curve[res.argmax].value.mean) res.argmax = i;
  res.theta_star = res.curve[res.argmax].theta;
  if (s.refine) {
    const std::size_t i = res.argmax;
    if (i == 0 || i + 1 == res.curve.size()) throw BracketError("grid maximum lies on the boundary; cannot refine");
    auto f = [&](double th) { return obj(th).mean; };
    res.refined = golden_section_refine(f, res.curve[i - 1].theta, res.curve[i].theta, res.curve[i + 1].theta, s.tolerance);
  }
  return res;
}

inline SearchResult grid_search_log_utility(const Model& m, const GridSpec& g, const SearchSpec& s, std::size_t threads = 1) {
  PathGenerator gen(m, g);
  LogUtilityObjective obj(gen, s.n_paths, s.seed, threads);
  return grid_search_log_utility(obj, m, s);
}

}  // namespace hk
