#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "hk/error.hpp"

namespace hk {

/// Coefficients of the jump-diffusion dX = sigma dW + zeta (dN - lambda dt) + mu dt.
struct MarketParams {
  double mu = 0.0;
  double sigma = 0.2;
  double zeta = 0.0;
  double lambda = 0.0;
  double delta = 1e-8;  // ellipticity floor: sigma + |zeta| >= delta

  bool operator==(const MarketParams&) const = default;
};

/// Loadings of G_-^{-1}.m = phi_m W + (psi_m - 1) N^F, the hazard of the
/// dual optional projection D^{o,F} = int G_- hazard dt, and G_0.
struct HorizonParams {
  double phi_m = 0.0;
  double psi_m = 1.0;
  double hazard = 0.0;
  double g0 = 1.0;

  bool operator==(const HorizonParams&) const = default;

  /// phi_m = 0 and psi_m = 1: m is constant and tau is a pseudo-stopping time.
  bool is_cox() const noexcept { return phi_m == 0.0 && psi_m == 1.0; }
};

inline const MarketParams& validate_market(const MarketParams& p, std::size_t index = 0) {
  auto fail = [&](const std::string& what) {
    throw InvalidParams(what + " violated at grid index " + std::to_string(index));
  };
  if (!std::isfinite(p.mu) || !std::isfinite(p.sigma) || !std::isfinite(p.zeta) ||
      !std::isfinite(p.lambda) || !std::isfinite(p.delta))
    fail("finite coefficients");
  if (!(p.sigma > 0.0)) fail("sigma > 0");
  if (!(p.zeta > -1.0)) fail("zeta > -1");
  if (!(p.delta > 0.0)) fail("delta > 0");
  if (!(p.sigma + std::abs(p.zeta) >= p.delta)) fail("sigma + |zeta| >= delta");
  if (!(p.lambda >= 0.0)) fail("lambda >= 0");
  return p;
}

inline const HorizonParams& validate_horizon(const HorizonParams& h, std::size_t index = 0) {
  auto fail = [&](const std::string& what) {
    throw InvalidParams(what + " violated at grid index " + std::to_string(index));
  };
  if (!std::isfinite(h.phi_m) || !std::isfinite(h.psi_m) || !std::isfinite(h.hazard))
    fail("finite horizon loadings");
  if (!(h.psi_m > 0.0)) fail("psi_m > 0");
  if (!(h.hazard >= 0.0)) fail("hazard >= 0");
  if (!(h.g0 > 0.0 && h.g0 <= 1.0)) fail("g0 in (0, 1]");
  return h;
}

/// Parameters in force on one time segment.
struct Regime {
  double start = 0.0;
  MarketParams market;
  HorizonParams horizon;
};

/// Piecewise-constant model: regimes[i] is in force on [regimes[i].start, regimes[i+1].start).
struct Model {
  std::vector<Regime> regimes;
  double s0 = 1.0;

  static Model constant(const MarketParams& p, const HorizonParams& h, double s0 = 1.0) {
    return Model{{Regime{0.0, p, h}}, s0};
  }

  double g0() const { return regimes.front().horizon.g0; }

  /// Index of the regime in force at t (right-continuous in t).
  std::size_t regime_at(double t) const {
    std::size_t i = 0;
    while (i + 1 < regimes.size() && regimes[i + 1].start <= t) ++i;
    return i;
  }

  bool is_cox() const {
    for (const auto& r : regimes)
      if (!r.horizon.is_cox()) return false;
    return true;
  }
};

inline const Model& validate_model(const Model& m) {
  if (m.regimes.empty()) throw InvalidParams("model has no regimes");
  if (m.regimes.front().start != 0.0) throw InvalidParams("first regime must start at t = 0");
  if (!(m.s0 > 0.0) || !std::isfinite(m.s0)) throw InvalidParams("s0 > 0 violated");
  for (std::size_t i = 0; i < m.regimes.size(); ++i) {
    validate_market(m.regimes[i].market, i);
    validate_horizon(m.regimes[i].horizon, i);
    if (i > 0) {
      if (!(m.regimes[i].start > m.regimes[i - 1].start))
        throw InvalidParams("regime starts must be strictly increasing at index " + std::to_string(i));
      if (m.regimes[i].horizon.g0 != m.regimes[0].horizon.g0)
        throw InvalidParams("g0 must agree across regimes at index " + std::to_string(i));
    }
  }
  return m;
}

}  // namespace hk
