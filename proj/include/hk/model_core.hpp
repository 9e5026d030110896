#pragma once

// Closed-form log-optimal proportion for the jump-diffusion market stopped at a
// random horizon, its first-order condition, the transformed market S̄, and the
// Hellinger-type rates. All functions are pure.

#include <cmath>
#include <limits>
#include <span>

#include "hk/error.hpp"
#include "hk/params.hpp"

namespace hk {

/// |zeta| below this is treated as a pure diffusion.
inline constexpr double kDiffusionZetaThreshold = 1e-10;

enum class SolveBranch { quadratic, diffusion_limit };

inline const char* to_string(SolveBranch b) {
  return b == SolveBranch::quadratic ? "quadratic" : "diffusion-limit";
}

/// First-order condition in proportion form:
///   r(theta) = mu - lambda zeta + sigma phi_m - sigma^2 theta + psi_m lambda zeta / (1 + theta zeta).
/// r is strictly decreasing on the admissible interval and vanishes at the optimum.
inline double kkt_residual(double theta, const MarketParams& p, const HorizonParams& h) {
  const double base = p.mu - p.lambda * p.zeta + p.sigma * h.phi_m - p.sigma * p.sigma * theta;
  if (p.lambda == 0.0) return base;
  const double one_plus = 1.0 + theta * p.zeta;
  if (!(one_plus > 0.0)) throw NonAdmissible("1 + theta*zeta <= 0 in kkt_residual");
  return base + h.psi_m * p.lambda * p.zeta / one_plus;
}

/// Derivative of kkt_residual in theta (always negative).
inline double kkt_residual_slope(double theta, const MarketParams& p, const HorizonParams& h) {
  const double one_plus = 1.0 + theta * p.zeta;
  return -p.sigma * p.sigma - h.psi_m * p.lambda * p.zeta * p.zeta / (one_plus * one_plus);
}

struct SolveReport {
  double theta_tilde = 0.0;
  double phi_root = 1.0;  // 1 + theta_tilde * zeta
  double kkt_residual = 0.0;
  bool admissible = false;
  SolveBranch branch = SolveBranch::quadratic;
};

/// Log-optimal proportion. Solves
///   sigma^2 zeta theta^2 + (sigma^2 - a zeta) theta - (a + psi lambda zeta) = 0,  a = mu - lambda zeta + sigma phi_m,
/// which is r(theta)(1 + theta zeta) = 0, using the cancellation-free q-form and
/// keeping the root with 1 + theta zeta > 0.
inline SolveReport theta_tilde(const MarketParams& p_in, const HorizonParams& h_in) {
  const MarketParams& p = validate_market(p_in);
  const HorizonParams& h = validate_horizon(h_in);
  const double s2 = p.sigma * p.sigma;
  SolveReport rep;

  if (std::abs(p.zeta) < kDiffusionZetaThreshold || p.lambda == 0.0) {
    rep.branch = SolveBranch::diffusion_limit;
    rep.theta_tilde = (p.mu + p.sigma * h.phi_m + p.lambda * p.zeta * (h.psi_m - 1.0)) / s2;
  } else {
    rep.branch = SolveBranch::quadratic;
    const double a = p.mu - p.lambda * p.zeta + p.sigma * h.phi_m;
    const double qa = s2 * p.zeta;
    const double qb = s2 - a * p.zeta;
    const double qc = -(a + h.psi_m * p.lambda * p.zeta);
    // b^2 - 4ac rewritten as a sum of nonnegative terms.
    const double disc = (s2 + a * p.zeta) * (s2 + a * p.zeta) + 4.0 * s2 * h.psi_m * p.lambda * p.zeta * p.zeta;
    const double q = -0.5 * (qb + std::copysign(std::sqrt(disc), qb));
    const double r1 = q / qa;
    const double r2 = qc / q;
    rep.theta_tilde = (1.0 + r1 * p.zeta > 1.0 + r2 * p.zeta) ? r1 : r2;
  }
  rep.phi_root = 1.0 + rep.theta_tilde * p.zeta;
  rep.admissible = p.lambda == 0.0 || rep.phi_root > 0.0;
  if (!std::isfinite(rep.theta_tilde)) throw NumericalFailure("theta_tilde is not finite");
  rep.kkt_residual = rep.admissible ? kkt_residual(rep.theta_tilde, p, h)
                                    : std::numeric_limits<double>::quiet_NaN();
  return rep;
}

/// Positive root phi of  -(sigma^2/zeta) phi^2 + Gamma phi + psi lambda zeta = 0,
/// Gamma = mu - lambda zeta + sigma phi_m + sigma^2/zeta. Equals 1 + zeta theta_tilde.
inline double quadratic_root(const MarketParams& p_in, const HorizonParams& h_in) {
  const MarketParams& p = validate_market(p_in);
  const HorizonParams& h = validate_horizon(h_in);
  if (std::abs(p.zeta) < kDiffusionZetaThreshold)
    throw InvalidParams("quadratic_root requires zeta != 0; use the diffusion branch");
  const double s2 = p.sigma * p.sigma;
  const double gamma = p.mu - p.lambda * p.zeta + p.sigma * h.phi_m + s2 / p.zeta;
  const double sq = std::sqrt(gamma * gamma + 4.0 * s2 * p.lambda * h.psi_m);
  const double sg = std::copysign(1.0, p.zeta) * gamma;
  const double az = std::abs(p.zeta);
  const double phi = sg >= 0.0 ? az * (sg + sq) / (2.0 * s2) : 2.0 * h.psi_m * p.lambda * az / (sq - sg);
  if (!(phi > 0.0) || !std::isfinite(phi)) throw NumericalFailure("quadratic root is not positive");
  return phi;
}

/// Coefficients of S̄ = S0 E(X̄):
///   dX̄ = sqrt(psi) sigma dW + psi zeta dN^F + [lambda zeta (psi - 1) + mu + sigma phi_m (1 - sqrt(psi))] dt.
inline MarketParams transformed_params(const MarketParams& p_in, const HorizonParams& h_in) {
  const MarketParams& p = validate_market(p_in);
  const HorizonParams& h = validate_horizon(h_in);
  const double rpsi = std::sqrt(h.psi_m);
  MarketParams out = p;
  out.sigma = rpsi * p.sigma;
  out.zeta = h.psi_m * p.zeta;
  out.lambda = p.lambda;
  out.mu = p.lambda * p.zeta * (h.psi_m - 1.0) + p.mu + p.sigma * h.phi_m * (1.0 - rpsi);
  return out;
}

/// Horizon loadings carried by the S̄ model: beta_m = phi_m / (S̄ sigma sqrt(psi))
/// gives phī = beta_m S̄ sigma̅ = phi_m, and the jump component of m is absorbed
/// into zeta̅, so psi̅ = 1. No stopping: hazard 0, G0 = 1.
inline HorizonParams transformed_horizon(const HorizonParams& h_in) {
  const HorizonParams& h = validate_horizon(h_in);
  return HorizonParams{h.phi_m, 1.0, 0.0, 1.0};
}

/// Time-rate of the entropy-Hellinger process of G_-^{-1}.m:
///   phi_m^2 / 2 + lambda (psi ln psi - psi + 1) >= 0.
inline double entropy_hellinger_rate(const MarketParams& p, const HorizonParams& h) {
  if (!(h.psi_m > 0.0)) throw InvalidParams("psi_m > 0 violated");
  return 0.5 * h.phi_m * h.phi_m + p.lambda * (h.psi_m * std::log(h.psi_m) - h.psi_m + 1.0);
}

/// H0(N) = <N^c>/2 + sum (dN - ln(1 + dN)).
inline double hellinger0_pathwise(double continuous_qv, std::span<const double> jumps) {
  if (!(continuous_qv >= 0.0)) throw DomainError("continuous quadratic variation must be >= 0");
  double acc = 0.5 * continuous_qv;
  for (double j : jumps) {
    if (!(j > -1.0)) throw NonAdmissible("jump <= -1 in hellinger0_pathwise");
    acc += j - std::log1p(j);
  }
  return acc;
}

/// Drift rate of E[ln E(theta.X)] on [0, tau] under the enlarged filtration,
/// where W has drift phi_m and N has intensity lambda psi_m.
inline double log_growth_rate(double theta, const MarketParams& p, const HorizonParams& h) {
  double g = theta * (p.mu - p.lambda * p.zeta + p.sigma * h.phi_m) - 0.5 * theta * theta * p.sigma * p.sigma;
  if (p.lambda > 0.0) {
    const double one_plus = 1.0 + theta * p.zeta;
    if (!(one_plus > 0.0)) throw NonAdmissible("1 + theta*zeta <= 0 in log_growth_rate");
    g += p.lambda * h.psi_m * std::log(one_plus);
  }
  return g;
}

}  // namespace hk
