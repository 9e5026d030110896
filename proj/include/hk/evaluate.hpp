#pragma once

// Monte Carlo engine. Expectations of processes stopped at tau ^ T are computed
// from F-paths alone through the survival weights:
//   E[f(tau ^ T)] = E[G_T f(T) + int_0^T f dD^{o,F}].
// Per-path work may run on any number of threads; reductions are always done in
// path_index order so results are bit-identical for every thread count.

#include <algorithm>
#include <atomic>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "hk/error.hpp"
#include "hk/simulate.hpp"

namespace hk {

struct McEstimate {
  double mean = 0.0;
  double std_err = 0.0;
  std::size_t n_paths = 0;
  double ci_level = 0.99;

  double half_width() const {
    const boost::math::normal nd;
    return boost::math::quantile(nd, 0.5 + 0.5 * ci_level) * std_err;
  }
};

/// sqrt(a.std_err^2 + b.std_err^2)
inline double combined_stderr(const McEstimate& a, const McEstimate& b) {
  return std::hypot(a.std_err, b.std_err);
}

/// Mean and standard error of i.i.d. samples; with `paired`, consecutive
/// (2k, 2k+1) samples are antithetic and the error is taken over pair means.
inline McEstimate estimate(std::span<const double> xs, double ci_level = 0.99, bool paired = false) {
  if (xs.size() < 2) throw InvalidParams("estimate needs at least 2 samples");
  McEstimate e;
  e.n_paths = xs.size();
  e.ci_level = ci_level;
  double sum = 0.0;
  for (double x : xs) sum += x;
  e.mean = sum / static_cast<double>(xs.size());
  double ss = 0.0;
  if (paired) {
    if (xs.size() % 2 != 0) throw InvalidParams("antithetic estimate needs an even path count");
    const std::size_t np = xs.size() / 2;
    for (std::size_t k = 0; k < np; ++k) {
      const double d = 0.5 * (xs[2 * k] + xs[2 * k + 1]) - e.mean;
      ss += d * d;
    }
    e.std_err = std::sqrt(ss / static_cast<double>(np - (np > 1 ? 1 : 0)) / static_cast<double>(np));
  } else {
    for (double x : xs) ss += (x - e.mean) * (x - e.mean);
    const double n = static_cast<double>(xs.size());
    e.std_err = std::sqrt(ss / (n - 1.0) / n);
  }
  return e;
}

/// Survival weights: the stopped expectation is sum_k value_w[k] f(t_k) + left_w[k] f(t_k-).
/// The dD^{o,F} integral uses the trapezoid rule with left limits at jump nodes.
struct StoppingWeights {
  std::vector<double> value_w;
  std::vector<double> left_w;
};

inline StoppingWeights stopping_weights(const PathBundle& b, std::size_t end_node) {
  StoppingWeights w{std::vector<double>(end_node + 1, 0.0), std::vector<double>(end_node + 1, 0.0)};
  for (std::size_t c = 0; c < end_node; ++c) {
    const double half = 0.5 * b.regime(c).horizon.hazard * (b.t[c + 1] - b.t[c]);
    w.value_w[c] += half * b.g[c];
    w.left_w[c + 1] += half * b.g_left[c + 1];
  }
  w.value_w[end_node] += b.g[end_node];
  return w;
}

/// One path's evaluation of E[f(tau ^ t_end) 1{tau > 0}]; `f_left` holds f(t-)
/// (pass `f` again for a continuous functional).
inline double weighted_expect_stopped(const PathBundle& b, std::span<const double> f, std::span<const double> f_left,
                                      std::size_t end_node) {
  if (end_node >= b.n_nodes() || f.size() < end_node + 1 || f_left.size() < end_node + 1)
    throw InvalidParams("weighted_expect_stopped: functional shorter than path");
  double acc = 0.0;
  for (std::size_t i = 0; i <= end_node; ++i)
    if (!std::isfinite(f[i]) || !std::isfinite(f_left[i])) throw DomainError("functional is not finite at node " + std::to_string(i));
  for (std::size_t c = 0; c < end_node; ++c) {
    const double half = 0.5 * b.regime(c).horizon.hazard * (b.t[c + 1] - b.t[c]);
    acc += half * (f[c] * b.g[c] + f_left[c + 1] * b.g_left[c + 1]);
  }
  return acc + b.g[end_node] * f[end_node];
}

inline double weighted_expect_stopped(const PathBundle& b, std::span<const double> f, std::span<const double> f_left) {
  return weighted_expect_stopped(b, f, f_left, b.last());
}

/// weighted_expect_stopped at every node of `ends` (ascending) in one pass.
inline std::vector<double> weighted_expect_stopped_at(const PathBundle& b, std::span<const double> f,
                                                      std::span<const double> f_left, std::span<const std::size_t> ends) {
  std::vector<double> out;
  out.reserve(ends.size());
  double acc = 0.0;
  std::size_t c = 0;
  for (std::size_t e : ends) {
    if (e >= b.n_nodes() || (!out.empty() && e < c)) throw InvalidParams("weighted_expect_stopped_at: bad end node");
    for (; c < e; ++c) {
      if (!std::isfinite(f[c + 1]) || !std::isfinite(f_left[c + 1]) || !std::isfinite(f[c]))
        throw DomainError("functional is not finite at node " + std::to_string(c + 1));
      const double half = 0.5 * b.regime(c).horizon.hazard * (b.t[c + 1] - b.t[c]);
      acc += half * (f[c] * b.g[c] + f_left[c + 1] * b.g_left[c + 1]);
    }
    if (!std::isfinite(f[e])) throw DomainError("functional is not finite at node " + std::to_string(e));
    out.push_back(acc + b.g[e] * f[e]);
  }
  return out;
}

/// Per-path outputs, row-major [path][output].
struct SampleMatrix {
  std::size_t n_paths = 0;
  std::size_t n_out = 0;
  bool paired = false;
  std::vector<double> data;

  std::span<const double> row(std::size_t i) const { return {data.data() + i * n_out, n_out}; }
  std::vector<double> column(std::size_t j) const {
    std::vector<double> c(n_paths);
    for (std::size_t i = 0; i < n_paths; ++i) c[i] = data[i * n_out + j];
    return c;
  }
  McEstimate estimate_column(std::size_t j, double ci_level = 0.99) const { return hk::estimate(column(j), ci_level, paired); }
};

inline std::size_t default_threads() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : n;
}

/// Runs `estimator(bundle, out_row)` for path indices 0..n_paths-1. Errors are
/// rethrown for the lowest failing path index, with that index attached.
template <class Estimator>
SampleMatrix run_paths(const PathGenerator& gen, std::size_t n_paths, std::uint64_t seed, std::size_t n_out,
                       Estimator&& estimator, std::size_t threads = 1) {
  if (n_paths < 2) throw InvalidParams("n_paths >= 2 required");
  if (gen.grid().antithetic && n_paths % 2 != 0) throw InvalidParams("antithetic sampling needs an even n_paths");
  SampleMatrix m{n_paths, n_out, gen.grid().antithetic, std::vector<double>(n_paths * n_out, 0.0)};
  threads = std::clamp<std::size_t>(threads, 1, n_paths);
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::size_t err_index = n_paths;
  std::string err_msg;
  int err_kind = 0;

  auto worker = [&] {
    PathBundle b;
    constexpr std::size_t kChunk = 64;
    for (;;) {
      const std::size_t start = next.fetch_add(kChunk);
      if (start >= n_paths) return;
      const std::size_t stop = std::min(n_paths, start + kChunk);
      for (std::size_t i = start; i < stop; ++i) {
        try {
          gen.generate(seed, i, b);
          estimator(static_cast<const PathBundle&>(b), std::span<double>(m.data.data() + i * n_out, n_out));
        } catch (const Error& e) {
          std::lock_guard lk(err_mu);
          if (i < err_index) {
            err_index = i;
            err_msg = e.what();
            err_kind = dynamic_cast<const NonAdmissible*>(&e) ? 1 : dynamic_cast<const DomainError*>(&e) ? 2
                     : dynamic_cast<const InvalidParams*>(&e) ? 3 : 4;
          }
          return;
        }
      }
    }
  };

  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < threads; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (err_index < n_paths) {
    const std::string msg = "path " + std::to_string(err_index) + ": " + err_msg;
    switch (err_kind) {
      case 1: throw NonAdmissible(msg);
      case 2: throw DomainError(msg);
      case 3: throw InvalidParams(msg);
      default: throw NumericalFailure(msg);
    }
  }
  return m;
}

/// Scalar estimator -> McEstimate.
template <class Estimator>
McEstimate mc_run(const PathGenerator& gen, Estimator&& estimator, std::size_t n_paths, std::uint64_t seed,
                  std::size_t threads = 1, double ci_level = 0.99) {
  auto m = run_paths(
      gen, n_paths, seed, 1, [&](const PathBundle& b, std::span<double> out) { out[0] = estimator(b); }, threads);
  return m.estimate_column(0, ci_level);
}

struct IncrementTest {
  double mean = 0.0;
  double std_err = 0.0;
  double z = 0.0;
  bool pass = true;
};

struct SupermartingaleReport {
  std::vector<IncrementTest> increments;
  double threshold = 0.0;  // one-sided z quantile after Bonferroni
  double worst_z = 0.0;
  bool pass = true;
};

/// One-sided z-test of H0: E[X_{k+1} - X_k] <= 0 for every consecutive checkpoint
/// pair, Bonferroni-corrected over the k - 1 increments.
inline SupermartingaleReport supermartingale_test(const SampleMatrix& process, double alpha) {
  if (process.n_out < 2) throw InvalidParams("supermartingale_test needs k >= 2 checkpoints");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidParams("alpha must lie in (0, 1)");
  for (double v : process.data)
    if (!std::isfinite(v)) throw DomainError("supermartingale_test: non-finite process value");
  SupermartingaleReport rep;
  const std::size_t n_inc = process.n_out - 1;
  const boost::math::normal nd;
  rep.threshold = boost::math::quantile(boost::math::complement(nd, alpha / static_cast<double>(n_inc)));
  rep.worst_z = -std::numeric_limits<double>::infinity();
  std::vector<double> inc(process.n_paths);
  for (std::size_t k = 0; k < n_inc; ++k) {
    for (std::size_t i = 0; i < process.n_paths; ++i)
      inc[i] = process.data[i * process.n_out + k + 1] - process.data[i * process.n_out + k];
    const auto e = estimate(inc, 0.99, process.paired);
    IncrementTest it;
    it.mean = e.mean;
    it.std_err = e.std_err;
    if (e.std_err > 0.0) {
      it.z = e.mean / e.std_err;
    } else {
      it.z = e.mean > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    }
    it.pass = !(it.z > rep.threshold);
    rep.worst_z = std::max(rep.worst_z, it.z);
    rep.pass = rep.pass && it.pass;
    rep.increments.push_back(it);
  }
  return rep;
}

/// Refined node indices of k checkpoints on the uniform grid: round(j n / (k - 1)).
inline std::vector<std::size_t> checkpoint_nodes(const PathBundle& b, std::size_t k) {
  if (k < 2) throw InvalidParams("need k >= 2 checkpoints");
  const std::size_t n = b.base_nodes.size() - 1;
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < k; ++j) {
    const auto idx = static_cast<std::size_t>(std::llround(static_cast<double>(j * n) / static_cast<double>(k - 1)));
    out.push_back(b.base_nodes[idx]);
  }
  return out;
}

}  // namespace hk
