#pragma once

// Command dispatch behind the `hk` executable. Kept in a header so the whole
// command (parse, compute, write CSV) can be run in-process by tests.

#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "hk/config.hpp"
#include "hk/evaluate.hpp"
#include "hk/model_core.hpp"
#include "hk/optimize.hpp"
#include "hk/simulate.hpp"
#include "hk/verify.hpp"

namespace hk {

enum ExitCode : int { kExitOk = 0, kExitVerifyFailed = 1, kExitConfig = 2, kExitNumerical = 3 };

struct CliOptions {
  std::string command;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> paths;
  std::optional<std::string> out_dir;
  std::optional<std::size_t> threads;
};

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"solve", "simulate", "grid-search", "verify", "entropy-check", "numeraire-check"};
  return names;
}

namespace cli {

inline std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

inline int log_level() {
  const char* v = std::getenv("HK_LOG");
  if (!v) return 1;
  const std::string s(v);
  if (s == "quiet" || s == "0") return 0;
  if (s == "debug" || s == "2") return 2;
  return 1;
}

class Writer {
 public:
  Writer(const std::filesystem::path& path, const std::string& header) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw Error("cannot write " + path.string());
    out_ << header << '\n';
  }
  template <class... Cols>
  void row(const Cols&... cols) {
    std::string line;
    ((line += (line.empty() ? "" : ",") + cols), ...);
    out_ << line << '\n';
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

struct Context {
  ExperimentConfig cfg;
  std::filesystem::path dir;
  std::size_t threads = 1;
  std::ostream& out;
  std::ostream& err;

  void info(const std::string& msg) const {
    if (log_level() >= 1) err << "hk: " << msg << '\n';
  }
  void debug(const std::string& msg) const {
    if (log_level() >= 2) err << "hk: " << msg << '\n';
  }
};

inline Writer results_writer(const Context& c) {
  return Writer(c.dir / "results.csv", "experiment_id,quantity,mean,stderr,n_paths,seed");
}

inline void result_row(Writer& w, const Context& c, const std::string& quantity, const McEstimate& e) {
  w.row(field(c.cfg.experiment_id), field(quantity), num(e.mean), num(e.std_err), std::to_string(e.n_paths),
        std::to_string(c.cfg.mc.seed));
}

inline int cmd_solve(const Context& c) {
  Writer w(c.dir / "solve.csv", "regime,start,theta_tilde,phi_root,kkt_residual,admissible,branch,growth_rate,entropy_rate");
  const auto& rs = c.cfg.model.regimes;
  for (std::size_t i = 0; i < rs.size(); ++i) {
    const auto rep = theta_tilde(rs[i].market, rs[i].horizon);
    const double growth = log_growth_rate(rep.theta_tilde, rs[i].market, rs[i].horizon);
    const double ent = entropy_hellinger_rate(rs[i].market, rs[i].horizon);
    w.row(std::to_string(i), num(rs[i].start), num(rep.theta_tilde), num(rep.phi_root), num(rep.kkt_residual),
          std::string(rep.admissible ? "true" : "false"), std::string(to_string(rep.branch)), num(growth), num(ent));
    c.out << "regime " << i << " (t >= " << rs[i].start << "): theta_tilde = " << num(rep.theta_tilde)
          << ", phi_root = " << num(rep.phi_root) << ", kkt_residual = " << num(rep.kkt_residual)
          << ", admissible = " << (rep.admissible ? "yes" : "no") << ", branch = " << to_string(rep.branch) << '\n';
    if (!rep.admissible) return kExitNumerical;
  }
  return kExitOk;
}

inline int cmd_simulate(const Context& c) {
  const auto& cfg = c.cfg;
  const PathGenerator gen(cfg.model, cfg.grid);
  const auto opt = optimal_strategy(cfg.model);
  {
    Writer w(c.dir / "paths.csv", "path_index,t,S,G,logV,logZ,logZm,is_jump");
    const std::size_t n_dump = std::min<std::size_t>(cfg.dump_paths, cfg.mc.n_paths);
    for (std::size_t i = 0; i < n_dump; ++i) {
      const auto b = gen.generate(cfg.mc.seed, i);
      const auto lv = wealth_path(b, opt);
      const auto d = deflator_path(b, opt);
      for (std::size_t k = 0; k < b.n_nodes(); ++k)
        w.row(std::to_string(i), num(b.t[k]), num(cfg.model.s0 * std::exp(b.log_s[k])), num(b.g[k]), num(lv[k]),
              num(d.log_z[k]), num(b.log_zm[k]), std::string(b.is_jump[k] ? "1" : "0"));
    }
  }
  const auto res = run_paths(
      gen, cfg.mc.n_paths, cfg.mc.seed, 5,
      [&](const PathBundle& b, std::span<double> out) {
        const auto lv = wealth_path(b, opt);
        const auto lvl = left_limits(b, lv, wealth_jumps(b, opt));
        out[0] = std::exp(b.log_s.back());
        out[1] = std::exp(b.log_zm.back());
        out[2] = b.g.back() + b.dof.back();
        out[3] = weighted_expect_stopped(b, lv, lvl);
        out[4] = b.azema_violation ? 1.0 : 0.0;
      },
      c.threads);
  auto w = results_writer(c);
  static const char* kNames[] = {"S_T_over_S0", "Zm_T", "G_T_plus_D_T", "stopped_log_wealth_optimal", "azema_violation_rate"};
  for (std::size_t j = 0; j < 5; ++j) {
    const auto e = res.estimate_column(j, cfg.mc.ci_level);
    result_row(w, c, kNames[j], e);
    c.out << kNames[j] << " = " << num(e.mean) << " +- " << num(e.std_err) << '\n';
  }
  return kExitOk;
}

inline int cmd_grid_search(const Context& c) {
  const auto& cfg = c.cfg;
  const double center = theta_tilde(cfg.model.regimes.front().market, cfg.model.regimes.front().horizon).theta_tilde;
  SearchSpec spec;
  spec.theta_grid = cfg.search.theta_grid.empty()
                        ? default_theta_grid(cfg.model, center, cfg.search.n_points, cfg.search.half_width)
                        : cfg.search.theta_grid;
  spec.refine = cfg.search.refine;
  spec.tolerance = cfg.search.tolerance;
  spec.n_paths = cfg.mc.n_paths;
  spec.seed = cfg.mc.seed;
  const PathGenerator gen(cfg.model, cfg.grid);
  c.debug("building log-utility features on " + std::to_string(spec.n_paths) + " paths");
  const LogUtilityObjective obj(gen, spec.n_paths, spec.seed, c.threads, cfg.mc.ci_level);
  const auto res = grid_search_log_utility(obj, cfg.model, spec);
  {
    Writer w(c.dir / "curve.csv", "theta,mean,stderr");
    for (const auto& p : res.curve) w.row(num(p.theta), num(p.value.mean), num(p.value.std_err));
  }
  auto w = results_writer(c);
  const McEstimate star{res.theta_star, 0.0, spec.n_paths, cfg.mc.ci_level};
  result_row(w, c, "theta_star", star);
  result_row(w, c, "value_at_theta_star", res.curve[res.argmax].value);
  if (res.refined) result_row(w, c, "theta_refined", McEstimate{*res.refined, 0.0, spec.n_paths, cfg.mc.ci_level});
  result_row(w, c, "theta_tilde_regime0", McEstimate{center, 0.0, spec.n_paths, cfg.mc.ci_level});
  c.out << "theta_star = " << num(res.theta_star) << " (theta_tilde = " << num(center) << ")";
  if (res.refined) c.out << ", refined = " << num(*res.refined);
  c.out << '\n';
  return kExitOk;
}

inline VerifySettings verify_settings(const Context& c) {
  VerifySettings s;
  s.n_paths = c.cfg.mc.n_paths;
  s.seed = c.cfg.mc.seed;
  s.threads = c.threads;
  s.alpha = c.cfg.verify.alpha;
  s.checkpoints = c.cfg.verify.checkpoints;
  s.ci_level = c.cfg.mc.ci_level;
  return s;
}

inline int write_reports(const Context& c, const std::vector<VerifyReport>& reports) {
  Writer w(c.dir / "report.csv", "suite,check,passed,statistic,tolerance,detail,seed,n_paths");
  bool all = true;
  for (const auto& r : reports) {
    c.out << "[" << (r.pass() ? "PASS" : "FAIL") << "] " << r.suite << '\n';
    for (const auto& ch : r.checks) {
      w.row(field(r.suite), field(ch.name), std::string(ch.passed ? "true" : "false"), num(ch.statistic),
            num(ch.tolerance), field(ch.detail), std::to_string(r.seeds.front()), std::to_string(r.n_paths));
      c.out << "    " << (ch.passed ? "ok  " : "FAIL") << ' ' << ch.name << "  statistic=" << num(ch.statistic)
            << " tol=" << num(ch.tolerance);
      if (!ch.detail.empty()) c.out << "  " << ch.detail;
      c.out << '\n';
    }
    all = all && r.pass();
  }
  return all ? kExitOk : kExitVerifyFailed;
}

inline int cmd_verify(const Context& c, const std::vector<std::string>& suites) {
  const auto s = verify_settings(c);
  std::vector<VerifyReport> reports;
  for (const auto& name : suites) {
    c.info("running suite " + name);
    reports.push_back(run_suite(name, c.cfg.model, c.cfg.grid, s));
  }
  return write_reports(c, reports);
}

inline int cmd_entropy(const Context& c) {
  const auto rep = entropy_condition_check(c.cfg.model, c.cfg.grid, verify_settings(c));
  auto w = results_writer(c);
  const auto& a = rep.check("analytic_finite");
  result_row(w, c, "entropy_certificate_analytic", McEstimate{a.statistic, 0.0, rep.n_paths, c.cfg.mc.ci_level});
  return write_reports(c, {rep});
}

}  // namespace cli

/// Runs one command; returns the process exit code. Diagnostics go to `err` as a
/// single line.
inline int run_command(const CliOptions& opt, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  try {
    const auto& cmds = command_names();
    if (std::find(cmds.begin(), cmds.end(), opt.command) == cmds.end())
      throw InvalidParams("unknown command '" + opt.command + "'");
    ExperimentConfig cfg = parse_config(opt.config_path);
    if (opt.seed) cfg.mc.seed = *opt.seed;
    if (opt.paths) {
      if (*opt.paths < 2) throw SchemaError("/mc/n_paths", "--paths must be >= 2");
      cfg.mc.n_paths = *opt.paths;
    }
    if (opt.out_dir) cfg.output_dir = *opt.out_dir;
    const std::size_t threads = opt.threads ? std::max<std::size_t>(1, *opt.threads) : default_threads();
    std::filesystem::create_directories(cfg.output_dir);
    cli::Context c{cfg, cfg.output_dir, threads, out, err};
    c.debug("config " + opt.config_path + ", seed " + std::to_string(cfg.mc.seed) + ", paths " +
            std::to_string(cfg.mc.n_paths) + ", threads " + std::to_string(threads));
    if (opt.command == "solve") return cli::cmd_solve(c);
    if (opt.command == "simulate") return cli::cmd_simulate(c);
    if (opt.command == "grid-search") return cli::cmd_grid_search(c);
    if (opt.command == "verify") return cli::cmd_verify(c, selected_suites(cfg));
    if (opt.command == "entropy-check") return cli::cmd_entropy(c);
    return cli::cmd_verify(c, {"numeraire"});
  } catch (const SchemaError& e) {
    err << "hk: config error at " << e.what() << '\n';
    return kExitConfig;
  } catch (const ParseError& e) {
    err << "hk: config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InvalidParams& e) {
    err << "hk: invalid input: " << e.what() << '\n';
    return kExitConfig;
  } catch (const Error& e) {
    err << "hk: numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "hk: " << e.what() << '\n';
    return kExitNumerical;
  }
}

}  // namespace hk
