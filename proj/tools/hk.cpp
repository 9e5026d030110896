#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "hk/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Log-optimal portfolio, deflator and numeraire experiments for a jump-diffusion stopped at a random horizon"};
  app.require_subcommand(1);
  app.footer(
      "Config defaults: grid {T 1, n_steps 256}, mc {n_paths 100000, seed 42, antithetic false, ci_level 0.99},\n"
      "horizon {phi_m 0, psi_m 1, hazard 0, g0 1}, search {n_points 41, half_width 2, refine false, tolerance 1e-3},\n"
      "verify {suites all applicable, alpha 0.01, checkpoints 8}, simulate {dump_paths 10}, output {dir \"out\"}.\n"
      "Exit codes: 0 ok, 1 verification failed, 2 config error, 3 numerical failure. HK_LOG=quiet|info|debug.");

  hk::CliOptions opt;
  std::uint64_t seed = 0;
  std::size_t paths = 0, threads = 0;
  std::string out;
  static const char* kHelp[] = {"print theta~ per regime and write solve.csv",
                                "simulate paths, write paths.csv and results.csv",
                                "grid search of expected stopped log-utility, write curve.csv",
                                "run verification suites, write report.csv",
                                "entropy-Hellinger certificate, write report.csv and results.csv",
                                "numeraire supermartingale checks, write report.csv"};
  std::vector<CLI::App*> subs;
  for (std::size_t i = 0; i < hk::command_names().size(); ++i) {
    auto* sub = app.add_subcommand(hk::command_names()[i], kHelp[i]);
    sub->add_option("--config", opt.config_path, "experiment config (JSON)")->required();
    sub->add_option("--seed", seed, "override mc.seed");
    sub->add_option("--paths", paths, "override mc.n_paths");
    sub->add_option("--out", out, "output directory (overrides output.dir)");
    sub->add_option("--threads", threads, "worker threads; never changes results");
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return hk::kExitConfig;
  }

  for (auto* sub : subs) {
    if (!sub->parsed()) continue;
    opt.command = sub->get_name();
    if (sub->count("--seed")) opt.seed = seed;
    if (sub->count("--paths")) opt.paths = paths;
    if (sub->count("--out")) opt.out_dir = out;
    if (sub->count("--threads")) opt.threads = threads;
  }
  return hk::run_command(opt);
}
