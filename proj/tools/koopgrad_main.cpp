// SPDX-License-Identifier: Apache-2.0
//
// Command-line experiment runner: run / plot / bench / inspect-spectrum.
#include <koopgrad/harness.hpp>

#include <CLI11.hpp>

#include <iostream>
#include <string>

int main(int argc, char** argv) {
  CLI::App app{"koopgrad: bi-level optimization with Koopman-estimated hypergradients"};
  app.require_subcommand(1);

  koopgrad::CliOptions opts;
  std::string log_dir;
  long outer_step = 1;

  CLI::App* run = app.add_subcommand("run", "execute every (strategy, seed) cell of a config");
  run->add_option("--config", opts.config_path, "experiment config file")->required();
  run->add_option("--out", opts.out_dir, "output directory (overrides config out_dir)");
  run->add_option("--workers", opts.workers, "worker pool size (0 = physical cores)");
  run->add_option("--seed-override", opts.seed_override, "run a single seed instead of the list");
  run->add_option("--strategy-override", opts.strategy_override,
                  "run a single strategy instead of the list");

  CLI::App* plot = app.add_subcommand("plot", "render SVG figures from a run directory");
  plot->add_option("--log-dir", log_dir, "directory written by 'run'")->required();

  CLI::App* bench = app.add_subcommand("bench", "median-of-3 wall-time comparison per strategy");
  bench->add_option("--config", opts.config_path, "experiment config file")->required();
  bench->add_option("--out", opts.out_dir, "output directory (overrides config out_dir)");
  bench->add_option("--seed-override", opts.seed_override, "bench a single seed");

  CLI::App* inspect = app.add_subcommand("inspect-spectrum", "print a fitted DMD spectrum table");
  inspect->add_option("--log-dir", log_dir, "run or cell directory")->required();
  inspect->add_option("--outer-step", outer_step, "outer step to inspect (default 1)");

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) return koopgrad::cmd_run(opts);
  if (plot->parsed()) return koopgrad::cmd_plot(log_dir);
  if (bench->parsed()) return koopgrad::cmd_bench(opts);
  if (inspect->parsed()) return koopgrad::cmd_inspect_spectrum(log_dir, outer_step);
  return 1;
}
