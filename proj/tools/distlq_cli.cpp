#include <iostream>

#include <CLI11.hpp>

#include "distlq/cli/commands.hpp"

int main(int argc, char** argv) {
  using distlq::cli::RunConfig;

  CLI::App app{"Distributed LQ control with terminal constraint and optimal consensus"};
  app.require_subcommand(1);
  RunConfig cfg;

  auto add_common = [&cfg](CLI::App* sub) {
    sub->add_option("--scenario", cfg.scenario, "scenario JSON file")->required();
    sub->add_option("--out", cfg.out_dir, "output directory")->capture_default_str();
    sub->add_option("--grid-steps", cfg.grid_steps, "number of grid intervals");
    sub->add_option("--max-n", cfg.max_n, "outer iteration cap");
    sub->add_option("--max-k", cfg.max_k, "Z/V consensus round cap");
    sub->add_option("--max-varpi", cfg.max_varpi, "W consensus round cap");
    sub->add_option("--max-q", cfg.max_q, "lambda consensus round cap");
    sub->add_option("--max-w", cfg.max_w, "state consensus round cap");
    sub->add_option("--tol-inner", cfg.tol_inner, "consensus stopping tolerance");
    sub->add_option("--tol-outer", cfg.tol_outer, "outer stopping tolerance");
    sub->add_flag("--diagnostics", cfg.diagnostics, "write per-round consensus diagnostics");
    sub->add_option("--seed", cfg.seed, "seed recorded for reproducibility");
  };

  auto* centralized = app.add_subcommand("centralized", "full-information Riccati solve");
  auto* distributed = app.add_subcommand("distributed", "partial-information multi-agent solve");
  auto* consensus = app.add_subcommand("consensus", "optimal consensus of a vehicle fleet");
  auto* validate = app.add_subcommand("validate", "structural checks on a scenario");
  for (auto* sub : {centralized, distributed, consensus, validate}) add_common(sub);
  distributed->add_flag("--with-reference", cfg.with_reference, "compare against the centralized solution");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : distlq::cli::exit_schema;
  }
  cfg.subcommand = app.get_subcommands().front()->get_name();
  return distlq::cli::run(cfg, std::cout, std::cerr);
}
