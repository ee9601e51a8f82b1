// Command-line front end for the decentralized optimization simulator.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gtnsgdm/config.hpp"
#include "gtnsgdm/error.hpp"
#include "gtnsgdm/experiment.hpp"

namespace {

using namespace gtnsgdm;

struct Common {
  std::string config;
  std::string out = "out";
  int threads = 1;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* sub, Common& c, bool need_config) {
  auto* opt = sub->add_option("--config", c.config, "Experiment config file");
  if (need_config) opt->required();
  sub->add_option("--out", c.out, "Output directory");
  sub->add_option("--threads", c.threads, "Worker threads for independent runs")->check(CLI::PositiveNumber);
  sub->add_option("--seed", c.seed, "Override the config seed");
}

ExperimentConfig load(const Common& c) {
  ExperimentConfig cfg = load_experiment_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

int exit_code(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::Config:
    case ErrorKind::InvalidParameter:
    case ErrorKind::InvalidSize:
    case ErrorKind::UnsupportedGraph:
    case ErrorKind::NonPrimitive:
    case ErrorKind::InvalidPartition:
    case ErrorKind::InvalidDimension:
      return kExitConfig;
    case ErrorKind::Divergence:
      return kExitDivergence;
    default:
      return kExitOther;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decentralized normalized SGD with gradient tracking: simulator and experiment harness"};
  app.require_subcommand(1);

  Common run_opts, sweep_opts, grid_opts, rate_opts, noise_opts, topo_opts, claim_opts;

  auto* run = app.add_subcommand("run", "Run a config for all repeats and write traces");
  add_common(run, run_opts, true);

  auto* sweep = app.add_subcommand("sweep", "Sweep lambda (graph kinds), sigma, or n");
  add_common(sweep, sweep_opts, true);
  std::string axis;
  std::vector<std::string> sweep_values;
  sweep->add_option("--axis", axis, "lambda | sigma | n")->required();
  sweep->add_option("--values", sweep_values, "Axis values")->required()->delimiter(',');

  auto* grid = app.add_subcommand("grid", "Grid search over hyperparameters");
  add_common(grid, grid_opts, true);
  std::string grid_file;
  grid->add_option("--grid", grid_file, "Grid file (defaults to the method's built-in grid)");

  auto* claim = app.add_subcommand("claim1", "Normalized DSGD counterexample versus GT-NSGDm");
  add_common(claim, claim_opts, false);
  int claim_n = 2;
  double claim_bound = 1.0;
  long claim_rounds = 100;
  double claim_alpha = 0.05;
  claim->add_option("--n", claim_n, "Even number of nodes");
  claim->add_option("--bound", claim_bound, "Lower bound B >= 1");
  claim->add_option("--rounds", claim_rounds, "Rounds T");
  claim->add_option("--alpha", claim_alpha, "Step size");

  auto* rate = app.add_subcommand("rate-check", "Fit the empirical rate under a theorem schedule");
  add_common(rate, rate_opts, true);
  std::vector<long> horizons;
  rate->add_option("--horizons", horizons, "Horizons T (at least 3)")->required()->delimiter(',');

  auto* noise = app.add_subcommand("noise-diag", "Histogram, tail slope and moments of the config's noise");
  add_common(noise, noise_opts, true);
  long noise_samples = 1000000;
  noise->add_option("--samples", noise_samples, "Number of scalar draws");

  auto* topo = app.add_subcommand("topo-info", "Print the spectral gap lambda of the config's graph");
  add_common(topo, topo_opts, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(load(run_opts), run_opts.out, run_opts.threads, std::cout);
    if (sweep->parsed())
      return cmd_sweep(load(sweep_opts), parse_sweep_axis(axis), sweep_values, sweep_opts.out, sweep_opts.threads,
                       std::cout);
    if (grid->parsed()) {
      const ExperimentConfig cfg = load(grid_opts);
      const GridSpec spec = grid_file.empty() ? default_grid(cfg.method) : load_grid(grid_file);
      return cmd_grid(cfg, spec, grid_opts.out, grid_opts.threads, std::cout);
    }
    if (claim->parsed()) return cmd_claim1(claim_n, claim_bound, claim_rounds, claim_alpha, std::cout);
    if (rate->parsed()) return cmd_rate_check(load(rate_opts), horizons, rate_opts.out, rate_opts.threads, std::cout);
    if (noise->parsed()) return cmd_noise_diag(load(noise_opts), noise_samples, noise_opts.out, std::cout);
    if (topo->parsed()) return cmd_topo_info(load(topo_opts), std::cout);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOther;
  }
  return kExitOther;
}
