#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gtnsgdm/config.hpp"
#include "gtnsgdm/metrics.hpp"
#include "gtnsgdm/objective.hpp"
#include "gtnsgdm/optim.hpp"
#include "gtnsgdm/topology.hpp"

namespace gtnsgdm {

/// CLI exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitOther = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDivergence = 3;
inline constexpr int kExitAssertion = 4;

/// Everything a run needs except the per-seed oracles.
struct Problem {
  MixingMatrix weights;
  std::vector<std::shared_ptr<const LocalObjective>> objectives;
  Eigen::VectorXd x0;
  /// w* for regression, the minimizer for scalar quadratics.
  Eigen::VectorXd reference;
  /// True when final errors are measured against a ground-truth w*.
  bool has_ground_truth = false;
  std::optional<Dataset> dataset;

  int nodes() const { return weights.size(); }
  std::vector<LocalObjective> local_objectives() const;
};

/// n = 1 yields the trivial 1x1 matrix for every graph kind.
MixingMatrix build_mixing(const TopologyConfig& topo, const std::filesystem::path& base_dir);
Problem build_problem(const ExperimentConfig& cfg);

/// Hyperparameters after applying the config's schedule. `warning` receives
/// a message when a theorem schedule yields beta < 0.1.
Hyper resolve_hyper(const ExperimentConfig& cfg, const Problem& problem, std::string* warning = nullptr);

RoundEngine make_engine(const ExperimentConfig& cfg, const Problem& problem, const Hyper& hyper, int repeat);

/// One seed: noise streams use cfg.seed + repeat.
MetricsTrace run_repeat(const ExperimentConfig& cfg, const Problem& problem, const Hyper& hyper, int repeat,
                        bool time_average = false);

/// Runs body(0..count-1) on up to `threads` workers. Exceptions propagate
/// after all workers stop.
void parallel_for(int count, int threads, const std::function<void(int)>& body);

struct RunSetResult {
  std::vector<MetricsTrace> traces;
  std::vector<AggregateRow> aggregate;
  /// Mean and sample std of the per-run final error over finite runs.
  double final_error_mean = 0.0;
  double final_error_std = 0.0;
  int diverged_runs = 0;
  Hyper hyper;
};

/// Final estimation error when a ground truth exists, else final avg_grad_norm.
double final_error(const MetricsTrace& trace, bool has_ground_truth);

RunSetResult run_set(const ExperimentConfig& cfg, const Problem& problem, int threads);
RunSetResult run_set(const ExperimentConfig& cfg, int threads);

/// Writes trace_seed<k>.csv per repeat and aggregate.csv. Returns the exit code.
int cmd_run(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, int threads, std::ostream& log);

enum class SweepAxis { Lambda, Sigma, Nodes };
SweepAxis parse_sweep_axis(std::string_view name);
std::string_view to_string(SweepAxis axis);

struct SweepRow {
  std::string value;
  double lambda = 0.0;
  double final_error_mean = 0.0;
  double final_error_std = 0.0;
  int diverged_runs = 0;
};

/// Applies one axis value to a copy of the base config.
ExperimentConfig apply_sweep_value(const ExperimentConfig& base, SweepAxis axis, const std::string& value);
std::vector<SweepRow> sweep(const ExperimentConfig& base, SweepAxis axis, const std::vector<std::string>& values,
                            int threads);
std::string format_sweep_csv(const std::vector<SweepRow>& rows);
int cmd_sweep(const ExperimentConfig& base, SweepAxis axis, const std::vector<std::string>& values,
              const std::filesystem::path& out_dir, int threads, std::ostream& log);

/// Ordered list of (hyperparameter, candidate values).
using GridSpec = std::vector<std::pair<std::string, std::vector<double>>>;

GridSpec default_grid(Method method);
/// Reads `name = [v1, v2, ...]` lines, optionally under a `[grid]` header.
GridSpec load_grid(const std::filesystem::path& path);
/// Sets one named hyperparameter; `beta_mu` sets beta and mu together.
void set_hyper(Hyper& hyper, const std::string& name, double value);

struct GridRow {
  std::vector<double> values;
  double final_error_mean = 0.0;
  double final_error_std = 0.0;
  int diverged_runs = 0;
  /// Ranking key: +inf when any repeat diverged.
  double score = 0.0;
};

/// Evaluates the Cartesian product and returns rows ranked best first.
std::vector<GridRow> grid_search(const ExperimentConfig& base, const GridSpec& grid, int threads);
std::string format_grid_csv(const GridSpec& grid, const std::vector<GridRow>& rows);
int cmd_grid(const ExperimentConfig& base, const GridSpec& grid, const std::filesystem::path& out_dir, int threads,
             std::ostream& log);

struct Claim1Report {
  int n = 0;
  double bound = 0.0;
  long rounds = 0;
  double alpha = 0.0;
  double vn_time_avg = 0.0;
  bool vn_bit_constant = false;
  double gt_time_avg = 0.0;
  double gt_final = 0.0;
  /// First round whose avg_grad_norm is below 2 alpha, or -1.
  long gt_hit_round = -1;

  bool passed() const { return vn_time_avg >= bound && vn_bit_constant; }
};

Claim1Report claim1(int n, double bound, long rounds, double alpha);
int cmd_claim1(int n, double bound, long rounds, double alpha, std::ostream& log);

struct RatePoint {
  long horizon = 0;
  double value = 0.0;
  Hyper hyper;
};

struct RateReport {
  std::vector<RatePoint> points;
  std::vector<long> excluded;
  double slope = 0.0;
  double exponent = 0.0;
};

RateReport rate_check(const ExperimentConfig& cfg, const std::vector<long>& horizons, int threads,
                      std::ostream* log = nullptr);
int cmd_rate_check(const ExperimentConfig& cfg, const std::vector<long>& horizons, const std::filesystem::path& out_dir,
                   int threads, std::ostream& log);

struct NoiseDiagnostics {
  long samples = 0;
  double tail_slope = 0.0;
  double mean = 0.0;
  double mean_se = 0.0;
  double moment_p12_small = 0.0;
  double moment_p12 = 0.0;
  double moment_p2_small = 0.0;
  double moment_p2 = 0.0;
  double variance = 0.0;
  std::vector<double> bin_edges;
  std::vector<long> counts;
};

/// Scalar draws of the first coordinate of the config's noise.
NoiseDiagnostics noise_diagnostics(const NoiseSpec& spec, long samples, std::uint64_t seed, int bins = 100);
int cmd_noise_diag(const ExperimentConfig& cfg, long samples, const std::filesystem::path& out_dir, std::ostream& log);

int cmd_topo_info(const ExperimentConfig& cfg, std::ostream& log);

}  // namespace gtnsgdm
