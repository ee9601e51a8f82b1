#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gtnsgdm/objective.hpp"

namespace gtnsgdm {

struct TraceRow {
  long t = 0;
  double avg_grad_norm = 0.0;
  double estimation_error = 0.0;
  double consensus_x = 0.0;
  double consensus_y = 0.0;
  double tracking_gap = 0.0;
  double step_len = 0.0;
  bool diverged = false;
};

struct MetricsTrace {
  std::vector<TraceRow> rows;
  bool diverged = false;
  long diverged_at = -1;
  /// Filled when the run accumulates the per-round average.
  double time_avg_grad_norm = 0.0;
  /// Largest ||ybar - vbar|| / (1 + ||vbar||) and ||xbar^{t+1} - xbar^t|| over all rounds.
  double max_tracking_ratio = 0.0;
  double max_step_len = 0.0;

  const TraceRow& final_row() const { return rows.back(); }
};

inline constexpr const char* kTraceHeader =
    "t,avg_grad_norm,estimation_error,consensus_x,consensus_y,tracking_gap,step_len,diverged";

using StateStack = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// (1/n) sum_i ||grad f(x_i)|| with f the average of the exact local objectives.
double avg_grad_norm(const StateStack& x, std::span<const LocalObjective> objectives);
/// (1/n) sum_i ||x_i - reference||.
double estimation_error(const StateStack& x, const Eigen::VectorXd& reference);
/// (1/n) sum_i ||z_i - zbar||.
double consensus_error(const StateStack& z);
Eigen::VectorXd network_mean(const StateStack& z);

/// Least-squares slope of log(value) against log(T).
double fit_rate(std::span<const std::pair<double, double>> points);

/// Fixed column order, %.17g text.
std::string format_trace_csv(const MetricsTrace& trace);
void write_trace_csv(const MetricsTrace& trace, const std::filesystem::path& path);
MetricsTrace parse_trace_csv(const std::string& text);
MetricsTrace read_trace_csv(const std::filesystem::path& path);

/// Mean and sample standard deviation of a metric across runs at one probe.
struct AggregateRow {
  long t = 0;
  std::vector<double> mean;  ///< avg_grad_norm .. step_len, in trace column order
  std::vector<double> stdev;
  int finite_runs = 0;
  int diverged_runs = 0;
};

/// Aligns rows by probe index. Runs that diverged before a probe count
/// towards diverged_runs and are excluded from the statistics.
std::vector<AggregateRow> aggregate(std::span<const MetricsTrace> traces);
std::string format_aggregate_csv(std::span<const AggregateRow> rows);

struct MeanStd {
  double mean;
  double stdev;
};
MeanStd mean_std(std::span<const double> values);

}  // namespace gtnsgdm
