#include "gtnsgdm/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "gtnsgdm/error.hpp"

namespace gtnsgdm {

Eigen::VectorXd network_mean(const StateStack& z) {
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) acc += z.row(i).transpose();
  return acc / static_cast<double>(z.rows());
}

double avg_grad_norm(const StateStack& x, std::span<const LocalObjective> objectives) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) acc += global_gradient(objectives, x.row(i).transpose()).norm();
  return acc / static_cast<double>(x.rows());
}

double estimation_error(const StateStack& x, const Eigen::VectorXd& reference) {
  if (reference.size() != x.cols()) throw Error(ErrorKind::InvalidInput, "estimation_error: dimension mismatch");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) acc += (x.row(i).transpose() - reference).norm();
  return acc / static_cast<double>(x.rows());
}

double consensus_error(const StateStack& z) {
  const Eigen::VectorXd mean = network_mean(z);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) acc += (z.row(i).transpose() - mean).norm();
  return acc / static_cast<double>(z.rows());
}

double fit_rate(std::span<const std::pair<double, double>> points) {
  if (points.size() < 3) throw Error(ErrorKind::InsufficientData, "fit_rate needs at least 3 points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& [t, value] : points) {
    if (!(t > 0.0) || !(value > 0.0)) throw Error(ErrorKind::InvalidInput, "fit_rate needs positive T and values");
    const double lx = std::log(t), ly = std::log(value);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const auto m = static_cast<double>(points.size());
  const double denom = m * sxx - sx * sx;
  if (denom <= 0.0) throw Error(ErrorKind::InvalidInput, "fit_rate needs at least two distinct T values");
  return (m * sxy - sx * sy) / denom;
}

namespace {
void put(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}
}  // namespace

std::string format_trace_csv(const MetricsTrace& trace) {
  std::string out = kTraceHeader;
  out += '\n';
  for (const auto& r : trace.rows) {
    out += std::to_string(r.t);
    for (double v : {r.avg_grad_norm, r.estimation_error, r.consensus_x, r.consensus_y, r.tracking_gap, r.step_len}) {
      out += ',';
      put(out, v);
    }
    out += r.diverged ? ",1\n" : ",0\n";
  }
  return out;
}

void write_trace_csv(const MetricsTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << format_trace_csv(trace);
}

MetricsTrace parse_trace_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kTraceHeader)
    throw Error(ErrorKind::InvalidInput, "trace CSV header mismatch");
  MetricsTrace trace;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != 8) throw Error(ErrorKind::InvalidInput, "trace CSV row needs 8 columns");
    TraceRow r;
    r.t = std::stol(cells[0]);
    double* fields[] = {&r.avg_grad_norm, &r.estimation_error, &r.consensus_x,
                        &r.consensus_y,   &r.tracking_gap,     &r.step_len};
    for (int k = 0; k < 6; ++k) *fields[k] = std::strtod(cells[k + 1].c_str(), nullptr);
    r.diverged = cells[7] == "1";
    if (r.diverged && !trace.diverged) {
      trace.diverged = true;
      trace.diverged_at = r.t;
    }
    trace.rows.push_back(r);
  }
  return trace;
}

MetricsTrace read_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_trace_csv(buf.str());
}

MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  if (values.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

std::vector<AggregateRow> aggregate(std::span<const MetricsTrace> traces) {
  std::size_t longest = 0;
  for (const auto& tr : traces) longest = std::max(longest, tr.rows.size());
  std::vector<AggregateRow> out;
  for (std::size_t k = 0; k < longest; ++k) {
    AggregateRow row;
    std::vector<std::vector<double>> columns(6);
    bool have_t = false;
    for (const auto& tr : traces) {
      if (k < tr.rows.size() && !tr.rows[k].diverged) {
        const auto& r = tr.rows[k];
        if (!have_t) {
          row.t = r.t;
          have_t = true;
        }
        const double vals[] = {r.avg_grad_norm, r.estimation_error, r.consensus_x,
                               r.consensus_y,   r.tracking_gap,     r.step_len};
        for (int c = 0; c < 6; ++c) columns[c].push_back(vals[c]);
        ++row.finite_runs;
      } else {
        ++row.diverged_runs;
        if (!have_t && k < tr.rows.size()) row.t = tr.rows[k].t;
      }
    }
    for (const auto& col : columns) {
      const auto ms = mean_std(col);
      row.mean.push_back(ms.mean);
      row.stdev.push_back(ms.stdev);
    }
    out.push_back(std::move(row));
  }
  return out;
}

std::string format_aggregate_csv(std::span<const AggregateRow> rows) {
  static const char* names[] = {"avg_grad_norm", "estimation_error", "consensus_x",
                                "consensus_y",   "tracking_gap",     "step_len"};
  std::string out = "t";
  for (const char* n : names) {
    out += ',';
    out += n;
    out += "_mean,";
    out += n;
    out += "_std";
  }
  out += ",finite_runs,diverged_runs\n";
  for (const auto& r : rows) {
    out += std::to_string(r.t);
    for (int c = 0; c < 6; ++c) {
      out += ',';
      put(out, r.mean[c]);
      out += ',';
      put(out, r.stdev[c]);
    }
    out += ',' + std::to_string(r.finite_runs) + ',' + std::to_string(r.diverged_runs) + '\n';
  }
  return out;
}

}  // namespace gtnsgdm
