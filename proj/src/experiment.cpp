#include "gtnsgdm/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "gtnsgdm/error.hpp"
#include "gtnsgdm/noise.hpp"
#include "gtnsgdm/rng.hpp"
#include "gtnsgdm/schedule.hpp"

namespace gtnsgdm {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << text;
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

std::vector<LocalObjective> Problem::local_objectives() const {
  std::vector<LocalObjective> out;
  out.reserve(objectives.size());
  for (const auto& o : objectives) out.push_back(*o);
  return out;
}

MixingMatrix build_mixing(const TopologyConfig& topo, const std::filesystem::path& base_dir) {
  if (topo.n == 1 && topo.kind != GraphKind::Custom) return MixingMatrix(Eigen::MatrixXd::Ones(1, 1));
  const Graph g = topo.kind == GraphKind::Custom ? load_graph(resolve(base_dir, topo.file)) : build_graph(topo.kind, topo.n);
  return make_weights(g, topo.weighting);
}

Problem build_problem(const ExperimentConfig& cfg) {
  const auto& ob = cfg.objective;
  if (ob.kind == ProblemKind::Claim1) {
    auto inst = claim1_instance(cfg.topology.n, ob.bound);
    Problem p{std::move(inst.weights), {}, Eigen::VectorXd::Constant(1, inst.x0),
              Eigen::VectorXd::Constant(1, 0.5 * (inst.a + inst.b)), false, std::nullopt};
    for (auto& o : inst.objectives) p.objectives.push_back(std::make_shared<const LocalObjective>(std::move(o)));
    return p;
  }

  MixingMatrix w = build_mixing(cfg.topology, cfg.base_dir);
  const int n = w.size();
  if (ob.kind == ProblemKind::Quadratic) {
    if (static_cast<int>(ob.centers.size()) != n)
      throw Error(ErrorKind::Config, "objective.centers: need one center per node");
    double mean = 0.0;
    for (double c : ob.centers) mean += c;
    mean /= n;
    Problem p{std::move(w), {}, Eigen::VectorXd::Constant(1, ob.x0), Eigen::VectorXd::Constant(1, mean), false,
              std::nullopt};
    for (double c : ob.centers) p.objectives.push_back(std::make_shared<const LocalObjective>(LocalObjective::quadratic(c)));
    return p;
  }

  Dataset ds = ob.dataset.empty()
                   ? generate_token_dataset(ob.samples, ob.dim, ob.data_seed.value_or(cfg.seed))
                   : read_dataset_csv(resolve(cfg.base_dir, ob.dataset), resolve(cfg.base_dir, ob.w_star));
  if (n > ds.samples()) throw Error(ErrorKind::Config, "topology.n: more nodes than samples");
  auto shards = partition(ds, n, ob.c);
  Problem p{std::move(w), {}, Eigen::VectorXd::Constant(ds.dim(), ob.x0), ds.w_star, true, std::nullopt};
  for (auto& s : shards) p.objectives.push_back(std::make_shared<const LocalObjective>(std::move(s)));
  p.dataset = std::move(ds);
  return p;
}

Hyper resolve_hyper(const ExperimentConfig& cfg, const Problem& problem, std::string* warning) {
  Hyper h = cfg.hyper;
  if (cfg.schedule.kind == ScheduleKind::Fixed) return h;
  const auto objectives = problem.local_objectives();
  double delta0 = 0.0;
  if (cfg.schedule.delta0) {
    delta0 = *cfg.schedule.delta0;
  } else {
    // Regression labels are noiseless, so f* = 0; quadratics attain f* at the reference.
    const double fstar = problem.has_ground_truth ? 0.0 : global_value(objectives, problem.reference);
    delta0 = global_value(objectives, problem.x0) - fstar;
    if (!(delta0 > 0.0)) throw Error(ErrorKind::Config, "schedule.delta0: initial gap is not positive; set it explicitly");
  }
  const double lambda = problem.weights.lambda();
  const int n = problem.nodes();
  const ScheduledHyper s = cfg.schedule.kind == ScheduleKind::Theorem1
                               ? theorem1_hyper(delta0, cfg.schedule.smoothness, lambda, n, cfg.rounds, cfg.schedule.p)
                               : theorem2_hyper(delta0, cfg.schedule.smoothness, lambda, n, cfg.rounds);
  h.alpha = s.alpha;
  h.beta = s.beta;
  if (warning) *warning = s.beta_warning ? "warning: scheduled beta " + fmt(s.beta) + " is below 0.1" : "";
  return h;
}

RoundEngine make_engine(const ExperimentConfig& cfg, const Problem& problem, const Hyper& hyper, int repeat) {
  const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(repeat);
  NoiseSpec noise = cfg.noise;
  noise.dim = static_cast<int>(problem.x0.size());
  std::vector<Oracle> oracles;
  oracles.reserve(problem.objectives.size());
  for (int i = 0; i < problem.nodes(); ++i) oracles.emplace_back(problem.objectives[i], noise, cfg.objective.batch, seed, i);
  return RoundEngine(problem.weights, std::move(oracles), cfg.method, hyper, problem.x0);
}

MetricsTrace run_repeat(const ExperimentConfig& cfg, const Problem& problem, const Hyper& hyper, int repeat,
                        bool time_average) {
  RoundEngine engine = make_engine(cfg, problem, hyper, repeat);
  RunOptions opts;
  opts.rounds = cfg.rounds;
  opts.probe_every = cfg.probe_every;
  opts.reference = problem.reference;
  opts.time_average = time_average;
  return run(engine, opts);
}

void parallel_for(int count, int threads, const std::function<void(int)>& body) {
  if (count <= 0) return;
  const int workers = std::clamp(threads, 1, count);
  if (workers == 1) {
    for (int k = 0; k < count; ++k) body(k);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (int k = next++; k < count; k = next++) {
      try {
        body(k);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = count;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

double final_error(const MetricsTrace& trace, bool has_ground_truth) {
  const auto& r = trace.final_row();
  return has_ground_truth ? r.estimation_error : r.avg_grad_norm;
}

namespace {

void summarize(RunSetResult& out, bool has_ground_truth) {
  out.aggregate = aggregate(out.traces);
  std::vector<double> finals;
  out.diverged_runs = 0;
  for (const auto& tr : out.traces) {
    if (tr.diverged)
      ++out.diverged_runs;
    else
      finals.push_back(final_error(tr, has_ground_truth));
  }
  const auto ms = mean_std(finals);
  out.final_error_mean = ms.mean;
  out.final_error_std = ms.stdev;
}

}  // namespace

RunSetResult run_set(const ExperimentConfig& cfg, const Problem& problem, int threads) {
  RunSetResult out;
  out.hyper = resolve_hyper(cfg, problem);
  out.traces.resize(cfg.repeats);
  parallel_for(cfg.repeats, threads, [&](int r) { out.traces[r] = run_repeat(cfg, problem, out.hyper, r); });
  summarize(out, problem.has_ground_truth);
  return out;
}

RunSetResult run_set(const ExperimentConfig& cfg, int threads) { return run_set(cfg, build_problem(cfg), threads); }

int cmd_run(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, int threads, std::ostream& log) {
  const Problem problem = build_problem(cfg);
  std::string warning;
  resolve_hyper(cfg, problem, &warning);
  if (!warning.empty()) log << warning << "\n";
  const RunSetResult res = run_set(cfg, problem, threads);
  ensure_dir(out_dir);
  for (std::size_t k = 0; k < res.traces.size(); ++k)
    write_trace_csv(res.traces[k], out_dir / ("trace_seed" + std::to_string(cfg.seed + k) + ".csv"));
  write_text(out_dir / "aggregate.csv", format_aggregate_csv(res.aggregate));
  if (problem.dataset) write_dataset_csv(*problem.dataset, out_dir / "dataset.csv", out_dir / "w_star.csv");
  write_text(out_dir / "config.toml", serialize_experiment_config(cfg));
  log << "method " << to_string(cfg.method) << ", n = " << problem.nodes() << ", lambda = " << fmt(problem.weights.lambda())
      << "\n";
  log << "final error " << fmt(res.final_error_mean) << " +/- " << fmt(res.final_error_std) << " over "
      << (cfg.repeats - res.diverged_runs) << " finite runs\n";
  if (res.diverged_runs > 0) {
    log << res.diverged_runs << " of " << cfg.repeats << " runs diverged\n";
    return kExitDivergence;
  }
  return kExitOk;
}

SweepAxis parse_sweep_axis(std::string_view name) {
  if (name == "lambda") return SweepAxis::Lambda;
  if (name == "sigma") return SweepAxis::Sigma;
  if (name == "n") return SweepAxis::Nodes;
  throw Error(ErrorKind::Config, "sweep axis must be lambda, sigma or n, got '" + std::string(name) + "'");
}

std::string_view to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::Lambda: return "lambda";
    case SweepAxis::Sigma: return "sigma";
    case SweepAxis::Nodes: return "n";
  }
  return "lambda";
}

namespace {

double parse_number(const std::string& s, const char* what) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw Error(ErrorKind::Config, std::string(what) + ": cannot parse '" + s + "'");
  return v;
}

}  // namespace

ExperimentConfig apply_sweep_value(const ExperimentConfig& base, SweepAxis axis, const std::string& value) {
  ExperimentConfig cfg = base;
  switch (axis) {
    case SweepAxis::Lambda:
      cfg.topology.kind = parse_graph_kind(value);
      if (cfg.topology.kind == GraphKind::DirectedExponential)
        cfg.topology.weighting = Weighting::UniformOut;
      else if (cfg.topology.weighting == Weighting::UniformOut)
        cfg.topology.weighting = Weighting::Metropolis;
      break;
    case SweepAxis::Sigma: {
      const double sigma = parse_number(value, "sigma");
      switch (cfg.noise.family) {
        case NoiseFamily::Gaussian: cfg.noise.variance = sigma * sigma; break;
        case NoiseFamily::StudentT: cfg.noise.t_scale = sigma; break;
        case NoiseFamily::AlphaStable: cfg.noise.stable_scale = sigma; break;
        case NoiseFamily::None: throw Error(ErrorKind::Config, "noise.family: sigma sweep needs a noise family");
      }
      break;
    }
    case SweepAxis::Nodes: {
      const double n = parse_number(value, "n");
      if (n != std::floor(n) || n < 1) throw Error(ErrorKind::Config, "n: sweep values must be positive integers");
      cfg.topology.n = static_cast<int>(n);
      break;
    }
  }
  cfg.validate();
  return cfg;
}

std::vector<SweepRow> sweep(const ExperimentConfig& base, SweepAxis axis, const std::vector<std::string>& values,
                            int threads) {
  if (values.empty()) throw Error(ErrorKind::InvalidInput, "sweep needs at least one value");
  std::vector<ExperimentConfig> cfgs;
  std::vector<Problem> problems;
  std::vector<Hyper> hypers;
  for (const auto& v : values) {
    cfgs.push_back(apply_sweep_value(base, axis, v));
    problems.push_back(build_problem(cfgs.back()));
    hypers.push_back(resolve_hyper(cfgs.back(), problems.back()));
  }
  const int per = base.repeats;
  std::vector<MetricsTrace> traces(values.size() * per);
  parallel_for(static_cast<int>(traces.size()), threads, [&](int k) {
    const int j = k / per;
    traces[k] = run_repeat(cfgs[j], problems[j], hypers[j], k % per);
  });
  std::vector<SweepRow> rows;
  for (std::size_t j = 0; j < values.size(); ++j) {
    RunSetResult res;
    res.traces.assign(traces.begin() + j * per, traces.begin() + (j + 1) * per);
    summarize(res, problems[j].has_ground_truth);
    rows.push_back({values[j], problems[j].weights.lambda(), res.final_error_mean, res.final_error_std, res.diverged_runs});
  }
  return rows;
}

std::string format_sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "value,lambda,final_error_mean,final_error_std,diverged_runs\n";
  for (const auto& r : rows)
    out += r.value + ',' + fmt(r.lambda) + ',' + fmt(r.final_error_mean) + ',' + fmt(r.final_error_std) + ',' +
           std::to_string(r.diverged_runs) + '\n';
  return out;
}

int cmd_sweep(const ExperimentConfig& base, SweepAxis axis, const std::vector<std::string>& values,
              const std::filesystem::path& out_dir, int threads, std::ostream& log) {
  const auto rows = sweep(base, axis, values, threads);
  ensure_dir(out_dir);
  const std::string csv = format_sweep_csv(rows);
  write_text(out_dir / ("sweep_" + std::string(to_string(axis)) + ".csv"), csv);
  log << csv;
  return kExitOk;
}

GridSpec default_grid(Method method) {
  const std::vector<double> alphas = {1e-5, 5e-5, 1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 5e-2, 1e-1, 0.5, 1, 5, 10};
  const std::vector<double> taus = {1e-3, 5e-3, 1e-2, 5e-2, 1e-1, 0.5, 1, 5, 10, 50, 1e2};
  const std::vector<double> clip_alphas = {1e-4, 1e-3, 1e-2, 1e-1, 1, 10, 1e2};
  const std::vector<double> clip_taus = {1e-3, 1e-2, 1e-1, 1, 10, 1e2};
  switch (method) {
    case Method::GtNsgdm:
      return {{"alpha", alphas}, {"beta", {0.01, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99}}};
    case Method::Dsgd:
    case Method::GtDsgd:
    case Method::VnDsgd:
      return {{"alpha", alphas}};
    case Method::DsgdClip:
      return {{"alpha", alphas}, {"tau", taus}};
    case Method::DsgdGClip:
    case Method::DsgdCClip:
      return {{"alpha", clip_alphas}, {"tau", clip_taus}};
    case Method::SClipEf:
      return {{"alpha", {1e-3, 1e-2, 0.1, 1, 10, 30}},
              {"beta", {1e-2, 0.1, 0.5, 0.8, 0.99}},
              {"c_phi", {1, 5, 10, 20, 30, 50}},
              {"tau", {0.1, 1, 10, 50, 100}}};
    case Method::GtAdam:
      return {{"alpha", {5e-5, 1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 5e-2, 1e-1, 0.5, 1, 5, 10}},
              {"cap", {1e-3, 1e-2, 1e-1, 1, 10}}};
    case Method::QgDsgdm:
      return {{"alpha", {5e-5, 1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 5e-2, 1e-1, 0.5, 1, 5, 10}},
              {"beta_mu", {0.01, 0.2, 0.4, 0.6, 0.8, 0.99}}};
  }
  return {};
}

void set_hyper(Hyper& h, const std::string& name, double value) {
  if (name == "alpha" || name == "eta")
    h.alpha = value;
  else if (name == "beta")
    h.beta = value;
  else if (name == "tau")
    h.tau = value;
  else if (name == "beta1")
    h.beta1 = value;
  else if (name == "beta2")
    h.beta2 = value;
  else if (name == "cap" || name == "G")
    h.cap = value;
  else if (name == "eps")
    h.eps = value;
  else if (name == "mu")
    h.mu = value;
  else if (name == "c_phi")
    h.c_phi = value;
  else if (name == "beta_mu")
    h.beta = h.mu = value;
  else
    throw Error(ErrorKind::Config, "grid." + name + ": unknown hyperparameter");
}

GridSpec load_grid(const std::filesystem::path& path) {
  const auto doc = ConfigDocument::load(path);
  GridSpec grid;
  for (const auto& [key, value] : doc.values()) {
    const std::string name = key.rfind("grid.", 0) == 0 ? key.substr(5) : key;
    Hyper probe;
    set_hyper(probe, name, 0.0);
    grid.emplace_back(name, doc.get_doubles(key));
  }
  return grid;
}

std::vector<GridRow> grid_search(const ExperimentConfig& base, const GridSpec& grid, int threads) {
  if (grid.empty()) throw Error(ErrorKind::InvalidInput, "grid is empty");
  std::size_t points = 1;
  for (const auto& [name, vals] : grid) {
    if (vals.empty()) throw Error(ErrorKind::InvalidInput, "grid." + name + " has no values");
    points *= vals.size();
  }
  if (base.schedule.kind != ScheduleKind::Fixed)
    throw Error(ErrorKind::Config, "schedule.kind: grid search needs a fixed schedule");

  const Problem problem = build_problem(base);
  std::vector<GridRow> rows(points);
  std::vector<Hyper> hypers(points, base.hyper);
  for (std::size_t k = 0; k < points; ++k) {
    std::size_t rest = k;
    std::vector<double> vals(grid.size());
    for (std::size_t a = grid.size(); a-- > 0;) {
      vals[a] = grid[a].second[rest % grid[a].second.size()];
      rest /= grid[a].second.size();
    }
    for (std::size_t a = 0; a < grid.size(); ++a) set_hyper(hypers[k], grid[a].first, vals[a]);
    hypers[k].validate(base.method);
    rows[k].values = std::move(vals);
  }

  const int per = base.repeats;
  std::vector<MetricsTrace> traces(points * per);
  parallel_for(static_cast<int>(traces.size()), threads,
               [&](int k) { traces[k] = run_repeat(base, problem, hypers[k / per], k % per); });
  for (std::size_t k = 0; k < points; ++k) {
    RunSetResult res;
    res.traces.assign(traces.begin() + k * per, traces.begin() + (k + 1) * per);
    summarize(res, problem.has_ground_truth);
    rows[k].final_error_mean = res.final_error_mean;
    rows[k].final_error_std = res.final_error_std;
    rows[k].diverged_runs = res.diverged_runs;
    rows[k].score = res.diverged_runs > 0 || !std::isfinite(res.final_error_mean)
                        ? std::numeric_limits<double>::infinity()
                        : res.final_error_mean;
  }
  std::stable_sort(rows.begin(), rows.end(), [](const GridRow& a, const GridRow& b) { return a.score < b.score; });
  return rows;
}

std::string format_grid_csv(const GridSpec& grid, const std::vector<GridRow>& rows) {
  std::string out = "rank";
  for (const auto& [name, vals] : grid) out += ',' + name;
  out += ",final_error_mean,final_error_std,diverged_runs\n";
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out += std::to_string(k + 1);
    for (double v : rows[k].values) out += ',' + fmt(v);
    out += ',' + fmt(rows[k].final_error_mean) + ',' + fmt(rows[k].final_error_std) + ',' +
           std::to_string(rows[k].diverged_runs) + '\n';
  }
  return out;
}

int cmd_grid(const ExperimentConfig& base, const GridSpec& grid, const std::filesystem::path& out_dir, int threads,
             std::ostream& log) {
  const auto rows = grid_search(base, grid, threads);
  ensure_dir(out_dir);
  write_text(out_dir / "grid.csv", format_grid_csv(grid, rows));
  log << rows.size() << " grid points evaluated\nbest:";
  for (std::size_t a = 0; a < grid.size(); ++a) log << ' ' << grid[a].first << " = " << fmt(rows.front().values[a]);
  log << ", final error " << fmt(rows.front().final_error_mean) << "\n";
  return kExitOk;
}

Claim1Report claim1(int n, double bound, long rounds, double alpha) {
  ExperimentConfig cfg;
  cfg.topology.n = n;
  cfg.objective.kind = ProblemKind::Claim1;
  cfg.objective.bound = bound;
  cfg.objective.dim = 1;
  cfg.noise = NoiseSpec::none(1);
  cfg.rounds = rounds;
  cfg.probe_every = std::max(1L, rounds);
  cfg.hyper.alpha = alpha;
  cfg.hyper.beta = 0.0;
  const Problem problem = build_problem(cfg);
  const auto objectives = problem.local_objectives();

  Claim1Report rep{n, bound, rounds, alpha};

  cfg.method = Method::VnDsgd;
  {
    RoundEngine engine = make_engine(cfg, problem, cfg.hyper, 0);
    const Stack start = engine.x();
    bool constant = true;
    RunOptions opts;
    opts.rounds = rounds;
    opts.probe_every = cfg.probe_every;
    opts.time_average = true;
    opts.observer = [&](const RoundEngine& e, const RoundInfo&) {
      for (Eigen::Index i = 0; i < start.rows(); ++i)
        if (e.x()(i, 0) != start(i, 0)) constant = false;
    };
    const auto trace = run(engine, opts);
    rep.vn_time_avg = rounds > 0 ? trace.time_avg_grad_norm : avg_grad_norm(start, objectives);
    rep.vn_bit_constant = constant && !trace.diverged;
  }

  cfg.method = Method::GtNsgdm;
  {
    RoundEngine engine = make_engine(cfg, problem, cfg.hyper, 0);
    RunOptions opts;
    opts.rounds = rounds;
    opts.probe_every = cfg.probe_every;
    opts.time_average = true;
    if (avg_grad_norm(engine.x(), objectives) < 2.0 * alpha) rep.gt_hit_round = 0;
    opts.observer = [&](const RoundEngine& e, const RoundInfo& info) {
      if (rep.gt_hit_round < 0 && avg_grad_norm(e.x(), objectives) < 2.0 * alpha) rep.gt_hit_round = info.t + 1;
    };
    const auto trace = run(engine, opts);
    rep.gt_time_avg = trace.time_avg_grad_norm;
    rep.gt_final = trace.final_row().avg_grad_norm;
  }
  return rep;
}

int cmd_claim1(int n, double bound, long rounds, double alpha, std::ostream& log) {
  const Claim1Report rep = claim1(n, bound, rounds, alpha);
  log << "claim1 n = " << n << ", B = " << fmt(bound) << ", T = " << rounds << ", alpha = " << fmt(alpha) << "\n";
  log << "vn-dsgd   time-averaged grad norm " << fmt(rep.vn_time_avg)
      << (rep.vn_bit_constant ? " (iterates bit-constant)" : " (iterates moved)") << "\n";
  log << "gt-nsgdm  time-averaged grad norm " << fmt(rep.gt_time_avg) << ", final " << fmt(rep.gt_final);
  if (rep.gt_hit_round >= 0)
    log << ", below 2*alpha at round " << rep.gt_hit_round << "\n";
  else
    log << ", never below 2*alpha\n";
  if (!rep.passed()) {
    log << "assertion failed: vn-dsgd report must be >= B with constant iterates\n";
    return kExitAssertion;
  }
  return kExitOk;
}

RateReport rate_check(const ExperimentConfig& base, const std::vector<long>& horizons, int threads, std::ostream* log) {
  if (base.schedule.kind == ScheduleKind::Fixed)
    throw Error(ErrorKind::Config, "schedule.kind: rate-check needs theorem1 or theorem2");
  if (horizons.size() < 3) throw Error(ErrorKind::InsufficientData, "rate-check needs at least 3 horizons");
  const Problem problem = build_problem(base);
  const int per = base.repeats;
  std::vector<ExperimentConfig> cfgs;
  std::vector<Hyper> hypers;
  for (long T : horizons) {
    if (T < 1) throw Error(ErrorKind::Config, "rate-check horizons must be >= 1");
    ExperimentConfig cfg = base;
    cfg.rounds = T;
    cfg.probe_every = T;
    std::string warning;
    hypers.push_back(resolve_hyper(cfg, problem, &warning));
    if (log && !warning.empty()) *log << "T = " << T << ": " << warning << "\n";
    cfgs.push_back(std::move(cfg));
  }
  std::vector<MetricsTrace> traces(horizons.size() * per);
  parallel_for(static_cast<int>(traces.size()), threads,
               [&](int k) { traces[k] = run_repeat(cfgs[k / per], problem, hypers[k / per], k % per, true); });

  RateReport rep;
  std::vector<std::pair<double, double>> pts;
  for (std::size_t j = 0; j < horizons.size(); ++j) {
    std::vector<double> vals;
    for (int r = 0; r < per; ++r) {
      const auto& tr = traces[j * per + r];
      if (!tr.diverged) vals.push_back(tr.time_avg_grad_norm);
    }
    if (vals.empty()) {
      rep.excluded.push_back(horizons[j]);
      if (log) *log << "warning: every run at T = " << horizons[j] << " diverged; point excluded\n";
      continue;
    }
    const double v = mean_std(vals).mean;
    rep.points.push_back({horizons[j], v, hypers[j]});
    pts.emplace_back(static_cast<double>(horizons[j]), v);
  }
  rep.slope = fit_rate(pts);
  rep.exponent = base.schedule.kind == ScheduleKind::Theorem1 ? theorem1_exponent(base.schedule.p)
                                                                : theorem2_exponent(base.schedule.p);
  return rep;
}

int cmd_rate_check(const ExperimentConfig& cfg, const std::vector<long>& horizons, const std::filesystem::path& out_dir,
                   int threads, std::ostream& log) {
  const RateReport rep = rate_check(cfg, horizons, threads, &log);
  std::string csv = "T,alpha,beta,time_avg_grad_norm\n";
  for (const auto& p : rep.points)
    csv += std::to_string(p.horizon) + ',' + fmt(p.hyper.alpha) + ',' + fmt(p.hyper.beta) + ',' + fmt(p.value) + '\n';
  ensure_dir(out_dir);
  write_text(out_dir / "rate_check.csv", csv);
  log << csv;
  log << "fitted slope " << fmt(rep.slope) << ", theoretical exponent " << fmt(rep.exponent) << "\n";
  return kExitOk;
}

NoiseDiagnostics noise_diagnostics(const NoiseSpec& spec, long samples, std::uint64_t seed, int bins) {
  if (samples < 1000) throw Error(ErrorKind::InvalidParameter, "noise diagnostics need at least 1000 samples");
  if (bins < 1) throw Error(ErrorKind::InvalidParameter, "bins must be >= 1");
  NoiseSpec scalar = spec;
  scalar.dim = 1;
  scalar.validate();
  RngStream stream(seed, 0, RngStream::kDiagnostics);
  std::vector<double> draws(samples);
  for (auto& d : draws) d = sample_noise(scalar, stream)(0);

  NoiseDiagnostics out;
  out.samples = samples;
  const std::span<const double> all(draws);
  const std::span<const double> small = all.first(std::max<long>(1000, samples / 10));
  out.tail_slope = tail_slope(all);
  const auto mom = median_of_means(all);
  out.mean = mom.estimate;
  out.mean_se = mom.standard_error;
  out.moment_p12_small = empirical_moment(small, 1.2);
  out.moment_p12 = empirical_moment(all, 1.2);
  out.moment_p2_small = empirical_moment(small, 2.0);
  out.moment_p2 = empirical_moment(all, 2.0);
  out.variance = mean_std(all).stdev;
  out.variance *= out.variance;

  // Histogram over the central 99% so extreme tails do not flatten it.
  std::vector<double> sorted = draws;
  std::sort(sorted.begin(), sorted.end());
  const double lo = sorted[static_cast<std::size_t>(0.005 * (samples - 1))];
  const double hi = sorted[static_cast<std::size_t>(0.995 * (samples - 1))];
  const double width = hi > lo ? (hi - lo) / bins : 1.0;
  out.bin_edges.resize(bins + 1);
  for (int b = 0; b <= bins; ++b) out.bin_edges[b] = lo + width * b;
  out.counts.assign(bins, 0);
  for (double d : draws) {
    if (d < lo || d > hi) continue;
    const int b = std::min(bins - 1, static_cast<int>((d - lo) / width));
    ++out.counts[b];
  }
  return out;
}

int cmd_noise_diag(const ExperimentConfig& cfg, long samples, const std::filesystem::path& out_dir, std::ostream& log) {
  if (cfg.noise.family == NoiseFamily::None) throw Error(ErrorKind::Config, "noise.family: nothing to diagnose");
  const auto d = noise_diagnostics(cfg.noise, samples, cfg.seed);
  ensure_dir(out_dir);
  std::string hist = "bin_lo,bin_hi,count\n";
  for (std::size_t b = 0; b < d.counts.size(); ++b)
    hist += fmt(d.bin_edges[b]) + ',' + fmt(d.bin_edges[b + 1]) + ',' + std::to_string(d.counts[b]) + '\n';
  write_text(out_dir / "noise_hist.csv", hist);
  std::string summary = "statistic,value\n";
  const std::pair<const char*, double> stats[] = {
      {"samples", static_cast<double>(d.samples)},
      {"tail_slope", d.tail_slope},
      {"mom_mean", d.mean},
      {"mom_se", d.mean_se},
      {"moment_p1.2_tenth", d.moment_p12_small},
      {"moment_p1.2", d.moment_p12},
      {"moment_p2_tenth", d.moment_p2_small},
      {"moment_p2", d.moment_p2},
      {"variance", d.variance},
  };
  for (const auto& [name, v] : stats) summary += std::string(name) + ',' + fmt(v) + '\n';
  write_text(out_dir / "noise_summary.csv", summary);
  log << "family " << to_string(cfg.noise.family) << "\n" << summary;
  return kExitOk;
}

int cmd_topo_info(const ExperimentConfig& cfg, std::ostream& log) {
  const MixingMatrix w = build_mixing(cfg.topology, cfg.base_dir);
  log << "kind " << to_string(cfg.topology.kind) << "\nn " << w.size() << "\nweighting "
      << to_string(cfg.topology.weighting) << "\nlambda " << fmt(w.lambda()) << "\n";
  return kExitOk;
}

}  // namespace gtnsgdm
