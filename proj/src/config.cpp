#include "gtnsgdm/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "gtnsgdm/error.hpp"

namespace gtnsgdm {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

[[noreturn]] void config_error(const std::string& where, const std::string& what) {
  throw Error(ErrorKind::Config, where + ": " + what);
}

ConfigValue parse_scalar(const std::string& raw, const std::string& where) {
  ConfigValue v;
  if (raw.empty()) config_error(where, "missing value");
  if (raw.front() == '"') {
    if (raw.size() < 2 || raw.back() != '"') config_error(where, "unterminated string");
    v.type = ConfigValue::Type::String;
    v.text = raw.substr(1, raw.size() - 2);
    return v;
  }
  if (raw == "true" || raw == "false") {
    v.type = ConfigValue::Type::Bool;
    v.text = raw;
    return v;
  }
  char* end = nullptr;
  std::strtod(raw.c_str(), &end);
  if (end == raw.c_str() || *end != '\0') config_error(where, "cannot parse value '" + raw + "'");
  v.type = ConfigValue::Type::Number;
  v.text = raw;
  return v;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  std::string s = buf;
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

}  // namespace

ConfigDocument ConfigDocument::parse(const std::string& text) {
  ConfigDocument doc;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string body = trim(strip_comment(line));
    if (body.empty()) continue;
    const std::string where = "line " + std::to_string(lineno);
    if (body.front() == '[') {
      if (body.back() != ']') config_error(where, "unterminated section header");
      section = trim(std::string_view(body).substr(1, body.size() - 2));
      if (section.empty()) config_error(where, "empty section name");
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) config_error(where, "expected key = value");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string raw = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) config_error(where, "empty key");
    const std::string full = section.empty() ? key : section + "." + key;
    if (doc.values_.count(full)) config_error(full, "duplicate key");
    ConfigValue value;
    if (!raw.empty() && raw.front() == '[') {
      if (raw.back() != ']') config_error(full, "unterminated array");
      value.type = ConfigValue::Type::Array;
      std::istringstream items(raw.substr(1, raw.size() - 2));
      std::string item;
      while (std::getline(items, item, ',')) {
        const std::string t = trim(item);
        if (t.empty()) continue;
        value.items.push_back(parse_scalar(t, full).text);
      }
    } else {
      value = parse_scalar(raw, full);
    }
    doc.values_.emplace(full, std::move(value));
  }
  return doc;
}

ConfigDocument ConfigDocument::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Config, path.string() + ": cannot open config file");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

const ConfigValue* ConfigDocument::find(const std::string& key) const {
  auto it = values_.find(key);
  return it == values_.end() ? nullptr : &it->second;
}

std::string ConfigDocument::get_string(const std::string& key, const std::string& fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  if (v->type == ConfigValue::Type::Array) config_error(key, "expected a scalar");
  return v->text;
}

double ConfigDocument::get_double(const std::string& key, double fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  if (v->type != ConfigValue::Type::Number) config_error(key, "expected a number");
  return std::strtod(v->text.c_str(), nullptr);
}

long long ConfigDocument::get_int(const std::string& key, long long fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  if (v->type != ConfigValue::Type::Number) config_error(key, "expected an integer");
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(v->text, &used);
  } catch (const std::exception&) {
    config_error(key, "expected an integer");
  }
  if (used != v->text.size()) {
    // Accept integral floats like 1e4.
    const double d = std::strtod(v->text.c_str(), nullptr);
    if (d != std::floor(d) || std::abs(d) > 9e15) config_error(key, "expected an integer");
    return static_cast<long long>(d);
  }
  return out;
}

std::uint64_t ConfigDocument::get_u64(const std::string& key, std::uint64_t fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  if (v->type != ConfigValue::Type::Number || v->text.empty() || v->text.front() == '-')
    config_error(key, "expected an unsigned integer");
  std::size_t used = 0;
  std::uint64_t out = 0;
  try {
    out = std::stoull(v->text, &used);
  } catch (const std::exception&) {
    config_error(key, "expected an unsigned integer");
  }
  if (used != v->text.size()) config_error(key, "expected an unsigned integer");
  return out;
}

bool ConfigDocument::get_bool(const std::string& key, bool fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  if (v->type != ConfigValue::Type::Bool) config_error(key, "expected true or false");
  return v->text == "true";
}

std::vector<double> ConfigDocument::get_doubles(const std::string& key) const {
  const auto* v = find(key);
  if (!v) return {};
  if (v->type != ConfigValue::Type::Array) config_error(key, "expected an array of numbers");
  std::vector<double> out;
  for (const auto& item : v->items) {
    char* end = nullptr;
    const double d = std::strtod(item.c_str(), &end);
    if (end == item.c_str() || *end != '\0') config_error(key, "expected an array of numbers");
    out.push_back(d);
  }
  return out;
}

std::vector<std::string> ConfigDocument::unknown_keys(const std::vector<std::string>& known) const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_)
    if (std::find(known.begin(), known.end(), k) == known.end()) out.push_back(k);
  return out;
}

std::string_view to_string(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::TukeyRegression: return "tukey-regression";
    case ProblemKind::Quadratic: return "quadratic";
    case ProblemKind::Claim1: return "claim1";
  }
  return "tukey-regression";
}

std::string_view to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::Fixed: return "fixed";
    case ScheduleKind::Theorem1: return "theorem1";
    case ScheduleKind::Theorem2: return "theorem2";
  }
  return "fixed";
}

namespace {

ProblemKind parse_problem_kind(const std::string& s) {
  if (s == "tukey-regression") return ProblemKind::TukeyRegression;
  if (s == "quadratic") return ProblemKind::Quadratic;
  if (s == "claim1") return ProblemKind::Claim1;
  config_error("objective.kind", "unknown objective '" + s + "'");
}

ScheduleKind parse_schedule_kind(const std::string& s) {
  if (s == "fixed") return ScheduleKind::Fixed;
  if (s == "theorem1") return ScheduleKind::Theorem1;
  if (s == "theorem2") return ScheduleKind::Theorem2;
  config_error("schedule.kind", "unknown schedule '" + s + "'");
}

template <typename Fn>
auto with_path(const std::string& path, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Config) throw;
    config_error(path, e.what());
  }
}

const std::vector<std::string> kKnownKeys = {
    "seed",
    "rounds",
    "probe_every",
    "repeats",
    "topology.kind",
    "topology.n",
    "topology.weighting",
    "topology.file",
    "noise.family",
    "noise.variance",
    "noise.dof",
    "noise.scale",
    "noise.stability",
    "noise.skewness",
    "noise.multiplier",
    "objective.kind",
    "objective.samples",
    "objective.dim",
    "objective.c",
    "objective.batch",
    "objective.x0",
    "objective.data_seed",
    "objective.dataset",
    "objective.w_star",
    "objective.bound",
    "objective.centers",
    "method.name",
    "method.alpha",
    "method.beta",
    "method.tau",
    "method.beta1",
    "method.beta2",
    "method.cap",
    "method.eps",
    "method.mu",
    "method.c_phi",
    "schedule.kind",
    "schedule.p",
    "schedule.L",
    "schedule.delta0",
};

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& text, const std::filesystem::path& base_dir) {
  const auto doc = ConfigDocument::parse(text);
  if (const auto unknown = doc.unknown_keys(kKnownKeys); !unknown.empty())
    config_error(unknown.front(), "unknown key");

  ExperimentConfig cfg;
  cfg.base_dir = base_dir;
  cfg.seed = doc.get_u64("seed", cfg.seed);
  cfg.rounds = doc.get_int("rounds", cfg.rounds);
  cfg.probe_every = doc.get_int("probe_every", cfg.probe_every);
  cfg.repeats = static_cast<int>(doc.get_int("repeats", cfg.repeats));

  auto& topo = cfg.topology;
  topo.kind = with_path("topology.kind", [&] { return parse_graph_kind(doc.get_string("topology.kind", "ring")); });
  topo.n = static_cast<int>(doc.get_int("topology.n", topo.n));
  topo.weighting = with_path("topology.weighting", [&] {
    const std::string fallback = topo.kind == GraphKind::DirectedExponential ? "uniform-out" : "metropolis";
    return parse_weighting(doc.get_string("topology.weighting", fallback));
  });
  topo.file = doc.get_string("topology.file", "");

  auto& noise = cfg.noise;
  noise.family = with_path("noise.family", [&] { return parse_noise_family(doc.get_string("noise.family", "none")); });
  noise.variance = doc.get_double("noise.variance", noise.variance);
  noise.dof = doc.get_double("noise.dof", noise.dof);
  noise.stability = doc.get_double("noise.stability", noise.stability);
  noise.skewness = doc.get_double("noise.skewness", noise.skewness);
  noise.multiplier = doc.get_double("noise.multiplier", noise.multiplier);
  if (noise.family == NoiseFamily::StudentT) noise.t_scale = doc.get_double("noise.scale", noise.t_scale);
  if (noise.family == NoiseFamily::AlphaStable) noise.stable_scale = doc.get_double("noise.scale", noise.stable_scale);

  auto& obj = cfg.objective;
  obj.kind = parse_problem_kind(doc.get_string("objective.kind", "tukey-regression"));
  obj.samples = static_cast<int>(doc.get_int("objective.samples", obj.samples));
  obj.dim = static_cast<int>(doc.get_int("objective.dim", obj.dim));
  obj.c = doc.get_double("objective.c", obj.c);
  obj.batch = static_cast<int>(doc.get_int("objective.batch", obj.batch));
  obj.x0 = doc.get_double("objective.x0", obj.x0);
  if (doc.has("objective.data_seed")) obj.data_seed = doc.get_u64("objective.data_seed", 0);
  obj.dataset = doc.get_string("objective.dataset", "");
  obj.w_star = doc.get_string("objective.w_star", "");
  obj.bound = doc.get_double("objective.bound", obj.bound);
  obj.centers = doc.get_doubles("objective.centers");
  if (obj.kind != ProblemKind::TukeyRegression) obj.dim = 1;
  noise.dim = obj.dim;

  cfg.method = with_path("method.name", [&] { return parse_method(doc.get_string("method.name", "gt-nsgdm")); });
  auto& h = cfg.hyper;
  h.alpha = doc.get_double("method.alpha", h.alpha);
  h.beta = doc.get_double("method.beta", h.beta);
  h.tau = doc.get_double("method.tau", h.tau);
  h.beta1 = doc.get_double("method.beta1", h.beta1);
  h.beta2 = doc.get_double("method.beta2", h.beta2);
  h.cap = doc.get_double("method.cap", h.cap);
  h.eps = doc.get_double("method.eps", h.eps);
  h.mu = doc.get_double("method.mu", h.mu);
  h.c_phi = doc.get_double("method.c_phi", h.c_phi);

  auto& s = cfg.schedule;
  s.kind = parse_schedule_kind(doc.get_string("schedule.kind", "fixed"));
  s.p = doc.get_double("schedule.p", s.p);
  s.smoothness = doc.get_double("schedule.L", s.smoothness);
  if (doc.has("schedule.delta0")) s.delta0 = doc.get_double("schedule.delta0", 0.0);

  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Config, path.string() + ": cannot open config file");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_experiment_config(buf.str(), path.parent_path());
}

void ExperimentConfig::validate() const {
  if (rounds < 0) config_error("rounds", "must be >= 0");
  if (probe_every < 1) config_error("probe_every", "must be >= 1");
  if (repeats < 1) config_error("repeats", "must be >= 1");
  if (topology.n < 1) config_error("topology.n", "must be >= 1");
  if (topology.kind == GraphKind::Custom && topology.file.empty())
    config_error("topology.file", "custom topology needs an adjacency file");
  with_path("noise", [&] {
    noise.validate();
    return 0;
  });
  switch (objective.kind) {
    case ProblemKind::TukeyRegression:
      if (objective.dataset.empty()) {
        if (objective.dim < 4) config_error("objective.dim", "token dataset needs d >= 4");
        if (objective.samples < 1) config_error("objective.samples", "must be >= 1");
        if (topology.n > objective.samples) config_error("topology.n", "more nodes than samples");
      } else if (objective.w_star.empty()) {
        config_error("objective.w_star", "dataset import needs a w_star sidecar");
      }
      if (!(objective.c > 0.0)) config_error("objective.c", "must be > 0");
      if (objective.batch < 0) config_error("objective.batch", "must be >= 0");
      break;
    case ProblemKind::Quadratic:
      if (static_cast<int>(objective.centers.size()) != topology.n)
        config_error("objective.centers", "need one center per node");
      break;
    case ProblemKind::Claim1:
      if (topology.n % 2 != 0) config_error("topology.n", "claim1 instance needs an even node count");
      if (!(objective.bound >= 1.0)) config_error("objective.bound", "must be >= 1");
      break;
  }
  if (schedule.kind == ScheduleKind::Fixed) {
    with_path("method", [&] {
      hyper.validate(method);
      return 0;
    });
  } else {
    if (method != Method::GtNsgdm) config_error("schedule.kind", "theorem schedules apply to gt-nsgdm only");
    if (schedule.kind == ScheduleKind::Theorem1 && !(schedule.p > 1.0 && schedule.p <= 2.0))
      config_error("schedule.p", "must lie in (1, 2]");
    if (!(schedule.smoothness > 0.0)) config_error("schedule.L", "must be > 0");
    if (schedule.delta0 && !(*schedule.delta0 > 0.0)) config_error("schedule.delta0", "must be > 0");
  }
}

bool operator==(const NoiseSpec& a, const NoiseSpec& b) {
  return a.family == b.family && a.dim == b.dim && a.variance == b.variance && a.dof == b.dof &&
         a.t_scale == b.t_scale && a.stability == b.stability && a.skewness == b.skewness &&
         a.stable_scale == b.stable_scale && a.multiplier == b.multiplier;
}

bool operator==(const Hyper& a, const Hyper& b) {
  return a.alpha == b.alpha && a.beta == b.beta && a.tau == b.tau && a.beta1 == b.beta1 && a.beta2 == b.beta2 &&
         a.cap == b.cap && a.eps == b.eps && a.mu == b.mu && a.c_phi == b.c_phi;
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return a.seed == b.seed && a.rounds == b.rounds && a.probe_every == b.probe_every && a.repeats == b.repeats &&
         a.topology == b.topology && a.noise == b.noise && a.objective == b.objective && a.method == b.method &&
         a.hyper == b.hyper && a.schedule == b.schedule;
}

std::string serialize_experiment_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  auto num = [](double v) { return format_double(v); };
  auto str = [](std::string_view s) { return "\"" + std::string(s) + "\""; };
  out << "seed = " << cfg.seed << "\n";
  out << "rounds = " << cfg.rounds << "\n";
  out << "probe_every = " << cfg.probe_every << "\n";
  out << "repeats = " << cfg.repeats << "\n";

  out << "\n[topology]\n";
  out << "kind = " << str(to_string(cfg.topology.kind)) << "\n";
  out << "n = " << cfg.topology.n << "\n";
  out << "weighting = " << str(to_string(cfg.topology.weighting)) << "\n";
  if (!cfg.topology.file.empty()) out << "file = " << str(cfg.topology.file) << "\n";

  const auto& nz = cfg.noise;
  out << "\n[noise]\n";
  out << "family = " << str(to_string(nz.family)) << "\n";
  out << "variance = " << num(nz.variance) << "\n";
  out << "dof = " << num(nz.dof) << "\n";
  out << "stability = " << num(nz.stability) << "\n";
  out << "skewness = " << num(nz.skewness) << "\n";
  out << "multiplier = " << num(nz.multiplier) << "\n";
  if (nz.family == NoiseFamily::StudentT) out << "scale = " << num(nz.t_scale) << "\n";
  if (nz.family == NoiseFamily::AlphaStable) out << "scale = " << num(nz.stable_scale) << "\n";

  const auto& ob = cfg.objective;
  out << "\n[objective]\n";
  out << "kind = " << str(to_string(ob.kind)) << "\n";
  out << "samples = " << ob.samples << "\n";
  out << "dim = " << ob.dim << "\n";
  out << "c = " << num(ob.c) << "\n";
  out << "batch = " << ob.batch << "\n";
  out << "x0 = " << num(ob.x0) << "\n";
  if (ob.data_seed) out << "data_seed = " << *ob.data_seed << "\n";
  if (!ob.dataset.empty()) out << "dataset = " << str(ob.dataset) << "\n";
  if (!ob.w_star.empty()) out << "w_star = " << str(ob.w_star) << "\n";
  out << "bound = " << num(ob.bound) << "\n";
  if (!ob.centers.empty()) {
    out << "centers = [";
    for (std::size_t k = 0; k < ob.centers.size(); ++k) out << (k ? ", " : "") << num(ob.centers[k]);
    out << "]\n";
  }

  const auto& h = cfg.hyper;
  out << "\n[method]\n";
  out << "name = " << str(to_string(cfg.method)) << "\n";
  out << "alpha = " << num(h.alpha) << "\n";
  out << "beta = " << num(h.beta) << "\n";
  out << "tau = " << num(h.tau) << "\n";
  out << "beta1 = " << num(h.beta1) << "\n";
  out << "beta2 = " << num(h.beta2) << "\n";
  out << "cap = " << num(h.cap) << "\n";
  out << "eps = " << num(h.eps) << "\n";
  out << "mu = " << num(h.mu) << "\n";
  out << "c_phi = " << num(h.c_phi) << "\n";

  out << "\n[schedule]\n";
  out << "kind = " << str(to_string(cfg.schedule.kind)) << "\n";
  out << "p = " << num(cfg.schedule.p) << "\n";
  out << "L = " << num(cfg.schedule.smoothness) << "\n";
  if (cfg.schedule.delta0) out << "delta0 = " << num(*cfg.schedule.delta0) << "\n";
  return out.str();
}

}  // namespace gtnsgdm
