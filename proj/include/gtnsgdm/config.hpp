#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gtnsgdm/noise.hpp"
#include "gtnsgdm/optim.hpp"
#include "gtnsgdm/topology.hpp"

namespace gtnsgdm {

/// One `key = value` entry of a TOML-style file. Scalars keep their source
/// text so 64-bit integers survive untouched.
struct ConfigValue {
  enum class Type { String, Number, Bool, Array };
  Type type = Type::String;
  std::string text;
  std::vector<std::string> items;
};

/// Flat view of a TOML-style document: `[a.b]` headers prefix the keys below
/// them, giving fully dotted keys such as `noise.stability`.
class ConfigDocument {
 public:
  static ConfigDocument parse(const std::string& text);
  static ConfigDocument load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  const ConfigValue* find(const std::string& key) const;
  const std::map<std::string, ConfigValue>& values() const { return values_; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key) const;

  /// Keys not in `known` (used to reject typos).
  std::vector<std::string> unknown_keys(const std::vector<std::string>& known) const;

 private:
  std::map<std::string, ConfigValue> values_;
};

struct TopologyConfig {
  GraphKind kind = GraphKind::Ring;
  int n = 20;
  Weighting weighting = Weighting::Metropolis;
  std::string file;  ///< adjacency list, custom kind only

  bool operator==(const TopologyConfig&) const = default;
};

enum class ProblemKind { TukeyRegression, Quadratic, Claim1 };

struct ObjectiveConfig {
  ProblemKind kind = ProblemKind::TukeyRegression;
  int samples = 1000;
  int dim = 20;
  double c = kTukeyC;
  int batch = 0;
  double x0 = 0.0;
  std::optional<std::uint64_t> data_seed;
  std::string dataset;  ///< optional CSV import instead of generation
  std::string w_star;
  double bound = 1.0;            ///< claim1
  std::vector<double> centers;   ///< quadratic

  bool operator==(const ObjectiveConfig&) const = default;
};

enum class ScheduleKind { Fixed, Theorem1, Theorem2 };

struct ScheduleConfig {
  ScheduleKind kind = ScheduleKind::Fixed;
  double p = 2.0;
  double smoothness = 1.0;
  std::optional<double> delta0;  ///< computed from the problem when absent

  bool operator==(const ScheduleConfig&) const = default;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  long rounds = 1000;
  long probe_every = 10;
  int repeats = 5;
  TopologyConfig topology;
  NoiseSpec noise;
  ObjectiveConfig objective;
  Method method = Method::GtNsgdm;
  Hyper hyper;
  ScheduleConfig schedule;

  /// Paths in the config resolve against this directory.
  std::filesystem::path base_dir;

  /// Throws Error(Config, "<field.path>: ...") on the first violation.
  void validate() const;
};

bool operator==(const NoiseSpec& a, const NoiseSpec& b);
bool operator==(const Hyper& a, const Hyper& b);
bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

ExperimentConfig parse_experiment_config(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
std::string serialize_experiment_config(const ExperimentConfig& cfg);

std::string_view to_string(ProblemKind kind);
std::string_view to_string(ScheduleKind kind);

}  // namespace gtnsgdm
