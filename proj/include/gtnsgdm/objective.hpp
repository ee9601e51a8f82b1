#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "gtnsgdm/noise.hpp"
#include "gtnsgdm/rng.hpp"
#include "gtnsgdm/topology.hpp"

namespace gtnsgdm {

inline constexpr double kTukeyC = 4.6851;

/// Synthetic tokenized regression data: {0,1} features and exact labels y = X w*.
struct Dataset {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  Eigen::VectorXd w_star;

  int samples() const { return static_cast<int>(x.rows()); }
  int dim() const { return static_cast<int>(x.cols()); }
};

/// Columns 1-2 ~ Bern(0.9), 3-4 ~ Bern(0.5), the rest ~ Bern(0.1); w* ~ N(0, I).
Dataset generate_token_dataset(int n_samples, int dim, std::uint64_t seed);

/// CSV with header `x1,...,xd,y`; w* goes to a one-column sidecar `w_star`.
void write_dataset_csv(const Dataset& ds, const std::filesystem::path& data_path,
                       const std::filesystem::path& w_star_path);
Dataset read_dataset_csv(const std::filesystem::path& data_path, const std::filesystem::path& w_star_path);

double tukey_loss(double r, double c = kTukeyC);
double tukey_grad(double r, double c = kTukeyC);

enum class ObjectiveKind { TukeyRegression, QuadraticScalar };

/// A node's private cost f_i. Immutable once built.
class LocalObjective {
 public:
  static LocalObjective tukey(Eigen::MatrixXd x, Eigen::VectorXd y, double c = kTukeyC);
  /// f(x) = (x - center)^2 / 2 on the real line.
  static LocalObjective quadratic(double center);

  ObjectiveKind kind() const noexcept { return kind_; }
  int dim() const noexcept { return kind_ == ObjectiveKind::QuadraticScalar ? 1 : static_cast<int>(x_.cols()); }
  int samples() const noexcept { return kind_ == ObjectiveKind::QuadraticScalar ? 1 : static_cast<int>(x_.rows()); }
  double center() const noexcept { return center_; }
  double c() const noexcept { return c_; }
  const Eigen::MatrixXd& features() const noexcept { return x_; }
  const Eigen::VectorXd& labels() const noexcept { return y_; }

  /// Mean loss over the shard.
  double value(const Eigen::VectorXd& w) const;
  /// Exact gradient over the full shard.
  Eigen::VectorXd gradient(const Eigen::VectorXd& w) const;
  /// Mean gradient over a subset of shard rows.
  Eigen::VectorXd gradient(const Eigen::VectorXd& w, std::span<const int> indices) const;

 private:
  ObjectiveKind kind_ = ObjectiveKind::QuadraticScalar;
  Eigen::MatrixXd x_;
  Eigen::VectorXd y_;
  double c_ = kTukeyC;
  double center_ = 0.0;
};

Eigen::VectorXd local_gradient(const LocalObjective& obj, const Eigen::VectorXd& w, std::span<const int> indices);

/// Contiguous shards; the first (samples mod n_nodes) shards get one extra row.
std::vector<LocalObjective> partition(const Dataset& ds, int n_nodes, double c = kTukeyC);

/// f = (1/n) sum_i f_i and its gradient.
double global_value(std::span<const LocalObjective> objectives, const Eigen::VectorXd& w);
Eigen::VectorXd global_gradient(std::span<const LocalObjective> objectives, const Eigen::VectorXd& w);

/// Per-node stochastic first-order oracle: exact shard gradient (or a uniform
/// minibatch when batch > 0) plus one fresh noise draw per call.
class Oracle {
 public:
  Oracle(std::shared_ptr<const LocalObjective> objective, NoiseSpec noise, int batch, std::uint64_t seed, int node);

  const LocalObjective& objective() const { return *objective_; }
  const NoiseSpec& noise() const { return noise_; }
  const RngStream& stream() const { return noise_stream_; }

  Eigen::VectorXd sample(const Eigen::VectorXd& w);

 private:
  std::shared_ptr<const LocalObjective> objective_;
  NoiseSpec noise_;
  int batch_;
  RngStream noise_stream_;
  RngStream batch_stream_;
  std::vector<int> indices_;
};

Eigen::VectorXd stochastic_gradient(Oracle& oracle, const Eigen::VectorXd& w);

/// Heterogeneous scalar quadratics on a complete graph where per-node
/// normalization without tracking stalls at distance >= bound from the optimum.
struct Claim1Instance {
  std::vector<LocalObjective> objectives;
  MixingMatrix weights;
  double x0;
  double a;
  double b;
};

inline constexpr double kClaim1Margin = 0.5;

Claim1Instance claim1_instance(int n, double bound);

}  // namespace gtnsgdm
