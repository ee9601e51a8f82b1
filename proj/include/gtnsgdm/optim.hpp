#pragma once

#include <functional>
#include <limits>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "gtnsgdm/metrics.hpp"
#include "gtnsgdm/objective.hpp"
#include "gtnsgdm/topology.hpp"

namespace gtnsgdm {

enum class Method {
  GtNsgdm,
  Dsgd,
  GtDsgd,
  DsgdClip,
  DsgdGClip,
  DsgdCClip,
  SClipEf,
  GtAdam,
  QgDsgdm,
  VnDsgd,
};

Method parse_method(std::string_view name);
std::string_view to_string(Method method);
/// Methods that maintain a gradient tracker whose network mean is conserved.
bool is_tracking_method(Method method);

/// Algorithm hyperparameters. QG-DSGDm uses `alpha` as its step size eta
/// and `beta` as its momentum; GT-Adam uses `alpha`, `beta1`, `beta2`,
/// `cap` (G) and `eps`.
struct Hyper {
  double alpha = 0.01;
  double beta = 0.9;
  double tau = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double cap = std::numeric_limits<double>::infinity();
  double eps = 1e-8;
  double mu = 0.9;
  double c_phi = 1.0;

  void validate(Method method) const;
};

/// Row-per-node stacks of d-vectors.
using Stack = StateStack;

struct NodeState {
  Eigen::VectorXd x;
  Eigen::VectorXd v;
  Eigen::VectorXd y;
};

/// u / ||u|| when ||u|| > 1e-30, else the zero vector.
Eigen::VectorXd safe_normalize(const Eigen::VectorXd& u);

Eigen::VectorXd clip_l2(const Eigen::VectorXd& g, double tau);
Eigen::VectorXd clip_componentwise(const Eigen::VectorXd& g, double tau);
/// Component-wise smooth clipping (c_phi / sqrt(t+1)) * y / sqrt(y^2 + tau (t+1)^(3/5)).
Eigen::VectorXd smooth_clip(const Eigen::VectorXd& y, long t, double c_phi, double tau);

/// Row i of the result is sum_r w_ir z_r, accumulated in ascending r.
Stack mix(const MixingMatrix& w, const Stack& z);

/// Synchronous lockstep simulation of n nodes. Every round reads only the
/// previous round's snapshot; within a round the order is gradient/v, then
/// tracker mix, then model mix.
class RoundEngine {
 public:
  RoundEngine(MixingMatrix weights, std::vector<Oracle> oracles, Method method, Hyper hyper,
              const Eigen::VectorXd& x0);

  void step();

  Method method() const noexcept { return method_; }
  const Hyper& hyper() const noexcept { return hyper_; }
  const MixingMatrix& weights() const noexcept { return weights_; }
  long iteration() const noexcept { return t_; }
  int nodes() const noexcept { return static_cast<int>(x_.rows()); }
  int dim() const noexcept { return static_cast<int>(x_.cols()); }

  const Stack& x() const noexcept { return x_; }
  const Stack& v() const noexcept { return v_; }
  const Stack& y() const noexcept { return y_; }
  NodeState node(int i) const;

  Eigen::VectorXd mean_x() const;
  Eigen::VectorXd mean_y() const;
  Eigen::VectorXd mean_v() const;

  /// Exact local objectives, one per node.
  std::vector<LocalObjective> objectives() const;

  bool finite() const;

 private:
  void step_gt_nsgdm();
  void step_dsgd();
  void step_gt_dsgd();
  void step_clip();
  void step_sclip_ef();
  void step_gt_adam();
  void step_qg_dsgdm();
  void step_vn_dsgd();
  Stack sample_gradients();

  MixingMatrix weights_;
  std::vector<Oracle> oracles_;
  Method method_;
  Hyper hyper_;
  long t_ = 0;

  Stack x_;
  Stack v_;
  Stack y_;
  // Method-specific buffers: momentum m, second moment, QG momentum m-hat,
  // previous raw gradient.
  Stack m_;
  Stack second_;
  Stack m_hat_;
  Stack g_prev_;
  bool primed_ = false;
};

// Per-method round operations; each checks the engine's method tag.
void gt_nsgdm_step(RoundEngine& engine);
void dsgd_step(RoundEngine& engine);
void gt_dsgd_step(RoundEngine& engine);
void dsgd_clip_step(RoundEngine& engine);
void sclip_ef_step(RoundEngine& engine);
void gt_adam_step(RoundEngine& engine);
void qg_dsgdm_step(RoundEngine& engine);
void vanilla_normalized_dsgd_step(RoundEngine& engine);

/// Per-round diagnostics handed to an observer after each step.
struct RoundInfo {
  long t;  ///< Round just completed (x^{t+1} now in the engine).
  double step_len;
  double tracking_gap;
  double mean_v_norm;
};

struct RunOptions {
  long rounds = 0;
  long probe_every = 10;
  /// Ground truth for the estimation-error column; empty uses the global
  /// minimizer if known, else the column is left at 0.
  Eigen::VectorXd reference;
  /// Accumulate (1/(nT)) sum_t sum_i ||grad f(x_i^t)|| over every round.
  bool time_average = false;
  std::function<void(const RoundEngine&, const RoundInfo&)> observer;
};

/// Runs rounds, probing at t = 0, every probe_every rounds, and at the end.
/// A non-finite state stops the run with a flagged final row.
MetricsTrace run(RoundEngine& engine, const RunOptions& options);

}  // namespace gtnsgdm
