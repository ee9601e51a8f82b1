#pragma once

namespace gtnsgdm {

/// Step size and momentum prescribed by the convergence theorems.
struct ScheduledHyper {
  double alpha;
  double beta;
  /// The guarantees assume beta >= 1/10; a smaller beta is allowed but flagged.
  bool beta_warning;
};

/// Shared step-size rule: the minimum of 1 and three horizon-dependent terms.
double theorem_step_size(double delta0, double smoothness, double lambda, int n, long horizon, double beta);

/// Known tail index p: 1 - beta = T^(-p / (3p - 2)).
ScheduledHyper theorem1_hyper(double delta0, double smoothness, double lambda, int n, long horizon, double p);
/// Unknown tail index: 1 - beta = T^(-1/2).
ScheduledHyper theorem2_hyper(double delta0, double smoothness, double lambda, int n, long horizon);

/// Rate exponents of the time-averaged gradient norm in T.
double theorem1_exponent(double p);  // -(p - 1) / (3p - 2)
double theorem2_exponent(double p);  // -(p - 1) / (2p)

}  // namespace gtnsgdm
