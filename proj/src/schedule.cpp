#include "gtnsgdm/schedule.hpp"

#include <algorithm>
#include <cmath>

#include "gtnsgdm/error.hpp"

namespace gtnsgdm {

namespace {
void check_common(double delta0, double smoothness, double lambda, int n, long horizon) {
  if (!(delta0 > 0.0)) throw Error(ErrorKind::InvalidParameter, "Delta0 must be > 0");
  if (!(smoothness > 0.0)) throw Error(ErrorKind::InvalidParameter, "L must be > 0");
  if (!(lambda >= 0.0 && lambda < 1.0)) throw Error(ErrorKind::InvalidParameter, "lambda must lie in [0, 1)");
  if (n < 1) throw Error(ErrorKind::InvalidParameter, "n must be >= 1");
  if (horizon < 1) throw Error(ErrorKind::InvalidParameter, "T must be >= 1");
}

void check_tail(double p) {
  if (!(p > 1.0 && p <= 2.0)) throw Error(ErrorKind::InvalidParameter, "tail index p must lie in (1, 2]");
}
}  // namespace

double theorem_step_size(double delta0, double smoothness, double lambda, int n, long horizon, double beta) {
  check_common(delta0, smoothness, lambda, n, horizon);
  const double lt = smoothness * static_cast<double>(horizon);
  const double gap = 1.0 - lambda;
  return std::min({1.0, std::sqrt(delta0 * (1.0 - beta) * gap / (4.0 * lt)), std::sqrt(delta0 * gap / (3.5 * lt)),
                   std::sqrt(gap * gap * delta0 / (2.0 * std::sqrt(static_cast<double>(n)) * lt))});
}

ScheduledHyper theorem1_hyper(double delta0, double smoothness, double lambda, int n, long horizon, double p) {
  check_common(delta0, smoothness, lambda, n, horizon);
  check_tail(p);
  const double one_minus_beta = 1.0 / std::pow(static_cast<double>(horizon), p / (3.0 * p - 2.0));
  const double beta = 1.0 - one_minus_beta;
  return {theorem_step_size(delta0, smoothness, lambda, n, horizon, beta), beta, beta < 0.1};
}

ScheduledHyper theorem2_hyper(double delta0, double smoothness, double lambda, int n, long horizon) {
  check_common(delta0, smoothness, lambda, n, horizon);
  const double one_minus_beta = 1.0 / std::sqrt(static_cast<double>(horizon));
  const double beta = 1.0 - one_minus_beta;
  return {theorem_step_size(delta0, smoothness, lambda, n, horizon, beta), beta, beta < 0.1};
}

double theorem1_exponent(double p) {
  check_tail(p);
  return -(p - 1.0) / (3.0 * p - 2.0);
}

double theorem2_exponent(double p) {
  check_tail(p);
  return -(p - 1.0) / (2.0 * p);
}

}  // namespace gtnsgdm
