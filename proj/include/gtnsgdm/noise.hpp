#pragma once

#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "gtnsgdm/rng.hpp"

namespace gtnsgdm {

enum class NoiseFamily { None, Gaussian, StudentT, AlphaStable };

NoiseFamily parse_noise_family(std::string_view name);
std::string_view to_string(NoiseFamily family);

/// Injected zero-mean noise law, i.i.d. across coordinates.
struct NoiseSpec {
  NoiseFamily family = NoiseFamily::None;
  int dim = 1;
  /// Gaussian per-coordinate variance.
  double variance = 0.0;
  /// Student-t degrees of freedom and scale.
  double dof = 2.0;
  double t_scale = 1.0;
  /// Alpha-stable stability, skewness, scale, and post-multiplier.
  double stability = 2.0;
  double skewness = 0.0;
  double stable_scale = 1.0;
  double multiplier = 1.0;

  /// Throws InvalidParameter on a contract violation for the active family.
  void validate() const;

  static NoiseSpec none(int dim);
  static NoiseSpec gaussian(int dim, double variance);
  static NoiseSpec student_t(int dim, double dof, double scale);
  static NoiseSpec alpha_stable(int dim, double stability, double skewness, double scale, double multiplier);
};

Eigen::VectorXd sample_gaussian(const NoiseSpec& spec, RngStream& stream);
Eigen::VectorXd sample_student_t(const NoiseSpec& spec, RngStream& stream);
Eigen::VectorXd sample_alpha_stable(const NoiseSpec& spec, RngStream& stream);

/// Dispatches on spec.family; None yields a zero vector without consuming draws.
Eigen::VectorXd sample_noise(const NoiseSpec& spec, RngStream& stream);

/// Chambers-Mallows-Stuck map from U ~ Uniform(-pi/2, pi/2), E ~ Exp(1) to
/// S(stability, skewness, scale, 0) in the 1-parameterization (zero mean for
/// stability > 1).
double cms_transform(double stability, double skewness, double scale, double u, double e);

/// (mean of ||sample||^p)^(1/p).
double empirical_moment(std::span<const Eigen::VectorXd> samples, double p);
double empirical_moment(std::span<const double> samples, double p);

/// Median of block means and its standard error (1.2533 * 1.4826 * MAD / sqrt(blocks)).
struct RobustMean {
  double estimate;
  double standard_error;
};
RobustMean median_of_means(std::span<const double> values, int blocks = 50);

/// Least-squares slope of log S(x) vs log x over the largest `tail_fraction`
/// of |values|, where S is the empirical survival function.
double tail_slope(std::span<const double> values, double tail_fraction = 0.01);

}  // namespace gtnsgdm
