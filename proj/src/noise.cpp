#include "gtnsgdm/noise.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "gtnsgdm/error.hpp"

namespace gtnsgdm {

NoiseFamily parse_noise_family(std::string_view name) {
  if (name == "none") return NoiseFamily::None;
  if (name == "gaussian") return NoiseFamily::Gaussian;
  if (name == "student-t") return NoiseFamily::StudentT;
  if (name == "alpha-stable") return NoiseFamily::AlphaStable;
  throw Error(ErrorKind::InvalidInput, "unknown noise family '" + std::string(name) + "'");
}

std::string_view to_string(NoiseFamily family) {
  switch (family) {
    case NoiseFamily::None: return "none";
    case NoiseFamily::Gaussian: return "gaussian";
    case NoiseFamily::StudentT: return "student-t";
    case NoiseFamily::AlphaStable: return "alpha-stable";
  }
  return "none";
}

void NoiseSpec::validate() const {
  if (dim < 1) throw Error(ErrorKind::InvalidParameter, "noise dimension must be positive");
  switch (family) {
    case NoiseFamily::None: break;
    case NoiseFamily::Gaussian:
      if (!(variance >= 0.0)) throw Error(ErrorKind::InvalidParameter, "gaussian variance must be >= 0");
      break;
    case NoiseFamily::StudentT:
      if (!(dof > 1.0)) throw Error(ErrorKind::InvalidParameter, "student-t needs dof > 1 for a finite mean");
      if (!(t_scale >= 0.0)) throw Error(ErrorKind::InvalidParameter, "student-t scale must be >= 0");
      break;
    case NoiseFamily::AlphaStable:
      if (!(stability > 1.0)) throw Error(ErrorKind::InvalidParameter, "alpha-stable needs stability > 1");
      if (!(stability <= 2.0)) throw Error(ErrorKind::InvalidParameter, "alpha-stable needs stability <= 2");
      if (!(skewness >= -1.0 && skewness <= 1.0))
        throw Error(ErrorKind::InvalidParameter, "alpha-stable skewness must lie in [-1, 1]");
      if (!(stable_scale > 0.0)) throw Error(ErrorKind::InvalidParameter, "alpha-stable scale must be > 0");
      if (!std::isfinite(multiplier)) throw Error(ErrorKind::InvalidParameter, "alpha-stable multiplier must be finite");
      break;
  }
}

NoiseSpec NoiseSpec::none(int dim) {
  NoiseSpec s;
  s.dim = dim;
  return s;
}

NoiseSpec NoiseSpec::gaussian(int dim, double variance) {
  NoiseSpec s;
  s.family = NoiseFamily::Gaussian;
  s.dim = dim;
  s.variance = variance;
  return s;
}

NoiseSpec NoiseSpec::student_t(int dim, double dof, double scale) {
  NoiseSpec s;
  s.family = NoiseFamily::StudentT;
  s.dim = dim;
  s.dof = dof;
  s.t_scale = scale;
  return s;
}

NoiseSpec NoiseSpec::alpha_stable(int dim, double stability, double skewness, double scale, double multiplier) {
  NoiseSpec s;
  s.family = NoiseFamily::AlphaStable;
  s.dim = dim;
  s.stability = stability;
  s.skewness = skewness;
  s.stable_scale = scale;
  s.multiplier = multiplier;
  return s;
}

Eigen::VectorXd sample_gaussian(const NoiseSpec& spec, RngStream& stream) {
  if (!(spec.variance >= 0.0)) throw Error(ErrorKind::InvalidParameter, "gaussian variance must be >= 0");
  const double sd = std::sqrt(spec.variance);
  Eigen::VectorXd out(spec.dim);
  for (int k = 0; k < spec.dim; ++k) out(k) = sd * stream.normal();
  return out;
}

Eigen::VectorXd sample_student_t(const NoiseSpec& spec, RngStream& stream) {
  if (!(spec.dof > 1.0)) throw Error(ErrorKind::InvalidParameter, "student-t needs dof > 1 for a finite mean");
  Eigen::VectorXd out(spec.dim);
  for (int k = 0; k < spec.dim; ++k) {
    const double z = stream.normal();
    const double chi2 = 2.0 * stream.gamma(0.5 * spec.dof);
    out(k) = spec.t_scale * z / std::sqrt(chi2 / spec.dof);
  }
  return out;
}

double cms_transform(double stability, double skewness, double scale, double u, double e) {
  const double a = stability;
  const double tan_term = skewness * std::tan(std::numbers::pi * a / 2.0);
  const double theta0 = std::atan(tan_term) / a;
  const double amplitude = std::pow(1.0 + tan_term * tan_term, 1.0 / (2.0 * a));
  const double shifted = a * (u + theta0);
  return scale * amplitude * std::sin(shifted) / std::pow(std::cos(u), 1.0 / a) *
         std::pow(std::cos(u - shifted) / e, (1.0 - a) / a);
}

Eigen::VectorXd sample_alpha_stable(const NoiseSpec& spec, RngStream& stream) {
  if (!(spec.stability > 1.0)) throw Error(ErrorKind::InvalidParameter, "alpha-stable needs stability > 1");
  if (!(spec.stability <= 2.0)) throw Error(ErrorKind::InvalidParameter, "alpha-stable needs stability <= 2");
  if (!(spec.skewness >= -1.0 && spec.skewness <= 1.0))
    throw Error(ErrorKind::InvalidParameter, "alpha-stable skewness must lie in [-1, 1]");
  if (!(spec.stable_scale > 0.0)) throw Error(ErrorKind::InvalidParameter, "alpha-stable scale must be > 0");
  Eigen::VectorXd out(spec.dim);
  for (int k = 0; k < spec.dim; ++k) {
    const double u = std::numbers::pi * (stream.uniform() - 0.5);
    const double e = stream.exponential();
    out(k) = spec.multiplier * cms_transform(spec.stability, spec.skewness, spec.stable_scale, u, e);
  }
  return out;
}

Eigen::VectorXd sample_noise(const NoiseSpec& spec, RngStream& stream) {
  switch (spec.family) {
    case NoiseFamily::None: return Eigen::VectorXd::Zero(spec.dim);
    case NoiseFamily::Gaussian: return sample_gaussian(spec, stream);
    case NoiseFamily::StudentT: return sample_student_t(spec, stream);
    case NoiseFamily::AlphaStable: return sample_alpha_stable(spec, stream);
  }
  return Eigen::VectorXd::Zero(spec.dim);
}

double empirical_moment(std::span<const Eigen::VectorXd> samples, double p) {
  if (samples.empty()) throw Error(ErrorKind::EmptyInput, "empirical_moment needs at least one sample");
  if (!(p > 0.0 && p <= 2.0)) throw Error(ErrorKind::InvalidParameter, "moment order must lie in (0, 2]");
  double acc = 0.0;
  for (const auto& s : samples) acc += std::pow(s.norm(), p);
  return std::pow(acc / static_cast<double>(samples.size()), 1.0 / p);
}

double empirical_moment(std::span<const double> samples, double p) {
  if (samples.empty()) throw Error(ErrorKind::EmptyInput, "empirical_moment needs at least one sample");
  if (!(p > 0.0 && p <= 2.0)) throw Error(ErrorKind::InvalidParameter, "moment order must lie in (0, 2]");
  double acc = 0.0;
  for (double s : samples) acc += std::pow(std::abs(s), p);
  return std::pow(acc / static_cast<double>(samples.size()), 1.0 / p);
}

namespace {
double median(std::vector<double> v) {
  const auto mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    m = 0.5 * (m + lower);
  }
  return m;
}
}  // namespace

RobustMean median_of_means(std::span<const double> values, int blocks) {
  if (values.empty()) throw Error(ErrorKind::EmptyInput, "median_of_means needs values");
  if (blocks < 1 || static_cast<std::size_t>(blocks) > values.size())
    throw Error(ErrorKind::InvalidParameter, "block count must lie in [1, sample count]");
  const std::size_t per = values.size() / blocks;
  std::vector<double> means(blocks);
  for (int b = 0; b < blocks; ++b) {
    double acc = 0.0;
    for (std::size_t k = 0; k < per; ++k) acc += values[b * per + k];
    means[b] = acc / static_cast<double>(per);
  }
  const double center = median(means);
  std::vector<double> dev(blocks);
  for (int b = 0; b < blocks; ++b) dev[b] = std::abs(means[b] - center);
  const double sigma = 1.4826 * median(dev);
  return {center, 1.2533 * sigma / std::sqrt(static_cast<double>(blocks))};
}

double tail_slope(std::span<const double> values, double tail_fraction) {
  if (values.empty()) throw Error(ErrorKind::EmptyInput, "tail_slope needs values");
  std::vector<double> mags(values.size());
  std::transform(values.begin(), values.end(), mags.begin(), [](double v) { return std::abs(v); });
  std::sort(mags.begin(), mags.end(), std::greater<>());
  const auto n = static_cast<double>(mags.size());
  const auto k = static_cast<std::size_t>(std::floor(tail_fraction * n));
  if (k < 3) throw Error(ErrorKind::InsufficientData, "tail fraction leaves fewer than 3 points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t j = 0; j < k; ++j) {
    // S(x_(j)) estimated by (j + 1) / n for the (j+1)-th largest magnitude.
    const double x = std::log(mags[j]);
    const double y = std::log(static_cast<double>(j + 1) / n);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const auto m = static_cast<double>(k);
  return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

}  // namespace gtnsgdm
