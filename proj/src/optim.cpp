#include "gtnsgdm/optim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gtnsgdm/error.hpp"

namespace gtnsgdm {

namespace {
constexpr double kNormalizeFloor = 1e-30;

struct MethodName {
  Method method;
  std::string_view name;
};

constexpr MethodName kMethodNames[] = {
    {Method::GtNsgdm, "gt-nsgdm"},   {Method::Dsgd, "dsgd"},           {Method::GtDsgd, "gt-dsgd"},
    {Method::DsgdClip, "dsgd-clip"}, {Method::DsgdGClip, "dsgd-gclip"}, {Method::DsgdCClip, "dsgd-cclip"},
    {Method::SClipEf, "sclip-ef"},   {Method::GtAdam, "gt-adam"},      {Method::QgDsgdm, "qg-dsgdm"},
    {Method::VnDsgd, "vn-dsgd"},
};
}  // namespace

Method parse_method(std::string_view name) {
  for (const auto& m : kMethodNames)
    if (m.name == name) return m.method;
  throw Error(ErrorKind::InvalidInput, "unknown method '" + std::string(name) + "'");
}

std::string_view to_string(Method method) {
  for (const auto& m : kMethodNames)
    if (m.method == method) return m.name;
  return "unknown";
}

bool is_tracking_method(Method method) {
  return method == Method::GtNsgdm || method == Method::GtDsgd || method == Method::GtAdam;
}

void Hyper::validate(Method method) const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw Error(ErrorKind::InvalidParameter, "alpha must be > 0");
  switch (method) {
    case Method::GtNsgdm:
      if (!(beta >= 0.0 && beta < 1.0)) throw Error(ErrorKind::InvalidParameter, "beta must lie in [0, 1)");
      break;
    case Method::DsgdClip:
    case Method::DsgdGClip:
    case Method::DsgdCClip:
      if (!(tau > 0.0)) throw Error(ErrorKind::InvalidParameter, "clipping level tau must be > 0");
      break;
    case Method::SClipEf:
      if (!(tau > 0.0)) throw Error(ErrorKind::InvalidParameter, "smooth clipping tau must be > 0");
      if (!(c_phi > 0.0)) throw Error(ErrorKind::InvalidParameter, "smooth clipping c_phi must be > 0");
      if (!(beta >= 0.0 && beta < 1.0)) throw Error(ErrorKind::InvalidParameter, "beta must lie in [0, 1)");
      break;
    case Method::GtAdam:
      if (!(cap > 0.0)) throw Error(ErrorKind::InvalidParameter, "GT-Adam cap G must be > 0");
      if (!(eps >= 0.0)) throw Error(ErrorKind::InvalidParameter, "GT-Adam eps must be >= 0");
      if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        throw Error(ErrorKind::InvalidParameter, "GT-Adam beta1, beta2 must lie in [0, 1)");
      break;
    case Method::QgDsgdm:
      if (!(beta >= 0.0 && beta < 1.0) || !(mu >= 0.0 && mu < 1.0))
        throw Error(ErrorKind::InvalidParameter, "QG-DSGDm beta, mu must lie in [0, 1)");
      break;
    case Method::Dsgd:
    case Method::GtDsgd:
    case Method::VnDsgd:
      break;
  }
}

Eigen::VectorXd safe_normalize(const Eigen::VectorXd& u) {
  const double norm = u.norm();
  if (norm > kNormalizeFloor) return u / norm;
  return Eigen::VectorXd::Zero(u.size());
}

Eigen::VectorXd clip_l2(const Eigen::VectorXd& g, double tau) {
  if (!(tau > 0.0)) throw Error(ErrorKind::InvalidParameter, "clipping level tau must be > 0");
  const double norm = g.norm();
  if (norm <= tau) return g;
  return g * (tau / norm);
}

Eigen::VectorXd clip_componentwise(const Eigen::VectorXd& g, double tau) {
  if (!(tau > 0.0)) throw Error(ErrorKind::InvalidParameter, "clipping level tau must be > 0");
  return g.cwiseMax(-tau).cwiseMin(tau);
}

Eigen::VectorXd smooth_clip(const Eigen::VectorXd& y, long t, double c_phi, double tau) {
  if (!(tau > 0.0) || !(c_phi > 0.0)) throw Error(ErrorKind::InvalidParameter, "smooth clipping needs tau, c_phi > 0");
  const double tp1 = static_cast<double>(t + 1);
  const double gain = c_phi / std::sqrt(tp1);
  const double floor = tau * std::pow(tp1, 0.6);
  Eigen::VectorXd out(y.size());
  for (Eigen::Index k = 0; k < y.size(); ++k) out(k) = gain * y(k) / std::sqrt(y(k) * y(k) + floor);
  return out;
}

Stack mix(const MixingMatrix& w, const Stack& z) {
  Stack out = Stack::Zero(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    for (const auto& [r, wir] : w.row(static_cast<int>(i))) out.row(i).noalias() += wir * z.row(r);
  return out;
}

RoundEngine::RoundEngine(MixingMatrix weights, std::vector<Oracle> oracles, Method method, Hyper hyper,
                         const Eigen::VectorXd& x0)
    : weights_(std::move(weights)), oracles_(std::move(oracles)), method_(method), hyper_(hyper) {
  const int n = weights_.size();
  if (static_cast<int>(oracles_.size()) != n)
    throw Error(ErrorKind::InvalidSize, "need one oracle per node");
  for (const auto& o : oracles_)
    if (o.objective().dim() != x0.size()) throw Error(ErrorKind::InvalidDimension, "x0 dimension mismatch");
  hyper_.validate(method_);
  const auto d = x0.size();
  x_.resize(n, d);
  for (int i = 0; i < n; ++i) x_.row(i) = x0.transpose();
  v_ = Stack::Zero(n, d);
  y_ = Stack::Zero(n, d);
  m_ = Stack::Zero(n, d);
  second_ = Stack::Zero(n, d);
  m_hat_ = Stack::Zero(n, d);
  g_prev_ = Stack::Zero(n, d);
}

NodeState RoundEngine::node(int i) const {
  return {x_.row(i).transpose(), v_.row(i).transpose(), y_.row(i).transpose()};
}

Eigen::VectorXd RoundEngine::mean_x() const { return network_mean(x_); }
Eigen::VectorXd RoundEngine::mean_y() const { return network_mean(y_); }
Eigen::VectorXd RoundEngine::mean_v() const { return network_mean(v_); }

std::vector<LocalObjective> RoundEngine::objectives() const {
  std::vector<LocalObjective> out;
  out.reserve(oracles_.size());
  for (const auto& o : oracles_) out.push_back(o.objective());
  return out;
}

bool RoundEngine::finite() const { return x_.allFinite() && v_.allFinite() && y_.allFinite(); }

Stack RoundEngine::sample_gradients() {
  Stack g(x_.rows(), x_.cols());
  for (Eigen::Index i = 0; i < x_.rows(); ++i) g.row(i) = oracles_[i].sample(x_.row(i).transpose()).transpose();
  return g;
}

void RoundEngine::step() {
  switch (method_) {
    case Method::GtNsgdm: step_gt_nsgdm(); break;
    case Method::Dsgd: step_dsgd(); break;
    case Method::GtDsgd: step_gt_dsgd(); break;
    case Method::DsgdClip:
    case Method::DsgdGClip:
    case Method::DsgdCClip: step_clip(); break;
    case Method::SClipEf: step_sclip_ef(); break;
    case Method::GtAdam: step_gt_adam(); break;
    case Method::QgDsgdm: step_qg_dsgdm(); break;
    case Method::VnDsgd: step_vn_dsgd(); break;
  }
  ++t_;
}

void RoundEngine::step_gt_nsgdm() {
  const double beta = hyper_.beta;
  const Stack g = sample_gradients();
  Stack v_next = beta * v_ + (1.0 - beta) * g;
  Stack y_next = mix(weights_, (y_ - v_) + v_next);
  Stack direction(y_next.rows(), y_next.cols());
  for (Eigen::Index i = 0; i < y_next.rows(); ++i)
    direction.row(i) = safe_normalize(y_next.row(i).transpose()).transpose();
  x_ = mix(weights_, x_) - hyper_.alpha * mix(weights_, direction);
  v_ = std::move(v_next);
  y_ = std::move(y_next);
}

void RoundEngine::step_dsgd() {
  const Stack g = sample_gradients();
  x_ = mix(weights_, x_) - hyper_.alpha * mix(weights_, g);
  v_ = g;
}

void RoundEngine::step_gt_dsgd() {
  const Stack g = sample_gradients();
  // y^{t+1} = W (y^t + g^t - g^{t-1}),  x^{t+1} = W (x^t - alpha y^{t+1}).
  y_ = mix(weights_, (y_ - g_prev_) + g);
  x_ = mix(weights_, x_) - hyper_.alpha * mix(weights_, y_);
  g_prev_ = g;
  v_ = g;
}

void RoundEngine::step_clip() {
  const Stack g = sample_gradients();
  const double tp1 = static_cast<double>(t_ + 1);
  double alpha = hyper_.alpha;
  double tau = hyper_.tau;
  if (method_ == Method::DsgdClip) {
    alpha = hyper_.alpha / tp1;
    tau = hyper_.tau * std::pow(tp1, 0.4);
  }
  Stack clipped(g.rows(), g.cols());
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    const Eigen::VectorXd gi = g.row(i).transpose();
    clipped.row(i) = (method_ == Method::DsgdCClip ? clip_componentwise(gi, tau) : clip_l2(gi, tau)).transpose();
  }
  // Own clipped gradient enters outside the mixing sum.
  x_ = mix(weights_, x_) - alpha * clipped;
  v_ = g;
}

void RoundEngine::step_sclip_ef() {
  const Stack g = sample_gradients();
  const double tp1 = static_cast<double>(t_ + 1);
  const double beta_t = hyper_.beta / std::sqrt(tp1);
  const double alpha_t = hyper_.alpha / std::pow(tp1, 0.2);
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    const Eigen::VectorXd innovation = (g.row(i) - m_.row(i)).transpose();
    m_.row(i) = beta_t * m_.row(i) + (1.0 - beta_t) * smooth_clip(innovation, t_, hyper_.c_phi, hyper_.tau).transpose();
  }
  x_ = mix(weights_, x_) - alpha_t * mix(weights_, m_);
  v_ = g;
}

void RoundEngine::step_gt_adam() {
  if (!primed_) {
    g_prev_ = sample_gradients();
    y_ = g_prev_;  // s^0 = g^0
    v_ = g_prev_;
    primed_ = true;
  }
  const auto& h = hyper_;
  m_ = h.beta1 * m_ + (1.0 - h.beta1) * y_;
  second_ = (h.beta2 * second_ + (1.0 - h.beta2) * y_.cwiseProduct(y_)).cwiseMin(h.cap);
  const Stack precond = (m_.array() / (second_.array() + h.eps).sqrt()).matrix();
  x_ = mix(weights_, x_) - h.alpha * precond;
  const Stack g = sample_gradients();
  y_ = mix(weights_, y_) + g - g_prev_;
  g_prev_ = g;
  v_ = g;
}

void RoundEngine::step_qg_dsgdm() {
  const Stack g = sample_gradients();
  const double eta = hyper_.alpha;
  m_ = hyper_.beta * m_hat_ + g;
  Stack x_next = mix(weights_, x_) - eta * mix(weights_, m_);
  // Quasi-global momentum tracks the model displacement per unit step.
  const Stack displacement = (x_ - x_next) / eta;
  m_hat_ = hyper_.mu * m_hat_ + (1.0 - hyper_.mu) * displacement;
  x_ = std::move(x_next);
  v_ = g;
}

void RoundEngine::step_vn_dsgd() {
  Stack direction(x_.rows(), x_.cols());
  for (Eigen::Index i = 0; i < x_.rows(); ++i) {
    const Eigen::VectorXd grad = oracles_[i].objective().gradient(x_.row(i).transpose());
    v_.row(i) = grad.transpose();
    direction.row(i) = safe_normalize(grad).transpose();
  }
  x_ = mix(weights_, x_) - hyper_.alpha * mix(weights_, direction);
}

namespace {
void require(const RoundEngine& engine, std::initializer_list<Method> allowed, const char* op) {
  for (Method m : allowed)
    if (engine.method() == m) {
      return;
    }
  throw Error(ErrorKind::InvalidInput, std::string(op) + " called on a " + std::string(to_string(engine.method())) +
                                           " engine");
}
}  // namespace

void gt_nsgdm_step(RoundEngine& engine) {
  require(engine, {Method::GtNsgdm}, "gt_nsgdm_step");
  engine.step();
}
void dsgd_step(RoundEngine& engine) {
  require(engine, {Method::Dsgd}, "dsgd_step");
  engine.step();
}
void gt_dsgd_step(RoundEngine& engine) {
  require(engine, {Method::GtDsgd}, "gt_dsgd_step");
  engine.step();
}
void dsgd_clip_step(RoundEngine& engine) {
  require(engine, {Method::DsgdClip, Method::DsgdGClip, Method::DsgdCClip}, "dsgd_clip_step");
  engine.step();
}
void sclip_ef_step(RoundEngine& engine) {
  require(engine, {Method::SClipEf}, "sclip_ef_step");
  engine.step();
}
void gt_adam_step(RoundEngine& engine) {
  require(engine, {Method::GtAdam}, "gt_adam_step");
  engine.step();
}
void qg_dsgdm_step(RoundEngine& engine) {
  require(engine, {Method::QgDsgdm}, "qg_dsgdm_step");
  engine.step();
}
void vanilla_normalized_dsgd_step(RoundEngine& engine) {
  require(engine, {Method::VnDsgd}, "vanilla_normalized_dsgd_step");
  engine.step();
}

namespace {
TraceRow probe(const RoundEngine& engine, std::span<const LocalObjective> objectives,
               const Eigen::VectorXd& reference, double step_len) {
  TraceRow row;
  row.t = engine.iteration();
  row.avg_grad_norm = avg_grad_norm(engine.x(), objectives);
  row.estimation_error = reference.size() > 0 ? estimation_error(engine.x(), reference) : 0.0;
  row.consensus_x = consensus_error(engine.x());
  if (is_tracking_method(engine.method())) {
    row.consensus_y = consensus_error(engine.y());
    row.tracking_gap = (engine.mean_y() - engine.mean_v()).norm();
  }
  row.step_len = step_len;
  return row;
}

TraceRow diverged_row(long t) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  TraceRow row{t, nan, nan, nan, nan, nan, nan, true};
  return row;
}

Eigen::VectorXd default_reference(std::span<const LocalObjective> objectives) {
  // Scalar quadratics: the global minimizer is the mean of the centers.
  if (!objectives.empty() && objectives.front().kind() == ObjectiveKind::QuadraticScalar) {
    double acc = 0.0;
    for (const auto& o : objectives) acc += o.center();
    return Eigen::VectorXd::Constant(1, acc / static_cast<double>(objectives.size()));
  }
  return {};
}
}  // namespace

MetricsTrace run(RoundEngine& engine, const RunOptions& options) {
  if (options.rounds < 0) throw Error(ErrorKind::InvalidParameter, "rounds must be >= 0");
  if (options.probe_every < 1) throw Error(ErrorKind::InvalidParameter, "probe_every must be >= 1");
  const auto objectives = engine.objectives();
  const Eigen::VectorXd reference = options.reference.size() > 0 ? options.reference : default_reference(objectives);
  const bool tracking = is_tracking_method(engine.method());

  MetricsTrace trace;
  double last_step = 0.0;
  double grad_norm_sum = 0.0;
  if (!engine.finite()) {
    trace.rows.push_back(diverged_row(engine.iteration()));
    trace.diverged = true;
    trace.diverged_at = engine.iteration();
    return trace;
  }
  trace.rows.push_back(probe(engine, objectives, reference, last_step));

  const long start = engine.iteration();
  for (long k = 0; k < options.rounds; ++k) {
    if (options.time_average) grad_norm_sum += avg_grad_norm(engine.x(), objectives);
    const Eigen::VectorXd before = engine.mean_x();
    engine.step();
    if (!engine.finite()) {
      trace.rows.push_back(diverged_row(engine.iteration()));
      trace.diverged = true;
      trace.diverged_at = engine.iteration();
      return trace;
    }
    const Eigen::VectorXd vbar = engine.mean_v();
    RoundInfo info{engine.iteration() - 1, (engine.mean_x() - before).norm(),
                   tracking ? (engine.mean_y() - vbar).norm() : 0.0, vbar.norm()};
    last_step = info.step_len;
    trace.max_step_len = std::max(trace.max_step_len, info.step_len);
    if (tracking) trace.max_tracking_ratio = std::max(trace.max_tracking_ratio, info.tracking_gap / (1.0 + info.mean_v_norm));
    if (options.observer) options.observer(engine, info);

    const long done = engine.iteration() - start;
    if (done % options.probe_every == 0 || done == options.rounds)
      trace.rows.push_back(probe(engine, objectives, reference, last_step));
  }
  if (options.time_average && options.rounds > 0)
    trace.time_avg_grad_norm = grad_norm_sum / static_cast<double>(options.rounds);
  return trace;
}

}  // namespace gtnsgdm
