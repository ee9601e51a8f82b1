#include <algorithm>
#include "gtnsgdm/objective.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "gtnsgdm/error.hpp"

namespace gtnsgdm {

Dataset generate_token_dataset(int n_samples, int dim, std::uint64_t seed) {
  if (dim < 4) throw Error(ErrorKind::InvalidDimension, "token dataset needs d >= 4");
  if (n_samples < 1) throw Error(ErrorKind::InvalidSize, "token dataset needs at least one sample");
  RngStream stream(seed, 0, RngStream::kDataset);
  auto rate = [](int col) { return col < 2 ? 0.9 : (col < 4 ? 0.5 : 0.1); };
  Dataset ds;
  ds.x.resize(n_samples, dim);
  for (int k = 0; k < n_samples; ++k)
    for (int j = 0; j < dim; ++j) ds.x(k, j) = stream.uniform() < rate(j) ? 1.0 : 0.0;
  ds.w_star.resize(dim);
  for (int j = 0; j < dim; ++j) ds.w_star(j) = stream.normal();
  ds.y = ds.x * ds.w_star;
  return ds;
}

namespace {
std::string format17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::vector<double>> read_numeric_csv(const std::filesystem::path& path, std::size_t& header_cols) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::InvalidInput, path.string() + " is empty");
  header_cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() != header_cols) throw Error(ErrorKind::InvalidInput, path.string() + ": ragged row");
    rows.push_back(std::move(row));
  }
  return rows;
}
}  // namespace

void write_dataset_csv(const Dataset& ds, const std::filesystem::path& data_path,
                       const std::filesystem::path& w_star_path) {
  std::ofstream out(data_path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + data_path.string());
  for (int j = 0; j < ds.dim(); ++j) out << 'x' << (j + 1) << ',';
  out << "y\n";
  for (int k = 0; k < ds.samples(); ++k) {
    for (int j = 0; j < ds.dim(); ++j) out << format17(ds.x(k, j)) << ',';
    out << format17(ds.y(k)) << '\n';
  }
  std::ofstream ws(w_star_path);
  if (!ws) throw Error(ErrorKind::Io, "cannot write " + w_star_path.string());
  ws << "w_star\n";
  for (int j = 0; j < ds.dim(); ++j) ws << format17(ds.w_star(j)) << '\n';
}

Dataset read_dataset_csv(const std::filesystem::path& data_path, const std::filesystem::path& w_star_path) {
  std::size_t cols = 0;
  const auto rows = read_numeric_csv(data_path, cols);
  if (cols < 2) throw Error(ErrorKind::InvalidInput, "dataset CSV needs features and a label");
  Dataset ds;
  const auto d = static_cast<Eigen::Index>(cols - 1);
  ds.x.resize(static_cast<Eigen::Index>(rows.size()), d);
  ds.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    for (Eigen::Index j = 0; j < d; ++j) ds.x(static_cast<Eigen::Index>(k), j) = rows[k][j];
    ds.y(static_cast<Eigen::Index>(k)) = rows[k][d];
  }
  std::size_t wcols = 0;
  const auto wrows = read_numeric_csv(w_star_path, wcols);
  if (wcols != 1 || static_cast<Eigen::Index>(wrows.size()) != d)
    throw Error(ErrorKind::InvalidInput, "w_star sidecar must hold one value per feature");
  ds.w_star.resize(d);
  for (Eigen::Index j = 0; j < d; ++j) ds.w_star(j) = wrows[j][0];
  return ds;
}

double tukey_loss(double r, double c) {
  if (!(c > 0.0)) throw Error(ErrorKind::InvalidParameter, "tukey threshold c must be > 0");
  const double cap = c * c / 6.0;
  if (std::abs(r) > c) return cap;
  const double u = 1.0 - (r / c) * (r / c);
  return cap * (1.0 - u * u * u);
}

double tukey_grad(double r, double c) {
  if (!(c > 0.0)) throw Error(ErrorKind::InvalidParameter, "tukey threshold c must be > 0");
  if (std::abs(r) >= c) return 0.0;
  const double u = 1.0 - (r / c) * (r / c);
  return r * u * u;
}

LocalObjective LocalObjective::tukey(Eigen::MatrixXd x, Eigen::VectorXd y, double c) {
  if (!(c > 0.0)) throw Error(ErrorKind::InvalidParameter, "tukey threshold c must be > 0");
  if (x.rows() != y.size() || x.rows() == 0) throw Error(ErrorKind::InvalidInput, "shard features and labels disagree");
  LocalObjective obj;
  obj.kind_ = ObjectiveKind::TukeyRegression;
  obj.x_ = std::move(x);
  obj.y_ = std::move(y);
  obj.c_ = c;
  return obj;
}

LocalObjective LocalObjective::quadratic(double center) {
  LocalObjective obj;
  obj.kind_ = ObjectiveKind::QuadraticScalar;
  obj.center_ = center;
  return obj;
}

double LocalObjective::value(const Eigen::VectorXd& w) const {
  if (w.size() != dim()) throw Error(ErrorKind::InvalidInput, "dimension mismatch in objective value");
  if (kind_ == ObjectiveKind::QuadraticScalar) return 0.5 * (w(0) - center_) * (w(0) - center_);
  double acc = 0.0;
  for (Eigen::Index k = 0; k < x_.rows(); ++k) acc += tukey_loss(y_(k) - x_.row(k).dot(w), c_);
  return acc / static_cast<double>(x_.rows());
}

Eigen::VectorXd LocalObjective::gradient(const Eigen::VectorXd& w) const {
  if (w.size() != dim()) throw Error(ErrorKind::InvalidInput, "dimension mismatch in objective gradient");
  if (kind_ == ObjectiveKind::QuadraticScalar) return Eigen::VectorXd::Constant(1, w(0) - center_);
  const Eigen::VectorXd residual = y_ - x_ * w;
  Eigen::VectorXd psi(residual.size());
  for (Eigen::Index k = 0; k < residual.size(); ++k) psi(k) = tukey_grad(residual(k), c_);
  return -(x_.transpose() * psi) / static_cast<double>(x_.rows());
}

Eigen::VectorXd LocalObjective::gradient(const Eigen::VectorXd& w, std::span<const int> indices) const {
  if (indices.empty()) throw Error(ErrorKind::EmptyBatch, "gradient over an empty index set");
  if (w.size() != dim()) throw Error(ErrorKind::InvalidInput, "dimension mismatch in objective gradient");
  if (kind_ == ObjectiveKind::QuadraticScalar) return Eigen::VectorXd::Constant(1, w(0) - center_);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(x_.cols());
  for (int k : indices) {
    if (k < 0 || k >= x_.rows()) throw Error(ErrorKind::InvalidInput, "sample index outside shard");
    const double r = y_(k) - x_.row(k).dot(w);
    g.noalias() -= tukey_grad(r, c_) * x_.row(k).transpose();
  }
  return g / static_cast<double>(indices.size());
}

Eigen::VectorXd local_gradient(const LocalObjective& obj, const Eigen::VectorXd& w, std::span<const int> indices) {
  return obj.gradient(w, indices);
}

std::vector<LocalObjective> partition(const Dataset& ds, int n_nodes, double c) {
  if (n_nodes < 1 || n_nodes > ds.samples())
    throw Error(ErrorKind::InvalidPartition, "need 1 <= nodes <= samples");
  std::vector<LocalObjective> shards;
  shards.reserve(n_nodes);
  const int base = ds.samples() / n_nodes;
  const int extra = ds.samples() % n_nodes;
  int start = 0;
  for (int i = 0; i < n_nodes; ++i) {
    const int len = base + (i < extra ? 1 : 0);
    shards.push_back(LocalObjective::tukey(ds.x.middleRows(start, len), ds.y.segment(start, len), c));
    start += len;
  }
  return shards;
}

double global_value(std::span<const LocalObjective> objectives, const Eigen::VectorXd& w) {
  double acc = 0.0;
  for (const auto& obj : objectives) acc += obj.value(w);
  return acc / static_cast<double>(objectives.size());
}

Eigen::VectorXd global_gradient(std::span<const LocalObjective> objectives, const Eigen::VectorXd& w) {
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(w.size());
  for (const auto& obj : objectives) acc += obj.gradient(w);
  return acc / static_cast<double>(objectives.size());
}

Oracle::Oracle(std::shared_ptr<const LocalObjective> objective, NoiseSpec noise, int batch, std::uint64_t seed,
               int node)
    : objective_(std::move(objective)),
      noise_(noise),
      batch_(batch),
      noise_stream_(seed, static_cast<std::uint64_t>(node), RngStream::kOracle),
      batch_stream_(seed, static_cast<std::uint64_t>(node), RngStream::kMinibatch) {
  noise_.validate();
  if (noise_.dim != objective_->dim())
    throw Error(ErrorKind::InvalidDimension, "noise dimension differs from objective dimension");
  if (batch_ < 0) throw Error(ErrorKind::InvalidParameter, "batch size must be >= 0");
  indices_.resize(static_cast<std::size_t>(batch_));
}

Eigen::VectorXd Oracle::sample(const Eigen::VectorXd& w) {
  Eigen::VectorXd g;
  if (batch_ == 0 || objective_->kind() == ObjectiveKind::QuadraticScalar) {
    g = objective_->gradient(w);
  } else {
    const auto shard = static_cast<std::uint64_t>(objective_->samples());
    for (auto& idx : indices_) idx = static_cast<int>(batch_stream_.below(shard));
    g = objective_->gradient(w, indices_);
  }
  if (noise_.family != NoiseFamily::None) g += sample_noise(noise_, noise_stream_);
  return g;
}

Eigen::VectorXd stochastic_gradient(Oracle& oracle, const Eigen::VectorXd& w) { return oracle.sample(w); }

Claim1Instance claim1_instance(int n, double bound) {
  if (n < 2 || n % 2 != 0) throw Error(ErrorKind::InvalidParameter, "claim-1 instance needs an even n >= 2");
  if (!(bound >= 1.0)) throw Error(ErrorKind::InvalidParameter, "claim-1 instance needs B >= 1");
  const double a = 0.0;
  const double b = a + 2.0 * bound + 1.0 + kClaim1Margin;
  std::vector<LocalObjective> objectives;
  for (int i = 0; i < n; ++i) objectives.push_back(LocalObjective::quadratic(i < n / 2 ? a : b));
  MixingMatrix w(Eigen::MatrixXd::Constant(n, n, 1.0 / n));
  return Claim1Instance{std::move(objectives), std::move(w), a + 0.5, a, b};
}

}  // namespace gtnsgdm
