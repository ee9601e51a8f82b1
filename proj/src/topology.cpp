#include "gtnsgdm/topology.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <sstream>
#include <string>

#include "gtnsgdm/error.hpp"

namespace gtnsgdm {

GraphKind parse_graph_kind(std::string_view name) {
  if (name == "ring") return GraphKind::Ring;
  if (name == "directed-exponential" || name == "exponential") return GraphKind::DirectedExponential;
  if (name == "complete") return GraphKind::Complete;
  if (name == "custom") return GraphKind::Custom;
  throw Error(ErrorKind::InvalidInput, "unknown topology kind '" + std::string(name) + "'");
}

std::string_view to_string(GraphKind kind) {
  switch (kind) {
    case GraphKind::Ring: return "ring";
    case GraphKind::DirectedExponential: return "directed-exponential";
    case GraphKind::Complete: return "complete";
    case GraphKind::Custom: return "custom";
  }
  return "custom";
}

Weighting parse_weighting(std::string_view name) {
  if (name == "metropolis") return Weighting::Metropolis;
  if (name == "uniform-out" || name == "uniform") return Weighting::UniformOut;
  if (name == "laplacian") return Weighting::Laplacian;
  throw Error(ErrorKind::InvalidInput, "unknown weighting '" + std::string(name) + "'");
}

std::string_view to_string(Weighting weighting) {
  switch (weighting) {
    case Weighting::Metropolis: return "metropolis";
    case Weighting::UniformOut: return "uniform-out";
    case Weighting::Laplacian: return "laplacian";
  }
  return "metropolis";
}

Graph::Graph(int n, std::vector<Edge> edges, GraphKind kind) : n_(n), edges_(std::move(edges)), kind_(kind) {
  if (n < 1) throw Error(ErrorKind::InvalidSize, "graph needs at least one node");
  for (const auto& [i, r] : edges_) {
    if (i < 0 || r < 0 || i >= n || r >= n)
      throw Error(ErrorKind::InvalidInput, "edge endpoint out of range");
    if (i == r) throw Error(ErrorKind::InvalidInput, "self loops are implicit and not allowed as edges");
  }
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
}

bool Graph::has_edge(int from, int to) const {
  return std::binary_search(edges_.begin(), edges_.end(), Edge{from, to});
}

bool Graph::is_symmetric() const {
  return std::all_of(edges_.begin(), edges_.end(),
                     [this](const Edge& e) { return has_edge(e.second, e.first); });
}

bool Graph::is_strongly_connected() const {
  auto reach = [this](bool forward) {
    std::vector<std::vector<int>> adj(n_);
    for (const auto& [i, r] : edges_) {
      if (forward)
        adj[i].push_back(r);
      else
        adj[r].push_back(i);
    }
    std::vector<char> seen(n_, 0);
    std::queue<int> q;
    q.push(0);
    seen[0] = 1;
    int count = 1;
    while (!q.empty()) {
      int u = q.front();
      q.pop();
      for (int v : adj[u]) {
        if (!seen[v]) {
          seen[v] = 1;
          ++count;
          q.push(v);
        }
      }
    }
    return count == n_;
  };
  return reach(true) && reach(false);
}

std::vector<int> Graph::out_neighbors(int i) const {
  std::vector<int> out;
  for (const auto& [a, b] : edges_)
    if (a == i) out.push_back(b);
  return out;
}

std::vector<int> Graph::in_neighbors(int i) const {
  std::vector<int> in;
  for (const auto& [a, b] : edges_)
    if (b == i) in.push_back(a);
  std::sort(in.begin(), in.end());
  return in;
}

int Graph::out_degree(int i) const { return static_cast<int>(out_neighbors(i).size()); }
int Graph::in_degree(int i) const { return static_cast<int>(in_neighbors(i).size()); }

Graph build_graph(GraphKind kind, int n) {
  if (n < 2) throw Error(ErrorKind::InvalidSize, "graph needs n >= 2, got " + std::to_string(n));
  std::vector<Graph::Edge> edges;
  switch (kind) {
    case GraphKind::Ring:
      for (int i = 0; i < n; ++i) {
        edges.emplace_back(i, (i + 1) % n);
        edges.emplace_back((i + 1) % n, i);
      }
      break;
    case GraphKind::DirectedExponential:
      for (int i = 0; i < n; ++i)
        for (long hop = 1; hop < n; hop *= 2) edges.emplace_back(i, static_cast<int>((i + hop) % n));
      break;
    case GraphKind::Complete:
      for (int i = 0; i < n; ++i)
        for (int r = 0; r < n; ++r)
          if (i != r) edges.emplace_back(i, r);
      break;
    case GraphKind::Custom:
      throw Error(ErrorKind::InvalidInput, "custom graphs are loaded from an adjacency file");
  }
  return Graph(n, std::move(edges), kind);
}

Graph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open graph file " + path.string());
  std::vector<Graph::Edge> edges;
  int n = 0;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    int i = 0, r = 0;
    if (!(ls >> i)) continue;
    std::string rest;
    if (!(ls >> r) || (ls >> rest))
      throw Error(ErrorKind::InvalidInput, path.string() + ":" + std::to_string(lineno) + ": expected 'i r'");
    if (i < 1 || r < 1)
      throw Error(ErrorKind::InvalidInput, path.string() + ":" + std::to_string(lineno) + ": nodes are 1-based");
    n = std::max({n, i, r});
    edges.emplace_back(i - 1, r - 1);
  }
  if (n < 2) throw Error(ErrorKind::InvalidSize, "graph file describes fewer than 2 nodes");
  return Graph(n, std::move(edges), GraphKind::Custom);
}

MixingMatrix::MixingMatrix(Eigen::MatrixXd w) : w_(std::move(w)) {
  const Eigen::Index n = w_.rows();
  if (n < 1 || w_.cols() != n) throw Error(ErrorKind::InvalidSize, "mixing matrix must be square and nonempty");
  if ((w_.array() < 0.0).any()) throw Error(ErrorKind::InvalidInput, "mixing weights must be nonnegative");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(w_.row(i).sum() - 1.0) > kStochasticTolerance ||
        std::abs(w_.col(i).sum() - 1.0) > kStochasticTolerance)
      throw Error(ErrorKind::InvalidInput, "mixing matrix is not doubly stochastic");
  }
  rows_.resize(n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index r = 0; r < n; ++r)
      if (w_(i, r) > 0.0) rows_[i].emplace_back(static_cast<int>(r), w_(i, r));
  lambda_ = spectral_gap(w_);
}

MixingMatrix metropolis_weights(const Graph& g) {
  if (!g.is_symmetric()) throw Error(ErrorKind::UnsupportedGraph, "Metropolis weights need an undirected graph");
  if (!g.is_strongly_connected()) throw Error(ErrorKind::NonPrimitive, "graph is disconnected");
  const int n = g.size();
  std::vector<int> deg(n);
  for (int i = 0; i < n; ++i) deg[i] = g.out_degree(i);
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (const auto& [i, r] : g.edges()) w(i, r) = 1.0 / (1.0 + std::max(deg[i], deg[r]));
  for (int i = 0; i < n; ++i) {
    double off = 0.0;
    for (int r = 0; r < n; ++r)
      if (r != i) off += w(i, r);
    w(i, i) = 1.0 - off;
  }
  return MixingMatrix(std::move(w));
}

MixingMatrix uniform_out_weights(const Graph& g) {
  const int n = g.size();
  const int d = g.out_degree(0);
  for (int i = 0; i < n; ++i) {
    if (g.out_degree(i) != d || g.in_degree(i) != d)
      throw Error(ErrorKind::UnsupportedGraph, "uniform weights need constant, balanced in/out degree");
  }
  if (!g.is_strongly_connected()) throw Error(ErrorKind::NonPrimitive, "graph is not strongly connected");
  const double share = 1.0 / (d + 1);
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) w(i, i) = share;
  // (r, i) in edges: node i receives from r.
  for (const auto& [from, to] : g.edges()) w(to, from) = share;
  return MixingMatrix(std::move(w));
}

MixingMatrix laplacian_weights(const Graph& g) {
  if (!g.is_symmetric()) throw Error(ErrorKind::UnsupportedGraph, "Laplacian weights need an undirected graph");
  if (!g.is_strongly_connected()) throw Error(ErrorKind::NonPrimitive, "graph is disconnected");
  const int n = g.size();
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  const double inv_n = 1.0 / n;
  for (const auto& [i, r] : g.edges()) w(i, r) = inv_n;
  for (int i = 0; i < n; ++i) w(i, i) = 1.0 - g.out_degree(i) * inv_n;
  return MixingMatrix(std::move(w));
}

MixingMatrix make_weights(const Graph& g, Weighting weighting) {
  switch (weighting) {
    case Weighting::Metropolis: return metropolis_weights(g);
    case Weighting::UniformOut: return uniform_out_weights(g);
    case Weighting::Laplacian: return laplacian_weights(g);
  }
  throw Error(ErrorKind::InvalidInput, "unknown weighting");
}

double spectral_gap(const Eigen::MatrixXd& w) {
  const Eigen::Index n = w.rows();
  if (n == 1) return 0.0;
  const Eigen::MatrixXd deflated = w - Eigen::MatrixXd::Constant(n, n, 1.0 / n);
  const Eigen::MatrixXd gram = deflated.transpose() * deflated;
  const double scale = gram.cwiseAbs().maxCoeff();
  if (scale == 0.0) return 0.0;

  // Deterministic start with components in every direction orthogonal to 1.
  Eigen::VectorXd q(n);
  for (Eigen::Index i = 0; i < n; ++i) q(i) = std::sin(1.0 + 2.718281828 * static_cast<double>(i * i + 3 * i));
  q.array() -= q.mean();
  if (q.norm() == 0.0) q(0) = 1.0;
  q.normalize();

  constexpr double kRelTol = 1e-10;
  constexpr int kMaxIter = 200000;
  for (int it = 0; it < kMaxIter; ++it) {
    const Eigen::VectorXd z = gram * q;
    const double znorm = z.norm();
    if (znorm <= 1e-300) return 0.0;
    const double rayleigh = q.dot(z);
    // Residual test: the Rayleigh quotient error is bounded by the residual,
    // including when the top eigenvalues are nearly equal.
    if ((z - rayleigh * q).norm() <= kRelTol * rayleigh) break;
    q = z / znorm;
  }
  const double lambda = std::sqrt(std::max(q.dot(gram * q), 0.0));
  if (lambda >= 1.0 - 1e-12) throw Error(ErrorKind::NonPrimitive, "spectral gap reaches 1; W is not primitive");
  return lambda;
}

bool satisfies_mixing_invariants(const MixingMatrix& m, const Graph& g) {
  const auto& w = m.weights();
  const int n = m.size();
  if (n != g.size()) return false;
  for (int i = 0; i < n; ++i) {
    if (std::abs(w.row(i).sum() - 1.0) > kStochasticTolerance) return false;
    if (std::abs(w.col(i).sum() - 1.0) > kStochasticTolerance) return false;
    for (int r = 0; r < n; ++r) {
      if (w(i, r) < 0.0) return false;
      const bool expected = (i == r) || g.has_edge(r, i);
      if ((w(i, r) > 0.0) != expected) return false;
    }
  }
  return true;
}

}  // namespace gtnsgdm
