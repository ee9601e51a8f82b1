#pragma once

#include <filesystem>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace gtnsgdm {

enum class GraphKind { Ring, DirectedExponential, Complete, Custom };

GraphKind parse_graph_kind(std::string_view name);
std::string_view to_string(GraphKind kind);

/// Directed communication graph on nodes 0..n-1. An edge (i, r) means node i
/// sends to node r. Edges are kept sorted and unique.
class Graph {
 public:
  using Edge = std::pair<int, int>;

  Graph(int n, std::vector<Edge> edges, GraphKind kind);

  int size() const noexcept { return n_; }
  GraphKind kind() const noexcept { return kind_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }

  bool has_edge(int from, int to) const;
  bool is_symmetric() const;
  /// Every node reachable from node 0 following edges forward.
  bool is_strongly_connected() const;

  std::vector<int> out_neighbors(int i) const;
  std::vector<int> in_neighbors(int i) const;
  int out_degree(int i) const;
  int in_degree(int i) const;

 private:
  int n_;
  std::vector<Edge> edges_;
  GraphKind kind_;
};

Graph build_graph(GraphKind kind, int n);

/// Reads `i r` pairs (1-based), one per line; `#` starts a comment.
Graph load_graph(const std::filesystem::path& path);

/// Immutable doubly stochastic weights with the cached deflated operator norm.
class MixingMatrix {
 public:
  /// Validates nonnegativity and row/column sums; computes the spectral gap.
  explicit MixingMatrix(Eigen::MatrixXd w);

  int size() const noexcept { return static_cast<int>(w_.rows()); }
  const Eigen::MatrixXd& weights() const noexcept { return w_; }
  double operator()(int i, int r) const { return w_(i, r); }
  double lambda() const noexcept { return lambda_; }

  /// Nonzero entries of row i as (r, w_ir), ascending in r.
  const std::vector<std::pair<int, double>>& row(int i) const { return rows_[i]; }

 private:
  Eigen::MatrixXd w_;
  std::vector<std::vector<std::pair<int, double>>> rows_;
  double lambda_;
};

inline constexpr double kStochasticTolerance = 1e-12;

MixingMatrix metropolis_weights(const Graph& g);
MixingMatrix uniform_out_weights(const Graph& g);
MixingMatrix laplacian_weights(const Graph& g);

/// ||W - 11^T/n||_2 by power iteration on (W-J)^T (W-J).
/// Throws NonPrimitive when the result reaches 1.
double spectral_gap(const Eigen::MatrixXd& w);

/// Nonnegativity, unit row/column sums, and support == edges plus diagonal.
bool satisfies_mixing_invariants(const MixingMatrix& w, const Graph& g);

enum class Weighting { Metropolis, UniformOut, Laplacian };

Weighting parse_weighting(std::string_view name);
std::string_view to_string(Weighting weighting);

MixingMatrix make_weights(const Graph& g, Weighting weighting);

}  // namespace gtnsgdm
