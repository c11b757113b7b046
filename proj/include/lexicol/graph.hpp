#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lexicol/core.hpp"
#include "lexicol/hash.hpp"
#include "lexicol/linalg.hpp"

namespace lexicol {

struct Edge {
  NodeId u;
  NodeId v;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Undirected, unweighted simple graph. Edges are stored canonically
/// (u < v, sorted lexicographically); the adjacency matrix is symmetric with
/// unit weights and 2 * |edges| nonzeros.
class Graph {
public:
  Graph() = default;

  /// Canonicalizes the orientation and order of `edges`. Self-loops,
  /// duplicates (in either orientation) and out-of-range endpoints throw
  /// ValidationError naming the offending input position.
  static Graph from_edges(std::size_t num_nodes, std::vector<Edge> edges) {
    for (std::size_t i = 0; i < edges.size(); ++i) {
      auto& e = edges[i];
      if (e.u >= num_nodes || e.v >= num_nodes)
        throw ValidationError("edge " + std::to_string(i) + " (" + std::to_string(e.u) + "," +
                              std::to_string(e.v) + ") has an endpoint >= " +
                              std::to_string(num_nodes));
      if (e.u == e.v)
        throw ValidationError("self-loop at edge " + std::to_string(i) + " (node " +
                              std::to_string(e.u) + ")");
      if (e.u > e.v) std::swap(e.u, e.v);
    }
    std::vector<std::size_t> order(edges.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return edges[a] < edges[b]; });
    for (std::size_t k = 1; k < order.size(); ++k)
      if (edges[order[k]] == edges[order[k - 1]])
        throw ValidationError("duplicate edge (" + std::to_string(edges[order[k]].u) + "," +
                              std::to_string(edges[order[k]].v) + ") at edge " +
                              std::to_string(std::max(order[k], order[k - 1])));

    Graph g;
    g.num_nodes_ = num_nodes;
    g.edges_.reserve(edges.size());
    for (std::size_t k : order) g.edges_.push_back(edges[k]);
    g.build_adjacency();
    return g;
  }

  std::size_t num_nodes() const noexcept { return num_nodes_; }
  std::size_t num_edges() const noexcept { return edges_.size(); }
  std::span<const Edge> edges() const noexcept { return edges_; }
  const SparseMatrix& adjacency() const noexcept { return adjacency_; }

  std::span<const std::uint32_t> neighbors(NodeId v) const noexcept {
    return adjacency_.row_indices(v);
  }
  std::size_t degree(NodeId v) const noexcept { return adjacency_.row_indices(v).size(); }

  std::vector<std::size_t> degrees() const {
    std::vector<std::size_t> d(num_nodes_);
    for (std::size_t v = 0; v < num_nodes_; ++v) d[v] = degree(static_cast<NodeId>(v));
    return d;
  }

  /// 2|E| / n; 0 for the empty graph.
  double mean_degree() const noexcept {
    return num_nodes_ == 0 ? 0.0
                           : 2.0 * static_cast<double>(edges_.size()) /
                                 static_cast<double>(num_nodes_);
  }

  /// Component id per node, numbered in order of smallest member.
  std::vector<std::size_t> connected_components() const {
    constexpr std::size_t kNone = static_cast<std::size_t>(-1);
    std::vector<std::size_t> comp(num_nodes_, kNone);
    std::vector<NodeId> stack;
    std::size_t next = 0;
    for (std::size_t s = 0; s < num_nodes_; ++s) {
      if (comp[s] != kNone) continue;
      comp[s] = next;
      stack.push_back(static_cast<NodeId>(s));
      while (!stack.empty()) {
        const NodeId v = stack.back();
        stack.pop_back();
        for (NodeId w : neighbors(v))
          if (comp[w] == kNone) {
            comp[w] = next;
            stack.push_back(w);
          }
      }
      ++next;
    }
    return comp;
  }

  /// Hash of the structure (node count and canonical edge list).
  std::uint64_t structure_hash() const noexcept {
    ContentHash h;
    h.text("graph");
    h.u64(num_nodes_);
    h.u64(edges_.size());
    for (const auto& e : edges_) {
      h.u64(e.u);
      h.u64(e.v);
    }
    return h.value();
  }

  friend bool operator==(const Graph& a, const Graph& b) {
    return a.num_nodes_ == b.num_nodes_ && a.edges_ == b.edges_;
  }

private:
  void build_adjacency() {
    std::vector<std::size_t> off(num_nodes_ + 1, 0);
    for (const auto& e : edges_) {
      ++off[e.u + 1];
      ++off[e.v + 1];
    }
    for (std::size_t i = 0; i < num_nodes_; ++i) off[i + 1] += off[i];
    std::vector<std::uint32_t> idx(off.back());
    std::vector<std::size_t> cursor(off.begin(), off.end() - 1);
    // Sorted edges fill each row in ascending column order: for row w the
    // partners u < w arrive (sorted by u) before partners v > w (sorted by v).
    for (const auto& e : edges_) idx[cursor[e.v]++] = e.u;
    for (const auto& e : edges_) idx[cursor[e.u]++] = e.v;
    std::vector<double> val(idx.size(), 1.0);
    adjacency_ = SparseMatrix(num_nodes_, num_nodes_, std::move(off), std::move(idx),
                              std::move(val));
  }

  std::size_t num_nodes_ = 0;
  std::vector<Edge> edges_;
  SparseMatrix adjacency_;
};

struct Split {
  std::vector<NodeId> train;
  std::vector<NodeId> val;
  std::vector<NodeId> test;

  friend bool operator==(const Split&, const Split&) = default;
};

/// Graph, dense node features, per-node labels and a train/val/test split.
struct Dataset {
  std::string name;
  Graph graph;
  DenseMatrix features;        // n x d
  std::vector<ClassId> labels;  // kUnknownLabel where absent
  std::size_t num_classes = 0;
  Split split;

  std::size_t num_nodes() const noexcept { return graph.num_nodes(); }
  std::size_t num_features() const noexcept { return features.cols(); }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Throws ValidationError if the dataset violates its invariants.
inline void validate(const Dataset& ds) {
  const std::size_t n = ds.num_nodes();
  if (ds.features.rows() != n)
    throw ValidationError("features have " + std::to_string(ds.features.rows()) +
                          " rows, graph has " + std::to_string(n) + " nodes");
  if (!ds.features.all_finite()) throw ValidationError("features contain NaN or Inf");
  if (ds.labels.size() != n)
    throw ValidationError("label vector has " + std::to_string(ds.labels.size()) +
                          " entries, graph has " + std::to_string(n) + " nodes");
  for (std::size_t i = 0; i < n; ++i) {
    const ClassId c = ds.labels[i];
    if (c != kUnknownLabel && (c < 0 || static_cast<std::size_t>(c) >= ds.num_classes))
      throw ValidationError("node " + std::to_string(i) + " has class " + std::to_string(c) +
                            " outside 0.." + std::to_string(ds.num_classes));
  }
  std::vector<char> seen(n, 0);
  const auto check = [&](std::span<const NodeId> part, const char* name) {
    for (NodeId v : part) {
      if (v >= n)
        throw ValidationError(std::string(name) + " split: node " + std::to_string(v) +
                              " out of range");
      if (seen[v])
        throw ValidationError(std::string(name) + " split: node " + std::to_string(v) +
                              " appears twice or in another split");
      if (ds.labels[v] == kUnknownLabel)
        throw ValidationError(std::string(name) + " split: node " + std::to_string(v) +
                              " has no label");
      seen[v] = 1;
    }
  };
  check(ds.split.train, "train");
  check(ds.split.val, "val");
  check(ds.split.test, "test");
}

// =============================================================================
// Graph matrices
// =============================================================================

/// Â = D̃^{-1/2} (I + A) D̃^{-1/2} with D̃ = I + D.
struct ConvolutionMatrix {
  SparseMatrix matrix;
};

/// L = D - A.
struct LaplacianMatrix {
  SparseMatrix matrix;
};

inline ConvolutionMatrix build_convolution_matrix(const Graph& g) {
  const std::size_t n = g.num_nodes();
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i)
    inv_sqrt[i] = 1.0 / std::sqrt(static_cast<double>(g.degree(static_cast<NodeId>(i)) + 1));

  std::vector<std::size_t> off(n + 1, 0);
  std::vector<std::uint32_t> idx;
  std::vector<double> val;
  idx.reserve(g.adjacency().nnz() + n);
  val.reserve(g.adjacency().nnz() + n);
  for (std::size_t r = 0; r < n; ++r) {
    bool diag_done = false;
    const auto emit = [&](std::uint32_t c) {
      idx.push_back(c);
      // Product of the two scale factors; commutative, so Â is exactly symmetric.
      val.push_back(inv_sqrt[r] * inv_sqrt[c]);
    };
    for (std::uint32_t c : g.neighbors(static_cast<NodeId>(r))) {
      if (!diag_done && c > r) {
        emit(static_cast<std::uint32_t>(r));
        diag_done = true;
      }
      emit(c);
    }
    if (!diag_done) emit(static_cast<std::uint32_t>(r));
    off[r + 1] = idx.size();
  }
  return {SparseMatrix(n, n, std::move(off), std::move(idx), std::move(val))};
}

/// L + diag(shift); shift may be empty (plain Laplacian).
inline SparseMatrix laplacian_plus_diagonal(const Graph& g, std::span<const double> shift) {
  const std::size_t n = g.num_nodes();
  std::vector<std::size_t> off(n + 1, 0);
  std::vector<std::uint32_t> idx;
  std::vector<double> val;
  idx.reserve(g.adjacency().nnz() + n);
  val.reserve(g.adjacency().nnz() + n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto nb = g.neighbors(static_cast<NodeId>(r));
    const double diag =
        static_cast<double>(nb.size()) + (shift.empty() ? 0.0 : shift[r]);
    bool diag_done = false;
    for (std::uint32_t c : nb) {
      if (!diag_done && c > r) {
        idx.push_back(static_cast<std::uint32_t>(r));
        val.push_back(diag);
        diag_done = true;
      }
      idx.push_back(c);
      val.push_back(-1.0);
    }
    if (!diag_done) {
      idx.push_back(static_cast<std::uint32_t>(r));
      val.push_back(diag);
    }
    off[r + 1] = idx.size();
  }
  return SparseMatrix(n, n, std::move(off), std::move(idx), std::move(val));
}

inline LaplacianMatrix build_laplacian(const Graph& g) { return {laplacian_plus_diagonal(g, {})}; }

/// ceil(ln n / (tau * ln mean_degree)): per-class labeled count a tau-layer
/// GCN needs to reach every node.
inline std::size_t compute_t_star(std::size_t n, std::size_t tau, double mean_degree) {
  if (n < 2) throw DomainError("t*: need n >= 2");
  if (tau < 1) throw DomainError("t*: need at least one layer");
  if (!(mean_degree > 1.0))
    throw DomainError("t*: mean degree must exceed 1 (got " + std::to_string(mean_degree) + ")");
  const double bound =
      std::log(static_cast<double>(n)) / (static_cast<double>(tau) * std::log(mean_degree));
  return static_cast<std::size_t>(std::ceil(bound));
}

}  // namespace lexicol
