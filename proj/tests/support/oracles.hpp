#pragma once

// Independent reference implementations used only by the tests. Nothing here
// calls into the library's numerical kernels: matrices are built from their
// definitions in dense form and systems are solved by Gaussian elimination.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <unistd.h>

#include "lexicol/graph.hpp"
#include "lexicol/linalg.hpp"

namespace oracle {

using lexicol::Edge;
using lexicol::Graph;
using lexicol::NodeId;
using Dense = std::vector<std::vector<double>>;

inline Dense zeros(std::size_t r, std::size_t c) { return Dense(r, std::vector<double>(c, 0.0)); }

inline Dense to_rows(const lexicol::DenseMatrix& m) {
  Dense out = zeros(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  return out;
}

inline Dense adjacency(const Graph& g) {
  Dense a = zeros(g.num_nodes(), g.num_nodes());
  for (const auto& e : g.edges()) a[e.u][e.v] = a[e.v][e.u] = 1.0;
  return a;
}

/// (I + D)^{-1/2} (I + A) (I + D)^{-1/2}, evaluated entry by entry.
inline Dense convolution(const Graph& g) {
  const auto a = adjacency(g);
  const std::size_t n = a.size();
  std::vector<double> dt(n, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) dt[i] += a[i][j];
  Dense out = zeros(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out[i][j] = ((i == j ? 1.0 : 0.0) + a[i][j]) / std::sqrt(dt[i] * dt[j]);
  return out;
}

/// D - A + diag(shift).
inline Dense laplacian(const Graph& g, double shift = 0.0) {
  auto a = adjacency(g);
  const std::size_t n = a.size();
  Dense out = zeros(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      deg += a[i][j];
      out[i][j] = -a[i][j];
    }
    out[i][i] = deg + shift;
  }
  return out;
}

/// Gaussian elimination with partial pivoting.
inline std::vector<double> solve(Dense a, std::vector<double> b) {
  const std::size_t n = a.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    std::swap(a[col], a[piv]);
    std::swap(b[col], b[piv]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r][col] / a[col][col];
      if (f == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t c = i + 1; c < n; ++c) s -= a[i][c] * x[c];
    x[i] = s / a[i][i];
  }
  return x;
}

inline std::vector<double> matvec(const Dense& a, const std::vector<double>& x) {
  std::vector<double> y(a.size(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < x.size(); ++j) y[i] += a[i][j] * x[j];
  return y;
}

/// Textbook two-pass Pearson correlation.
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

/// All candidates sorted by (score desc, id asc), truncated to k.
inline std::vector<NodeId> top_k(const std::vector<double>& scores, std::size_t k,
                                 const std::set<NodeId>& excluded) {
  std::vector<NodeId> ids;
  for (NodeId i = 0; i < scores.size(); ++i)
    if (!excluded.contains(i)) ids.push_back(i);
  std::sort(ids.begin(), ids.end(), [&](NodeId a, NodeId b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  if (ids.size() > k) ids.resize(k);
  return ids;
}

/// Random spanning tree plus `extra` random chords.
inline Graph random_connected(std::size_t n, std::size_t extra, std::mt19937_64& rng) {
  std::set<std::pair<NodeId, NodeId>> es;
  for (NodeId v = 1; v < n; ++v) {
    const auto u = static_cast<NodeId>(std::uniform_int_distribution<std::size_t>(0, v - 1)(rng));
    es.insert({u, v});
  }
  if (n >= 2)
    for (std::size_t tries = 0; tries < 20 * extra && es.size() < n - 1 + extra; ++tries) {
      auto a = static_cast<NodeId>(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
      auto b = static_cast<NodeId>(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
      if (a == b) continue;
      es.insert({std::min(a, b), std::max(a, b)});
    }
  std::vector<Edge> edges;
  for (const auto& [u, v] : es) edges.push_back({u, v});
  return Graph::from_edges(n, std::move(edges));
}

/// Erdos-Renyi graph; may be disconnected and may have isolated nodes.
inline Graph random_graph(std::size_t n, double p, std::mt19937_64& rng) {
  std::vector<Edge> edges;
  std::bernoulli_distribution coin(p);
  for (NodeId u = 0; u < n; ++u)
    for (NodeId v = u + 1; v < n; ++v)
      if (coin(rng)) edges.push_back({u, v});
  return Graph::from_edges(n, std::move(edges));
}

inline Graph path(std::size_t n) {
  std::vector<Edge> edges;
  for (NodeId v = 1; v < n; ++v) edges.push_back({v - 1, v});
  return Graph::from_edges(n, std::move(edges));
}

/// Scratch directory removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string& tag) {
    static std::size_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("lexicol-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
  std::filesystem::path path_;
};

}  // namespace oracle
