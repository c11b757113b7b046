#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <queue>
#include <string>
#include <vector>

#include "lexicol/binary_io.hpp"
#include "lexicol/dataset_io.hpp"
#include "lexicol/graph.hpp"
#include "lexicol/hash.hpp"
#include "lexicol/random.hpp"

namespace lexicol {

/// Disjoint, exhaustive assignment of nodes to K non-empty clusters.
class Partition {
public:
  Partition() = default;

  /// Validates that every cluster id is < k and every cluster is non-empty.
  static Partition from_assignment(std::size_t k, std::vector<std::uint32_t> assignment) {
    Partition p;
    p.members_.assign(k, {});
    for (std::size_t v = 0; v < assignment.size(); ++v) {
      if (assignment[v] >= k)
        throw ValidationError("partition: node " + std::to_string(v) + " assigned to cluster " +
                              std::to_string(assignment[v]) + " >= K=" + std::to_string(k));
      p.members_[assignment[v]].push_back(static_cast<NodeId>(v));
    }
    for (std::size_t c = 0; c < k; ++c)
      if (p.members_[c].empty())
        throw ValidationError("partition: cluster " + std::to_string(c) + " is empty");
    p.assignment_ = std::move(assignment);
    return p;
  }

  std::size_t num_clusters() const noexcept { return members_.size(); }
  std::size_t num_nodes() const noexcept { return assignment_.size(); }
  std::uint32_t cluster_of(NodeId v) const noexcept { return assignment_[v]; }
  std::span<const std::uint32_t> assignment() const noexcept { return assignment_; }
  std::span<const NodeId> members(std::size_t c) const noexcept { return members_[c]; }

  std::uint64_t hash() const noexcept {
    ContentHash h;
    h.text("partition");
    h.u64(members_.size());
    h.u64_range<std::uint32_t>(assignment_);
    return h.value();
  }

  friend bool operator==(const Partition& a, const Partition& b) {
    return a.assignment_ == b.assignment_ && a.members_.size() == b.members_.size();
  }

private:
  std::vector<std::uint32_t> assignment_;
  std::vector<std::vector<NodeId>> members_;
};

/// Strategy interface so other community-detection methods can be swapped in.
class Partitioner {
public:
  virtual ~Partitioner() = default;
  virtual Partition partition(const Graph& graph, std::size_t k, std::uint64_t seed) const = 0;
  virtual std::string name() const = 0;
};

/// Seeded K-way graph growing.
///
/// Seeds are spread over connected components in proportion to their size
/// (every component gets one while seeds last, the rest by the D'Hondt
/// quotient size/(allocated+1)); inside a component the highest-degree nodes
/// become seeds. Clusters then grow in synchronized BFS rounds: each frontier
/// node, visited in ascending id order, joins the smallest cluster (ties: lower
/// id) among those holding one of its neighbours at the start of the round.
/// Components left without a seed are folded whole into the least-filled
/// cluster, largest-degree component head first.
class GraphGrowingPartitioner final : public Partitioner {
public:
  /// When set, equal-degree ties are broken by a seed-keyed hash instead of
  /// node id. Off by default, making `seed` inert.
  explicit GraphGrowingPartitioner(bool randomize_ties = false) : randomize_ties_(randomize_ties) {}

  std::string name() const override { return "graph-growing"; }

  Partition partition(const Graph& g, std::size_t k, std::uint64_t seed) const override {
    const std::size_t n = g.num_nodes();
    if (k < 1) throw ValidationError("partition: K must be at least 1");
    if (k > n)
      throw ValidationError("partition: K=" + std::to_string(k) + " exceeds node count " +
                            std::to_string(n));

    const std::uint64_t tie_key = rng::derive_key(seed, {rng::label(rng::Domain::kPartitionTies)});
    const auto tie = [&](NodeId v) -> std::uint64_t {
      return randomize_ties_ ? rng::bits(tie_key, v) : v;
    };
    // Degree descending, then tie key ascending, then id.
    const auto seed_order = [&](NodeId a, NodeId b) {
      const auto da = g.degree(a), db = g.degree(b);
      if (da != db) return da > db;
      const auto ta = tie(a), tb = tie(b);
      if (ta != tb) return ta < tb;
      return a < b;
    };

    const auto comp = g.connected_components();
    const std::size_t num_comp = n == 0 ? 0 : *std::max_element(comp.begin(), comp.end()) + 1;
    std::vector<std::vector<NodeId>> comp_nodes(num_comp);
    for (std::size_t v = 0; v < n; ++v) comp_nodes[comp[v]].push_back(static_cast<NodeId>(v));

    // Components by size descending, then by smallest member.
    std::vector<std::size_t> comp_order(num_comp);
    std::iota(comp_order.begin(), comp_order.end(), std::size_t{0});
    std::stable_sort(comp_order.begin(), comp_order.end(), [&](std::size_t a, std::size_t b) {
      return comp_nodes[a].size() > comp_nodes[b].size();
    });

    std::vector<std::size_t> alloc(num_comp, 0);
    std::size_t remaining = k;
    for (std::size_t r = 0; r < num_comp && remaining > 0; ++r, --remaining) alloc[comp_order[r]] = 1;
    if (remaining > 0) {
      // D'Hondt: highest size/(alloc+1), compared exactly by cross-multiplication.
      const auto worse = [&](const std::pair<std::size_t, std::size_t>& a,
                             const std::pair<std::size_t, std::size_t>& b) {
        const auto lhs = comp_nodes[a.second].size() * (alloc[b.second] + 1);
        const auto rhs = comp_nodes[b.second].size() * (alloc[a.second] + 1);
        if (lhs != rhs) return lhs < rhs;
        return a.first > b.first;  // earlier in comp_order wins
      };
      std::priority_queue<std::pair<std::size_t, std::size_t>,
                          std::vector<std::pair<std::size_t, std::size_t>>, decltype(worse)>
          heap(worse);
      for (std::size_t r = 0; r < num_comp; ++r)
        if (alloc[comp_order[r]] < comp_nodes[comp_order[r]].size()) heap.emplace(r, comp_order[r]);
      while (remaining > 0) {
        auto top = heap.top();
        heap.pop();
        ++alloc[top.second];
        --remaining;
        if (alloc[top.second] < comp_nodes[top.second].size()) heap.push(top);
      }
    }

    std::vector<NodeId> seeds;
    seeds.reserve(k);
    for (std::size_t c = 0; c < num_comp; ++c) {
      if (alloc[c] == 0) continue;
      auto nodes = comp_nodes[c];
      std::partial_sort(nodes.begin(), nodes.begin() + static_cast<std::ptrdiff_t>(alloc[c]),
                        nodes.end(), seed_order);
      seeds.insert(seeds.end(), nodes.begin(), nodes.begin() + static_cast<std::ptrdiff_t>(alloc[c]));
    }
    std::sort(seeds.begin(), seeds.end(), seed_order);

    constexpr std::uint32_t kUnassigned = static_cast<std::uint32_t>(-1);
    std::vector<std::uint32_t> assign(n, kUnassigned);
    std::vector<std::size_t> round_of(n, 0);
    std::vector<std::size_t> size(k, 0);
    std::vector<NodeId> frontier;
    for (std::size_t c = 0; c < k; ++c) {
      assign[seeds[c]] = static_cast<std::uint32_t>(c);
      size[c] = 1;
      frontier.push_back(seeds[c]);
    }

    std::size_t round = 0;
    std::vector<NodeId> candidates;
    while (!frontier.empty()) {
      ++round;
      candidates.clear();
      for (NodeId v : frontier)
        for (NodeId w : g.neighbors(v))
          if (assign[w] == kUnassigned) candidates.push_back(w);
      std::sort(candidates.begin(), candidates.end());
      candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
      for (NodeId v : candidates) {
        std::uint32_t best = kUnassigned;
        for (NodeId w : g.neighbors(v)) {
          if (assign[w] == kUnassigned || round_of[w] == round) continue;
          const std::uint32_t c = assign[w];
          if (best == kUnassigned || size[c] < size[best] || (size[c] == size[best] && c < best))
            best = c;
        }
        assign[v] = best;
        round_of[v] = round;
        ++size[best];
      }
      frontier = candidates;
    }

    // Seedless components fold into the least-filled cluster.
    for (;;) {
      NodeId head = 0;
      bool found = false;
      for (std::size_t v = 0; v < n; ++v) {
        if (assign[v] != kUnassigned) continue;
        if (!found || seed_order(static_cast<NodeId>(v), head)) head = static_cast<NodeId>(v);
        found = true;
      }
      if (!found) break;
      const auto target = static_cast<std::uint32_t>(
          std::min_element(size.begin(), size.end()) - size.begin());
      std::vector<NodeId> stack{head};
      assign[head] = target;
      ++size[target];
      while (!stack.empty()) {
        const NodeId v = stack.back();
        stack.pop_back();
        for (NodeId w : g.neighbors(v))
          if (assign[w] == kUnassigned) {
            assign[w] = target;
            ++size[target];
            stack.push_back(w);
          }
      }
    }

    return Partition::from_assignment(k, std::move(assign));
  }

private:
  bool randomize_ties_;
};

inline Partition partition(const Graph& g, std::size_t k, std::uint64_t seed = 0) {
  return GraphGrowingPartitioner{}.partition(g, k, seed);
}

/// partition.tsv: "node_id\tcluster_id" per node, ascending node id.
inline void write_partition(const Partition& p, const std::filesystem::path& path) {
  io::write_atomically(path, [&](std::ostream& os) {
    const auto a = p.assignment();
    for (std::size_t v = 0; v < a.size(); ++v) os << v << '\t' << a[v] << '\n';
  });
}

inline Partition read_partition(const std::filesystem::path& path, std::size_t num_nodes) {
  auto in = io::open_in(path, false);
  std::vector<std::uint32_t> assign;
  std::uint32_t max_cluster = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto at = detail::where(path, lineno);
    const auto [a, b] = detail::split_pair(line, at);
    if (detail::parse_uint(a, at) != lineno - 1)
      throw FormatError(at + ": node ids must be 0..n-1 in order");
    const auto c = static_cast<std::uint32_t>(detail::parse_uint(b, at));
    max_cluster = std::max(max_cluster, c);
    assign.push_back(c);
  }
  if (assign.size() != num_nodes)
    throw ValidationError(path.filename().string() + ": " + std::to_string(assign.size()) +
                          " rows for " + std::to_string(num_nodes) + " nodes");
  const std::size_t k = assign.empty() ? 0 : std::size_t{max_cluster} + 1;
  return Partition::from_assignment(k, std::move(assign));
}

}  // namespace lexicol
