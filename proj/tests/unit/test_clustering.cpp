#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <set>

#include "lexicol/clustering.hpp"
#include "support/oracles.hpp"

using namespace lexicol;

namespace {

bool induced_connected(const Graph& g, std::span<const NodeId> members) {
  std::set<NodeId> in(members.begin(), members.end());
  std::set<NodeId> seen{members.front()};
  std::vector<NodeId> stack{members.front()};
  while (!stack.empty()) {
    const NodeId v = stack.back();
    stack.pop_back();
    for (NodeId w : g.neighbors(v))
      if (in.contains(w) && seen.insert(w).second) stack.push_back(w);
  }
  return seen.size() == in.size();
}

void expect_valid(const Partition& p, std::size_t n, std::size_t k) {
  ASSERT_EQ(p.num_nodes(), n);
  ASSERT_EQ(p.num_clusters(), k);
  std::vector<int> hits(n, 0);
  for (std::size_t c = 0; c < k; ++c) {
    ASSERT_FALSE(p.members(c).empty());
    for (NodeId v : p.members(c)) {
      ++hits[v];
      EXPECT_EQ(p.cluster_of(v), c);
    }
  }
  for (int h : hits) EXPECT_EQ(h, 1);
}

}  // namespace

TEST(Partition, SingleCluster) {
  std::mt19937_64 rng(1);
  const auto g = oracle::random_graph(30, 0.1, rng);
  const auto p = partition(g, 1);
  expect_valid(p, 30, 1);
}

TEST(Partition, Singletons) {
  std::mt19937_64 rng(2);
  const auto g = oracle::random_graph(25, 0.2, rng);
  const auto p = partition(g, 25);
  expect_valid(p, 25, 25);
}

TEST(Partition, TwoTrianglesSplitIntoComponents) {
  const auto g = Graph::from_edges(6, {{0, 1}, {1, 2}, {0, 2}, {3, 4}, {4, 5}, {3, 5}});
  const auto p = partition(g, 2);
  expect_valid(p, 6, 2);
  EXPECT_EQ(p.cluster_of(0), p.cluster_of(1));
  EXPECT_EQ(p.cluster_of(1), p.cluster_of(2));
  EXPECT_EQ(p.cluster_of(3), p.cluster_of(4));
  EXPECT_EQ(p.cluster_of(4), p.cluster_of(5));
  EXPECT_NE(p.cluster_of(0), p.cluster_of(3));
}

TEST(Partition, RejectsBadK) {
  const auto g = oracle::path(4);
  EXPECT_THROW(partition(g, 0), ValidationError);
  EXPECT_THROW(partition(g, 5), ValidationError);
  EXPECT_THROW(Partition::from_assignment(3, {0, 1, 1}), ValidationError);  // cluster 2 empty
  EXPECT_THROW(Partition::from_assignment(2, {0, 2}), ValidationError);
}

TEST(Partition, MoreComponentsThanClustersFoldIntoSmallest) {
  // A path of 6 plus four isolated nodes, K = 2.
  const auto g = Graph::from_edges(10, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}});
  const auto p = partition(g, 2);
  expect_valid(p, 10, 2);
}

TEST(Partition, RandomizedValidityAndDeterminism) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 150; ++trial) {
    const std::size_t n = 1 + trial % 200;
    const auto g = trial % 3 == 0 ? oracle::random_connected(n, n / 3, rng)
                                  : oracle::random_graph(n, 3.0 / static_cast<double>(n), rng);
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, n)(rng);
    const auto seed = rng();
    const auto p = partition(g, k, seed);
    expect_valid(p, n, k);
    EXPECT_EQ(p, partition(g, k, seed));
    EXPECT_EQ(p, partition(g, k, seed + 1));  // seed is inert by default
    EXPECT_EQ(p.hash(), partition(g, k, seed).hash());
    const GraphGrowingPartitioner randomized(true);
    const auto q = randomized.partition(g, k, seed);
    expect_valid(q, n, k);
    EXPECT_EQ(q, randomized.partition(g, k, seed));
  }
}

TEST(Partition, ClustersConnectedAndBalancedOnConnectedGraphs) {
  std::mt19937_64 rng(4);
  std::size_t worst_ratio_num = 0, worst_ratio_den = 1;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 20 + trial * 2;
    const auto g = oracle::random_connected(n, n, rng);
    for (std::size_t k : {2u, 5u, 10u}) {
      const auto p = partition(g, k);
      const std::size_t cap = (n + k - 1) / k;
      for (std::size_t c = 0; c < k; ++c) {
        EXPECT_TRUE(induced_connected(g, p.members(c)));
        EXPECT_LE(p.members(c).size(), 4 * cap) << "n=" << n << " k=" << k;
        if (p.members(c).size() * worst_ratio_den > worst_ratio_num * cap) {
          worst_ratio_num = p.members(c).size();
          worst_ratio_den = cap;
        }
      }
    }
  }
  RecordProperty("worst_size_over_cap", std::to_string(double(worst_ratio_num) / worst_ratio_den));
}

TEST(Partition, RandomTiesDependOnSeed) {
  // On a cycle every node has degree 2, so seeds are picked by the tie rule.
  std::vector<Edge> edges;
  for (NodeId v = 0; v < 40; ++v) edges.push_back({v, static_cast<NodeId>((v + 1) % 40)});
  const auto g = Graph::from_edges(40, edges);
  const GraphGrowingPartitioner randomized(true);
  std::set<std::vector<std::uint32_t>> seen;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto a = randomized.partition(g, 4, s).assignment();
    seen.emplace(a.begin(), a.end());
  }
  EXPECT_GT(seen.size(), 1u);
}

TEST(PartitionFile, RoundTripAndLayout) {
  oracle::TempDir tmp("part");
  const auto g = oracle::path(5);
  const auto p = partition(g, 2);
  write_partition(p, tmp / "partition.tsv");
  std::ifstream in(tmp / "partition.tsv");
  std::string text((std::istreambuf_iterator<char>(in)), {});
  std::string want;
  for (NodeId v = 0; v < 5; ++v) want += std::to_string(v) + "\t" + std::to_string(p.cluster_of(v)) + "\n";
  EXPECT_EQ(text, want);
  EXPECT_EQ(read_partition(tmp / "partition.tsv", 5), p);
  EXPECT_THROW(read_partition(tmp / "partition.tsv", 6), ValidationError);
  std::ofstream(tmp / "bad.tsv") << "0\t0\n2\t1\n";
  EXPECT_THROW(read_partition(tmp / "bad.tsv", 2), FormatError);
}
