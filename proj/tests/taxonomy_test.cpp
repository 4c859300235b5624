#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "orbis/losses.hpp"
#include "orbis/taxonomy.hpp"

namespace orbis {
namespace {

Taxonomy chain() { return Taxonomy::build({{"a", "b"}, {"b", "c"}}); }

Taxonomy binary7() {
  return Taxonomy::build({{"a", "r"}, {"b", "r"}, {"a1", "a"}, {"a2", "a"}, {"b1", "b"}, {"b2", "b"}});
}

// Root with two internal nodes, five leaves each.
Taxonomy ten_leaves() {
  std::vector<Edge> e{{"p", "root"}, {"q", "root"}};
  for (int i = 0; i < 5; ++i) {
    e.push_back({"p" + std::to_string(i), "p"});
    e.push_back({"q" + std::to_string(i), "q"});
  }
  return Taxonomy::build(e);
}

// Random DAG on n nodes: node i > 0 gets 1..3 parents among 0..i-1.
std::vector<Edge> random_dag(std::size_t n, std::mt19937_64& rng, int max_parents = 3) {
  std::vector<Edge> e;
  auto name = [](std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "n%05zu", i);
    return std::string(buf);
  };
  for (std::size_t i = 1; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::uniform_int_distribution<int> count(1, max_parents);
    const int k = count(rng);
    for (int j = 0; j < k; ++j) e.push_back({name(i), name(pick(rng))});
  }
  return e;
}

std::size_t brute_descendants(const Taxonomy& t, NodeId i) {
  std::set<NodeId> seen;
  std::vector<NodeId> stack{i};
  while (!stack.empty()) {
    const NodeId u = stack.back();
    stack.pop_back();
    for (NodeId c : t.children(u))
      if (seen.insert(c).second) stack.push_back(c);
  }
  return seen.size();
}

TEST(Load, ChainDepthsAndDescendants) {
  const auto t = chain();
  EXPECT_EQ(t.depth(t.at("c")), 0);
  EXPECT_EQ(t.depth(t.at("b")), 1);
  EXPECT_EQ(t.depth(t.at("a")), 2);
  EXPECT_EQ(t.descendants(t.at("c")), 2u);
  EXPECT_EQ(t.descendants(t.at("a")), 0u);
  EXPECT_TRUE(t.is_tree());
}

TEST(Load, SingleNode) {
  const auto t = Taxonomy::build({}, {"x"});
  ASSERT_EQ(t.size(), 1u);
  EXPECT_TRUE(t.is_root(0));
  EXPECT_EQ(t.depth(0), 0);
  EXPECT_EQ(t.descendants(0), 0u);
}

TEST(Load, Errors) {
  try {
    Taxonomy::build({{"a", "b"}, {"b", "a"}});
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "cyclic input");
  }
  EXPECT_THROW(Taxonomy::build({{"a", "a"}}), Error);
  EXPECT_THROW(Taxonomy::build({{"a", "b"}, {"b", "c"}, {"c", "a"}}), Error);
  try {
    Taxonomy::build({{"a", "zz"}}, {"a", "b"});
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "unknown node: zz");
  }
}

TEST(Load, ForestAndDuplicateEdges) {
  const auto t = Taxonomy::build({{"a", "r1"}, {"a", "r1"}, {"b", "r2"}});
  EXPECT_EQ(t.roots().size(), 2u);
  EXPECT_EQ(t.edge_count(), 2u);
}

TEST(Load, MultiParentDepthIsShortestPath) {
  // x hangs off the root directly and off a depth-2 node.
  const auto t = Taxonomy::build({{"a", "r"}, {"b", "a"}, {"x", "b"}, {"x", "r"}});
  EXPECT_EQ(t.depth(t.at("x")), 1);
  EXPECT_FALSE(t.is_tree());
  EXPECT_EQ(t.descendants(t.at("r")), 3u);
}

TEST(Radii, BalancedBinaryTree) {
  const auto t = binary7();
  const auto m = taxonomy::compute_radii(t);
  EXPECT_NEAR(m.raw[t.at("r")], 3.807, 1e-3);
  EXPECT_NEAR(m.raw[t.at("a")], 3.585, 1e-3);
  EXPECT_NEAR(m.raw[t.at("b1")], 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(m.r[t.at("a2")], 1.0);
  EXPECT_DOUBLE_EQ(m.r[t.at("r")], 0.0);
  const double mid = 1.0 - (std::log2(3.0) - 1.0) / (std::log2(7.0) - 2.0);
  EXPECT_NEAR(m.r[t.at("b")], mid, 1e-12);
  for (double r : m.r) {
    EXPECT_GE(r, 0.0);
    EXPECT_LE(r, 1.0);
  }
}

TEST(Radii, LeafIsOnePlusDepth) {
  const auto t = chain();
  EXPECT_DOUBLE_EQ(taxonomy::compute_radii(t).raw[t.at("a")], 3.0);
}

TEST(Radii, DegenerateRangeGivesOne) {
  const auto t = Taxonomy::build({}, {"x", "y", "z"});
  const auto m = taxonomy::compute_radii(t);
  for (double r : m.r) EXPECT_EQ(r, 1.0);
}

TEST(Radii, InversionPreservesDifferences) {
  const auto t = binary7();
  const auto m = taxonomy::compute_radii(t);
  const auto inv = taxonomy::inverted(m);
  EXPECT_TRUE(inv.inverted);
  for (NodeId a = 0; a < t.size(); ++a)
    for (NodeId b = 0; b < t.size(); ++b)
      EXPECT_NEAR(std::abs(m.r[a] - m.r[b]), std::abs(inv.r[a] - inv.r[b]), 1e-15);
  EXPECT_NEAR(inv.normalize(3.0), 0.0, 1e-15);
}

TEST(Descendants, MatchBruteForceOnRandomGraphs) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 20 + 9 * static_cast<std::size_t>(trial);  // up to 191
    const auto t = Taxonomy::build(random_dag(n, rng, trial % 2 == 0 ? 1 : 3));
    for (NodeId i = 0; i < t.size(); ++i) ASSERT_EQ(t.descendants(i), brute_descendants(t, i)) << trial;
  }
}

TEST(Descendants, TreeCountIsSubtreeSizeMinusOne) {
  const auto t = ten_leaves();
  EXPECT_EQ(t.descendants(t.at("root")), 12u);
  EXPECT_EQ(t.descendants(t.at("p")), 5u);
}

TEST(Complexity, OperationCountGrowsLinearly) {
  // Trees (fixed fan-out) of increasing size: ops per (|N| + |E|) stays flat.
  auto ops_per_item = [](std::size_t n) {
    std::mt19937_64 rng(n);
    const auto edges = random_dag(n, rng, 1);
    OpCounter c;
    const auto t = Taxonomy::build(edges, {}, &c);
    taxonomy::compute_radii(t, &c);
    return static_cast<double>(c.ops) / static_cast<double>(t.size() + t.edge_count());
  };
  const double small = ops_per_item(1000);
  const double large = ops_per_item(32000);
  EXPECT_LT(large / small, 1.1);
  EXPECT_GT(large / small, 0.9);
}

TEST(Split, TenLeavesFractionTwoTenths) {
  const auto t = ten_leaves();
  const auto s = taxonomy::split_leaves(t, 0.2, 7);
  ASSERT_EQ(s.queries.size(), 2u);
  for (const auto& q : s.queries) {
    EXPECT_FALSE(s.seed.find(q.id).has_value());
    ASSERT_EQ(q.gold.size(), 1u);
    EXPECT_TRUE(s.seed.find(q.gold[0]).has_value());
  }
  // Conservation: each query leaf carried exactly one edge.
  EXPECT_EQ(s.seed.edge_count(), t.edge_count() - 2);
  EXPECT_EQ(s.seed.size(), t.size() - 2);
}

TEST(Split, Deterministic) {
  const auto t = ten_leaves();
  const auto a = taxonomy::split_leaves(t, 0.3, 11, 0.2);
  const auto b = taxonomy::split_leaves(t, 0.3, 11, 0.2);
  ASSERT_EQ(a.queries.size(), b.queries.size());
  for (std::size_t i = 0; i < a.queries.size(); ++i) EXPECT_EQ(a.queries[i].id, b.queries[i].id);
  EXPECT_EQ(a.seed.edge_pairs(), b.seed.edge_pairs());
  const auto c = taxonomy::split_leaves(t, 0.3, 12, 0.2);
  bool differs = c.seed.edge_pairs() != a.seed.edge_pairs();
  for (std::size_t i = 0; i < a.queries.size(); ++i) differs = differs || a.queries[i].id != c.queries[i].id;
  EXPECT_TRUE(differs);
}

TEST(Split, EdgeDropKeepsNodes) {
  const auto t = ten_leaves();
  const auto s = taxonomy::split_leaves(t, 0.2, 7, 0.5);
  EXPECT_EQ(s.seed.size(), t.size() - 2);
  EXPECT_EQ(s.seed.edge_count(), 5u);  // round(0.5 * 10) of 10 kept edges dropped
}

TEST(Split, MultiParentGold) {
  const auto t = Taxonomy::build({{"a", "r"}, {"b", "r"}, {"x", "a"}, {"x", "b"}});
  const auto s = taxonomy::split_leaves(t, 0.5, 1);
  ASSERT_EQ(s.queries.size(), 1u);
  EXPECT_EQ(s.queries[0].id, "x");
  EXPECT_EQ(s.queries[0].gold, (std::vector<std::string>{"a", "b"}));
}

TEST(Split, Errors) {
  const auto t = chain();
  EXPECT_THROW(taxonomy::split_leaves(t, 0.0, 1), Error);
  EXPECT_THROW(taxonomy::split_leaves(t, 1.0, 1), Error);
  EXPECT_THROW(taxonomy::split_leaves(t, 0.2, 1), Error);  // round(0.2 * 1) = 0
  EXPECT_THROW(taxonomy::split_leaves(t, 0.5, 1, 1.0), Error);
}

TEST(Triplets, ForcedNegativeInChain) {
  const auto t = chain();
  std::mt19937_64 rng(1);
  const auto batch = taxonomy::sample_triplets(t, 1, rng);
  const NodeId a = t.at("a"), b = t.at("b"), c = t.at("c");
  bool found = false;
  for (const auto& tr : batch)
    if (tr.child == a) {
      EXPECT_EQ(tr.parent, b);
      EXPECT_EQ(tr.negative, c);
      found = true;
    }
  EXPECT_TRUE(found);
  EXPECT_EQ(batch.size(), 2u);
}

TEST(Triplets, NegativesAvoidParentsAndCoverTheRest) {
  std::mt19937_64 graph_rng(3);
  const auto t = Taxonomy::build(random_dag(40, graph_rng));
  std::mt19937_64 rng(4);
  const auto batch = taxonomy::sample_triplets(t, 50, rng);
  EXPECT_EQ(batch.size(), t.edge_count() * 50);
  std::set<NodeId> seen_neg;
  for (const auto& tr : batch) {
    const auto& ps = t.parents(tr.child);
    EXPECT_TRUE(std::find(ps.begin(), ps.end(), tr.parent) != ps.end());
    EXPECT_TRUE(std::find(ps.begin(), ps.end(), tr.negative) == ps.end());
    EXPECT_NE(tr.negative, tr.child);
    seen_neg.insert(tr.negative);
  }
  EXPECT_EQ(seen_neg.size(), t.size());
}

TEST(Triplets, SeededStreamIsReproducibleAndSkipsStarvedChildren) {
  const auto t = binary7();
  std::mt19937_64 r1(9), r2(9);
  const auto a = taxonomy::sample_triplets(t, 5, r1);
  const auto b = taxonomy::sample_triplets(t, 5, r2);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].negative, b[i].negative);

  const auto pair = Taxonomy::build({{"a", "b"}});
  std::vector<NodeId> skipped;
  std::mt19937_64 r3(1);
  EXPECT_TRUE(taxonomy::sample_triplets(pair, 1, r3, &skipped).empty());
  EXPECT_EQ(skipped.size(), 1u);
  EXPECT_THROW(taxonomy::sample_triplets(pair, 0, r3), Error);
}

TEST(Lca, Cases) {
  const auto t = binary7();
  EXPECT_EQ(taxonomy::lca(t, t.at("a1"), t.at("a1")), t.at("a1"));
  EXPECT_EQ(taxonomy::lca(t, t.at("a1"), t.at("a2")), t.at("a"));
  EXPECT_EQ(taxonomy::lca(t, t.at("a1"), t.at("b2")), t.at("r"));
  EXPECT_EQ(taxonomy::lca(t, t.at("a1"), t.at("a")), t.at("a"));

  const auto forest = Taxonomy::build({{"a", "r1"}, {"b", "r2"}});
  try {
    taxonomy::lca(forest, forest.at("a"), forest.at("b"));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "no common ancestor");
  }
}

TEST(Lca, DiamondTieBreakMatchesBruteForce) {
  // x and y both sit under p and q, which both sit under r.
  const auto t = Taxonomy::build({{"p", "r"}, {"q", "r"}, {"x", "p"}, {"x", "q"}, {"y", "p"}, {"y", "q"}});
  EXPECT_EQ(taxonomy::lca(t, t.at("x"), t.at("y")), t.at("p"));

  std::mt19937_64 rng(8);
  const auto g = Taxonomy::build(random_dag(60, rng));
  for (NodeId a = 0; a < g.size(); a += 3) {
    for (NodeId b = 1; b < g.size(); b += 5) {
      const auto aa = g.ancestors_inclusive(a), bb = g.ancestors_inclusive(b);
      NodeId best = g.size();
      for (NodeId x : aa)
        if (std::find(bb.begin(), bb.end(), x) != bb.end())
          if (best == g.size() || g.depth(x) > g.depth(best)) best = x;
      EXPECT_EQ(taxonomy::lca(g, a, b), best);
    }
  }
}

}  // namespace
}  // namespace orbis
