#pragma once

// Concept hierarchies (trees or DAGs): structural statistics, radii, the
// attach-to-seed split, negative sampling, and lowest common ancestors.
//
// Nodes are stored in lexicographic id order, so comparing indices is the same
// as comparing ids. Every "smaller id" tie-break below relies on this.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <deque>
#include <iterator>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "orbis/error.hpp"
#include "orbis/losses.hpp"

namespace orbis {

using NodeId = std::size_t;

/// Counts elementary steps so tests can check linear scaling.
struct OpCounter {
  std::uint64_t ops = 0;
  void tick(std::uint64_t n = 1) { ops += n; }
};

struct Edge {
  std::string child;
  std::string parent;
};

class Taxonomy {
 public:
  Taxonomy() = default;

  /// Builds the graph from (child, parent) records. When `declared` is
  /// non-empty it is the full node universe and every edge endpoint must be in
  /// it; otherwise the universe is the set of edge endpoints.
  static Taxonomy build(const std::vector<Edge>& edges, const std::vector<std::string>& declared = {},
                        OpCounter* counter = nullptr) {
    Taxonomy t;
    std::set<std::string> ids(declared.begin(), declared.end());
    if (declared.empty()) {
      for (const auto& e : edges) {
        ids.insert(e.child);
        ids.insert(e.parent);
      }
    }
    t.ids_.assign(ids.begin(), ids.end());
    for (NodeId i = 0; i < t.ids_.size(); ++i) t.index_.emplace(t.ids_[i], i);

    const std::size_t n = t.ids_.size();
    t.parents_.assign(n, {});
    t.children_.assign(n, {});
    for (const auto& e : edges) {
      const auto c = t.find(e.child);
      const auto p = t.find(e.parent);
      if (!c || !p) fail(ErrorKind::data, "unknown node: " + (c ? e.parent : e.child));
      if (*c == *p) fail(ErrorKind::data, "cyclic input");
      t.parents_[*c].push_back(*p);
      t.children_[*p].push_back(*c);
    }
    for (auto& v : t.parents_) dedupe(v);
    for (auto& v : t.children_) dedupe(v);
    t.edge_count_ = 0;
    for (const auto& v : t.parents_) t.edge_count_ += v.size();

    t.topo_order(counter);
    t.compute_depths(counter);
    t.compute_descendants(counter);
    return t;
  }

  std::size_t size() const { return ids_.size(); }
  std::size_t edge_count() const { return edge_count_; }
  const std::string& id(NodeId i) const { return ids_.at(i); }
  const std::vector<std::string>& ids() const { return ids_; }

  std::optional<NodeId> find(const std::string& id) const {
    const auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  NodeId at(const std::string& id) const {
    const auto i = find(id);
    if (!i) fail(ErrorKind::data, "unknown node: " + id);
    return *i;
  }

  const std::vector<NodeId>& parents(NodeId i) const { return parents_.at(i); }
  const std::vector<NodeId>& children(NodeId i) const { return children_.at(i); }
  bool is_root(NodeId i) const { return parents_.at(i).empty(); }
  bool is_leaf(NodeId i) const { return children_.at(i).empty(); }
  bool is_tree() const {
    return std::all_of(parents_.begin(), parents_.end(), [](const auto& p) { return p.size() <= 1; });
  }

  std::vector<NodeId> roots() const {
    std::vector<NodeId> out;
    for (NodeId i = 0; i < size(); ++i)
      if (is_root(i)) out.push_back(i);
    return out;
  }

  /// Shortest hop count from any root.
  int depth(NodeId i) const { return depth_.at(i); }
  /// Number of distinct nodes reachable through child links.
  std::size_t descendants(NodeId i) const { return desc_.at(i); }

  /// Edges as (child, parent) index pairs, sorted.
  std::vector<std::pair<NodeId, NodeId>> edge_pairs() const {
    std::vector<std::pair<NodeId, NodeId>> out;
    out.reserve(edge_count_);
    for (NodeId c = 0; c < size(); ++c)
      for (NodeId p : parents_[c]) out.emplace_back(c, p);
    return out;
  }

  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    for (const auto& [c, p] : edge_pairs()) out.push_back({ids_[c], ids_[p]});
    return out;
  }

  /// All ancestors of i, including i itself, as a sorted list.
  std::vector<NodeId> ancestors_inclusive(NodeId i) const {
    std::vector<char> seen(size(), 0);
    std::vector<NodeId> stack{i};
    seen[i] = 1;
    while (!stack.empty()) {
      const NodeId u = stack.back();
      stack.pop_back();
      for (NodeId p : parents_[u])
        if (!seen[p]) {
          seen[p] = 1;
          stack.push_back(p);
        }
    }
    std::vector<NodeId> out;
    for (NodeId k = 0; k < size(); ++k)
      if (seen[k]) out.push_back(k);
    return out;
  }

 private:
  static void dedupe(std::vector<NodeId>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }

  // Kahn's algorithm from the roots down; leftover nodes sit on a cycle.
  void topo_order(OpCounter* counter) {
    const std::size_t n = size();
    std::vector<std::size_t> indeg(n);
    std::deque<NodeId> queue;
    for (NodeId i = 0; i < n; ++i) {
      indeg[i] = parents_[i].size();
      if (indeg[i] == 0) queue.push_back(i);
    }
    topo_.clear();
    while (!queue.empty()) {
      const NodeId u = queue.front();
      queue.pop_front();
      topo_.push_back(u);
      if (counter) counter->tick();
      for (NodeId c : children_[u]) {
        if (counter) counter->tick();
        if (--indeg[c] == 0) queue.push_back(c);
      }
    }
    if (topo_.size() != n) fail(ErrorKind::data, "cyclic input");
  }

  void compute_depths(OpCounter* counter) {
    depth_.assign(size(), -1);
    std::deque<NodeId> queue;
    for (NodeId i = 0; i < size(); ++i)
      if (is_root(i)) {
        depth_[i] = 0;
        queue.push_back(i);
      }
    while (!queue.empty()) {
      const NodeId u = queue.front();
      queue.pop_front();
      if (counter) counter->tick();
      for (NodeId c : children_[u]) {
        if (counter) counter->tick();
        if (depth_[c] < 0) {
          depth_[c] = depth_[u] + 1;
          queue.push_back(c);
        }
      }
    }
  }

  // One pass in reverse topological order. On trees subtree sizes add up; on
  // DAGs shared descendants must be counted once, so reachable sets are
  // merged as bitsets.
  void compute_descendants(OpCounter* counter) {
    const std::size_t n = size();
    desc_.assign(n, 0);
    if (is_tree()) {
      for (auto it = topo_.rbegin(); it != topo_.rend(); ++it) {
        if (counter) counter->tick();
        for (NodeId c : children_[*it]) {
          if (counter) counter->tick();
          desc_[*it] += desc_[c] + 1;
        }
      }
      return;
    }
    const std::size_t words = (n + 63) / 64;
    std::vector<std::vector<std::uint64_t>> reach(n, std::vector<std::uint64_t>(words, 0));
    for (auto it = topo_.rbegin(); it != topo_.rend(); ++it) {
      auto& mine = reach[*it];
      for (NodeId c : children_[*it]) {
        mine[c / 64] |= std::uint64_t{1} << (c % 64);
        for (std::size_t w = 0; w < words; ++w) mine[w] |= reach[c][w];
        if (counter) counter->tick(words);
      }
      std::size_t count = 0;
      for (auto w : mine) count += static_cast<std::size_t>(std::popcount(w));
      desc_[*it] = count;
    }
  }

  std::vector<std::string> ids_;
  std::map<std::string, NodeId> index_;
  std::vector<std::vector<NodeId>> parents_;
  std::vector<std::vector<NodeId>> children_;
  std::vector<NodeId> topo_;
  std::vector<int> depth_;
  std::vector<std::size_t> desc_;
  std::size_t edge_count_ = 0;
};

/// Raw structural radius per node and its min-max normalization.
struct RadiusMap {
  std::vector<double> raw;
  std::vector<double> r;
  double r_min = 0.0;
  double r_max = 0.0;
  bool inverted = false;  // r is reported as 1 - r

  /// Normalizes any raw radius with this map's range, clamped to [0, 1].
  double normalize(double raw_value) const {
    const double v = r_max == r_min ? 1.0
                                    : std::clamp(1.0 - (raw_value - r_min) / (r_max - r_min), 0.0, 1.0);
    return inverted ? 1.0 - v : v;
  }
};

namespace taxonomy {

inline Taxonomy load(const std::vector<Edge>& edges, const std::vector<std::string>& declared = {}) {
  return Taxonomy::build(edges, declared);
}

/// R_raw = 1 + D + log2(1 + N_desc).
inline double raw_radius(int depth, std::size_t descendants) {
  return 1.0 + depth + std::log2(1.0 + static_cast<double>(descendants));
}

/// Radii from the stored depths and descendant counts. When every raw radius
/// is equal, every r is 1.
inline RadiusMap compute_radii(const Taxonomy& t, OpCounter* counter = nullptr) {
  RadiusMap m;
  const std::size_t n = t.size();
  m.raw.resize(n);
  m.r.resize(n);
  if (n == 0) return m;
  for (NodeId i = 0; i < n; ++i) {
    m.raw[i] = raw_radius(t.depth(i), t.descendants(i));
    if (counter) counter->tick();
  }
  const auto [lo, hi] = std::minmax_element(m.raw.begin(), m.raw.end());
  m.r_min = *lo;
  m.r_max = *hi;
  for (NodeId i = 0; i < n; ++i) {
    m.r[i] = m.normalize(m.raw[i]);
    if (counter) counter->tick();
  }
  return m;
}

/// r -> 1 - r for every node. Only |r_a - r_b| matters downstream.
inline RadiusMap inverted(RadiusMap m) {
  for (auto& v : m.r) v = 1.0 - v;
  m.inverted = !m.inverted;
  return m;
}

/// A withheld leaf and the ids of its parents in the full taxonomy.
struct Query {
  std::string id;
  std::vector<std::string> gold;
};

struct Split {
  Taxonomy seed;
  std::vector<Query> queries;
};

/// Withholds round(test_frac * #leaves) leaves as queries. Queries and their
/// incident edges leave the seed; then round(drop_edge_frac * #seed edges)
/// further seed edges are removed at random. All seed nodes are kept, so gold
/// parents stay in the candidate set even if an edge drop isolates them.
inline Split split_leaves(const Taxonomy& t, double test_frac, std::uint64_t seed,
                          double drop_edge_frac = 0.0) {
  if (!(test_frac > 0.0 && test_frac < 1.0)) fail(ErrorKind::usage, "test fraction must be in (0, 1)");
  if (!(drop_edge_frac >= 0.0 && drop_edge_frac < 1.0))
    fail(ErrorKind::usage, "edge drop fraction must be in [0, 1)");

  std::vector<NodeId> leaves;
  for (NodeId i = 0; i < t.size(); ++i)
    if (t.is_leaf(i) && !t.is_root(i)) leaves.push_back(i);
  const auto n_query = static_cast<std::size_t>(std::llround(test_frac * static_cast<double>(leaves.size())));
  if (n_query == 0) fail(ErrorKind::data, "test fraction selects no leaves");

  std::mt19937_64 rng(seed);
  std::shuffle(leaves.begin(), leaves.end(), rng);
  std::vector<NodeId> picked(leaves.begin(), leaves.begin() + static_cast<std::ptrdiff_t>(n_query));
  std::sort(picked.begin(), picked.end());
  std::vector<char> is_query(t.size(), 0);
  for (NodeId q : picked) is_query[q] = 1;

  Split out;
  for (NodeId q : picked) {
    Query query{t.id(q), {}};
    for (NodeId p : t.parents(q)) query.gold.push_back(t.id(p));
    out.queries.push_back(std::move(query));
  }

  std::vector<Edge> kept;
  for (const auto& [c, p] : t.edge_pairs())
    if (!is_query[c]) kept.push_back({t.id(c), t.id(p)});
  const auto n_drop = static_cast<std::size_t>(std::llround(drop_edge_frac * static_cast<double>(kept.size())));
  if (n_drop > 0) {
    std::shuffle(kept.begin(), kept.end(), rng);
    kept.resize(kept.size() - n_drop);
    std::sort(kept.begin(), kept.end(), [](const Edge& a, const Edge& b) {
      return std::tie(a.child, a.parent) < std::tie(b.child, b.parent);
    });
  }

  std::vector<std::string> nodes;
  for (NodeId i = 0; i < t.size(); ++i)
    if (!is_query[i]) nodes.push_back(t.id(i));
  out.seed = Taxonomy::build(kept, nodes);
  return out;
}

/// One triplet per (edge, negative draw). Negatives are uniform over nodes that
/// are neither the child nor one of its parents. Children with no valid
/// negative are skipped and reported through `skipped`.
template <class Rng>
std::vector<Triplet> sample_triplets(const Taxonomy& t, int n_neg, Rng& rng,
                                     std::vector<NodeId>* skipped = nullptr) {
  if (n_neg < 1) fail(ErrorKind::usage, "n_neg must be >= 1");
  if (t.edge_count() == 0) fail(ErrorKind::data, "taxonomy has no edges");
  std::vector<Triplet> out;
  out.reserve(t.edge_count() * static_cast<std::size_t>(n_neg));
  for (NodeId c = 0; c < t.size(); ++c) {
    const auto& ps = t.parents(c);
    if (ps.empty()) continue;
    const std::size_t n_banned = ps.size() + 1;
    if (n_banned >= t.size()) {
      if (skipped) skipped->push_back(c);
      continue;
    }
    // Draw an index among the allowed nodes and map it back, so every draw
    // costs one RNG call regardless of how many nodes are banned.
    std::uniform_int_distribution<std::size_t> pick(0, t.size() - n_banned - 1);
    std::vector<NodeId> sorted_banned(ps.begin(), ps.end());
    sorted_banned.push_back(c);
    std::sort(sorted_banned.begin(), sorted_banned.end());
    for (NodeId p : ps) {
      for (int k = 0; k < n_neg; ++k) {
        NodeId neg = pick(rng);
        for (NodeId b : sorted_banned)
          if (b <= neg) ++neg;
        out.push_back({p, c, neg});
      }
    }
  }
  return out;
}

/// Deepest common ancestor; ties go to the smaller id.
inline NodeId lca(const Taxonomy& t, NodeId a, NodeId b) {
  if (a >= t.size() || b >= t.size()) fail(ErrorKind::data, "unknown node");
  const auto aa = t.ancestors_inclusive(a);
  const auto bb = t.ancestors_inclusive(b);
  std::vector<NodeId> common;
  std::set_intersection(aa.begin(), aa.end(), bb.begin(), bb.end(), std::back_inserter(common));
  if (common.empty()) fail(ErrorKind::data, "no common ancestor");
  NodeId best = common.front();
  for (NodeId x : common)
    if (t.depth(x) > t.depth(best)) best = x;
  return best;
}

}  // namespace taxonomy
}  // namespace orbis
