#pragma once

// Radius-gated cosine ranking of candidate parents.
//
// A candidate c passes for query q when cos(z_q, z_c) >= 1 - gamma * (r_q - r_c)^2.
// Passing candidates keep their cosine as score; the rest score 0 and are
// listed after every passing candidate.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "orbis/manifold.hpp"
#include "orbis/taxonomy.hpp"

namespace orbis {

enum class QueryRadiusMode {
  /// Treat the query as a new leaf under each candidate: D = D(c) + 1, N_desc = 0.
  per_candidate_leaf,
  /// Mean r over the seed's leaves, shared by every candidate.
  global_leaf_mean,
};

enum class GatedOrder {
  by_cosine,  // gated-out candidates ordered by raw cosine, then id
  by_id,      // gated-out candidates ordered by id only
};

struct GateConfig {
  double gamma = 1.0;
  bool gate_enabled = true;
  QueryRadiusMode query_radius_mode = QueryRadiusMode::per_candidate_leaf;
  GatedOrder gated_order = GatedOrder::by_cosine;

  void validate() const {
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) fail(ErrorKind::usage, "gamma must be >= 0");
  }
};

struct RankedEntry {
  std::string candidate;
  double score = 0.0;
};

struct RankedList {
  std::string query;
  std::vector<RankedEntry> entries;
};

namespace inference {

/// Slack on the gate comparison so an exact boundary hit is not lost to rounding.
inline constexpr double kGateSlack = 1e-9;

inline double global_leaf_mean(const Taxonomy& seed, const RadiusMap& radii) {
  double sum = 0.0;
  std::size_t n = 0;
  for (NodeId i = 0; i < seed.size(); ++i)
    if (seed.is_leaf(i)) {
      sum += radii.r[i];
      ++n;
    }
  return n == 0 ? radii.normalize(radii.r_max) : sum / static_cast<double>(n);
}

/// The query's normalized radius when scored against `candidate`.
inline double query_radius(const Taxonomy& seed, const RadiusMap& radii, NodeId candidate,
                           QueryRadiusMode mode) {
  if (mode == QueryRadiusMode::global_leaf_mean) return global_leaf_mean(seed, radii);
  return radii.normalize(taxonomy::raw_radius(seed.depth(candidate) + 1, 0));
}

/// 1 - gamma * dr^2.
inline double gate_threshold(double delta_r, double gamma) { return 1.0 - gamma * delta_r * delta_r; }

inline bool passes(double cosine, double rq, double rc, const GateConfig& cfg) {
  if (!cfg.gate_enabled) return true;
  return cosine >= gate_threshold(std::abs(rq - rc), cfg.gamma) - kGateSlack;
}

inline double cosine(const UnitVector& a, const UnitVector& b) {
  manifold::require_same_dim(a.dim(), b.dim(), "score");
  return std::clamp(a.dot(b), -1.0, 1.0);
}

/// Gated score: the cosine if the candidate passes, else 0.
inline double score(const UnitVector& zq, const UnitVector& zc, double rq, double rc, const GateConfig& cfg) {
  const double s = cosine(zq, zc);
  return passes(s, rq, rc, cfg) ? s : 0.0;
}

/// Scores every seed node for one query and returns the top k (k = 0 keeps
/// the full list). `candidates[i]` is the embedding of seed node i.
inline RankedList rank_candidates(const std::string& query_id, const UnitVector& zq,
                                  std::span<const UnitVector> candidates, const Taxonomy& seed,
                                  const RadiusMap& radii, const GateConfig& cfg, std::size_t k = 0) {
  cfg.validate();
  if (seed.size() == 0) fail(ErrorKind::data, "empty seed taxonomy");
  if (candidates.size() != seed.size() || radii.r.size() != seed.size())
    fail(ErrorKind::data, "candidate embeddings do not match the seed taxonomy");

  struct Scored {
    NodeId node;
    double cosine;
    bool pass;
  };
  std::vector<Scored> scored;
  scored.reserve(seed.size());
  const double shared_rq = cfg.query_radius_mode == QueryRadiusMode::global_leaf_mean
                               ? global_leaf_mean(seed, radii)
                               : 0.0;
  for (NodeId c = 0; c < seed.size(); ++c) {
    const double rq = cfg.query_radius_mode == QueryRadiusMode::global_leaf_mean
                          ? shared_rq
                          : query_radius(seed, radii, c, cfg.query_radius_mode);
    const double s = cosine(zq, candidates[c]);
    scored.push_back({c, s, passes(s, rq, radii.r[c], cfg)});
  }

  // Node indices follow id order, so the final comparison is the id tie-break.
  std::sort(scored.begin(), scored.end(), [&](const Scored& a, const Scored& b) {
    if (a.pass != b.pass) return a.pass;
    if (a.pass || cfg.gated_order == GatedOrder::by_cosine)
      if (a.cosine != b.cosine) return a.cosine > b.cosine;
    return a.node < b.node;
  });

  RankedList out{query_id, {}};
  const std::size_t n = k == 0 ? scored.size() : std::min(k, scored.size());
  out.entries.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    out.entries.push_back({seed.id(scored[i].node), scored[i].pass ? scored[i].cosine : 0.0});
  return out;
}

}  // namespace inference
}  // namespace orbis
