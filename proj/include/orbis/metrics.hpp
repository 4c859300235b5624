#pragma once

// Ranking metrics for parent prediction: Hit@k, Recall@k, mean rank, MRR and
// Wu & Palmer similarity.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "orbis/inference.hpp"
#include "orbis/taxonomy.hpp"

namespace orbis {

struct EvalReport {
  std::vector<int> k_values;
  std::map<int, double> hit;     // fraction in [0, 1]
  std::map<int, double> recall;  // fraction in [0, 1]
  double mean_rank = 0.0;
  double mrr = 0.0;  // scaled to [0, 100]
  double mrr_raw = 0.0;
  std::optional<double> wu_palmer;  // single-gold queries only; absent without a taxonomy
  std::size_t wu_palmer_queries = 0;
  std::size_t queries = 0;
};

namespace metrics {

/// 2 depth(lca) / (depth(a) + depth(b)), with depth(root) = 0.
inline double wu_palmer(const Taxonomy& t, NodeId predicted, NodeId gold) {
  const int sum = t.depth(predicted) + t.depth(gold);
  if (sum == 0) {
    if (predicted == gold) return 1.0;
    fail(ErrorKind::data, "undefined at root");
  }
  const NodeId l = taxonomy::lca(t, predicted, gold);
  return 2.0 * t.depth(l) / static_cast<double>(sum);
}

/// 1-based rank of each gold id in `list`. Gold ids missing from a truncated
/// list are ranked just past its end.
inline std::vector<std::size_t> gold_ranks(const RankedList& list, const std::vector<std::string>& gold) {
  std::vector<std::size_t> out;
  out.reserve(gold.size());
  for (const auto& g : gold) {
    std::size_t r = list.entries.size() + 1;
    for (std::size_t i = 0; i < list.entries.size(); ++i)
      if (list.entries[i].candidate == g) {
        r = i + 1;
        break;
      }
    out.push_back(r);
  }
  return out;
}

/// Aggregates over every query in `gold`. When `t` is given, Wu&P is averaged
/// over single-gold queries using the top-1 prediction; a pair with no common
/// ancestor scores 0.
inline EvalReport evaluate(std::span<const RankedList> predictions,
                           const std::map<std::string, std::vector<std::string>>& gold,
                           std::vector<int> k_values = {1, 5, 10}, const Taxonomy* t = nullptr) {
  std::sort(k_values.begin(), k_values.end());
  k_values.erase(std::unique(k_values.begin(), k_values.end()), k_values.end());
  if (k_values.empty() || k_values.front() < 1) fail(ErrorKind::usage, "k values must be >= 1");
  if (gold.empty()) fail(ErrorKind::data, "no queries to evaluate");

  std::map<std::string, const RankedList*> by_query;
  for (const auto& p : predictions) by_query[p.query] = &p;

  EvalReport rep;
  rep.k_values = k_values;
  for (int k : k_values) rep.hit[k] = rep.recall[k] = 0.0;
  double wup_sum = 0.0;
  for (const auto& [query, parents] : gold) {
    if (parents.empty()) fail(ErrorKind::data, "query has no gold parent: " + query);
    const auto it = by_query.find(query);
    if (it == by_query.end()) fail(ErrorKind::data, "query missing from predictions: " + query);
    const RankedList& list = *it->second;
    const auto ranks = gold_ranks(list, parents);
    const std::size_t best = *std::min_element(ranks.begin(), ranks.end());
    for (int k : k_values) {
      const auto found = static_cast<double>(
          std::count_if(ranks.begin(), ranks.end(), [&](std::size_t r) {
            return r <= static_cast<std::size_t>(k) && r <= list.entries.size();
          }));
      if (found > 0) rep.hit[k] += 1.0;
      rep.recall[k] += found / static_cast<double>(parents.size());
    }
    rep.mean_rank += static_cast<double>(best);
    rep.mrr_raw += 1.0 / static_cast<double>(best);

    if (t && parents.size() == 1 && !list.entries.empty()) {
      const auto pred = t->find(list.entries.front().candidate);
      const auto g = t->find(parents.front());
      if (pred && g) {
        try {
          wup_sum += wu_palmer(*t, *pred, *g);
        } catch (const Error&) {
          // Different components or distinct roots: no shared ancestry.
        }
        ++rep.wu_palmer_queries;
      }
    }
  }
  const auto n = static_cast<double>(gold.size());
  rep.queries = gold.size();
  for (int k : k_values) {
    rep.hit[k] /= n;
    rep.recall[k] /= n;
  }
  rep.mean_rank /= n;
  rep.mrr_raw /= n;
  rep.mrr = 100.0 * rep.mrr_raw;
  if (t && rep.wu_palmer_queries > 0) rep.wu_palmer = wup_sum / static_cast<double>(rep.wu_palmer_queries);
  return rep;
}

}  // namespace metrics
}  // namespace orbis
