#pragma once

// End-to-end commands: split, train, rank, evaluate, diagnose. Each command
// has an in-memory form used by tests and a file-level form used by the CLI.
// Everything runs on one thread in a fixed order, so a config and its input
// files determine every output byte.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "orbis/checkpoint.hpp"
#include "orbis/config.hpp"
#include "orbis/diagnostics.hpp"
#include "orbis/encoder.hpp"
#include "orbis/inference.hpp"
#include "orbis/io.hpp"
#include "orbis/losses.hpp"
#include "orbis/metrics.hpp"
#include "orbis/optimizer.hpp"
#include "orbis/taxonomy.hpp"

namespace orbis::app {

// ---------------------------------------------------------------------------
// split

struct SplitPaths {
  std::string edges, vocab;                          // inputs; vocab optional
  std::string seed_edges, seed_vocab, queries;       // outputs
};

inline taxonomy::Split run_split(const RunConfig& cfg, const SplitPaths& p) {
  cfg.validate();
  const Taxonomy full = io::read_taxonomy(p.edges, p.vocab);
  auto s = taxonomy::split_leaves(full, cfg.split.test_frac, cfg.seed, cfg.split.drop_edges);
  io::write_edges(p.seed_edges, s.seed.edges());
  io::write_vocab(p.seed_vocab, s.seed.ids());
  io::write_queries(p.queries, s.queries);
  return s;
}

// ---------------------------------------------------------------------------
// train

struct EpochRecord {
  int epoch = 0;
  double train_total = 0.0;  // mean minibatch objective during the epoch; unused for epoch 0
  ObjectiveTerms eval;       // objective on the fixed monitoring triplets after the epoch
};

struct TrainResult {
  Checkpoint checkpoint;  // the last state with finite losses and parameters
  std::vector<EpochRecord> log;
  bool diverged = false;
  std::string message;
};

/// Seeds for the two random streams of a run: parameters + training
/// triplets, and the fixed monitoring triplets.
inline std::mt19937_64 stream(std::uint64_t seed, std::uint64_t which) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(which)};
  return std::mt19937_64(seq);
}

/// Batch means of the objective over `triplets`, split into `batch_size` chunks.
inline ObjectiveTerms mean_objective(const ModelParams& params, const RunConfig& cfg,
                                     std::span<const Vector> features, std::span<const Triplet> triplets) {
  ObjectiveTerms sum;
  std::size_t n = 0;
  const auto b = static_cast<std::size_t>(cfg.train.batch_size);
  for (std::size_t start = 0; start < triplets.size(); start += b) {
    const auto batch = triplets.subspan(start, std::min(b, triplets.size() - start));
    const auto t = total_objective(params, cfg.model, cfg.loss, features, batch);
    sum.geom += t.geom;
    sum.prob += t.prob;
    sum.svgd += t.svgd;
    sum.total += t.total;
    ++n;
  }
  if (n > 0) {
    const double s = 1.0 / static_cast<double>(n);
    sum.geom *= s;
    sum.prob *= s;
    sum.svgd *= s;
    sum.total *= s;
  }
  return sum;
}

inline bool finite(const ObjectiveTerms& t) {
  return std::isfinite(t.geom) && std::isfinite(t.prob) && std::isfinite(t.svgd) && std::isfinite(t.total);
}

/// Trains on `t` with `features[i]` the input vector of node i. A zero
/// model.input_dim is taken from the features. `on_epoch` sees each log row
/// as soon as it exists.
inline TrainResult train(RunConfig cfg, const Taxonomy& t, std::span<const Vector> features,
                         const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  if (features.size() != t.size()) fail(ErrorKind::data, "need one feature row per taxonomy node");
  if (features.empty()) fail(ErrorKind::data, "empty taxonomy");
  const Eigen::Index width = features.front().size();
  for (const auto& f : features)
    if (f.size() != width) fail(ErrorKind::data, "feature rows differ in width");
  if (cfg.model.input_dim == 0) cfg.model.input_dim = width;
  if (cfg.model.input_dim != width)
    fail(ErrorKind::data, "features have width " + std::to_string(width) + " but model.input_dim is " +
                              std::to_string(cfg.model.input_dim));
  cfg.validate();

  auto rng = stream(cfg.seed, 0);
  auto monitor_rng = stream(cfg.seed, 1);

  TrainResult out;
  Checkpoint& ck = out.checkpoint;
  ck.config = cfg;
  ck.params = encoder::init_params(cfg.model, rng);
  ck.optimizer = ModelOptimizer(ck.params, cfg.train.sphere_hyper(), cfg.train.euclid_hyper());

  const auto monitor = taxonomy::sample_triplets(t, 1, monitor_rng);
  const auto record = [&](EpochRecord r) {
    out.log.push_back(r);
    if (on_epoch) on_epoch(r);
  };

  EpochRecord initial;
  initial.eval = mean_objective(ck.params, cfg, features, monitor);
  if (!finite(initial.eval)) {
    out.diverged = true;
    out.message = "diverged: non-finite loss at initialization";
    return out;
  }
  record(initial);

  const auto b = static_cast<std::size_t>(cfg.train.batch_size);
  for (int epoch = 1; epoch <= cfg.train.epochs; ++epoch) {
    ModelParams params = ck.params;
    ModelOptimizer opt = ck.optimizer;
    auto triplets = taxonomy::sample_triplets(t, cfg.train.n_neg, rng);
    std::shuffle(triplets.begin(), triplets.end(), rng);

    ModelParams acc = params.zeros_like();
    int pending = 0;
    double train_sum = 0.0;
    std::size_t batches = 0;
    EpochRecord r;
    try {
      for (std::size_t start = 0; start < triplets.size(); start += b) {
        const std::span<const Triplet> batch(triplets.data() + start, std::min(b, triplets.size() - start));
        auto g = gradients(params, cfg.model, cfg.loss, features, batch);
        if (!finite(g.terms)) fail(ErrorKind::divergence, "diverged: non-finite loss");
        train_sum += g.terms.total;
        ++batches;
        acc += g.grad;
        ++pending;
        const bool last = start + b >= triplets.size();
        if (pending == cfg.train.grad_accum || last) {
          acc *= 1.0 / pending;
          opt.step(params, acc);
          acc = params.zeros_like();
          pending = 0;
        }
      }
      if (!params.all_finite()) fail(ErrorKind::divergence, "diverged: non-finite parameters");
      r.eval = mean_objective(params, cfg, features, monitor);
      if (!finite(r.eval)) fail(ErrorKind::divergence, "diverged: non-finite loss");
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::divergence && e.kind() != ErrorKind::numeric) throw;
      out.diverged = true;
      out.message = std::string(e.what()) + " (epoch " + std::to_string(epoch) + ")";
      return out;
    }

    r.epoch = epoch;
    r.train_total = batches ? train_sum / static_cast<double>(batches) : 0.0;
    ck.params = std::move(params);
    ck.optimizer = std::move(opt);
    ck.epochs_completed = epoch;
    record(r);
  }
  return out;
}

inline void write_log_header(std::ostream& os) { os << "epoch\ttrain_total\ttotal\tgeom\tprob\tsvgd\n"; }

inline void write_log_row(std::ostream& os, const EpochRecord& r) {
  os << r.epoch << '\t' << (r.epoch == 0 ? std::string("-") : io::format_double(r.train_total)) << '\t'
     << io::format_double(r.eval.total) << '\t'
     << io::format_double(r.eval.geom) << '\t' << io::format_double(r.eval.prob) << '\t'
     << io::format_double(r.eval.svgd) << '\n';
}

struct TrainPaths {
  std::string edges, vocab, features;  // inputs; vocab optional
  std::string checkpoint, log;         // outputs; log optional
};

/// Trains and writes the checkpoint and log. On divergence the last good
/// checkpoint is still written before the divergence error is raised.
inline TrainResult run_training(const RunConfig& cfg, const TrainPaths& p) {
  cfg.validate();
  const Taxonomy t = io::read_taxonomy(p.edges, p.vocab);
  const auto features = io::features_for(t, io::read_features(p.features));
  std::ofstream log;
  if (!p.log.empty()) {
    log = io::open_out(p.log);
    write_log_header(log);
  }
  auto result = train(cfg, t, features, [&](const EpochRecord& r) {
    if (log.is_open()) {
      write_log_row(log, r);
      log.flush();
    }
  });
  checkpoint::save(p.checkpoint, result.checkpoint);
  if (result.diverged) fail(ErrorKind::divergence, result.message);
  return result;
}

// ---------------------------------------------------------------------------
// rank

inline std::vector<UnitVector> encode_all(const ModelParams& params, std::span<const Vector> features) {
  std::vector<UnitVector> out;
  out.reserve(features.size());
  for (const auto& f : features) {
    if (f.size() != params.input_dim())
      fail(ErrorKind::data, "feature width " + std::to_string(f.size()) + " does not match the checkpoint (" +
                                std::to_string(params.input_dim()) + ")");
    out.push_back(encoder::encode(params, f));
  }
  return out;
}

/// Ranks every seed node as a parent candidate for each query.
inline std::vector<RankedList> rank(const ModelParams& params, const RunConfig& cfg, const Taxonomy& seed,
                                    std::span<const Vector> seed_features,
                                    const std::vector<std::pair<std::string, Vector>>& queries,
                                    const RadiusMap* radii_override = nullptr) {
  const auto candidates = encode_all(params, seed_features);
  const RadiusMap radii = radii_override ? *radii_override : taxonomy::compute_radii(seed);
  std::vector<RankedList> out;
  out.reserve(queries.size());
  for (const auto& [id, f] : queries) {
    const Vector one[] = {f};
    const auto zq = encode_all(params, one).front();
    out.push_back(inference::rank_candidates(id, zq, candidates, seed, radii, cfg.gate, cfg.top_k));
  }
  return out;
}

struct RankPaths {
  std::string checkpoint, seed_edges, seed_vocab, features, queries;  // inputs; seed_vocab optional
  std::string predictions;                                            // output
};

/// `cfg` supplies gate and rank settings; the model comes from the checkpoint.
inline std::vector<RankedList> run_rank(const RunConfig& cfg, const Checkpoint& ck, const RankPaths& p) {
  cfg.validate();
  const Taxonomy seed = io::read_taxonomy(p.seed_edges, p.seed_vocab);
  const auto table = io::read_features(p.features);
  const auto seed_features = io::features_for(seed, table);
  std::vector<std::pair<std::string, Vector>> queries;
  std::vector<std::string> missing;
  for (const auto& q : io::read_queries(p.queries)) {
    if (seed.find(q.id)) fail(ErrorKind::data, "query is already a seed node: " + q.id);
    const auto it = table.find(q.id);
    if (it == table.end()) missing.push_back(q.id);
    else queries.emplace_back(q.id, it->second);
  }
  if (!missing.empty()) {
    std::string msg = "missing feature rows for queries:";
    for (const auto& m : missing) msg += " " + m;
    fail(ErrorKind::data, msg);
  }
  auto lists = rank(ck.params, cfg, seed, seed_features, queries);
  io::write_predictions(p.predictions, lists);
  return lists;
}

// ---------------------------------------------------------------------------
// evaluate

inline std::map<std::string, std::vector<std::string>> gold_map(const std::vector<taxonomy::Query>& queries) {
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& q : queries)
    if (!out.emplace(q.id, q.gold).second) fail(ErrorKind::data, "duplicate query: " + q.id);
  return out;
}

/// Flat "key: value" report. Hit and recall are percentages, as is mrr;
/// mrr_raw is the plain mean reciprocal rank.
inline void write_report_text(std::ostream& os, const EvalReport& r, const RunConfig& cfg) {
  const auto pct = [](double x) { return io::format_double(100.0 * x); };
  os << "queries: " << r.queries << '\n';
  for (int k : r.k_values) os << "hit@" << k << ": " << pct(r.hit.at(k)) << '\n';
  for (int k : r.k_values) os << "recall@" << k << ": " << pct(r.recall.at(k)) << '\n';
  os << "mean_rank: " << io::format_double(r.mean_rank) << '\n';
  os << "mrr: " << io::format_double(r.mrr) << '\n';
  os << "mrr_raw: " << io::format_double(r.mrr_raw) << '\n';
  os << "wu_palmer: " << (r.wu_palmer ? io::format_double(*r.wu_palmer) : std::string("n/a")) << '\n';
  os << "wu_palmer_queries: " << r.wu_palmer_queries << '\n';
  std::istringstream echo(cfg.echo());
  std::string line;
  while (std::getline(echo, line)) {
    const auto eq = line.find(" = ");
    os << "config." << line.substr(0, eq) << ": " << line.substr(eq + 3) << '\n';
  }
}

inline nlohmann::json report_json(const EvalReport& r, const RunConfig& cfg) {
  nlohmann::json j;
  j["queries"] = r.queries;
  for (int k : r.k_values) {
    j["hit@" + std::to_string(k)] = 100.0 * r.hit.at(k);
    j["recall@" + std::to_string(k)] = 100.0 * r.recall.at(k);
  }
  j["mean_rank"] = r.mean_rank;
  j["mrr"] = r.mrr;
  j["mrr_raw"] = r.mrr_raw;
  j["wu_palmer"] = r.wu_palmer ? nlohmann::json(*r.wu_palmer) : nlohmann::json(nullptr);
  j["wu_palmer_queries"] = r.wu_palmer_queries;
  nlohmann::json c = nlohmann::json::object();
  std::istringstream echo(cfg.echo());
  std::string line;
  while (std::getline(echo, line)) {
    const auto eq = line.find(" = ");
    c[line.substr(0, eq)] = line.substr(eq + 3);
  }
  j["config"] = c;
  return j;
}

struct EvalPaths {
  std::string predictions, queries;  // inputs
  std::string edges, vocab;          // optional taxonomy for Wu&P
  std::string report, json;          // outputs; empty report means the caller prints it
};

inline EvalReport run_evaluate(const RunConfig& cfg, const EvalPaths& p) {
  cfg.validate();
  const auto lists = io::read_predictions(p.predictions);
  const auto gold = gold_map(io::read_queries(p.queries));
  std::optional<Taxonomy> t;
  if (!p.edges.empty()) t = io::read_taxonomy(p.edges, p.vocab);
  auto r = metrics::evaluate(lists, gold, cfg.eval_k, t ? &*t : nullptr);
  if (!p.report.empty()) {
    auto out = io::open_out(p.report);
    write_report_text(out, r, cfg);
  }
  if (!p.json.empty()) {
    auto out = io::open_out(p.json);
    out << report_json(r, cfg).dump(1) << '\n';
  }
  return r;
}

// ---------------------------------------------------------------------------
// diagnose

/// Encodes every feature row (in id order) and histograms the embeddings.
inline AngleHistogram diagnose_embeddings(const Checkpoint& ck, const std::map<std::string, Vector>& table,
                                          int bins) {
  std::vector<Vector> rows;
  rows.reserve(table.size());
  for (const auto& [id, v] : table) rows.push_back(v);
  const auto zs = encode_all(ck.params, rows);
  return diagnostics::angle_histograms(zs, bins);
}

inline double mean_abs_last(std::span<const UnitVector> zs) {
  if (zs.empty()) return 0.0;
  double s = 0.0;
  for (const auto& z : zs) s += std::abs(z(z.dim() - 1));
  return s / static_cast<double>(zs.size());
}

}  // namespace orbis::app
