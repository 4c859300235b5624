// Command-line front end: split, train, rank, evaluate, diagnose, synth.
//
// Settings resolve in this order, later winning: built-in defaults, the
// checkpoint's recorded config (commands that read one), --config file,
// --set key=value, then the dedicated flags.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "orbis/orbis.hpp"

namespace {

using namespace orbis;
namespace fs = std::filesystem;

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::vector<std::pair<std::string, std::string>> flags;  // filled by option callbacks
};

// Registers a flag that writes one config key.
void key_option(CLI::App* cmd, Common& c, const std::string& name, const std::string& key, const std::string& help) {
  cmd->add_option_function<std::string>(name, [&c, key](const std::string& v) { c.flags.emplace_back(key, v); },
                                        help);
}

void key_flag(CLI::App* cmd, Common& c, const std::string& name, const std::string& key, const std::string& value,
              const std::string& help) {
  cmd->add_flag_callback(name, [&c, key, value] { c.flags.emplace_back(key, value); }, help);
}

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "config file (key = value lines)");
  cmd->add_option("--set", c.sets, "override one config key, as key=value (repeatable)");
  key_option(cmd, c, "--seed", "run.seed", "RNG seed");
  key_flag(cmd, c, "--deterministic", "run.deterministic", "true", "single-threaded, fixed reduction order");
}

void add_model_flags(CLI::App* cmd, Common& c) {
  key_flag(cmd, c, "--no-svgd", "loss.svgd_enabled", "false", "drop the SVGD term");
  key_flag(cmd, c, "--no-vmf", "loss.prob_enabled", "false", "drop the vMF containment term");
  key_flag(cmd, c, "--no-geom", "loss.geom_enabled", "false", "drop the geodesic triplet term");
  key_option(cmd, c, "--kernel", "loss.kernel", "SVGD kernel: vmf, rbf or imq");
  key_option(cmd, c, "--constant-kappa", "model.constant_kappa", "fix every concentration to this value");
  key_flag(cmd, c, "--identity-mu", "model.identity_mu", "true", "use the embedding itself as the vMF mean");
}

void add_gate_flags(CLI::App* cmd, Common& c) {
  key_option(cmd, c, "--gate", "gate.enabled", "radius gate: on or off");
  key_option(cmd, c, "--gamma", "gate.gamma", "radial coupling strength");
  key_option(cmd, c, "--top-k", "rank.top_k", "keep the top K candidates per query (0 keeps all)");
}

RunConfig resolve(const Common& c, RunConfig base = {}) {
  if (!c.config_path.empty()) {
    std::ifstream in(c.config_path);
    if (!in) fail(ErrorKind::usage, "cannot read config " + c.config_path);
    std::stringstream ss;
    ss << in.rdbuf();
    config::apply_text(base, ss.str(), c.config_path);
  }
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) fail(ErrorKind::usage, "--set expects key=value, got '" + s + "'");
    base.set(config::trim(s.substr(0, eq)), config::trim(s.substr(eq + 1)));
  }
  for (const auto& [k, v] : c.flags) base.set(k, v);
  base.validate();
  return base;
}

// The model shape always comes from the checkpoint.
RunConfig resolve_with(const Common& c, const Checkpoint& ck) {
  RunConfig cfg = resolve(c, ck.config);
  cfg.model = ck.config.model;
  return cfg;
}

std::string in_dir(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchy-aware hyperspherical embeddings for taxonomy expansion"};
  app.require_subcommand(1);
  Common common;

  // split
  auto* split = app.add_subcommand("split", "withhold leaves as queries and write the seed taxonomy");
  app::SplitPaths split_paths;
  std::string split_out;
  add_common(split, common);
  split->add_option("--edges", split_paths.edges, "child<TAB>parent edge file")->required();
  split->add_option("--vocab", split_paths.vocab, "node list (optional)");
  split->add_option("--out-dir", split_out, "directory for seed_edges.tsv, seed_vocab.tsv, queries.tsv")->required();
  key_option(split, common, "--test-frac", "split.test_frac", "fraction of leaves withheld");
  key_option(split, common, "--drop-edges", "split.drop_edges", "fraction of seed edges removed");

  // train
  auto* train = app.add_subcommand("train", "train the encoder on a seed taxonomy");
  app::TrainPaths train_paths;
  add_common(train, common);
  add_model_flags(train, common);
  train->add_option("--edges", train_paths.edges, "seed edge file")->required();
  train->add_option("--vocab", train_paths.vocab, "seed node list (optional)");
  train->add_option("--features", train_paths.features, "id<TAB>f1<TAB>... feature file")->required();
  train->add_option("--checkpoint", train_paths.checkpoint, "checkpoint to write")->required();
  train->add_option("--log", train_paths.log, "per-epoch loss log to write");

  // rank
  auto* rank = app.add_subcommand("rank", "rank seed nodes as parents of each query");
  app::RankPaths rank_paths;
  add_common(rank, common);
  add_gate_flags(rank, common);
  rank->add_option("--checkpoint", rank_paths.checkpoint, "trained checkpoint")->required();
  rank->add_option("--edges", rank_paths.seed_edges, "seed edge file")->required();
  rank->add_option("--vocab", rank_paths.seed_vocab, "seed node list (optional)");
  rank->add_option("--features", rank_paths.features, "feature file covering seed nodes and queries")->required();
  rank->add_option("--queries", rank_paths.queries, "query file (gold column ignored)")->required();
  rank->add_option("--out", rank_paths.predictions, "predictions file to write")->required();

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "score predictions against gold parents");
  app::EvalPaths eval_paths;
  std::string eval_checkpoint;
  add_common(evaluate, common);
  key_option(evaluate, common, "--k", "eval.k", "comma-separated cutoffs for hit@k and recall@k");
  evaluate->add_option("--predictions", eval_paths.predictions, "predictions file")->required();
  evaluate->add_option("--queries", eval_paths.queries, "query<TAB>gold,... file")->required();
  evaluate->add_option("--edges", eval_paths.edges, "seed edge file, enables Wu&P");
  evaluate->add_option("--vocab", eval_paths.vocab, "seed node list (optional)");
  evaluate->add_option("--checkpoint", eval_checkpoint, "checkpoint whose config the report echoes");
  evaluate->add_option("--out", eval_paths.report, "text report (default: stdout)");
  evaluate->add_option("--json", eval_paths.json, "JSON report");

  // diagnose
  auto* diagnose = app.add_subcommand("diagnose", "angular histograms of trained or uniform embeddings");
  std::string diag_checkpoint, diag_features, diag_csv, diag_summary;
  long diag_uniform = 0;
  std::size_t diag_samples = 10000;
  std::optional<double> diag_epsilon;
  add_common(diagnose, common);
  diagnose->add_option("--checkpoint", diag_checkpoint, "trained checkpoint");
  diagnose->add_option("--features", diag_features, "features to encode with the checkpoint");
  diagnose->add_option("--uniform", diag_uniform, "sample uniformly on the sphere in this dimension instead");
  diagnose->add_option("--samples", diag_samples, "number of uniform samples");
  diagnose->add_option("--epsilon", diag_epsilon, "also check polar cap mass |z_d| >= epsilon (uniform only)");
  key_option(diagnose, common, "--bins", "diagnose.bins", "histogram bins per coordinate");
  diagnose->add_option("--csv", diag_csv, "histogram CSV to write")->required();
  diagnose->add_option("--summary", diag_summary, "summary file (default: stdout)");

  // synth
  auto* synth = app.add_subcommand("synth", "write a planted tree with features that follow it");
  PlantedSpec spec;
  std::string synth_out;
  synth->add_option("--out-dir", synth_out, "directory for edges.tsv, vocab.tsv, features.tsv")->required();
  synth->add_option("--branching", spec.branching, "children per internal node");
  synth->add_option("--levels", spec.levels, "levels below the root");
  synth->add_option("--dim", spec.dim, "feature width");
  synth->add_option("--noise", spec.noise, "per-coordinate noise before normalization");
  synth->add_option("--seed", spec.seed, "RNG seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exit_code(ErrorKind::usage);
  }

  try {
    if (split->parsed()) {
      const auto cfg = resolve(common);
      fs::create_directories(split_out);
      split_paths.seed_edges = in_dir(split_out, "seed_edges.tsv");
      split_paths.seed_vocab = in_dir(split_out, "seed_vocab.tsv");
      split_paths.queries = in_dir(split_out, "queries.tsv");
      const auto s = app::run_split(cfg, split_paths);
      std::cerr << "seed nodes: " << s.seed.size() << ", seed edges: " << s.seed.edge_count()
                << ", queries: " << s.queries.size() << '\n';
    } else if (train->parsed()) {
      const auto cfg = resolve(common);
      const auto r = app::run_training(cfg, train_paths);
      const auto& last = r.log.back();
      std::cerr << "epochs: " << r.checkpoint.epochs_completed << ", loss " << io::format_double(r.log.front().eval.total)
                << " -> " << io::format_double(last.eval.total) << '\n';
    } else if (rank->parsed()) {
      const auto ck = checkpoint::load(rank_paths.checkpoint);
      app::run_rank(resolve_with(common, ck), ck, rank_paths);
    } else if (evaluate->parsed()) {
      RunConfig cfg;
      if (!eval_checkpoint.empty()) cfg = resolve_with(common, checkpoint::load(eval_checkpoint));
      else cfg = resolve(common);
      const auto r = app::run_evaluate(cfg, eval_paths);
      if (eval_paths.report.empty()) app::write_report_text(std::cout, r, cfg);
    } else if (diagnose->parsed()) {
      AngleHistogram h;
      std::optional<ConcentrationResult> cap;
      RunConfig cfg;
      if (diag_uniform > 0) {
        if (!diag_checkpoint.empty() || !diag_features.empty())
          fail(ErrorKind::usage, "--uniform cannot be combined with --checkpoint or --features");
        cfg = resolve(common);
        const auto zs = diagnostics::uniform_sphere_sample(diag_uniform, diag_samples, cfg.seed);
        h = diagnostics::angle_histograms(zs, cfg.diagnose_bins);
        if (diag_epsilon) cap = diagnostics::concentration_check(diag_uniform, *diag_epsilon, diag_samples, cfg.seed);
      } else {
        if (diag_checkpoint.empty() || diag_features.empty())
          fail(ErrorKind::usage, "diagnose needs --checkpoint and --features, or --uniform D");
        if (diag_epsilon) fail(ErrorKind::usage, "--epsilon applies to uniform samples only");
        const auto ck = checkpoint::load(diag_checkpoint);
        cfg = resolve_with(common, ck);
        h = app::diagnose_embeddings(ck, io::read_features(diag_features), cfg.diagnose_bins);
      }
      {
        auto csv = io::open_out(diag_csv);
        diagnostics::write_histogram_csv(csv, h);
      }
      const auto summary = [&](std::ostream& os) {
        diagnostics::write_histogram_summary(os, h);
        if (cap) {
          os << "cap_epsilon: " << io::format_double(*diag_epsilon) << '\n';
          os << "cap_mass: " << io::format_double(cap->empirical) << '\n';
          os << "cap_bound: " << io::format_double(cap->bound) << '\n';
          os << "cap_within_bound: " << (cap->pass ? "yes" : "no") << '\n';
        }
      };
      if (diag_summary.empty()) {
        summary(std::cout);
      } else {
        auto out = io::open_out(diag_summary);
        summary(out);
      }
    } else if (synth->parsed()) {
      const auto tree = synthetic::planted_tree(spec);
      fs::create_directories(synth_out);
      io::write_edges(in_dir(synth_out, "edges.tsv"), tree.edges);
      io::write_vocab(in_dir(synth_out, "vocab.tsv"), tree.ids);
      io::write_features(in_dir(synth_out, "features.tsv"), tree.features);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(ErrorKind::data);
  }
  return 0;
}
