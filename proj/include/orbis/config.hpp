#pragma once

// Run configuration: every tunable of the pipeline under a dotted key.
//
// File format, one setting per line:
//   # comment
//   train.epochs = 30
//   loss.kernel = rbf
// Unknown keys and malformed values are usage errors. `echo()` lists every
// key with its resolved value in a fixed order, so two equal configs produce
// identical text.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "orbis/encoder.hpp"
#include "orbis/inference.hpp"
#include "orbis/io.hpp"
#include "orbis/losses.hpp"
#include "orbis/optimizer.hpp"

namespace orbis {

struct TrainConfig {
  int epochs = 50;
  int batch_size = 64;
  int grad_accum = 5;
  int n_neg = 20;
  double lr_sphere = 1e-3;
  double lr_euclid = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  AdamHyper sphere_hyper() const { return {lr_sphere, beta1, beta2, adam_eps}; }
  AdamHyper euclid_hyper() const { return {lr_euclid, beta1, beta2, adam_eps}; }
};

struct SplitConfig {
  double test_frac = 0.2;
  double drop_edges = 0.0;
};

// Feature width is read from the data unless the config pins it.
inline EncoderConfig inferred_input() {
  EncoderConfig m;
  m.input_dim = 0;
  return m;
}

struct RunConfig {
  EncoderConfig model = inferred_input();
  LossConfig loss;
  GateConfig gate;
  TrainConfig train;
  SplitConfig split;
  std::size_t top_k = 0;  // 0 keeps every candidate
  std::vector<int> eval_k{1, 5, 10};
  int diagnose_bins = 60;
  std::uint64_t seed = 0;
  bool deterministic = false;

  void validate() const;
  std::string echo() const;
  void set(const std::string& key, const std::string& value);
};

namespace config {

struct Field {
  std::string key;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

[[noreturn]] inline void bad_value(const std::string& key, const std::string& value) {
  fail(ErrorKind::usage, "config: bad value for " + key + ": '" + value + "'");
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "on" || v == "1") return true;
  if (v == "false" || v == "off" || v == "0") return false;
  bad_value(key, v);
}

template <class T = long long>
T parse_int(const std::string& key, const std::string& v) {
  T out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) bad_value(key, v);
  return out;
}

inline double parse_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) bad_value(key, v);
  return out;
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& v) {
  std::vector<T> out;
  if (v.empty() || v == "none") return out;
  for (const auto& part : io::split(v, ',')) out.push_back(parse_int<T>(key, part));
  return out;
}

template <class T>
std::string format_list(const std::vector<T>& xs) {
  if (xs.empty()) return "none";
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + std::to_string(xs[i]);
  return out;
}

template <class E>
struct EnumName {
  E value;
  const char* name;
};

template <class E, std::size_t N>
E parse_enum(const std::string& key, const std::string& v, const EnumName<E> (&names)[N]) {
  for (const auto& n : names)
    if (v == n.name) return n.value;
  bad_value(key, v);
}

template <class E, std::size_t N>
std::string format_enum(E e, const EnumName<E> (&names)[N]) {
  for (const auto& n : names)
    if (e == n.value) return n.name;
  return "?";
}

inline constexpr EnumName<KernelKind> kKernels[] = {
    {KernelKind::vmf, "vmf"}, {KernelKind::rbf, "rbf"}, {KernelKind::imq, "imq"}};
inline constexpr EnumName<AnchorMode> kAnchors[] = {{AnchorMode::learned, "learned"}, {AnchorMode::self, "self"}};
inline constexpr EnumName<vmf::AsymptoticOrder> kOrders[] = {
    {vmf::AsymptoticOrder::uniform, "uniform"}, {vmf::AsymptoticOrder::leading_order, "leading_order"}};
inline constexpr EnumName<QueryRadiusMode> kRadiusModes[] = {
    {QueryRadiusMode::per_candidate_leaf, "per_candidate_leaf"},
    {QueryRadiusMode::global_leaf_mean, "global_leaf_mean"}};
inline constexpr EnumName<GatedOrder> kGatedOrders[] = {{GatedOrder::by_cosine, "by_cosine"},
                                                         {GatedOrder::by_id, "by_id"}};

inline std::vector<Field> fields(RunConfig& c) {
  std::vector<Field> f;
  auto real = [&f](std::string key, double& x) {
    f.push_back({key, [&x, key](const std::string& v) { x = parse_real(key, v); },
                 [&x] { return io::format_double(x); }});
  };
  auto integer = [&f](std::string key, auto& x) {
    f.push_back({key,
                 [&x, key](const std::string& v) {
                   // Parsing straight into the field's type rejects negatives
                   // for unsigned fields and anything out of range.
                   x = parse_int<std::remove_reference_t<decltype(x)>>(key, v);
                 },
                 [&x] { return std::to_string(x); }});
  };
  auto boolean = [&f](std::string key, bool& x) {
    f.push_back({key, [&x, key](const std::string& v) { x = parse_bool(key, v); },
                 [&x] { return std::string(x ? "true" : "false"); }});
  };
  auto optional_real = [&f](std::string key, std::optional<double>& x) {
    f.push_back({key,
                 [&x, key](const std::string& v) {
                   if (v == "none") x.reset();
                   else x = parse_real(key, v);
                 },
                 [&x] { return x ? io::format_double(*x) : std::string("none"); }});
  };
  auto enumeration = [&f](std::string key, auto& x, const auto& names) {
    f.push_back({key, [&x, key, &names](const std::string& v) { x = parse_enum(key, v, names); },
                 [&x, &names] { return format_enum(x, names); }});
  };
  auto list = [&f](std::string key, auto& xs) {
    using T = typename std::remove_reference_t<decltype(xs)>::value_type;
    f.push_back({key, [&xs, key](const std::string& v) { xs = parse_list<T>(key, v); },
                 [&xs] { return format_list(xs); }});
  };

  integer("model.dim", c.model.dim);
  integer("model.input_dim", c.model.input_dim);
  list("model.hidden_sizes", c.model.hidden_sizes);
  list("model.mu_hidden_sizes", c.model.mu_hidden_sizes);
  real("model.kappa_max", c.model.kappa_max);
  boolean("model.identity_mu", c.model.identity_mu);
  optional_real("model.constant_kappa", c.model.constant_kappa);

  real("loss.welsch_scale", c.loss.welsch_scale);
  real("loss.geom_margin", c.loss.geom_margin);
  real("loss.prob_margin", c.loss.prob_margin);
  real("loss.geom_weight", c.loss.geom_weight);
  real("loss.prob_weight", c.loss.prob_weight);
  real("loss.svgd_weight", c.loss.svgd_weight);
  boolean("loss.geom_enabled", c.loss.geom_enabled);
  boolean("loss.prob_enabled", c.loss.prob_enabled);
  boolean("loss.svgd_enabled", c.loss.svgd_enabled);
  real("loss.kappa_align", c.loss.kappa_align);
  real("loss.kappa_repel", c.loss.kappa_repel);
  enumeration("loss.kernel", c.loss.kernel, kKernels);
  optional_real("loss.bandwidth2", c.loss.bandwidth2);
  enumeration("loss.anchor", c.loss.anchor, kAnchors);
  boolean("loss.detach_anchor", c.loss.detach_anchor);
  boolean("loss.structural_score", c.loss.structural_score_enabled);
  boolean("loss.alignment", c.loss.alignment_enabled);
  real("loss.structural_eps", c.loss.structural_eps);
  real("loss.bessel_threshold", c.loss.bessel.beta);
  enumeration("loss.bessel_order", c.loss.bessel.order, kOrders);

  boolean("gate.enabled", c.gate.gate_enabled);
  real("gate.gamma", c.gate.gamma);
  enumeration("gate.query_radius", c.gate.query_radius_mode, kRadiusModes);
  enumeration("gate.gated_order", c.gate.gated_order, kGatedOrders);

  integer("train.epochs", c.train.epochs);
  integer("train.batch_size", c.train.batch_size);
  integer("train.grad_accum", c.train.grad_accum);
  integer("train.n_neg", c.train.n_neg);
  real("train.lr_sphere", c.train.lr_sphere);
  real("train.lr_euclid", c.train.lr_euclid);
  real("train.beta1", c.train.beta1);
  real("train.beta2", c.train.beta2);
  real("train.adam_eps", c.train.adam_eps);

  real("split.test_frac", c.split.test_frac);
  real("split.drop_edges", c.split.drop_edges);
  integer("rank.top_k", c.top_k);
  list("eval.k", c.eval_k);
  integer("diagnose.bins", c.diagnose_bins);
  integer("run.seed", c.seed);
  boolean("run.deterministic", c.deterministic);
  return f;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// Applies `key = value` lines from text to `c`.
inline void apply_text(RunConfig& c, const std::string& text, const std::string& origin = "config") {
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const std::string t = trim(line.substr(0, line.find('#')));
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::usage, origin + ":" + std::to_string(n) + ": expected key = value");
    c.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
}

inline RunConfig load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::usage, "cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig c;
  apply_text(c, ss.str(), path);
  c.validate();
  return c;
}

}  // namespace config

inline void RunConfig::set(const std::string& key, const std::string& value) {
  for (auto& f : config::fields(*this))
    if (f.key == key) {
      f.set(value);
      return;
    }
  fail(ErrorKind::usage, "config: unknown key " + key);
}

inline std::string RunConfig::echo() const {
  RunConfig copy = *this;
  std::string out;
  for (const auto& f : config::fields(copy)) out += f.key + " = " + f.get() + "\n";
  return out;
}

inline void RunConfig::validate() const {
  loss.validate();
  gate.validate();
  if (model.dim < 2) fail(ErrorKind::usage, "model.dim must be >= 2");
  if (model.input_dim < 0) fail(ErrorKind::usage, "model.input_dim must be >= 0 (0 infers it)");
  for (auto h : model.hidden_sizes)
    if (h < 1) fail(ErrorKind::usage, "model.hidden_sizes entries must be >= 1");
  for (auto h : model.mu_hidden_sizes)
    if (h < 1) fail(ErrorKind::usage, "model.mu_hidden_sizes entries must be >= 1");
  if (!(model.kappa_max > 0.0)) fail(ErrorKind::usage, "model.kappa_max must be positive");
  if (model.constant_kappa && !(*model.constant_kappa > 0.0))
    fail(ErrorKind::usage, "model.constant_kappa must be positive");
  if (train.epochs < 0) fail(ErrorKind::usage, "train.epochs must be >= 0");
  if (train.batch_size < 1 || train.grad_accum < 1 || train.n_neg < 1)
    fail(ErrorKind::usage, "train.batch_size, train.grad_accum and train.n_neg must be >= 1");
  if (!(train.lr_sphere > 0.0) || !(train.lr_euclid > 0.0)) fail(ErrorKind::usage, "learning rates must be positive");
  if (!(train.beta1 >= 0.0 && train.beta1 < 1.0) || !(train.beta2 >= 0.0 && train.beta2 < 1.0))
    fail(ErrorKind::usage, "Adam betas must be in [0, 1)");
  if (!(train.adam_eps > 0.0)) fail(ErrorKind::usage, "train.adam_eps must be positive");
  if (!(split.test_frac > 0.0 && split.test_frac < 1.0)) fail(ErrorKind::usage, "split.test_frac must be in (0, 1)");
  if (!(split.drop_edges >= 0.0 && split.drop_edges < 1.0)) fail(ErrorKind::usage, "split.drop_edges must be in [0, 1)");
  if (eval_k.empty()) fail(ErrorKind::usage, "eval.k must list at least one cutoff");
  for (int k : eval_k)
    if (k < 1) fail(ErrorKind::usage, "eval.k entries must be >= 1");
  if (diagnose_bins < 1) fail(ErrorKind::usage, "diagnose.bins must be >= 1");
}

}  // namespace orbis
