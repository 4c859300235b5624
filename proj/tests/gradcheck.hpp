#pragma once

// Finite-difference checks of the analytic objective gradient, shared by the
// unit tests and the acceptance runner.

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "orbis/losses.hpp"
#include "test_support.hpp"

namespace orbis::testing {

/// Pointers to every scalar of a ModelParams, in a fixed order.
inline std::vector<double*> scalar_slots(ModelParams& p) {
  std::vector<double*> out;
  auto add = [&](double* data, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) out.push_back(data + i);
  };
  add(p.adapter.data(), p.adapter.size());
  for (auto& w : p.layers) add(w.data(), w.size());
  for (auto& w : p.mu_layers) add(w.data(), w.size());
  add(p.kappa_weights.data(), p.kappa_weights.size());
  out.push_back(&p.kappa_bias);
  return out;
}

/// A small random problem: model, features and a triplet batch.
struct GradProblem {
  EncoderConfig enc;
  ModelParams params;
  std::vector<Vector> features;
  std::vector<Triplet> batch;
};

inline GradProblem make_grad_problem(std::uint64_t seed, Eigen::Index d = 6, Eigen::Index d_plm = 5,
                                     std::size_t n_nodes = 7, std::size_t n_triplets = 5) {
  std::mt19937_64 rng(seed);
  GradProblem g;
  g.enc.dim = d;
  g.enc.input_dim = d_plm;
  g.enc.hidden_sizes = {5};
  g.params = encoder::init_params(g.enc, rng);
  // Spread kappa over a useful range instead of the constant softplus(0).
  g.params.kappa_weights = random_gaussian(d, rng, 1.5);
  g.params.kappa_bias = 1.0;
  for (std::size_t i = 0; i < n_nodes; ++i) g.features.push_back(random_gaussian(d_plm, rng, 1.5));
  std::uniform_int_distribution<std::size_t> pick(0, n_nodes - 1);
  while (g.batch.size() < n_triplets) {
    Triplet t{pick(rng), pick(rng), pick(rng)};
    if (t.parent == t.child || t.negative == t.child || t.negative == t.parent) continue;
    g.batch.push_back(t);
  }
  return g;
}

struct GradCheckResult {
  int checked = 0;
  int failed = 0;
  double worst = 0.0;
};

/// Alignment anchor of every node at the current parameters.
inline std::vector<Vector> current_anchors(const GradProblem& g, const LossConfig& cfg) {
  std::vector<Vector> out;
  for (const auto& e : g.features) {
    const Vector z = encoder::encode(g.params, e).coords();
    out.push_back(cfg.anchor == AnchorMode::learned ? encoder::predict_vmf(g.params, g.enc, UnitVector::trusted(z)).mu.coords()
                                                    : z);
  }
  return out;
}

/// Median-heuristic bandwidth of the batch particles at the current parameters.
inline double batch_bandwidth2(const GradProblem& g) {
  std::vector<std::size_t> nodes;
  for (const auto& t : g.batch) nodes.insert(nodes.end(), {t.parent, t.child, t.negative});
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  std::vector<Vector> zs;
  for (std::size_t id : nodes) zs.push_back(encoder::encode(g.params, g.features[id]).coords());
  return losses::median_bandwidth2(zs);
}

/// Compares the analytic gradient of the total objective with central
/// differences (step h) at `n_coords` randomly chosen parameter scalars.
/// With a detached anchor the reference function holds the anchors at their
/// value for the unperturbed parameters; the kernel bandwidth is always held
/// fixed, as the analytic gradient treats it as a constant.
inline GradCheckResult check_objective_gradient(GradProblem& g, LossConfig cfg, int n_coords,
                                                std::uint64_t seed, double h = 1e-5, double tol = 1e-3) {
  if (cfg.kernel != KernelKind::vmf && !cfg.bandwidth2) cfg.bandwidth2 = batch_bandwidth2(g);
  const auto analytic = losses::objective(g.params, g.enc, cfg, g.features, g.batch, true);
  ModelParams grad = analytic.grad;
  std::vector<Vector> frozen;
  if (cfg.detach_anchor && cfg.svgd_enabled && cfg.alignment_enabled) frozen = current_anchors(g, cfg);
  auto slots = scalar_slots(g.params);
  auto gslots = scalar_slots(grad);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, slots.size() - 1);
  auto f = [&] {
    return losses::objective(g.params, g.enc, cfg, g.features, g.batch, false, frozen).terms.total;
  };
  GradCheckResult r;
  for (int i = 0; i < n_coords; ++i) {
    const std::size_t k = pick(rng);
    const double fd = central_difference(slots[k], h, f);
    const double err = relative_error(*gslots[k], fd);
    ++r.checked;
    if (err > tol) ++r.failed;
    r.worst = std::max(r.worst, err);
  }
  return r;
}

/// One loss term at a time, with its weight set to 1.
inline LossConfig only_term(LossConfig cfg, const std::string& term) {
  cfg.geom_enabled = term == "geom" || term == "total";
  cfg.prob_enabled = term == "prob" || term == "total";
  cfg.svgd_enabled = term == "svgd" || term == "total";
  if (term != "total") cfg.geom_weight = cfg.prob_weight = cfg.svgd_weight = 1.0;
  return cfg;
}

}  // namespace orbis::testing
