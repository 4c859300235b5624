#pragma once

// Riemannian Adam for points on the sphere and textbook Adam for Euclidean
// parameters.

#include <cmath>
#include <vector>

#include "orbis/encoder.hpp"
#include "orbis/manifold.hpp"

namespace orbis {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moments for one constrained point. `m` lives in the tangent space of the
/// point's current position; `v` is a scalar, so it needs no transport.
struct RiemannianAdamState {
  Vector m;
  double v = 0.0;
  long step = 0;
};

/// Per-coordinate moments for an unconstrained array.
struct AdamState {
  Vector m;
  Vector v;
  long step = 0;
};

namespace optim {

inline constexpr double kDriftGuard = 1e-7;

inline void require_finite(const Vector& g) {
  if (!g.allFinite()) fail(ErrorKind::divergence, "diverged");
}

/// One Riemannian Adam step. Projects the gradient onto T_z, updates the
/// moments, moves along the geodesic, and transports m to the new point.
inline UnitVector riemannian_adam_step(RiemannianAdamState& state, const UnitVector& z,
                                       const Vector& euclid_grad, const AdamHyper& hp) {
  require_finite(euclid_grad);
  manifold::require_same_dim(z.dim(), euclid_grad.size(), "riemannian_adam_step");
  if (state.m.size() != z.dim()) state.m = Vector::Zero(z.dim());

  const Vector g = manifold::project_to_tangent(z, euclid_grad).direction;
  ++state.step;
  state.m = hp.beta1 * state.m + (1.0 - hp.beta1) * g;
  state.v = hp.beta2 * state.v + (1.0 - hp.beta2) * g.squaredNorm();
  const double t = static_cast<double>(state.step);
  const Vector m_hat = state.m / (1.0 - std::pow(hp.beta1, t));
  const double v_hat = state.v / (1.0 - std::pow(hp.beta2, t));

  const Vector delta = -hp.lr * m_hat / (std::sqrt(v_hat) + hp.eps);
  // Keep the step exactly tangent before moving.
  const TangentVector step = manifold::project_to_tangent(z, delta);
  // exp_map renormalizes once drift exceeds kDriftGuard.
  const UnitVector next = manifold::exp_map(z, step);

  state.m = manifold::parallel_transport(z, next, manifold::project_to_tangent(z, state.m)).direction;
  return next;
}

/// One textbook Adam step, in place.
inline void adam_step(AdamState& state, Eigen::Ref<Vector> p, const Vector& grad, const AdamHyper& hp) {
  require_finite(grad);
  if (grad.size() != p.size()) fail(ErrorKind::data, "adam_step: dimension mismatch");
  if (state.m.size() != p.size()) {
    state.m = Vector::Zero(p.size());
    state.v = Vector::Zero(p.size());
  }
  ++state.step;
  state.m = hp.beta1 * state.m + (1.0 - hp.beta1) * grad;
  state.v = hp.beta2 * state.v + (1.0 - hp.beta2) * grad.cwiseProduct(grad);
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(hp.beta1, t);
  const double c2 = 1.0 - std::pow(hp.beta2, t);
  p.array() -= hp.lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + hp.eps);
}

}  // namespace optim

/// Optimizer state for a whole ModelParams: one Riemannian state per
/// spherical weight row, one Adam state per Euclidean block.
class ModelOptimizer {
 public:
  ModelOptimizer() = default;
  ModelOptimizer(const ModelParams& p, AdamHyper sphere, AdamHyper euclid)
      : sphere_hp_(sphere), euclid_hp_(euclid) {
    for (const auto& w : p.layers) layers_.emplace_back(static_cast<std::size_t>(w.rows()));
    for (const auto& w : p.mu_layers) mu_layers_.emplace_back(static_cast<std::size_t>(w.rows()));
  }

  void step(ModelParams& p, const ModelParams& grad) {
    if (!grad.all_finite()) fail(ErrorKind::divergence, "diverged");
    ++steps_;
    for (std::size_t i = 0; i < p.layers.size(); ++i) step_rows(p.layers[i], grad.layers[i], layers_[i]);
    for (std::size_t i = 0; i < p.mu_layers.size(); ++i)
      step_rows(p.mu_layers[i], grad.mu_layers[i], mu_layers_[i]);

    Eigen::Map<Vector> adapter(p.adapter.data(), p.adapter.size());
    const Eigen::Map<const Vector> adapter_grad(grad.adapter.data(), grad.adapter.size());
    optim::adam_step(adapter_, adapter, adapter_grad, euclid_hp_);
    optim::adam_step(kappa_w_, p.kappa_weights, grad.kappa_weights, euclid_hp_);
    Vector bias(1);
    bias(0) = p.kappa_bias;
    Vector bias_grad(1);
    bias_grad(0) = grad.kappa_bias;
    optim::adam_step(kappa_b_, bias, bias_grad, euclid_hp_);
    p.kappa_bias = bias(0);
  }

  long steps() const { return steps_; }
  const AdamHyper& sphere_hyper() const { return sphere_hp_; }
  const AdamHyper& euclid_hyper() const { return euclid_hp_; }

  // Exposed for checkpointing.
  std::vector<std::vector<RiemannianAdamState>>& layer_states() { return layers_; }
  std::vector<std::vector<RiemannianAdamState>>& mu_layer_states() { return mu_layers_; }
  AdamState& adapter_state() { return adapter_; }
  AdamState& kappa_weight_state() { return kappa_w_; }
  AdamState& kappa_bias_state() { return kappa_b_; }
  const std::vector<std::vector<RiemannianAdamState>>& layer_states() const { return layers_; }
  const std::vector<std::vector<RiemannianAdamState>>& mu_layer_states() const { return mu_layers_; }
  const AdamState& adapter_state() const { return adapter_; }
  const AdamState& kappa_weight_state() const { return kappa_w_; }
  const AdamState& kappa_bias_state() const { return kappa_b_; }
  void set_steps(long s) { steps_ = s; }

 private:
  void step_rows(Matrix& w, const Matrix& g, std::vector<RiemannianAdamState>& states) {
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      const UnitVector row = UnitVector::trusted(w.row(r).transpose());
      const UnitVector next =
          optim::riemannian_adam_step(states[static_cast<std::size_t>(r)], row, g.row(r).transpose(), sphere_hp_);
      w.row(r) = next.coords().transpose();
    }
  }

  AdamHyper sphere_hp_{};
  AdamHyper euclid_hp_{};
  std::vector<std::vector<RiemannianAdamState>> layers_;
  std::vector<std::vector<RiemannianAdamState>> mu_layers_;
  AdamState adapter_;
  AdamState kappa_w_;
  AdamState kappa_b_;
  long steps_ = 0;
};

}  // namespace orbis
