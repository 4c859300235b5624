#pragma once

// Feature vector -> S^{d-1}: a Euclidean adapter, a tangent lift at the North
// pole, and a stack of bias-free spherical linear layers. Also the vMF heads
// that predict (mu, kappa) from an embedding.
//
// Every forward function has a traced variant that records the intermediates
// needed by the matching backward function.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "orbis/manifold.hpp"
#include "orbis/vmf.hpp"

namespace orbis {

/// Learnable parameters. Rows of every matrix in `layers` and `mu_layers` are
/// unit vectors; the adapter and the kappa head are unconstrained.
struct ModelParams {
  Matrix adapter;                 // d x d_plm
  std::vector<Matrix> layers;     // spherical, each out x in
  std::vector<Matrix> mu_layers;  // spherical, d -> ... -> d
  Vector kappa_weights;           // length d
  double kappa_bias = 0.0;

  Eigen::Index dim() const { return adapter.rows(); }
  Eigen::Index input_dim() const { return adapter.cols(); }

  /// Same shapes, all zeros. Used as a gradient accumulator.
  ModelParams zeros_like() const {
    ModelParams z;
    z.adapter = Matrix::Zero(adapter.rows(), adapter.cols());
    for (const auto& w : layers) z.layers.push_back(Matrix::Zero(w.rows(), w.cols()));
    for (const auto& w : mu_layers) z.mu_layers.push_back(Matrix::Zero(w.rows(), w.cols()));
    z.kappa_weights = Vector::Zero(kappa_weights.size());
    z.kappa_bias = 0.0;
    return z;
  }

  ModelParams& operator+=(const ModelParams& o) {
    adapter += o.adapter;
    for (std::size_t i = 0; i < layers.size(); ++i) layers[i] += o.layers[i];
    for (std::size_t i = 0; i < mu_layers.size(); ++i) mu_layers[i] += o.mu_layers[i];
    kappa_weights += o.kappa_weights;
    kappa_bias += o.kappa_bias;
    return *this;
  }

  ModelParams& operator*=(double s) {
    adapter *= s;
    for (auto& w : layers) w *= s;
    for (auto& w : mu_layers) w *= s;
    kappa_weights *= s;
    kappa_bias *= s;
    return *this;
  }

  bool all_finite() const {
    if (!adapter.allFinite() || !kappa_weights.allFinite() || !std::isfinite(kappa_bias))
      return false;
    for (const auto& w : layers)
      if (!w.allFinite()) return false;
    for (const auto& w : mu_layers)
      if (!w.allFinite()) return false;
    return true;
  }
};

/// Architecture and head options.
struct EncoderConfig {
  Eigen::Index dim = 128;
  Eigen::Index input_dim = 768;
  std::vector<Eigen::Index> hidden_sizes{64};   // projection depth = hidden + 1
  std::vector<Eigen::Index> mu_hidden_sizes{};  // mu head depth = hidden + 1
  double kappa_max = 100.0;
  bool identity_mu = false;
  std::optional<double> constant_kappa;  // fixed concentration ablation
};

namespace encoder {

inline constexpr double kLayerEps = 1e-12;

/// Rows drawn as Gaussian-then-normalize, so each row is uniform on its sphere.
template <class Rng>
Matrix random_sphere_rows(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix w(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) w(r, c) = gauss(rng);
    w.row(r) /= w.row(r).norm();
  }
  return w;
}

inline void normalize_rows(Matrix& w) {
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    const double n = w.row(r).norm();
    if (n == 0.0) fail(ErrorKind::numeric, "degenerate weight row");
    w.row(r) /= n;
  }
}

inline std::vector<Eigen::Index> chain_sizes(Eigen::Index in, const std::vector<Eigen::Index>& hidden,
                                             Eigen::Index out) {
  std::vector<Eigen::Index> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  return sizes;
}

template <class Rng>
ModelParams init_params(const EncoderConfig& cfg, Rng& rng) {
  if (cfg.dim < 2) fail(ErrorKind::usage, "embedding dimension must be >= 2");
  if (cfg.input_dim < 1) fail(ErrorKind::usage, "input dimension must be >= 1");
  ModelParams p;
  std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(static_cast<double>(cfg.input_dim)));
  p.adapter.resize(cfg.dim, cfg.input_dim);
  for (Eigen::Index i = 0; i < p.adapter.size(); ++i) p.adapter.data()[i] = gauss(rng);

  const auto sizes = chain_sizes(cfg.dim, cfg.hidden_sizes, cfg.dim);
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i)
    p.layers.push_back(random_sphere_rows(sizes[i + 1], sizes[i], rng));
  if (!cfg.identity_mu) {
    const auto mu_sizes = chain_sizes(cfg.dim, cfg.mu_hidden_sizes, cfg.dim);
    for (std::size_t i = 0; i + 1 < mu_sizes.size(); ++i)
      p.mu_layers.push_back(random_sphere_rows(mu_sizes[i + 1], mu_sizes[i], rng));
  }
  p.kappa_weights = Vector::Zero(cfg.dim);
  p.kappa_bias = 0.0;
  return p;
}

// ---------------------------------------------------------------------------
// Spherical linear layer: y = W x / (||W x|| + eps)

struct LayerTrace {
  Vector input;
  Vector pre;  // W x
  double norm = 0.0;
  Vector output;
};

inline LayerTrace spherical_layer_traced(const Matrix& w, const Vector& x) {
  if (w.cols() != x.size()) fail(ErrorKind::data, "spherical layer: dimension mismatch");
  LayerTrace t;
  t.input = x;
  t.pre = w * x;
  t.norm = t.pre.norm();
  if (!(t.norm > 1e-12)) fail(ErrorKind::numeric, "degenerate projection");
  t.output = t.pre / (t.norm + kLayerEps);
  return t;
}

inline UnitVector spherical_linear_forward(const Matrix& w, const UnitVector& x) {
  return UnitVector::trusted(spherical_layer_traced(w, x.coords()).output);
}

/// Accumulates dL/dW into `grad_w` and returns dL/dx.
inline Vector spherical_layer_backward(const Matrix& w, const LayerTrace& t, const Vector& grad_out,
                                       Matrix& grad_w) {
  const double denom = t.norm + kLayerEps;
  const Vector grad_pre =
      grad_out / denom - t.pre * (t.pre.dot(grad_out) / (t.norm * denom * denom));
  grad_w.noalias() += grad_pre * t.input.transpose();
  return w.transpose() * grad_pre;
}

// ---------------------------------------------------------------------------
// Tangent lift at the North pole: h = A e, u = h - <h, p_N> p_N, z0 = exp_{p_N}(u)

struct LiftTrace {
  Vector feature;
  Vector tangent;  // u
  double tangent_norm = 0.0;
  Vector z0;
};

inline void require_finite(const Vector& e) {
  if (!e.allFinite()) fail(ErrorKind::data, "non-finite feature vector");
}

inline LiftTrace lift_traced(const ModelParams& p, const Vector& e) {
  if (e.size() != p.input_dim())
    fail(ErrorKind::data, "feature width " + std::to_string(e.size()) +
                              " does not match adapter width " + std::to_string(p.input_dim()));
  require_finite(e);
  const Eigen::Index d = p.dim();
  LiftTrace t;
  t.feature = e;
  const UnitVector pole = manifold::north_pole(d);
  t.tangent = manifold::project_to_tangent(pole, p.adapter * e).direction;
  t.tangent_norm = t.tangent.norm();
  t.z0 = manifold::exp_map(pole, {pole, t.tangent}).coords();
  return t;
}

inline UnitVector lift_to_sphere(const ModelParams& p, const Vector& e) {
  return UnitVector::trusted(lift_traced(p, e).z0);
}

/// Accumulates dL/dA into `grad_adapter`.
inline void lift_backward(const LiftTrace& t, const Vector& grad_z0, Matrix& grad_adapter) {
  const Eigen::Index d = grad_z0.size();
  const double n = t.tangent_norm;
  Vector grad_u;
  if (n < 1e-8) {
    // exp_{p_N}(u) = p_N + u + O(|u|^2)
    grad_u = grad_z0;
  } else {
    const double sinc = std::sin(n) / n;
    const double dsinc = (n * std::cos(n) - std::sin(n)) / (n * n);
    const double radial = -std::sin(n) * grad_z0(d - 1) + dsinc * grad_z0.dot(t.tangent);
    grad_u = sinc * grad_z0 + (radial / n) * t.tangent;
  }
  grad_u(d - 1) = 0.0;  // projection onto T_{p_N}
  grad_adapter.noalias() += grad_u * t.feature.transpose();
}

// ---------------------------------------------------------------------------
// Full encoder

struct EncodeTrace {
  LiftTrace lift;
  std::vector<LayerTrace> layers;
  Vector z;
};

inline EncodeTrace encode_traced(const ModelParams& p, const Vector& e) {
  EncodeTrace t;
  t.lift = lift_traced(p, e);
  Vector x = t.lift.z0;
  t.layers.reserve(p.layers.size());
  for (const auto& w : p.layers) {
    t.layers.push_back(spherical_layer_traced(w, x));
    x = t.layers.back().output;
  }
  t.z = std::move(x);
  return t;
}

inline UnitVector encode(const ModelParams& p, const Vector& e) {
  return UnitVector::trusted(encode_traced(p, e).z);
}

inline void encode_backward(const ModelParams& p, const EncodeTrace& t, const Vector& grad_z,
                            ModelParams& grad) {
  Vector g = grad_z;
  for (std::size_t i = p.layers.size(); i-- > 0;)
    g = spherical_layer_backward(p.layers[i], t.layers[i], g, grad.layers[i]);
  lift_backward(t.lift, g, grad.adapter);
}

// ---------------------------------------------------------------------------
// vMF heads: mu = f_sphere(z; Theta_mu), kappa = min(softplus(w.z + b), kappa_max)

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct VmfTrace {
  Vector z;
  std::vector<LayerTrace> mu_layers;
  double pre = 0.0;
  bool kappa_fixed = false;  // clipped or constant: no gradient through kappa
  VmfParams out;
};

inline VmfTrace predict_vmf_traced(const ModelParams& p, const EncoderConfig& cfg, const Vector& z) {
  VmfTrace t;
  t.z = z;
  Vector x = z;
  if (!cfg.identity_mu) {
    for (const auto& w : p.mu_layers) {
      t.mu_layers.push_back(spherical_layer_traced(w, x));
      x = t.mu_layers.back().output;
    }
  }
  t.out.mu = UnitVector::trusted(std::move(x));
  if (cfg.constant_kappa) {
    t.kappa_fixed = true;
    t.out.kappa = *cfg.constant_kappa;
  } else {
    t.pre = p.kappa_weights.dot(z) + p.kappa_bias;
    const double k = softplus(t.pre);
    t.kappa_fixed = k >= cfg.kappa_max;
    t.out.kappa = std::min(k, cfg.kappa_max);
    // softplus underflows to 0 for very negative inputs; keep kappa positive.
    if (!(t.out.kappa > 0.0)) {
      t.out.kappa = std::numeric_limits<double>::min();
      t.kappa_fixed = true;
    }
  }
  return t;
}

inline VmfParams predict_vmf(const ModelParams& p, const EncoderConfig& cfg, const UnitVector& z) {
  return predict_vmf_traced(p, cfg, z.coords()).out;
}

/// Accumulates head gradients into `grad`; returns dL/dz.
inline Vector predict_vmf_backward(const ModelParams& p, const EncoderConfig& cfg, const VmfTrace& t,
                                   const Vector& grad_mu, double grad_kappa, ModelParams& grad) {
  Vector gz = Vector::Zero(t.z.size());
  if (cfg.identity_mu) {
    gz += grad_mu;
  } else {
    Vector g = grad_mu;
    for (std::size_t i = p.mu_layers.size(); i-- > 0;)
      g = spherical_layer_backward(p.mu_layers[i], t.mu_layers[i], g, grad.mu_layers[i]);
    gz += g;
  }
  if (!t.kappa_fixed && grad_kappa != 0.0) {
    const double gpre = grad_kappa * sigmoid(t.pre);
    grad.kappa_weights += gpre * t.z;
    grad.kappa_bias += gpre;
    gz += gpre * p.kappa_weights;
  }
  return gz;
}

}  // namespace encoder
}  // namespace orbis
