#pragma once

// Training objectives: the Welsch geodesic triplet loss, the vMF containment
// triplet loss, and the spherical SVGD transport-field loss, plus their
// weighted total and its exact gradient with respect to every model parameter.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "orbis/encoder.hpp"
#include "orbis/manifold.hpp"
#include "orbis/vmf.hpp"

namespace orbis {

enum class KernelKind { vmf, rbf, imq };
enum class AnchorMode { learned, self };

struct LossConfig {
  double welsch_scale = 0.4;
  double geom_margin = 0.5;
  double prob_margin = 0.3;
  double geom_weight = 0.7;
  double prob_weight = 0.3;
  double svgd_weight = 0.1;
  double kappa_align = 1.0;
  double kappa_repel = 2.0;
  KernelKind kernel = KernelKind::vmf;
  AnchorMode anchor = AnchorMode::learned;
  // Treat the alignment anchor as a constant within a step (stop-gradient).
  bool detach_anchor = true;
  bool geom_enabled = true;
  bool prob_enabled = true;
  bool svgd_enabled = true;
  bool structural_score_enabled = true;
  bool alignment_enabled = true;
  double structural_eps = 1e-4;
  // Squared RBF/IMQ bandwidth; unset means the per-batch median heuristic.
  std::optional<double> bandwidth2;
  vmf::BesselRegime bessel{};

  void validate() const {
    if (!(welsch_scale > 0.0)) fail(ErrorKind::usage, "welsch scale must be positive");
    if (geom_margin < 0.0 || prob_margin < 0.0) fail(ErrorKind::usage, "margins must be >= 0");
    if (geom_weight < 0.0 || prob_weight < 0.0 || svgd_weight < 0.0)
      fail(ErrorKind::usage, "loss weights must be >= 0");
    if (!(kappa_align > 0.0) || !(kappa_repel > 0.0))
      fail(ErrorKind::usage, "kappa_align and kappa_repel must be positive");
    if (!(structural_eps > 0.0)) fail(ErrorKind::usage, "structural eps must be positive");
    if (bandwidth2 && !(*bandwidth2 > 0.0)) fail(ErrorKind::usage, "bandwidth must be positive");
  }
};

/// Node indices of one (parent, child, negative) training example.
struct Triplet {
  std::size_t parent = 0;
  std::size_t child = 0;
  std::size_t negative = 0;
};

namespace losses {

// ---------------------------------------------------------------------------
// Welsch geodesic triplet

inline double welsch(double theta, double c) {
  if (!(c > 0.0)) fail(ErrorKind::usage, "welsch: scale must be positive");
  return -std::expm1(-theta * theta / (2.0 * c * c));
}

/// dW/dtheta = exp(-theta^2 / 2c^2) theta / c^2.
inline double welsch_derivative(double theta, double c) {
  return std::exp(-theta * theta / (2.0 * c * c)) * theta / (c * c);
}

struct ArcTrace {
  double theta = 0.0;
  double dtheta_dx = 0.0;  // derivative of the clamped arccos in the inner product
};

inline ArcTrace arc(const Vector& a, const Vector& b) {
  const double x = a.dot(b);
  const double lim = 1.0 - manifold::kArccosClamp;
  ArcTrace t;
  if (x >= lim) {
    t.theta = std::acos(lim);
  } else if (x <= -lim) {
    t.theta = std::acos(-lim);
  } else {
    t.theta = std::acos(x);
    t.dtheta_dx = -1.0 / std::sqrt(1.0 - x * x);
  }
  return t;
}

inline double geometric_triplet_loss(const UnitVector& zp, const UnitVector& zc,
                                     const UnitVector& zn, const LossConfig& cfg) {
  manifold::require_same_dim(zp.dim(), zc.dim(), "geometric_triplet_loss");
  manifold::require_same_dim(zn.dim(), zc.dim(), "geometric_triplet_loss");
  const double c = cfg.welsch_scale;
  const double pos = welsch(arc(zc.coords(), zp.coords()).theta, c);
  const double neg = welsch(arc(zc.coords(), zn.coords()).theta, c);
  return std::max(0.0, cfg.geom_margin + pos - neg);
}

struct TripletVectors {
  Vector parent;
  Vector child;
  Vector negative;
};

/// Gradient of `scale * geometric_triplet_loss` with respect to the three
/// embeddings. Zero on the flat side of the hinge.
inline TripletVectors geometric_triplet_backward(const Vector& zp, const Vector& zc, const Vector& zn,
                                                 const LossConfig& cfg, double scale) {
  const Eigen::Index d = zc.size();
  TripletVectors g{Vector::Zero(d), Vector::Zero(d), Vector::Zero(d)};
  const double c = cfg.welsch_scale;
  const ArcTrace pos = arc(zc, zp);
  const ArcTrace neg = arc(zc, zn);
  const double value = cfg.geom_margin + welsch(pos.theta, c) - welsch(neg.theta, c);
  if (!(value > 0.0)) return g;
  const double gp = scale * welsch_derivative(pos.theta, c) * pos.dtheta_dx;
  const double gn = -scale * welsch_derivative(neg.theta, c) * neg.dtheta_dx;
  g.parent = gp * zc;
  g.child = gp * zp + gn * zn;
  g.negative = gn * zc;
  return g;
}

// ---------------------------------------------------------------------------
// vMF containment triplet

inline double vmf_triplet_loss(const VmfParams& vp, const VmfParams& vc, const VmfParams& vn,
                               const LossConfig& cfg) {
  const double pos = vmf::kl_vmf(vc, vp, cfg.bessel);
  const double neg = vmf::kl_vmf(vc, vn, cfg.bessel);
  return std::max(0.0, cfg.prob_margin + pos - neg);
}

struct VmfTripletGrad {
  TripletVectors mu;
  double kappa_parent = 0.0;
  double kappa_child = 0.0;
  double kappa_negative = 0.0;
};

inline VmfTripletGrad vmf_triplet_backward(const VmfParams& vp, const VmfParams& vc,
                                           const VmfParams& vn, const LossConfig& cfg,
                                           double scale) {
  const Eigen::Index d = vc.mu.dim();
  VmfTripletGrad g{{Vector::Zero(d), Vector::Zero(d), Vector::Zero(d)}};
  const int dim = static_cast<int>(d);
  const auto pos = vmf::kl_vmf_partials(dim, vc.kappa, vp.kappa, vc.mu.dot(vp.mu), cfg.bessel);
  const auto neg = vmf::kl_vmf_partials(dim, vc.kappa, vn.kappa, vc.mu.dot(vn.mu), cfg.bessel);
  if (!(cfg.prob_margin + pos.value - neg.value > 0.0)) return g;
  g.kappa_child = scale * (pos.d_kappa_c - neg.d_kappa_c);
  g.kappa_parent = scale * pos.d_kappa_p;
  g.kappa_negative = -scale * neg.d_kappa_p;
  g.mu.child = scale * (pos.d_cos * vp.mu.coords() - neg.d_cos * vn.mu.coords());
  g.mu.parent = scale * pos.d_cos * vc.mu.coords();
  g.mu.negative = -scale * neg.d_cos * vc.mu.coords();
  return g;
}

// ---------------------------------------------------------------------------
// Spherical SVGD
//
//   phi(z_i) = 1/B sum_j [ k(z_j, z_i) s(z_j) + grad_{z_j} k(z_j, z_i) ]
//   s(z)     = [0, ..., 0, z_d / (1 - z_d^2 + eps)] + kappa_align mu
//
// projected onto T_{z_i}. The loss is the mean norm of the projected field.

/// Kernel k(x, y) with its x-gradient and the vector-Jacobian products needed
/// to differentiate both through x and y.
struct Kernel {
  KernelKind kind = KernelKind::vmf;
  double kappa = 1.0;  // vMF temperature
  double h2 = 1.0;     // squared bandwidth for RBF / IMQ

  double value(const Vector& x, const Vector& y) const {
    switch (kind) {
      case KernelKind::vmf:
        return std::exp(kappa * x.dot(y));
      case KernelKind::rbf:
        return std::exp(-(x - y).squaredNorm() / (2.0 * h2));
      case KernelKind::imq:
        return 1.0 / std::sqrt(1.0 + (x - y).squaredNorm() / h2);
    }
    return 0.0;
  }

  /// grad_x k(x, y) given k = value(x, y).
  Vector grad_x(const Vector& x, const Vector& y, double k) const {
    switch (kind) {
      case KernelKind::vmf:
        return kappa * k * y;
      case KernelKind::rbf:
        return -(k / h2) * (x - y);
      case KernelKind::imq:
        return -(k * k * k / h2) * (x - y);
    }
    return Vector::Zero(x.size());
  }

  /// Adds c * dk/dx to gx and c * dk/dy to gy.
  void vjp_value(const Vector& x, const Vector& y, double k, double c, Vector& gx,
                 Vector& gy) const {
    switch (kind) {
      case KernelKind::vmf:
        gx += (c * kappa * k) * y;
        gy += (c * kappa * k) * x;
        return;
      case KernelKind::rbf: {
        const Vector delta = x - y;
        gx -= (c * k / h2) * delta;
        gy += (c * k / h2) * delta;
        return;
      }
      case KernelKind::imq: {
        const Vector delta = x - y;
        const double s = c * k * k * k / h2;
        gx -= s * delta;
        gy += s * delta;
        return;
      }
    }
  }

  /// Adds d<w, grad_x k(x, y)>/dx to gx and d/dy to gy.
  void vjp_grad(const Vector& x, const Vector& y, double k, const Vector& w, Vector& gx,
                Vector& gy) const {
    switch (kind) {
      case KernelKind::vmf: {
        const double wy = w.dot(y);
        gx += (kappa * kappa * k * wy) * y;
        gy += (kappa * k) * w + (kappa * kappa * k * wy) * x;
        return;
      }
      case KernelKind::rbf: {
        const Vector delta = x - y;
        const double q = w.dot(delta);
        const Vector term = (k / h2) * ((q / h2) * delta - w);
        gx += term;
        gy -= term;
        return;
      }
      case KernelKind::imq: {
        const Vector delta = x - y;
        const double q = w.dot(delta);
        const Vector term = (k * k * k / h2) * ((3.0 * k * k * q / h2) * delta - w);
        gx += term;
        gy -= term;
        return;
      }
    }
  }
};

/// Median-heuristic squared bandwidth: median pairwise squared distance over
/// 2 log(B + 1). Falls back to 1 for a single particle or coincident batch.
inline double median_bandwidth2(std::span<const Vector> batch) {
  std::vector<double> d2;
  for (std::size_t i = 0; i < batch.size(); ++i)
    for (std::size_t j = i + 1; j < batch.size(); ++j)
      d2.push_back((batch[i] - batch[j]).squaredNorm());
  if (d2.empty()) return 1.0;
  const auto mid = d2.begin() + static_cast<std::ptrdiff_t>(d2.size() / 2);
  std::nth_element(d2.begin(), mid, d2.end());
  double med = *mid;
  if (d2.size() % 2 == 0) {
    const double lower = *std::max_element(d2.begin(), mid);
    med = 0.5 * (med + lower);
  }
  if (!(med > 0.0)) return 1.0;
  return med / (2.0 * std::log(static_cast<double>(batch.size()) + 1.0));
}

inline Kernel make_kernel(const LossConfig& cfg, std::span<const Vector> batch) {
  Kernel k{cfg.kernel, cfg.kappa_repel, 1.0};
  if (cfg.kernel != KernelKind::vmf) k.h2 = cfg.bandwidth2 ? *cfg.bandwidth2 : median_bandwidth2(batch);
  return k;
}

inline double structural_score(double zd, double eps) { return zd / (1.0 - zd * zd + eps); }

inline double structural_score_derivative(double zd, double eps) {
  const double den = 1.0 - zd * zd + eps;
  return (1.0 + zd * zd + eps) / (den * den);
}

inline Vector target_score(const Vector& z, const Vector& anchor, const LossConfig& cfg) {
  Vector s = Vector::Zero(z.size());
  if (cfg.structural_score_enabled)
    s(z.size() - 1) = structural_score(z(z.size() - 1), cfg.structural_eps);
  if (cfg.alignment_enabled) s += cfg.kappa_align * anchor;
  return s;
}

struct FieldTrace {
  Kernel kernel;
  std::vector<Vector> scores;
  std::vector<Vector> raw;        // phi(z_i)
  std::vector<Vector> projected;  // tangent part
  Matrix k;                       // k(z_j, z_i) at (j, i)
};

inline void check_batch(std::span<const Vector> batch, std::span<const Vector> anchors) {
  if (batch.empty()) fail(ErrorKind::data, "svgd: empty batch");
  if (anchors.size() != batch.size()) fail(ErrorKind::data, "svgd: anchors must match batch");
}

inline FieldTrace transport_field_traced(std::span<const Vector> batch,
                                         std::span<const Vector> anchors, const LossConfig& cfg) {
  check_batch(batch, anchors);
  const std::size_t b = batch.size();
  const Eigen::Index d = batch[0].size();
  const double inv_b = 1.0 / static_cast<double>(b);
  FieldTrace t;
  t.kernel = make_kernel(cfg, batch);
  t.scores.reserve(b);
  for (std::size_t j = 0; j < b; ++j) t.scores.push_back(target_score(batch[j], anchors[j], cfg));
  t.k.resize(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(b));
  for (std::size_t i = 0; i < b; ++i) {
    Vector phi = Vector::Zero(d);
    for (std::size_t j = 0; j < b; ++j) {
      const double k = t.kernel.value(batch[j], batch[i]);
      t.k(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = k;
      phi += k * t.scores[j] + t.kernel.grad_x(batch[j], batch[i], k);
    }
    phi *= inv_b;
    t.projected.push_back(phi - phi.dot(batch[i]) * batch[i]);
    t.raw.push_back(std::move(phi));
  }
  return t;
}

inline std::vector<Vector> as_vectors(std::span<const UnitVector> xs) {
  std::vector<Vector> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(x.coords());
  return out;
}

/// Tangent-projected SVGD transport field at every particle.
inline std::vector<TangentVector> svgd_transport_field(std::span<const UnitVector> batch,
                                                       std::span<const UnitVector> anchors,
                                                       const LossConfig& cfg) {
  const auto zs = as_vectors(batch);
  const auto mus = as_vectors(anchors);
  auto trace = transport_field_traced(zs, mus, cfg);
  std::vector<TangentVector> out;
  out.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) out.push_back({batch[i], trace.projected[i]});
  return out;
}

inline double svgd_loss_from_trace(const FieldTrace& t) {
  double sum = 0.0;
  for (const auto& v : t.projected) sum += v.norm();
  return sum / static_cast<double>(t.projected.size());
}

inline double svgd_loss(std::span<const UnitVector> batch, std::span<const UnitVector> anchors,
                        const LossConfig& cfg) {
  const auto zs = as_vectors(batch);
  const auto mus = as_vectors(anchors);
  return svgd_loss_from_trace(transport_field_traced(zs, mus, cfg));
}

struct SvgdGrad {
  std::vector<Vector> particles;
  std::vector<Vector> anchors;
};

/// Gradient of `scale * svgd_loss` with respect to every particle and every
/// anchor. Kernel bandwidths are treated as constants.
inline SvgdGrad svgd_loss_backward(std::span<const Vector> batch, const FieldTrace& t,
                                   const LossConfig& cfg, double scale) {
  const std::size_t b = batch.size();
  const Eigen::Index d = batch[0].size();
  const double inv_b = 1.0 / static_cast<double>(b);
  SvgdGrad out{std::vector<Vector>(b, Vector::Zero(d)), std::vector<Vector>(b, Vector::Zero(d))};
  auto& grad = out.particles;
  for (std::size_t i = 0; i < b; ++i) {
    const double n = t.projected[i].norm();
    if (!(n > 0.0)) continue;
    const Vector& z = batch[i];
    const Vector& phi = t.raw[i];
    const Vector a = (scale * inv_b / n) * t.projected[i];  // dL / d phi_hat_i
    const double az = a.dot(z);
    const Vector upstream = a - az * z;                      // dL / d phi_i
    grad[i] -= phi.dot(z) * a + az * phi;
    const Vector w = inv_b * upstream;
    for (std::size_t j = 0; j < b; ++j) {
      const double k = t.k(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
      t.kernel.vjp_value(batch[j], z, k, w.dot(t.scores[j]), grad[j], grad[i]);
      if (cfg.structural_score_enabled)
        grad[j](d - 1) += k * w(d - 1) * structural_score_derivative(batch[j](d - 1), cfg.structural_eps);
      if (cfg.alignment_enabled) out.anchors[j] += (k * cfg.kappa_align) * w;
      t.kernel.vjp_grad(batch[j], z, k, w, grad[j], grad[i]);
    }
  }
  return out;
}

}  // namespace losses

// ---------------------------------------------------------------------------
// Total objective over a batch of triplets

struct ObjectiveTerms {
  double geom = 0.0;
  double prob = 0.0;
  double svgd = 0.0;
  double total = 0.0;
};

struct ObjectiveResult {
  ObjectiveTerms terms;
  ModelParams grad;  // empty unless requested
};

namespace losses {

/// Evaluates lambda_geo L_geom + lambda_prob L_prob + lambda_svgd L_svgd on one
/// batch; each term is a batch mean. SVGD particles are the distinct nodes of
/// the batch in ascending index order. With `want_grad`, also returns the
/// ambient gradient of the total with respect to every parameter.
///
/// `fixed_anchors`, when non-empty, supplies the alignment anchor of every
/// node (indexed like `features`) in place of the model's own. It lets tests
/// evaluate the function whose gradient a detached anchor produces.
inline ObjectiveResult objective(const ModelParams& params, const EncoderConfig& enc,
                                 const LossConfig& cfg, std::span<const Vector> features,
                                 std::span<const Triplet> batch, bool want_grad,
                                 std::span<const Vector> fixed_anchors = {}) {
  if (batch.empty()) fail(ErrorKind::data, "objective: empty batch");
  cfg.validate();

  std::vector<std::size_t> nodes;
  nodes.reserve(batch.size() * 3);
  for (const auto& t : batch) {
    for (std::size_t id : {t.parent, t.child, t.negative}) {
      if (id >= features.size()) fail(ErrorKind::data, "objective: node without features");
      nodes.push_back(id);
    }
  }
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  auto slot = [&](std::size_t id) {
    return static_cast<std::size_t>(std::lower_bound(nodes.begin(), nodes.end(), id) - nodes.begin());
  };

  const bool geom_on = cfg.geom_enabled && cfg.geom_weight > 0.0;
  const bool prob_on = cfg.prob_enabled && cfg.prob_weight > 0.0;
  const bool svgd_on = cfg.svgd_enabled && cfg.svgd_weight > 0.0;
  const bool need_vmf = prob_on || (svgd_on && cfg.alignment_enabled && cfg.anchor == AnchorMode::learned);

  std::vector<encoder::EncodeTrace> enc_traces;
  std::vector<encoder::VmfTrace> vmf_traces;
  enc_traces.reserve(nodes.size());
  for (std::size_t id : nodes) enc_traces.push_back(encoder::encode_traced(params, features[id]));
  if (need_vmf) {
    vmf_traces.reserve(nodes.size());
    for (const auto& et : enc_traces) vmf_traces.push_back(encoder::predict_vmf_traced(params, enc, et.z));
  }

  const Eigen::Index d = params.dim();
  std::vector<Vector> grad_z(nodes.size(), Vector::Zero(d));
  std::vector<Vector> grad_mu(nodes.size(), Vector::Zero(d));
  std::vector<double> grad_kappa(nodes.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(batch.size());

  ObjectiveResult out;
  if (geom_on) {
    double sum = 0.0;
    const double scale = cfg.geom_weight * inv_n;
    for (const auto& t : batch) {
      const std::size_t p = slot(t.parent), c = slot(t.child), n = slot(t.negative);
      const auto& zp = enc_traces[p].z;
      const auto& zc = enc_traces[c].z;
      const auto& zn = enc_traces[n].z;
      sum += geometric_triplet_loss(UnitVector::trusted(zp), UnitVector::trusted(zc),
                                    UnitVector::trusted(zn), cfg);
      if (want_grad) {
        auto g = geometric_triplet_backward(zp, zc, zn, cfg, scale);
        grad_z[p] += g.parent;
        grad_z[c] += g.child;
        grad_z[n] += g.negative;
      }
    }
    out.terms.geom = sum * inv_n;
  }
  if (prob_on) {
    double sum = 0.0;
    const double scale = cfg.prob_weight * inv_n;
    for (const auto& t : batch) {
      const std::size_t p = slot(t.parent), c = slot(t.child), n = slot(t.negative);
      const auto& vp = vmf_traces[p].out;
      const auto& vc = vmf_traces[c].out;
      const auto& vn = vmf_traces[n].out;
      sum += vmf_triplet_loss(vp, vc, vn, cfg);
      if (want_grad) {
        auto g = vmf_triplet_backward(vp, vc, vn, cfg, scale);
        grad_mu[p] += g.mu.parent;
        grad_mu[c] += g.mu.child;
        grad_mu[n] += g.mu.negative;
        grad_kappa[p] += g.kappa_parent;
        grad_kappa[c] += g.kappa_child;
        grad_kappa[n] += g.kappa_negative;
      }
    }
    out.terms.prob = sum * inv_n;
  }
  if (svgd_on) {
    std::vector<Vector> zs, anchors;
    zs.reserve(nodes.size());
    anchors.reserve(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      zs.push_back(enc_traces[i].z);
      const bool learned = cfg.anchor == AnchorMode::learned && !vmf_traces.empty();
      if (!fixed_anchors.empty())
        anchors.push_back(fixed_anchors[nodes[i]]);
      else
        anchors.push_back(learned ? vmf_traces[i].out.mu.coords() : enc_traces[i].z);
    }
    const auto trace = transport_field_traced(zs, anchors, cfg);
    out.terms.svgd = svgd_loss_from_trace(trace);
    if (want_grad) {
      auto g = svgd_loss_backward(zs, trace, cfg, cfg.svgd_weight);
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        grad_z[i] += g.particles[i];
        if (!cfg.detach_anchor && fixed_anchors.empty()) {
          if (cfg.anchor == AnchorMode::self || vmf_traces.empty())
            grad_z[i] += g.anchors[i];
          else
            grad_mu[i] += g.anchors[i];
        }
      }
    }
  }

  out.terms.total = (geom_on ? cfg.geom_weight * out.terms.geom : 0.0) +
                    (prob_on ? cfg.prob_weight * out.terms.prob : 0.0) +
                    (svgd_on ? cfg.svgd_weight * out.terms.svgd : 0.0);
  if (!std::isfinite(out.terms.total)) fail(ErrorKind::divergence, "diverged");

  if (want_grad) {
    out.grad = params.zeros_like();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      Vector gz = grad_z[i];
      if (!vmf_traces.empty())
        gz += encoder::predict_vmf_backward(params, enc, vmf_traces[i], grad_mu[i], grad_kappa[i],
                                            out.grad);
      encoder::encode_backward(params, enc_traces[i], gz, out.grad);
    }
    if (!out.grad.all_finite()) fail(ErrorKind::divergence, "diverged");
  }
  return out;
}

}  // namespace losses

/// Weighted objective and per-term breakdown on one batch.
inline ObjectiveTerms total_objective(const ModelParams& params, const EncoderConfig& enc,
                                      const LossConfig& cfg, std::span<const Vector> features,
                                      std::span<const Triplet> batch) {
  return losses::objective(params, enc, cfg, features, batch, false).terms;
}

/// Ambient gradient of total_objective with respect to every parameter.
inline ObjectiveResult gradients(const ModelParams& params, const EncoderConfig& enc,
                                 const LossConfig& cfg, std::span<const Vector> features,
                                 std::span<const Triplet> batch) {
  return losses::objective(params, enc, cfg, features, batch, true);
}

}  // namespace orbis
