#pragma once

// Geometry of the unit hypersphere S^{d-1} embedded in R^d.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "orbis/error.hpp"

namespace orbis {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

namespace manifold {

/// Inner products are clamped to [-1 + kArccosClamp, 1 - kArccosClamp] before
/// arccos so that d/dx arccos(x) stays bounded.
inline constexpr double kArccosClamp = 1e-7;
inline constexpr double kNormalizeEps = 1e-12;
inline constexpr double kUnitTolerance = 1e-9;

}  // namespace manifold

/// A point on S^{d-1}. Construction goes through `normalize` or `checked`, so
/// every instance is unit-norm to within manifold::kUnitTolerance.
class UnitVector {
 public:
  UnitVector() = default;

  /// Wraps coordinates that are already unit-norm; throws if they are not.
  static UnitVector checked(Vector coords) {
    if (coords.size() < 2) fail(ErrorKind::data, "unit vector needs dimension >= 2");
    const double n = coords.norm();
    if (!std::isfinite(n) || std::abs(n - 1.0) > manifold::kUnitTolerance)
      fail(ErrorKind::numeric, "vector is not unit-norm (norm " + std::to_string(n) + ")");
    return UnitVector(std::move(coords));
  }

  /// Wraps coordinates without checking. Callers guarantee the invariant.
  static UnitVector trusted(Vector coords) { return UnitVector(std::move(coords)); }

  static UnitVector basis(Eigen::Index d, Eigen::Index axis) {
    Vector e = Vector::Zero(d);
    e(axis) = 1.0;
    return UnitVector(std::move(e));
  }

  const Vector& coords() const noexcept { return coords_; }
  Eigen::Index dim() const noexcept { return coords_.size(); }
  double operator()(Eigen::Index i) const { return coords_(i); }
  double dot(const UnitVector& other) const { return coords_.dot(other.coords_); }
  UnitVector operator-() const { return UnitVector(-coords_); }

 private:
  explicit UnitVector(Vector coords) : coords_(std::move(coords)) {}
  Vector coords_;
};

/// A vector in the tangent space at `base`.
struct TangentVector {
  UnitVector base;
  Vector direction;

  double norm() const { return direction.norm(); }
};

/// Spherical chart coordinates: d-2 latitudes in [0, pi] and one longitude in
/// [0, 2 pi).
struct AngularCoords {
  std::vector<double> latitudes;
  double longitude = 0.0;
};

namespace manifold {

inline void require_same_dim(Eigen::Index a, Eigen::Index b, const char* op) {
  if (a != b)
    fail(ErrorKind::data, std::string(op) + ": dimension mismatch (" + std::to_string(a) +
                              " vs " + std::to_string(b) + ")");
}

/// The North pole e_d = [0, ..., 0, 1].
inline UnitVector north_pole(Eigen::Index d) { return UnitVector::basis(d, d - 1); }

/// x / (||x|| + eps). An all-zero input is rejected instead of silently scaled.
inline UnitVector normalize(const Vector& x, double eps = kNormalizeEps) {
  if (x.size() < 2) fail(ErrorKind::data, "normalize: dimension must be >= 2");
  const double n = x.norm();
  if (!std::isfinite(n)) fail(ErrorKind::numeric, "normalize: non-finite input");
  if (n == 0.0) fail(ErrorKind::numeric, "degenerate vector");
  return UnitVector::trusted(x / (n + eps));
}

inline double clamped_inner(const Vector& a, const Vector& b) {
  return std::clamp(a.dot(b), -1.0 + kArccosClamp, 1.0 - kArccosClamp);
}

/// Great-circle arc length arccos(<a, b>) in [0, pi].
inline double geodesic_distance(const UnitVector& a, const UnitVector& b) {
  require_same_dim(a.dim(), b.dim(), "geodesic_distance");
  return std::acos(clamped_inner(a.coords(), b.coords()));
}

/// x - <x, base> base.
inline TangentVector project_to_tangent(const UnitVector& base, const Vector& x) {
  require_same_dim(base.dim(), x.size(), "project_to_tangent");
  const Vector& p = base.coords();
  return {base, x - x.dot(p) * p};
}

/// cos(|v|) base + sin(|v|) v / |v|. Renormalizes when rounding drifts past
/// 1e-7, which keeps long chains of steps on the sphere.
inline UnitVector exp_map(const UnitVector& base, const TangentVector& v) {
  require_same_dim(base.dim(), v.direction.size(), "exp_map");
  const double n = v.direction.norm();
  if (!std::isfinite(n)) fail(ErrorKind::divergence, "diverged");
  if (n == 0.0) return base;
  Vector out = std::cos(n) * base.coords() + (std::sin(n) / n) * v.direction;
  const double on = out.norm();
  if (std::abs(on - 1.0) > 1e-7) out /= on;
  return UnitVector::trusted(std::move(out));
}

/// Levi-Civita transport along the minimizing geodesic from `from` to `to`:
///   u' = u - <u, to> / (1 + <from, to>) (from + to)
inline TangentVector parallel_transport(const UnitVector& from, const UnitVector& to,
                                        const TangentVector& u) {
  require_same_dim(from.dim(), to.dim(), "parallel_transport");
  require_same_dim(from.dim(), u.direction.size(), "parallel_transport");
  const double c = from.dot(to);
  if (1.0 + c < 1e-12) fail(ErrorKind::numeric, "transport undefined");
  const Vector& a = from.coords();
  const Vector& b = to.coords();
  Vector out = u.direction - (u.direction.dot(b) / (1.0 + c)) * (a + b);
  return {to, std::move(out)};
}

/// Recursive arccos chart. Throws "coordinate singularity" when any trailing
/// radical sqrt(z_i^2 + ... + z_d^2), i >= 2, falls below `singular_tol`.
inline AngularCoords cartesian_to_angular(const UnitVector& z, double singular_tol = 1e-12) {
  const Eigen::Index d = z.dim();
  std::vector<double> tail(static_cast<std::size_t>(d) + 1, 0.0);
  for (Eigen::Index i = d - 1; i >= 0; --i)
    tail[static_cast<std::size_t>(i)] = tail[static_cast<std::size_t>(i) + 1] + z(i) * z(i);
  for (Eigen::Index i = 1; i < d - 1; ++i)
    if (std::sqrt(tail[static_cast<std::size_t>(i)]) < singular_tol)
      fail(ErrorKind::numeric, "coordinate singularity");
  const double last = std::sqrt(tail[static_cast<std::size_t>(d - 2)]);
  if (last < singular_tol) fail(ErrorKind::numeric, "coordinate singularity");

  AngularCoords out;
  out.latitudes.reserve(static_cast<std::size_t>(d - 2));
  for (Eigen::Index i = 0; i < d - 2; ++i) {
    const double r = std::sqrt(tail[static_cast<std::size_t>(i)]);
    out.latitudes.push_back(std::acos(std::clamp(z(i) / r, -1.0, 1.0)));
  }
  const double base = std::acos(std::clamp(z(d - 2) / last, -1.0, 1.0));
  out.longitude = z(d - 1) >= 0.0 ? base : 2.0 * std::numbers::pi - base;
  return out;
}

/// Inverse of cartesian_to_angular (standard spherical parameterization).
inline UnitVector angular_to_cartesian(const AngularCoords& a) {
  const auto d = static_cast<Eigen::Index>(a.latitudes.size()) + 2;
  Vector z(d);
  double sin_prod = 1.0;
  for (Eigen::Index i = 0; i < d - 2; ++i) {
    const double psi = a.latitudes[static_cast<std::size_t>(i)];
    z(i) = sin_prod * std::cos(psi);
    sin_prod *= std::sin(psi);
  }
  z(d - 2) = sin_prod * std::cos(a.longitude);
  z(d - 1) = sin_prod * std::sin(a.longitude);
  return UnitVector::trusted(std::move(z));
}

}  // namespace manifold
}  // namespace orbis
