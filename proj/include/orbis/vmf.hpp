#pragma once

// von Mises-Fisher special functions on S^{d-1}.
//
// Everything is evaluated in log space, so no intermediate overflows for any
// concentration the model can produce. log I_nu(kappa) is split at a
// threshold beta: a power series below it, an asymptotic expansion above.

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "orbis/manifold.hpp"

namespace orbis {

/// Mean direction and concentration of one concept's distribution.
struct VmfParams {
  UnitVector mu;
  double kappa = 1.0;
};

namespace vmf {

enum class AsymptoticOrder {
  /// Debye uniform expansion with four correction terms. Accurate to ~1e-9 in
  /// log I for kappa > 50 at every order, so the branches join continuously.
  uniform,
  /// The bare large-kappa forms log I ~ kappa - log(2 pi kappa)/2 and
  /// A_d ~ 1 - (d-1)/(2 kappa). Only accurate when kappa >> d.
  leading_order,
};

struct BesselRegime {
  double beta = 50.0;
  AsymptoticOrder order = AsymptoticOrder::uniform;
};

/// A value together with its derivative in kappa.
struct Dual {
  double value = 0.0;
  double deriv = 0.0;
};

namespace detail {

inline void require_positive(double kappa, const char* op) {
  if (!(kappa > 0.0) || !std::isfinite(kappa))
    fail(ErrorKind::numeric, std::string(op) + ": kappa must be positive and finite");
}

/// log I_nu(kappa) from the power series sum_m (kappa/2)^{2m+nu} / (m! Gamma(m+nu+1)),
/// summed with a running log-sum-exp until terms fall below e^-40 of the peak.
inline Dual log_bessel_series(double nu, double kappa) {
  const double log_half = std::log(kappa / 2.0);
  double peak = -std::numeric_limits<double>::infinity();
  double sum = 0.0;     // sum exp(t_m - peak)
  double wsum = 0.0;    // sum exp(t_m - peak) * (2m + nu)
  for (int m = 0; m < 20000; ++m) {
    const double order = 2.0 * m + nu;
    const double t = order * log_half - std::lgamma(m + 1.0) - std::lgamma(m + nu + 1.0);
    if (t > peak) {
      const double scale = std::exp(peak - t);
      sum *= scale;
      wsum *= scale;
      peak = t;
    }
    const double w = std::exp(t - peak);
    sum += w;
    wsum += w * order;
    // Terms are unimodal in m; stop once past the mode and negligible.
    if (m > kappa / 2.0 + 1.0 && t < peak - 40.0) break;
  }
  return {peak + std::log(sum), wsum / sum / kappa};
}

/// Debye coefficients u_k(t) / t^k as polynomials in t^2, with derivatives.
inline Dual debye_poly(int k, double t) {
  const double t2 = t * t;
  switch (k) {
    case 1:
      return {(3.0 - 5.0 * t2) / 24.0, (-10.0 * t) / 24.0};
    case 2:
      return {(81.0 - 462.0 * t2 + 385.0 * t2 * t2) / 1152.0,
              (-924.0 * t + 1540.0 * t2 * t) / 1152.0};
    case 3:
      return {(30375.0 - 369603.0 * t2 + 765765.0 * t2 * t2 - 425425.0 * t2 * t2 * t2) / 414720.0,
              (-739206.0 * t + 3063060.0 * t2 * t - 2552550.0 * t2 * t2 * t) / 414720.0};
    case 4: {
      const double t4 = t2 * t2;
      const double t6 = t4 * t2;
      const double t8 = t4 * t4;
      return {(4465125.0 - 94121676.0 * t2 + 349922430.0 * t4 - 446185740.0 * t6 +
               185910725.0 * t8) / 39813120.0,
              (-188243352.0 * t + 1399689720.0 * t2 * t - 2677114440.0 * t4 * t +
               1487285800.0 * t6 * t) / 39813120.0};
    }
    default:
      return {};
  }
}

/// Uniform asymptotic expansion of log I_nu(kappa) for large kappa.
inline Dual log_bessel_debye(double nu, double kappa) {
  const double r = std::hypot(nu, kappa);
  const double s = 1.0 / r;
  const double t = nu * s;
  const double ds = -kappa * s * s * s;
  const double dt = nu * ds;

  double corr = 0.0;
  double dcorr = 0.0;
  double sk = 1.0;
  for (int k = 1; k <= 4; ++k) {
    const double prev = sk;
    sk *= s;
    const Dual p = debye_poly(k, t);
    corr += sk * p.value;
    dcorr += k * prev * ds * p.value + sk * p.deriv * dt;
  }
  const double lead = nu > 0.0 ? r + nu * std::log(kappa / (nu + r)) : kappa;
  const double value =
      lead - 0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * std::log(r) + std::log1p(corr);
  const double deriv = kappa / (nu + r) + (nu > 0.0 ? nu / kappa : 0.0) -
                       0.5 * kappa * s * s + dcorr / (1.0 + corr);
  return {value, deriv};
}

inline Dual log_bessel_leading(double kappa) {
  return {kappa - 0.5 * std::log(2.0 * std::numbers::pi * kappa), 1.0 - 0.5 / kappa};
}

}  // namespace detail

/// log I_nu(kappa) and its kappa-derivative under the configured regime.
inline Dual log_bessel(double nu, double kappa, const BesselRegime& regime = {}) {
  detail::require_positive(kappa, "log_bessel");
  if (kappa <= regime.beta) return detail::log_bessel_series(nu, kappa);
  if (regime.order == AsymptoticOrder::leading_order) return detail::log_bessel_leading(kappa);
  return detail::log_bessel_debye(nu, kappa);
}

/// log C_d(kappa) = (d/2 - 1) log kappa - (d/2) log(2 pi) - log I_{d/2-1}(kappa),
/// with derivative in kappa.
inline Dual log_norm_const_dual(int d, double kappa, const BesselRegime& regime = {}) {
  if (d < 2) fail(ErrorKind::data, "log_norm_const: dimension must be >= 2");
  detail::require_positive(kappa, "log_norm_const");
  const double nu = d / 2.0 - 1.0;
  const Dual li = log_bessel(nu, kappa, regime);
  return {nu * std::log(kappa) - (d / 2.0) * std::log(2.0 * std::numbers::pi) - li.value,
          nu / kappa - li.deriv};
}

inline double log_norm_const(int d, double kappa, const BesselRegime& regime = {}) {
  return log_norm_const_dual(d, kappa, regime).value;
}

/// Mean resultant length A_d(kappa) = I_{d/2}(kappa) / I_{d/2-1}(kappa), with
/// derivative in kappa.
inline Dual bessel_ratio_dual(int d, double kappa, const BesselRegime& regime = {}) {
  if (d < 2) fail(ErrorKind::data, "bessel_ratio: dimension must be >= 2");
  detail::require_positive(kappa, "bessel_ratio");
  const double nu = d / 2.0 - 1.0;
  if (regime.order == AsymptoticOrder::leading_order) {
    // The closed form is only valid (inside (0, 1)) for kappa > (d-1)/2.
    const double switch_at = std::max(regime.beta, static_cast<double>(d - 1));
    if (kappa > switch_at) {
      const double a = 1.0 - (d - 1) / (2.0 * kappa);
      return {a, (d - 1) / (2.0 * kappa * kappa)};
    }
    const Dual hi = detail::log_bessel_series(nu + 1.0, kappa);
    const Dual lo = detail::log_bessel_series(nu, kappa);
    const double a = std::exp(hi.value - lo.value);
    return {a, a * (hi.deriv - lo.deriv)};
  }
  const Dual hi = log_bessel(nu + 1.0, kappa, regime);
  const Dual lo = log_bessel(nu, kappa, regime);
  const double a = std::exp(hi.value - lo.value);
  return {a, a * (hi.deriv - lo.deriv)};
}

inline double bessel_ratio(int d, double kappa, const BesselRegime& regime = {}) {
  return bessel_ratio_dual(d, kappa, regime).value;
}

/// Partial derivatives of kl_vmf with respect to its scalar inputs; the mean
/// directions enter only through m = <mu_c, mu_p>.
struct KlPartials {
  double value = 0.0;
  double d_kappa_c = 0.0;
  double d_kappa_p = 0.0;
  double d_cos = 0.0;
};

inline KlPartials kl_vmf_partials(int d, double kappa_c, double kappa_p, double cos_mu,
                                  const BesselRegime& regime = {}) {
  const Dual lc = log_norm_const_dual(d, kappa_c, regime);
  const Dual lp = log_norm_const_dual(d, kappa_p, regime);
  const Dual a = bessel_ratio_dual(d, kappa_c, regime);
  // The bracket is formed before scaling by A_d to avoid cancellation.
  const double bracket = kappa_c - kappa_p * cos_mu;
  KlPartials out;
  out.value = lc.value - lp.value + a.value * bracket;
  out.d_kappa_c = lc.deriv + a.deriv * bracket + a.value;
  out.d_kappa_p = -lp.deriv - a.value * cos_mu;
  out.d_cos = -a.value * kappa_p;
  return out;
}

/// KL(vMF_c || vMF_p). Asymmetric; zero when the parameters coincide.
inline double kl_vmf(const VmfParams& c, const VmfParams& p, const BesselRegime& regime = {}) {
  manifold::require_same_dim(c.mu.dim(), p.mu.dim(), "kl_vmf");
  return kl_vmf_partials(static_cast<int>(c.mu.dim()), c.kappa, p.kappa, c.mu.dot(p.mu), regime)
      .value;
}

namespace detail {

/// E[x] = A_d(kappa) mu for x ~ vMF(mu, kappa). Test-facing helper.
inline Vector mean_resultant(const VmfParams& q, const BesselRegime& regime = {}) {
  return bessel_ratio(static_cast<int>(q.mu.dim()), q.kappa, regime) * q.mu.coords();
}

}  // namespace detail
}  // namespace vmf
}  // namespace orbis
