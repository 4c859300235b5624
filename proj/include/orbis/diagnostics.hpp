#pragma once

// Empirical checks of sphere geometry: uniform sampling, polar-cap mass
// against the concentration bound, and angular-coordinate histograms.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "orbis/manifold.hpp"

namespace orbis {

struct AngleHistogram {
  int bins = 60;
  std::vector<double> latitude_edges;   // bins + 1 edges over [0, pi]
  std::vector<double> longitude_edges;  // bins + 1 edges over [0, 2 pi]
  std::vector<std::vector<std::size_t>> latitude_counts;  // one row per psi_i
  std::vector<std::size_t> longitude_counts;
  std::size_t degenerate = 0;  // too close to the chart's singular set
  std::size_t total = 0;
  double mean_abs_last = 0.0;               // mean |z_d|
  std::vector<double> latitude_kurtosis;    // excess kurtosis per psi_i
};

struct ConcentrationResult {
  double empirical = 0.0;  // fraction with |<z, e_d>| >= epsilon
  double bound = 0.0;      // 2 exp(-d epsilon^2 / 2)
  double slack = 0.0;      // 3 sqrt(bound / n)
  bool pass = false;
};

namespace diagnostics {

inline constexpr double kSingularTolerance = 1e-6;
inline constexpr int kDefaultBins = 60;

/// n points uniform on S^{d-1}: Gaussian draws, then normalized.
inline std::vector<UnitVector> uniform_sphere_sample(Eigen::Index d, std::size_t n, std::uint64_t seed) {
  if (d < 2) fail(ErrorKind::usage, "dimension must be >= 2");
  if (n < 1) fail(ErrorKind::usage, "sample size must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<UnitVector> out;
  out.reserve(n);
  Vector x(d);
  while (out.size() < n) {
    for (Eigen::Index i = 0; i < d; ++i) x(i) = gauss(rng);
    if (x.squaredNorm() == 0.0) continue;
    out.push_back(manifold::normalize(x, 0.0));
  }
  return out;
}

inline double cap_bound(Eigen::Index d, double epsilon) {
  return 2.0 * std::exp(-static_cast<double>(d) * epsilon * epsilon / 2.0);
}

/// Monte Carlo mass of the two polar caps |z_d| >= epsilon against the bound.
inline ConcentrationResult concentration_check(Eigen::Index d, double epsilon, std::size_t n,
                                               std::uint64_t seed) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) fail(ErrorKind::usage, "epsilon must be in (0, 1)");
  const auto samples = uniform_sphere_sample(d, n, seed);
  std::size_t hits = 0;
  for (const auto& z : samples)
    if (std::abs(z(d - 1)) >= epsilon) ++hits;
  ConcentrationResult r;
  r.empirical = static_cast<double>(hits) / static_cast<double>(n);
  r.bound = cap_bound(d, epsilon);
  r.slack = 3.0 * std::sqrt(r.bound / static_cast<double>(n));
  r.pass = r.empirical <= r.bound + r.slack;
  return r;
}

inline std::vector<double> linear_edges(double lo, double hi, int bins) {
  std::vector<double> e(static_cast<std::size_t>(bins) + 1);
  for (int i = 0; i <= bins; ++i) e[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / bins;
  return e;
}

inline std::size_t bin_of(double v, double lo, double hi, int bins) {
  const auto b = static_cast<long>(std::floor((v - lo) / (hi - lo) * bins));
  return static_cast<std::size_t>(std::clamp(b, 0L, static_cast<long>(bins) - 1));
}

inline double excess_kurtosis(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double m2 = 0.0, m4 = 0.0;
  for (double x : xs) {
    const double dx = (x - mean) * (x - mean);
    m2 += dx;
    m4 += dx * dx;
  }
  m2 /= static_cast<double>(xs.size());
  m4 /= static_cast<double>(xs.size());
  return m2 == 0.0 ? 0.0 : m4 / (m2 * m2) - 3.0;
}

/// Histograms of the angular chart over a set of embeddings. Points within
/// kSingularTolerance of the singular set go to the degenerate count and are
/// left out of the angle histograms, but still enter mean |z_d|.
inline AngleHistogram angle_histograms(std::span<const UnitVector> zs, int bins = kDefaultBins) {
  if (zs.empty()) fail(ErrorKind::data, "no embeddings to histogram");
  if (bins < 1) fail(ErrorKind::usage, "bins must be >= 1");
  const Eigen::Index d = zs.front().dim();
  const auto n_lat = static_cast<std::size_t>(d - 2);

  AngleHistogram h;
  h.bins = bins;
  h.latitude_edges = linear_edges(0.0, std::numbers::pi, bins);
  h.longitude_edges = linear_edges(0.0, 2.0 * std::numbers::pi, bins);
  h.latitude_counts.assign(n_lat, std::vector<std::size_t>(static_cast<std::size_t>(bins), 0));
  h.longitude_counts.assign(static_cast<std::size_t>(bins), 0);
  std::vector<std::vector<double>> lat_values(n_lat);

  double abs_sum = 0.0;
  for (const auto& z : zs) {
    manifold::require_same_dim(d, z.dim(), "angle_histograms");
    ++h.total;
    abs_sum += std::abs(z(d - 1));
    AngularCoords a;
    try {
      a = manifold::cartesian_to_angular(z, kSingularTolerance);
    } catch (const Error&) {
      ++h.degenerate;
      continue;
    }
    for (std::size_t i = 0; i < n_lat; ++i) {
      ++h.latitude_counts[i][bin_of(a.latitudes[i], 0.0, std::numbers::pi, bins)];
      lat_values[i].push_back(a.latitudes[i]);
    }
    ++h.longitude_counts[bin_of(a.longitude, 0.0, 2.0 * std::numbers::pi, bins)];
  }
  h.mean_abs_last = abs_sum / static_cast<double>(h.total);
  for (const auto& v : lat_values) h.latitude_kurtosis.push_back(excess_kurtosis(v));
  return h;
}

/// CSV with columns coordinate,bin_low,bin_high,count.
inline void write_histogram_csv(std::ostream& os, const AngleHistogram& h) {
  os << "coordinate,bin_low,bin_high,count\n";
  os << std::setprecision(17);
  const auto rows = [&](const std::string& name, const std::vector<double>& edges,
                        const std::vector<std::size_t>& counts) {
    for (std::size_t b = 0; b < counts.size(); ++b)
      os << name << ',' << edges[b] << ',' << edges[b + 1] << ',' << counts[b] << '\n';
  };
  rows("theta", h.longitude_edges, h.longitude_counts);
  for (std::size_t i = 0; i < h.latitude_counts.size(); ++i)
    rows("psi_" + std::to_string(i + 1), h.latitude_edges, h.latitude_counts[i]);
}

inline void write_histogram_summary(std::ostream& os, const AngleHistogram& h) {
  double mean_kurt = 0.0;
  for (double k : h.latitude_kurtosis) mean_kurt += k;
  if (!h.latitude_kurtosis.empty()) mean_kurt /= static_cast<double>(h.latitude_kurtosis.size());
  os << std::setprecision(10);
  os << "samples: " << h.total << '\n';
  os << "degenerate: " << h.degenerate << '\n';
  os << "bins: " << h.bins << '\n';
  os << "mean_abs_last: " << h.mean_abs_last << '\n';
  os << "mean_latitude_excess_kurtosis: " << mean_kurt << '\n';
}

}  // namespace diagnostics
}  // namespace orbis
