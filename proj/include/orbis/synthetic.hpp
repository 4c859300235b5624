#pragma once

// Planted hierarchies for behavioral tests: a complete tree whose feature
// vectors follow the tree, each child being its parent's direction plus
// Gaussian noise, renormalized.

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "orbis/manifold.hpp"
#include "orbis/taxonomy.hpp"

namespace orbis {

struct PlantedSpec {
  int branching = 4;
  int levels = 3;           // levels below the root
  Eigen::Index dim = 32;    // feature width
  double noise = 0.1;       // per-coordinate standard deviation before normalization
  std::uint64_t seed = 0;
};

struct PlantedTree {
  std::vector<std::string> ids;  // breadth-first, which is also id order
  std::vector<Edge> edges;
  std::map<std::string, Vector> features;
};

namespace synthetic {

inline std::size_t planted_size(const PlantedSpec& s) {
  std::size_t n = 1, level = 1;
  for (int i = 0; i < s.levels; ++i) {
    level *= static_cast<std::size_t>(s.branching);
    n += level;
  }
  return n;
}

inline PlantedTree planted_tree(const PlantedSpec& s) {
  if (s.branching < 1 || s.levels < 1) fail(ErrorKind::usage, "planted tree needs branching >= 1 and levels >= 1");
  if (s.dim < 2) fail(ErrorKind::usage, "planted feature width must be >= 2");
  if (!(s.noise >= 0.0)) fail(ErrorKind::usage, "planted noise must be >= 0");

  const std::size_t n = planted_size(s);
  const std::size_t width = std::to_string(n - 1).size();
  const auto name = [width](std::size_t i) {
    std::string digits = std::to_string(i);
    return "n" + std::string(width - digits.size(), '0') + digits;
  };

  std::mt19937_64 rng(s.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto draw = [&] {
    Vector v(s.dim);
    for (Eigen::Index i = 0; i < s.dim; ++i) v(i) = gauss(rng);
    return v;
  };

  PlantedTree out;
  std::vector<Vector> dirs;
  dirs.reserve(n);
  Vector root = draw();
  dirs.push_back(root / root.norm());
  out.ids.push_back(name(0));
  for (std::size_t i = 1; i < n; ++i) {
    const std::size_t parent = (i - 1) / static_cast<std::size_t>(s.branching);
    Vector v = dirs[parent] + s.noise * draw();
    dirs.push_back(v / v.norm());
    out.ids.push_back(name(i));
    out.edges.push_back({out.ids[i], out.ids[parent]});
  }
  for (std::size_t i = 0; i < n; ++i) out.features.emplace(out.ids[i], dirs[i]);
  return out;
}

}  // namespace synthetic
}  // namespace orbis
