#pragma once

// Model checkpoints as a single JSON document: a header with the shapes and
// the resolved config, the parameter arrays, and the optimizer moments.
// Doubles are written in shortest round-trip form, so save/load is lossless.

#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "orbis/config.hpp"
#include "orbis/encoder.hpp"
#include "orbis/optimizer.hpp"

namespace orbis {

struct Checkpoint {
  RunConfig config;
  ModelParams params;
  ModelOptimizer optimizer;
  int epochs_completed = 0;
};

namespace checkpoint {

using nlohmann::json;

inline constexpr int kFormatVersion = 1;

inline json to_json(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

inline json to_json(const Matrix& m) {
  // Row-major element order regardless of Eigen's storage.
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

inline Vector vector_from(const json& j) {
  const auto xs = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(xs.data(), static_cast<Eigen::Index>(xs.size()));
}

inline Matrix matrix_from(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) fail(ErrorKind::data, "checkpoint: matrix size mismatch");
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)];
  return m;
}

inline json adam_to_json(const AdamState& s) {
  return {{"m", to_json(s.m)}, {"v", to_json(s.v)}, {"step", s.step}};
}

inline AdamState adam_from(const json& j) {
  return {vector_from(j.at("m")), vector_from(j.at("v")), j.at("step").get<long>()};
}

inline json rows_to_json(const std::vector<std::vector<RiemannianAdamState>>& layers) {
  json out = json::array();
  for (const auto& layer : layers) {
    json rows = json::array();
    for (const auto& s : layer) rows.push_back({{"m", to_json(s.m)}, {"v", s.v}, {"step", s.step}});
    out.push_back(rows);
  }
  return out;
}

inline std::vector<std::vector<RiemannianAdamState>> rows_from(const json& j) {
  std::vector<std::vector<RiemannianAdamState>> out;
  for (const auto& layer : j) {
    std::vector<RiemannianAdamState> rows;
    for (const auto& s : layer) rows.push_back({vector_from(s.at("m")), s.at("v").get<double>(), s.at("step").get<long>()});
    out.push_back(std::move(rows));
  }
  return out;
}

inline std::vector<Eigen::Index> layer_sizes(const std::vector<Matrix>& layers) {
  std::vector<Eigen::Index> out;
  if (layers.empty()) return out;
  out.push_back(layers.front().cols());
  for (const auto& w : layers) out.push_back(w.rows());
  return out;
}

inline json to_json(const Checkpoint& c) {
  json cfg = json::object();
  std::istringstream echo(c.config.echo());
  std::string line;
  while (std::getline(echo, line)) {
    const auto eq = line.find(" = ");
    cfg[line.substr(0, eq)] = line.substr(eq + 3);
  }
  const auto& p = c.params;
  json layers = json::array(), mu_layers = json::array();
  for (const auto& w : p.layers) layers.push_back(to_json(w));
  for (const auto& w : p.mu_layers) mu_layers.push_back(to_json(w));

  const auto& opt = c.optimizer;
  json optimizer = {
      {"steps", opt.steps()},
      {"layers", rows_to_json(opt.layer_states())},
      {"mu_layers", rows_to_json(opt.mu_layer_states())},
      {"adapter", adam_to_json(opt.adapter_state())},
      {"kappa_weights", adam_to_json(opt.kappa_weight_state())},
      {"kappa_bias", adam_to_json(opt.kappa_bias_state())},
  };
  return {
      {"format_version", kFormatVersion},
      {"d", p.dim()},
      {"d_plm", p.input_dim()},
      {"layer_sizes", layer_sizes(p.layers)},
      {"mu_layer_sizes", layer_sizes(p.mu_layers)},
      {"kappa_max", c.config.model.kappa_max},
      {"epochs_completed", c.epochs_completed},
      {"config", cfg},
      {"params",
       {{"adapter", to_json(p.adapter)},
        {"layers", layers},
        {"mu_layers", mu_layers},
        {"kappa_weights", to_json(p.kappa_weights)},
        {"kappa_bias", p.kappa_bias}}},
      {"optimizer", optimizer},
  };
}

inline Checkpoint from_json(const json& j) {
  try {
    if (j.at("format_version").get<int>() != kFormatVersion) fail(ErrorKind::data, "checkpoint: unsupported format version");
    Checkpoint c;
    for (const auto& [key, value] : j.at("config").items()) c.config.set(key, value.get<std::string>());
    c.config.validate();
    c.epochs_completed = j.at("epochs_completed").get<int>();

    const auto& p = j.at("params");
    c.params.adapter = matrix_from(p.at("adapter"));
    for (const auto& w : p.at("layers")) c.params.layers.push_back(matrix_from(w));
    for (const auto& w : p.at("mu_layers")) c.params.mu_layers.push_back(matrix_from(w));
    c.params.kappa_weights = vector_from(p.at("kappa_weights"));
    c.params.kappa_bias = p.at("kappa_bias").get<double>();
    if (c.params.dim() != j.at("d").get<Eigen::Index>() || c.params.input_dim() != j.at("d_plm").get<Eigen::Index>())
      fail(ErrorKind::data, "checkpoint: header shape disagrees with parameters");
    if (c.params.dim() != c.config.model.dim || c.params.kappa_weights.size() != c.params.dim())
      fail(ErrorKind::data, "checkpoint: embedding dimension mismatch");

    const auto& o = j.at("optimizer");
    c.optimizer = ModelOptimizer(c.params, c.config.train.sphere_hyper(), c.config.train.euclid_hyper());
    c.optimizer.layer_states() = rows_from(o.at("layers"));
    c.optimizer.mu_layer_states() = rows_from(o.at("mu_layers"));
    c.optimizer.adapter_state() = adam_from(o.at("adapter"));
    c.optimizer.kappa_weight_state() = adam_from(o.at("kappa_weights"));
    c.optimizer.kappa_bias_state() = adam_from(o.at("kappa_bias"));
    c.optimizer.set_steps(o.at("steps").get<long>());
    return c;
  } catch (const json::exception& e) {
    fail(ErrorKind::data, std::string("checkpoint: ") + e.what());
  }
}

inline void save(const std::string& path, const Checkpoint& c) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::data, "cannot write " + path);
  out << to_json(c).dump(1) << '\n';
}

inline Checkpoint load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::data, "cannot read " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorKind::data, path + ": " + e.what());
  }
  return from_json(j);
}

}  // namespace checkpoint
}  // namespace orbis
