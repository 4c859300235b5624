#pragma once

// Tab-separated file formats:
//   edges        child<TAB>parent
//   vocab        id<TAB>display_name   (display name optional)
//   features     id<TAB>f1<TAB>...<TAB>fn
//   queries      query_id<TAB>gold_1[,gold_2,...]
//   predictions  query_id<TAB>rank<TAB>candidate_id<TAB>score
// Blank lines and lines starting with '#' are skipped on input.

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "orbis/inference.hpp"
#include "orbis/manifold.hpp"
#include "orbis/taxonomy.hpp"

namespace orbis::io {

/// Shortest text that reads back to the same double.
inline std::string format_double(double x) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

inline double parse_double(std::string_view s, const std::string& where) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    fail(ErrorKind::data, where + ": not a number: '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::data, "cannot read " + path);
  return in;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::data, "cannot write " + path);
  return out;
}

/// Calls f(fields, location) for every record line.
template <class F>
void for_each_record(const std::string& path, F&& f) {
  auto in = open_in(path);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    f(split(line, '\t'), path + ":" + std::to_string(n));
  }
}

inline std::vector<Edge> read_edges(const std::string& path) {
  std::vector<Edge> out;
  for_each_record(path, [&](const std::vector<std::string>& f, const std::string& where) {
    if (f.size() != 2 || f[0].empty() || f[1].empty()) fail(ErrorKind::data, where + ": expected child<TAB>parent");
    out.push_back({f[0], f[1]});
  });
  return out;
}

inline void write_edges(const std::string& path, const std::vector<Edge>& edges) {
  auto out = open_out(path);
  for (const auto& e : edges) out << e.child << '\t' << e.parent << '\n';
}

/// Node ids in file order; display names are ignored.
inline std::vector<std::string> read_vocab(const std::string& path) {
  std::vector<std::string> out;
  for_each_record(path, [&](const std::vector<std::string>& f, const std::string& where) {
    if (f.empty() || f[0].empty() || f.size() > 2) fail(ErrorKind::data, where + ": expected id[<TAB>name]");
    out.push_back(f[0]);
  });
  return out;
}

inline void write_vocab(const std::string& path, const std::vector<std::string>& ids) {
  auto out = open_out(path);
  for (const auto& id : ids) out << id << '\n';
}

/// Loads a taxonomy from an edge file and an optional vocab file.
inline Taxonomy read_taxonomy(const std::string& edges, const std::string& vocab = {}) {
  std::vector<std::string> declared;
  if (!vocab.empty()) declared = read_vocab(vocab);
  return Taxonomy::build(read_edges(edges), declared);
}

inline std::map<std::string, Vector> read_features(const std::string& path) {
  std::map<std::string, Vector> out;
  Eigen::Index dim = -1;
  for_each_record(path, [&](const std::vector<std::string>& f, const std::string& where) {
    if (f.size() < 2 || f[0].empty()) fail(ErrorKind::data, where + ": expected id<TAB>f1<TAB>...");
    const auto n = static_cast<Eigen::Index>(f.size() - 1);
    if (dim < 0) dim = n;
    if (n != dim) fail(ErrorKind::data, where + ": feature width differs from earlier rows");
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = parse_double(f[static_cast<std::size_t>(i) + 1], where);
    if (!out.emplace(f[0], std::move(v)).second) fail(ErrorKind::data, where + ": duplicate id " + f[0]);
  });
  if (out.empty()) fail(ErrorKind::data, path + ": no feature rows");
  return out;
}

inline void write_features(const std::string& path, const std::map<std::string, Vector>& features) {
  auto out = open_out(path);
  for (const auto& [id, v] : features) {
    out << id;
    for (Eigen::Index i = 0; i < v.size(); ++i) out << '\t' << format_double(v(i));
    out << '\n';
  }
}

/// Feature rows for every node of `t`, in node order. Missing rows are listed
/// in the error.
inline std::vector<Vector> features_for(const Taxonomy& t, const std::map<std::string, Vector>& features) {
  std::vector<Vector> out;
  std::vector<std::string> missing;
  for (const auto& id : t.ids()) {
    const auto it = features.find(id);
    if (it == features.end()) {
      missing.push_back(id);
      continue;
    }
    out.push_back(it->second);
  }
  if (!missing.empty()) {
    std::string msg = "missing feature rows for:";
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg += " " + missing[i];
    if (missing.size() > 20) msg += " ... (" + std::to_string(missing.size()) + " total)";
    fail(ErrorKind::data, msg);
  }
  return out;
}

inline std::vector<taxonomy::Query> read_queries(const std::string& path) {
  std::vector<taxonomy::Query> out;
  for_each_record(path, [&](const std::vector<std::string>& f, const std::string& where) {
    if (f.empty() || f[0].empty() || f.size() > 2) fail(ErrorKind::data, where + ": expected query<TAB>gold,...");
    taxonomy::Query q{f[0], {}};
    if (f.size() == 2 && !f[1].empty()) q.gold = split(f[1], ',');
    out.push_back(std::move(q));
  });
  return out;
}

inline void write_queries(const std::string& path, const std::vector<taxonomy::Query>& queries) {
  auto out = open_out(path);
  for (const auto& q : queries) {
    out << q.id << '\t';
    for (std::size_t i = 0; i < q.gold.size(); ++i) out << (i ? "," : "") << q.gold[i];
    out << '\n';
  }
}

inline void write_predictions(std::ostream& out, const std::vector<RankedList>& lists) {
  for (const auto& l : lists)
    for (std::size_t i = 0; i < l.entries.size(); ++i)
      out << l.query << '\t' << i + 1 << '\t' << l.entries[i].candidate << '\t'
          << format_double(l.entries[i].score) << '\n';
}

inline void write_predictions(const std::string& path, const std::vector<RankedList>& lists) {
  auto out = open_out(path);
  write_predictions(out, lists);
}

/// Groups prediction lines by query (first-seen order) and orders each list
/// by its rank column.
inline std::vector<RankedList> read_predictions(const std::string& path) {
  std::vector<RankedList> out;
  std::map<std::string, std::size_t> slot;
  std::vector<std::vector<std::pair<long, RankedEntry>>> rows;
  for_each_record(path, [&](const std::vector<std::string>& f, const std::string& where) {
    if (f.size() != 4) fail(ErrorKind::data, where + ": expected query<TAB>rank<TAB>candidate<TAB>score");
    long rank = 0;
    const auto r = std::from_chars(f[1].data(), f[1].data() + f[1].size(), rank);
    if (r.ec != std::errc() || r.ptr != f[1].data() + f[1].size() || rank < 1)
      fail(ErrorKind::data, where + ": bad rank '" + f[1] + "'");
    auto [it, fresh] = slot.emplace(f[0], out.size());
    if (fresh) {
      out.push_back({f[0], {}});
      rows.emplace_back();
    }
    rows[it->second].push_back({rank, {f[2], parse_double(f[3], where)}});
  });
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto& r = rows[i];
    std::stable_sort(r.begin(), r.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto& [rank, e] : r) out[i].entries.push_back(std::move(e));
  }
  return out;
}

}  // namespace orbis::io
