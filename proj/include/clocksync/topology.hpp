#pragma once

#include "clocksync/error.hpp"
#include "clocksync/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <deque>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace clocksync {

// One-based node label as used in files, CSV output and the CLI. Node 1 is
// the reference. Internally nodes are addressed by zero-based index.
class NodeId {
 public:
  constexpr explicit NodeId(int one_based) : value_(one_based) {}
  static constexpr NodeId from_index(std::size_t index) { return NodeId(static_cast<int>(index) + 1); }

  constexpr int value() const { return value_; }
  constexpr std::size_t index() const { return static_cast<std::size_t>(value_ - 1); }
  constexpr bool is_reference() const { return value_ == 1; }

  friend constexpr bool operator==(NodeId, NodeId) = default;

 private:
  int value_;
};

inline constexpr std::size_t kReferenceNode = 0;

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

struct Area {
  double width = 300.0;
  double height = 300.0;
};

// Unordered pair stored with first < second.
struct Edge {
  std::size_t first = 0;
  std::size_t second = 0;

  std::size_t other(std::size_t node) const { return node == first ? second : first; }
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

inline double distance(const Point& a, const Point& b) { return std::hypot(a.x - b.x, a.y - b.y); }

class Topology {
 public:
  Topology() = default;

  // Edges are induced from the positions: {i,j} is an edge iff the distance
  // is at most `radio_range`.
  Topology(std::vector<Point> positions, double radio_range)
      : positions_(std::move(positions)), radio_range_(radio_range) {
    if (radio_range_ < 0.0 || !std::isfinite(radio_range_)) throw ConfigError("radio_range must be finite and >= 0");
    for (std::size_t i = 0; i < positions_.size(); ++i)
      for (std::size_t j = i + 1; j < positions_.size(); ++j)
        if (within_range(i, j)) edges_.push_back({i, j});
    build_neighbors();
  }

  // Explicit edge list, checked against the geometric rule.
  static Topology from_parts(std::vector<Point> positions, double radio_range, std::vector<Edge> edges) {
    Topology t(std::move(positions), radio_range);
    std::set<Edge> given;
    for (Edge e : edges) {
      if (e.first > e.second) std::swap(e.first, e.second);
      if (e.first == e.second) throw ValidationError("self-loop on node " + std::to_string(e.first + 1));
      if (e.second >= t.size()) throw ValidationError("edge references unknown node " + std::to_string(e.second + 1));
      if (!given.insert(e).second)
        throw ValidationError("duplicate edge " + std::to_string(e.first + 1) + "-" + std::to_string(e.second + 1));
      if (!t.within_range(e.first, e.second))
        throw ValidationError("edge " + std::to_string(e.first + 1) + "-" + std::to_string(e.second + 1) +
                              " exceeds radio_range");
    }
    if (given.size() != t.edges_.size()) {
      for (const Edge& e : t.edges_)
        if (!given.count(e))
          throw ValidationError("missing edge " + std::to_string(e.first + 1) + "-" + std::to_string(e.second + 1) +
                                " (within radio_range)");
    }
    return t;
  }

  std::size_t size() const { return positions_.size(); }
  double radio_range() const { return radio_range_; }
  const std::vector<Point>& positions() const { return positions_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<std::size_t>& neighbors(std::size_t node) const { return neighbors_.at(node); }

  bool within_range(std::size_t i, std::size_t j) const {
    return distance(positions_[i], positions_[j]) <= radio_range_;
  }

  std::optional<std::size_t> edge_index(std::size_t a, std::size_t b) const {
    if (a > b) std::swap(a, b);
    auto it = std::lower_bound(edges_.begin(), edges_.end(), Edge{a, b});
    if (it == edges_.end() || *it != Edge{a, b}) return std::nullopt;
    return static_cast<std::size_t>(it - edges_.begin());
  }

  friend bool operator==(const Topology& a, const Topology& b) {
    return a.positions_ == b.positions_ && a.radio_range_ == b.radio_range_ && a.edges_ == b.edges_;
  }

 private:
  void build_neighbors() {
    neighbors_.assign(positions_.size(), {});
    for (const Edge& e : edges_) {
      neighbors_[e.first].push_back(e.second);
      neighbors_[e.second].push_back(e.first);
    }
    for (auto& n : neighbors_) std::sort(n.begin(), n.end());
  }

  std::vector<Point> positions_;
  double radio_range_ = 0.0;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::size_t>> neighbors_;
};

inline Topology generate_random_topology(std::size_t num_nodes, Area area, double radio_range, Rng& rng) {
  if (num_nodes < 1) throw ConfigError("num_nodes must be >= 1");
  if (!(area.width > 0.0) || !(area.height > 0.0)) throw ConfigError("area dimensions must be > 0");
  std::vector<Point> positions(num_nodes);
  for (auto& p : positions) {
    p.x = uniform(rng, 0.0, area.width);
    p.y = uniform(rng, 0.0, area.height);
  }
  return Topology(std::move(positions), radio_range);
}

// Hop count from `source`; -1 for unreachable nodes.
inline std::vector<int> hop_distances(const Topology& t, std::size_t source = kReferenceNode) {
  std::vector<int> depth(t.size(), -1);
  if (t.size() == 0) return depth;
  std::deque<std::size_t> queue{source};
  depth[source] = 0;
  while (!queue.empty()) {
    const std::size_t u = queue.front();
    queue.pop_front();
    for (std::size_t v : t.neighbors(u)) {
      if (depth[v] < 0) {
        depth[v] = depth[u] + 1;
        queue.push_back(v);
      }
    }
  }
  return depth;
}

inline bool is_strongly_connected(const Topology& t) {
  if (t.size() == 0) return false;
  const auto depth = hop_distances(t);
  return std::none_of(depth.begin(), depth.end(), [](int d) { return d < 0; });
}

// Rejection sampling until the network is connected.
inline Topology generate_connected_topology(std::size_t num_nodes, Area area, double radio_range, Rng& rng,
                                            int max_attempts = 100000) {
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    Topology t = generate_random_topology(num_nodes, area, radio_range, rng);
    if (is_strongly_connected(t)) return t;
  }
  throw ConfigError("no connected topology after " + std::to_string(max_attempts) + " attempts");
}

// ---------------------------------------------------------------------------
// Text format (version 1):
//
//   clocksync-topology 1
//   num_nodes <M>
//   radio_range <r>
//   node <id> <x> <y>        one line per node, ids 1..M in order
//   edge <a> <b>             one line per unordered edge
//
// '#' starts a comment line. Reals are written in shortest round-trip form.
// ---------------------------------------------------------------------------

inline constexpr std::string_view kTopologyHeader = "clocksync-topology";
inline constexpr int kTopologyVersion = 1;

inline std::string format_real(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_real(std::string_view text, const std::string& field) {
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) throw ParseError(field, "not a real: '" + std::string(text) + "'");
  return v;
}

inline long long parse_integer(std::string_view text, const std::string& field) {
  long long v = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) throw ParseError(field, "not an integer: '" + std::string(text) + "'");
  return v;
}

inline void write_topology(std::ostream& out, const Topology& t) {
  out << kTopologyHeader << ' ' << kTopologyVersion << '\n';
  out << "num_nodes " << t.size() << '\n';
  out << "radio_range " << format_real(t.radio_range()) << '\n';
  for (std::size_t i = 0; i < t.size(); ++i)
    out << "node " << i + 1 << ' ' << format_real(t.positions()[i].x) << ' ' << format_real(t.positions()[i].y) << '\n';
  for (const Edge& e : t.edges()) out << "edge " << e.first + 1 << ' ' << e.second + 1 << '\n';
}

inline Topology read_topology(std::istream& in) {
  std::string line;
  std::optional<std::size_t> num_nodes;
  std::optional<double> range;
  std::vector<std::optional<Point>> positions;
  std::vector<Edge> edges;
  std::set<Edge> seen;
  bool header = false;
  int line_no = 0;

  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key) || key[0] == '#') continue;
    std::vector<std::string> tok;
    for (std::string s; ls >> s;) tok.push_back(s);
    auto expect = [&](std::size_t n, const std::string& field) {
      if (tok.size() != n)
        throw ParseError(field, "line " + std::to_string(line_no) + ": expected " + std::to_string(n) + " values");
    };

    if (!header) {
      if (key != kTopologyHeader) throw ParseError("header", "missing '" + std::string(kTopologyHeader) + "' line");
      expect(1, "header");
      if (parse_integer(tok[0], "version") != kTopologyVersion) throw ParseError("version", "unsupported version " + tok[0]);
      header = true;
    } else if (key == "num_nodes") {
      expect(1, "num_nodes");
      const long long m = parse_integer(tok[0], "num_nodes");
      if (m < 1) throw ParseError("num_nodes", "must be >= 1");
      num_nodes = static_cast<std::size_t>(m);
      positions.assign(*num_nodes, std::nullopt);
    } else if (key == "radio_range") {
      expect(1, "radio_range");
      range = parse_real(tok[0], "radio_range");
      if (!(*range >= 0.0)) throw ParseError("radio_range", "must be >= 0");
    } else if (key == "node") {
      if (!num_nodes) throw ParseError("node", "appears before num_nodes");
      expect(3, "node");
      const long long id = parse_integer(tok[0], "node");
      const std::string field = "node " + tok[0];
      if (id < 1 || id > static_cast<long long>(*num_nodes)) throw ParseError(field, "id out of range");
      if (positions[id - 1]) throw ParseError(field, "duplicate node");
      positions[id - 1] = Point{parse_real(tok[1], field + " x"), parse_real(tok[2], field + " y")};
    } else if (key == "edge") {
      if (!num_nodes) throw ParseError("edge", "appears before num_nodes");
      expect(2, "edge");
      const std::string field = "edge " + tok[0] + "-" + tok[1];
      long long a = parse_integer(tok[0], field);
      long long b = parse_integer(tok[1], field);
      if (a < 1 || b < 1 || a > static_cast<long long>(*num_nodes) || b > static_cast<long long>(*num_nodes))
        throw ParseError(field, "node id out of range");
      if (a == b) throw ParseError(field, "self-loop");
      Edge e{static_cast<std::size_t>(std::min(a, b) - 1), static_cast<std::size_t>(std::max(a, b) - 1)};
      if (!seen.insert(e).second) throw ParseError(field, "duplicate edge");
      edges.push_back(e);
    } else {
      throw ParseError(key, "unknown field on line " + std::to_string(line_no));
    }
  }
  if (!header) throw ParseError("header", "empty input");
  if (!num_nodes) throw ParseError("num_nodes", "missing");
  if (!range) throw ParseError("radio_range", "missing");
  std::vector<Point> pts;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (!positions[i]) throw ParseError("node " + std::to_string(i + 1), "missing position");
    pts.push_back(*positions[i]);
  }
  return Topology::from_parts(std::move(pts), *range, std::move(edges));
}

inline void save_topology(const Topology& t, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  write_topology(out, t);
  if (!out) throw ConfigError("write to '" + path + "' failed");
}

inline Topology load_topology(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  return read_topology(in);
}

}  // namespace clocksync
