#pragma once
/// \file mesh_forest.hpp
/// \brief Macro topology, admissible labeling and the newest-vertex bisection
///        forest over M copies of the reference triangle.
///
/// Every macro element i carries its own copy of the parametric domain
/// Omega = conv{(0,0), (1,0), (0,1)}; local macro vertex k sits at the k-th
/// corner of Omega. Leaf vertices are dyadic rationals with the fixed
/// denominator 2^kDyadicBits, so node identity across macro patches reduces to
/// integer comparison of a canonical NodeKey.

#include "lbafem/common.hpp"

#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace lbafem {

inline constexpr int kDyadicBits = 48;
inline constexpr std::int64_t kDyadicUnit = std::int64_t{1} << kDyadicBits;

/// Point of Omega with coordinates x / 2^48, y / 2^48.
struct DyadicPoint {
  std::int64_t x = 0;
  std::int64_t y = 0;

  friend bool operator==(const DyadicPoint&, const DyadicPoint&) = default;

  Vec2 to_vec() const {
    return {std::ldexp(static_cast<double>(x), -kDyadicBits),
            std::ldexp(static_cast<double>(y), -kDyadicBits)};
  }
};

inline DyadicPoint midpoint(const DyadicPoint& a, const DyadicPoint& b) {
  const std::int64_t sx = a.x + b.x;
  const std::int64_t sy = a.y + b.y;
  if ((sx & 1) != 0 || (sy & 1) != 0)
    throw RefinementDepthExceeded("dyadic resolution of 2^-48 exhausted");
  return {sx / 2, sy / 2};
}

// Node keys
// ---------

enum class NodeKind : std::uint8_t { Vertex, Edge, Interior };

/// Canonical identity of a point of the macro surface.
///  - Vertex:   a = global macro vertex id
///  - Edge:     a < b global vertex ids of the macro edge, c = parameter from a
///              towards b in units of the key scale
///  - Interior: a = macro id, (b, c) = local coordinates in key-scale units
struct NodeKey {
  NodeKind kind = NodeKind::Vertex;
  std::int64_t a = 0;
  std::int64_t b = 0;
  std::int64_t c = 0;

  friend auto operator<=>(const NodeKey&, const NodeKey&) = default;
};

struct NodeKeyHash {
  std::size_t operator()(const NodeKey& k) const noexcept {
    std::uint64_t h = static_cast<std::uint64_t>(k.kind) * 0x9E3779B97F4A7C15ull;
    for (std::int64_t v : {k.a, k.b, k.c}) {
      h ^= static_cast<std::uint64_t>(v) + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
    }
    return static_cast<std::size_t>(h);
  }
};

// Macro topology
// --------------

/// Identification of one interior macro edge shared by two macro elements.
/// Local edge k of a triangle is the edge opposite local vertex k.
struct FaceIdentification {
  std::array<int, 2> element{};
  std::array<int, 2> local_edge{};
  /// True when the two sides traverse the edge in opposite local directions.
  bool reversed = false;
};

struct MacroTopology {
  std::vector<Vec3> vertex_positions;
  std::vector<std::array<int, 3>> macro_elements;
  /// Optional supplied labeling: per macro element, the local edge labelled 0.
  /// Empty means "assign by the search heuristic".
  std::vector<int> refinement_edges;

  // Filled by analyze().
  std::vector<FaceIdentification> face_identifications;
  /// (macro element, local edge) pairs on the boundary of the macro surface.
  std::vector<std::pair<int, int>> boundary_edges;
  bool closed = false;
  /// neighbor[e][k] = (element, local edge) across local edge k, or (-1,-1).
  std::vector<std::array<std::pair<int, int>, 3>> neighbor;
  std::vector<char> vertex_on_boundary;
  /// Lowest-id macro element (and local index) containing each vertex / edge.
  std::vector<std::pair<int, int>> vertex_owner;
  std::unordered_map<std::uint64_t, std::pair<int, int>> edge_owner;

  std::size_t size() const { return macro_elements.size(); }

  std::pair<int, int> edge_vertices(int element, int local_edge) const {
    const auto& t = macro_elements[static_cast<std::size_t>(element)];
    return {t[static_cast<std::size_t>((local_edge + 1) % 3)],
            t[static_cast<std::size_t>((local_edge + 2) % 3)]};
  }

  bool is_boundary_edge(int element, int local_edge) const {
    return neighbor[static_cast<std::size_t>(element)][static_cast<std::size_t>(local_edge)]
               .first < 0;
  }

  /// Checks the 2-manifold structure and fills the derived fields.
  void analyze() {
    const auto n_vertices = static_cast<int>(vertex_positions.size());
    std::unordered_map<std::uint64_t, std::vector<std::pair<int, int>>> edges;
    for (std::size_t e = 0; e < macro_elements.size(); ++e) {
      const auto& t = macro_elements[e];
      for (int v : t)
        if (v < 0 || v >= n_vertices)
          throw NonManifoldTopology("vertex id out of range in macro element " +
                                    std::to_string(e));
      if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2])
        throw NonManifoldTopology("repeated vertex in macro element " + std::to_string(e));
      for (int k = 0; k < 3; ++k) {
        auto [a, b] = edge_vertices(static_cast<int>(e), k);
        edges[pair_key(a, b)].emplace_back(static_cast<int>(e), k);
      }
    }
    neighbor.assign(macro_elements.size(), {std::pair{-1, -1}, std::pair{-1, -1}, std::pair{-1, -1}});
    vertex_owner.assign(vertex_positions.size(), {-1, -1});
    edge_owner.clear();
    for (std::size_t e = 0; e < macro_elements.size(); ++e)
      for (int k = 0; k < 3; ++k) {
        auto& v = vertex_owner[static_cast<std::size_t>(macro_elements[e][static_cast<std::size_t>(k)])];
        if (v.first < 0) v = {static_cast<int>(e), k};
        auto [a, b] = edge_vertices(static_cast<int>(e), k);
        edge_owner.try_emplace(pair_key(a, b), static_cast<int>(e), k);
      }
    face_identifications.clear();
    boundary_edges.clear();
    vertex_on_boundary.assign(vertex_positions.size(), 0);
    for (std::size_t e = 0; e < macro_elements.size(); ++e) {
      for (int k = 0; k < 3; ++k) {
        auto [a, b] = edge_vertices(static_cast<int>(e), k);
        const auto& users = edges[pair_key(a, b)];
        if (users.size() > 2)
          throw NonManifoldTopology("edge (" + std::to_string(a) + "," + std::to_string(b) +
                                    ") shared by " + std::to_string(users.size()) +
                                    " macro elements");
        if (users.size() == 1) {
          boundary_edges.emplace_back(static_cast<int>(e), k);
          vertex_on_boundary[static_cast<std::size_t>(a)] = 1;
          vertex_on_boundary[static_cast<std::size_t>(b)] = 1;
          continue;
        }
        const auto other = users[0].first == static_cast<int>(e) && users[0].second == k
                               ? users[1]
                               : users[0];
        neighbor[e][static_cast<std::size_t>(k)] = other;
        if (static_cast<int>(e) < other.first) {
          auto [oa, ob] = edge_vertices(other.first, other.second);
          FaceIdentification id;
          id.element = {static_cast<int>(e), other.first};
          id.local_edge = {k, other.second};
          id.reversed = (oa == b && ob == a);
          face_identifications.push_back(id);
        }
      }
    }
    closed = boundary_edges.empty();
  }

  /// Canonical key of the local point (X, Y) / scale of macro element `element`.
  NodeKey key_of(int element, std::int64_t X, std::int64_t Y, std::int64_t scale) const {
    const std::array<std::int64_t, 3> bary{scale - X - Y, X, Y};
    const auto& t = macro_elements[static_cast<std::size_t>(element)];
    int zeros = 0;
    int zero_index = -1;
    int nonzero_index = -1;
    for (int k = 0; k < 3; ++k) {
      if (bary[static_cast<std::size_t>(k)] == 0) {
        ++zeros;
        zero_index = k;
      } else {
        nonzero_index = k;
      }
    }
    if (zeros == 2) return {NodeKind::Vertex, t[static_cast<std::size_t>(nonzero_index)], 0, 0};
    if (zeros == 1) {
      const int i = (zero_index + 1) % 3;
      const int j = (zero_index + 2) % 3;
      const int ga = t[static_cast<std::size_t>(i)];
      const int gb = t[static_cast<std::size_t>(j)];
      const std::int64_t param =
          ga < gb ? bary[static_cast<std::size_t>(j)] : bary[static_cast<std::size_t>(i)];
      return {NodeKind::Edge, std::min(ga, gb), std::max(ga, gb), param};
    }
    return {NodeKind::Interior, element, X, Y};
  }

  /// Canonical (macro element, macro parameter) of a key: vertices and edges
  /// are read in the lowest-id macro element containing them, so the chart
  /// value of a node does not depend on which leaf asks for it.
  std::pair<int, Vec2> canonical_point(const NodeKey& key, std::int64_t scale) const {
    std::array<std::int64_t, 3> bary{0, 0, 0};
    int macro = 0;
    switch (key.kind) {
      case NodeKind::Vertex: {
        const auto [e, k] = vertex_owner[static_cast<std::size_t>(key.a)];
        macro = e;
        bary[static_cast<std::size_t>(k)] = scale;
        break;
      }
      case NodeKind::Edge: {
        const auto [e, k] = edge_owner.at(pair_key(static_cast<int>(key.a), static_cast<int>(key.b)));
        macro = e;
        const int i = (k + 1) % 3;
        const int j = (k + 2) % 3;
        const auto& t = macro_elements[static_cast<std::size_t>(e)];
        const bool forward = t[static_cast<std::size_t>(i)] == key.a;
        bary[static_cast<std::size_t>(forward ? j : i)] = key.c;
        bary[static_cast<std::size_t>(forward ? i : j)] = scale - key.c;
        break;
      }
      case NodeKind::Interior:
        macro = static_cast<int>(key.a);
        bary = {scale - key.b - key.c, key.b, key.c};
        break;
    }
    const double s = static_cast<double>(scale);
    return {macro, Vec2(static_cast<double>(bary[1]) / s, static_cast<double>(bary[2]) / s)};
  }

  /// True when the key lies on the boundary of the macro surface.
  bool key_on_boundary(const NodeKey& key) const {
    switch (key.kind) {
      case NodeKind::Vertex:
        return vertex_on_boundary[static_cast<std::size_t>(key.a)] != 0;
      case NodeKind::Edge:
        for (const auto& [e, k] : boundary_edges) {
          auto [a, b] = edge_vertices(e, k);
          if (std::min(a, b) == key.a && std::max(a, b) == key.b) return true;
        }
        return false;
      case NodeKind::Interior:
        return false;
    }
    return false;
  }

  static std::uint64_t pair_key(int a, int b) {
    const auto lo = static_cast<std::uint64_t>(std::min(a, b));
    const auto hi = static_cast<std::uint64_t>(std::max(a, b));
    return (lo << 32) | hi;
  }
};

/// Checks a supplied labeling: every shared macro edge must be labelled 0 on
/// both sides or on neither.
inline bool labeling_is_admissible(const MacroTopology& topo, std::span<const int> zero_edge) {
  if (zero_edge.size() != topo.size()) return false;
  for (std::size_t e = 0; e < topo.size(); ++e) {
    const int k = zero_edge[e];
    if (k < 0 || k > 2) return false;
    for (int j = 0; j < 3; ++j) {
      const auto [f, fj] = topo.neighbor[e][static_cast<std::size_t>(j)];
      if (f < 0) continue;
      const bool here = (j == k);
      const bool there = (zero_edge[static_cast<std::size_t>(f)] == fj);
      if (here != there) return false;
    }
  }
  return true;
}

/// Searches an admissible labeling: each macro element gets exactly one
/// 0-edge, shared 0-edges pair up the two neighbours. Interior edges are tried
/// before boundary edges; the search backtracks and gives up after
/// `step_limit` assignments.
inline std::optional<std::vector<int>> find_admissible_labeling(const MacroTopology& topo,
                                                                long step_limit = 2'000'000) {
  std::vector<int> zero(topo.size(), -1);
  long steps = 0;
  std::function<bool(std::size_t)> assign = [&](std::size_t from) -> bool {
    std::size_t e = from;
    while (e < zero.size() && zero[e] >= 0) ++e;
    if (e == zero.size()) return true;
    if (++steps > step_limit) return false;
    for (int pass = 0; pass < 2; ++pass) {
      for (int k = 0; k < 3; ++k) {
        const auto [f, fk] = topo.neighbor[e][static_cast<std::size_t>(k)];
        const bool boundary = f < 0;
        if ((pass == 0) == boundary) continue;
        if (boundary) {
          zero[e] = k;
          if (assign(e + 1)) return true;
          zero[e] = -1;
        } else if (zero[static_cast<std::size_t>(f)] < 0) {
          zero[e] = k;
          zero[static_cast<std::size_t>(f)] = fk;
          if (assign(e + 1)) return true;
          zero[e] = -1;
          zero[static_cast<std::size_t>(f)] = -1;
        }
      }
    }
    return false;
  };
  if (!assign(0)) return std::nullopt;
  return zero;
}

// Parametric simplices and the forest
// -----------------------------------

/// Node of the bisection forest. Local vertex 0 is the newest vertex, so the
/// refinement edge is always local edge 0 (vertices 1 and 2).
struct ParametricSimplex {
  int macro_id = 0;
  std::array<DyadicPoint, 3> vertices{};
  std::array<int, 3> vertex_ids{};
  int generation = 0;
  int refinement_edge = 0;
  int parent = -1;
  std::array<int, 2> children{-1, -1};

  bool is_leaf() const { return children[0] < 0; }
  /// |T̂| = |Omega| 2^-generation, exact.
  double area() const { return std::ldexp(0.5, -generation); }
};

/// h_T = |T̂|^(1/2).
inline double mesh_size(const ParametricSimplex& t) { return std::sqrt(t.area()); }

inline constexpr int kBoundaryMark = -1;

/// Affine correspondence of a shared face: the point with parameter s in [0,1]
/// is self_a + s (self_b - self_a) on this side and
/// other_a + s (other_b - other_a) on the neighbour, in the respective
/// macro-local parametric coordinates.
struct FaceCorrespondence {
  Vec2 self_a = Vec2::Zero();
  Vec2 self_b = Vec2::Zero();
  Vec2 other_a = Vec2::Zero();
  Vec2 other_b = Vec2::Zero();
};

struct FaceNeighbor {
  int local_face = 0;
  /// Neighbouring leaf id, or kBoundaryMark.
  int neighbor = kBoundaryMark;
  int neighbor_face = -1;
  bool cross_patch = false;
  FaceCorrespondence map;
};

struct RefineStats {
  std::size_t marked = 0;
  std::size_t bisections = 0;
  std::size_t closure_bisections = 0;
};

struct RefinementCounters {
  std::size_t initial_elements = 0;
  std::size_t cumulative_marked = 0;
  std::size_t cumulative_closure = 0;
  /// Per refine call: (#marked, #leaves after the call).
  std::vector<std::pair<std::size_t, std::size_t>> calls;

  /// Measured constant of #T_k - #T_0 <= C sum_j #M_j after the last call.
  double complexity_constant(std::size_t leaves) const {
    if (cumulative_marked == 0) return 0.0;
    return static_cast<double>(leaves - initial_elements) /
           static_cast<double>(cumulative_marked);
  }
};

class ConformingMesh {
 public:
  /// Builds the initial mesh: one leaf per macro element with the labelled
  /// 0-edge as refinement edge.
  explicit ConformingMesh(MacroTopology topology) : topo_(std::move(topology)) {
    topo_.analyze();
    std::vector<int> zero;
    if (!topo_.refinement_edges.empty()) {
      if (!labeling_is_admissible(topo_, topo_.refinement_edges))
        throw InadmissibleLabeling("supplied labeling is not admissible");
      zero = topo_.refinement_edges;
    } else {
      auto found = find_admissible_labeling(topo_);
      if (!found) throw InadmissibleLabeling("no admissible labeling found by the search");
      zero = *found;
      topo_.refinement_edges = zero;
    }
    const std::array<DyadicPoint, 3> corners{
        DyadicPoint{0, 0}, DyadicPoint{kDyadicUnit, 0}, DyadicPoint{0, kDyadicUnit}};
    for (std::size_t e = 0; e < topo_.size(); ++e) {
      ParametricSimplex t;
      t.macro_id = static_cast<int>(e);
      for (int k = 0; k < 3; ++k) {
        const int local = (zero[e] + k) % 3;
        t.vertices[static_cast<std::size_t>(k)] = corners[static_cast<std::size_t>(local)];
        t.vertex_ids[static_cast<std::size_t>(k)] =
            vertex_id(t.macro_id, t.vertices[static_cast<std::size_t>(k)]);
      }
      elements_.push_back(t);
      pending_.push_back(0);
      attach_edges(static_cast<int>(e));
    }
    counters_.initial_elements = topo_.size();
    rebuild_leaves();
  }

  const MacroTopology& topology() const { return topo_; }
  std::span<const int> leaves() const { return leaves_; }
  std::size_t num_leaves() const { return leaves_.size(); }
  std::size_t num_elements() const { return elements_.size(); }
  std::size_t num_vertices() const { return vertex_keys_.size(); }
  const ParametricSimplex& element(int id) const {
    return elements_.at(static_cast<std::size_t>(id));
  }
  bool is_leaf(int id) const {
    return id >= 0 && static_cast<std::size_t>(id) < elements_.size() &&
           elements_[static_cast<std::size_t>(id)].is_leaf();
  }
  /// Position of a leaf in leaves(), or -1.
  int leaf_position(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= leaf_pos_.size()) return -1;
    return leaf_pos_[static_cast<std::size_t>(id)];
  }
  const NodeKey& vertex_key(int gid) const { return vertex_keys_.at(static_cast<std::size_t>(gid)); }
  const RefinementCounters& counters() const { return counters_; }
  double mesh_size(int id) const { return lbafem::mesh_size(element(id)); }

  /// Bisects every marked leaf at least `depth` times and closes the mesh.
  RefineStats refine(std::span<const int> marked, int depth = 1) {
    if (depth < 1) throw RangeError("bisection depth must be >= 1");
    for (int id : marked)
      if (!is_leaf(id)) throw UnknownElement("element " + std::to_string(id) + " is not a leaf");
    RefineStats stats;
    stats.marked = marked.size();
    std::vector<int> work;
    for (int id : marked) {
      auto& p = pending_[static_cast<std::size_t>(id)];
      p = std::max(p, depth);
      work.push_back(id);
    }
    std::vector<int> closure;
    while (!work.empty() || !closure.empty()) {
      while (!work.empty()) {
        const int id = work.back();
        work.pop_back();
        if (!is_leaf(id) || pending_[static_cast<std::size_t>(id)] <= 0) continue;
        bisect(id, work, closure, stats);
      }
      while (!closure.empty() && work.empty()) {
        const int id = closure.back();
        closure.pop_back();
        if (!is_leaf(id) || !has_split_edge(id)) continue;
        ++stats.closure_bisections;
        bisect(id, work, closure, stats);
      }
    }
    counters_.cumulative_marked += stats.marked;
    counters_.cumulative_closure += stats.closure_bisections;
    rebuild_leaves();
    counters_.calls.emplace_back(stats.marked, leaves_.size());
    return stats;
  }

  /// Bisects every leaf `depth` times.
  RefineStats refine_uniform(int depth = 1) {
    const std::vector<int> all(leaves_.begin(), leaves_.end());
    return refine(all, depth);
  }

  std::vector<FaceNeighbor> face_neighbors(int id) const {
    if (!is_leaf(id)) throw UnknownElement("element " + std::to_string(id) + " is not a leaf");
    const auto& t = elements_[static_cast<std::size_t>(id)];
    std::vector<FaceNeighbor> out;
    out.reserve(3);
    for (int k = 0; k < 3; ++k) {
      FaceNeighbor fn;
      fn.local_face = k;
      const int a = (k + 1) % 3;
      const int b = (k + 2) % 3;
      const int ga = t.vertex_ids[static_cast<std::size_t>(a)];
      const int gb = t.vertex_ids[static_cast<std::size_t>(b)];
      fn.map.self_a = t.vertices[static_cast<std::size_t>(a)].to_vec();
      fn.map.self_b = t.vertices[static_cast<std::size_t>(b)].to_vec();
      const auto it = edge_leaves_.find(MacroTopology::pair_key(ga, gb));
      if (it != edge_leaves_.end()) {
        const int other = it->second[0] == id ? it->second[1] : it->second[0];
        if (other >= 0) {
          const auto& o = elements_[static_cast<std::size_t>(other)];
          fn.neighbor = other;
          fn.cross_patch = o.macro_id != t.macro_id;
          for (int j = 0; j < 3; ++j) {
            const int oa = o.vertex_ids[static_cast<std::size_t>((j + 1) % 3)];
            const int ob = o.vertex_ids[static_cast<std::size_t>((j + 2) % 3)];
            if ((oa == ga && ob == gb) || (oa == gb && ob == ga)) fn.neighbor_face = j;
          }
          for (int j = 0; j < 3; ++j) {
            if (o.vertex_ids[static_cast<std::size_t>(j)] == ga)
              fn.map.other_a = o.vertices[static_cast<std::size_t>(j)].to_vec();
            if (o.vertex_ids[static_cast<std::size_t>(j)] == gb)
              fn.map.other_b = o.vertices[static_cast<std::size_t>(j)].to_vec();
          }
        }
      }
      out.push_back(fn);
    }
    return out;
  }

  /// True when local edge k of leaf `id` lies on the boundary of the macro surface.
  bool face_on_boundary(int id, int k) const {
    const auto& t = element(id);
    const auto& p = t.vertices[static_cast<std::size_t>((k + 1) % 3)];
    const auto& q = t.vertices[static_cast<std::size_t>((k + 2) % 3)];
    const std::array<std::int64_t, 3> bp{kDyadicUnit - p.x - p.y, p.x, p.y};
    const std::array<std::int64_t, 3> bq{kDyadicUnit - q.x - q.y, q.x, q.y};
    for (int j = 0; j < 3; ++j)
      if (bp[static_cast<std::size_t>(j)] == 0 && bq[static_cast<std::size_t>(j)] == 0 &&
          topo_.is_boundary_edge(t.macro_id, j))
        return true;
    return false;
  }

  /// Full conformity check: every leaf edge is either shared by exactly two
  /// leaves or lies on the macro boundary, and no leaf edge has been split.
  bool is_conforming(std::string* why = nullptr) const {
    auto fail = [&](const std::string& msg) {
      if (why) *why = msg;
      return false;
    };
    for (int id : leaves_) {
      const auto& t = elements_[static_cast<std::size_t>(id)];
      for (int k = 0; k < 3; ++k) {
        const int ga = t.vertex_ids[static_cast<std::size_t>((k + 1) % 3)];
        const int gb = t.vertex_ids[static_cast<std::size_t>((k + 2) % 3)];
        const auto key = MacroTopology::pair_key(ga, gb);
        if (split_edges_.count(key))
          return fail("hanging node on edge of leaf " + std::to_string(id));
        const auto it = edge_leaves_.find(key);
        if (it == edge_leaves_.end()) return fail("edge table misses leaf " + std::to_string(id));
        const int users = (it->second[0] >= 0) + (it->second[1] >= 0);
        if (it->second[0] != id && it->second[1] != id)
          return fail("edge table inconsistent for leaf " + std::to_string(id));
        if (users == 1 && !face_on_boundary(id, k))
          return fail("unmatched interior edge of leaf " + std::to_string(id));
      }
    }
    return true;
  }

  /// Bisection path of a leaf from its macro root ("" for a root).
  std::string path_of(int id) const {
    std::string path;
    int cur = id;
    while (elements_[static_cast<std::size_t>(cur)].parent >= 0) {
      const int parent = elements_[static_cast<std::size_t>(cur)].parent;
      path.push_back(elements_[static_cast<std::size_t>(parent)].children[0] == cur ? '0' : '1');
      cur = parent;
    }
    return {path.rbegin(), path.rend()};
  }

  /// Rebuilds the forest so that the given (macro, path) leaves exist.
  void restore_leaf(int macro, const std::string& path) {
    if (macro < 0 || static_cast<std::size_t>(macro) >= topo_.size())
      throw UnknownElement("macro element " + std::to_string(macro) + " out of range");
    int cur = macro;
    std::vector<int> work;
    std::vector<int> closure;
    RefineStats stats;
    for (char c : path) {
      if (c != '0' && c != '1') throw ParseError("bad bisection path '" + path + "'");
      if (elements_[static_cast<std::size_t>(cur)].is_leaf()) bisect(cur, work, closure, stats);
      cur = elements_[static_cast<std::size_t>(cur)].children[static_cast<std::size_t>(c - '0')];
    }
    rebuild_leaves();
  }

 private:
  int vertex_id(int macro, const DyadicPoint& p) {
    const NodeKey key = topo_.key_of(macro, p.x, p.y, kDyadicUnit);
    const auto [it, inserted] = vertex_index_.try_emplace(key, static_cast<int>(vertex_keys_.size()));
    if (inserted) vertex_keys_.push_back(key);
    return it->second;
  }

  void attach_edges(int id) {
    const auto& t = elements_[static_cast<std::size_t>(id)];
    for (int k = 0; k < 3; ++k) {
      const auto key = MacroTopology::pair_key(t.vertex_ids[static_cast<std::size_t>((k + 1) % 3)],
                                               t.vertex_ids[static_cast<std::size_t>((k + 2) % 3)]);
      auto [it, inserted] = edge_leaves_.try_emplace(key, std::array<int, 2>{-1, -1});
      if (it->second[0] < 0)
        it->second[0] = id;
      else
        it->second[1] = id;
    }
  }

  /// Returns the leaf across the detached edge of the refinement edge, if any.
  int detach_edges(int id) {
    const auto& t = elements_[static_cast<std::size_t>(id)];
    int across = -1;
    for (int k = 0; k < 3; ++k) {
      const auto key = MacroTopology::pair_key(t.vertex_ids[static_cast<std::size_t>((k + 1) % 3)],
                                               t.vertex_ids[static_cast<std::size_t>((k + 2) % 3)]);
      auto it = edge_leaves_.find(key);
      auto& users = it->second;
      if (users[0] == id) {
        users[0] = users[1];
        users[1] = -1;
      } else if (users[1] == id) {
        users[1] = -1;
      }
      if (k == 0) across = users[0];
      if (users[0] < 0) edge_leaves_.erase(it);
    }
    return across;
  }

  bool has_split_edge(int id) const {
    const auto& t = elements_[static_cast<std::size_t>(id)];
    for (int k = 0; k < 3; ++k) {
      const auto key = MacroTopology::pair_key(t.vertex_ids[static_cast<std::size_t>((k + 1) % 3)],
                                               t.vertex_ids[static_cast<std::size_t>((k + 2) % 3)]);
      if (split_edges_.count(key)) return true;
    }
    return false;
  }

  void bisect(int id, std::vector<int>& work, std::vector<int>& closure, RefineStats& stats) {
    ++stats.bisections;
    const ParametricSimplex t = elements_[static_cast<std::size_t>(id)];
    const int across = detach_edges(id);
    split_edges_.insert(MacroTopology::pair_key(t.vertex_ids[1], t.vertex_ids[2]));

    const DyadicPoint m = midpoint(t.vertices[1], t.vertices[2]);
    const int gm = vertex_id(t.macro_id, m);

    ParametricSimplex c0;
    c0.macro_id = t.macro_id;
    c0.vertices = {m, t.vertices[0], t.vertices[1]};
    c0.vertex_ids = {gm, t.vertex_ids[0], t.vertex_ids[1]};
    c0.generation = t.generation + 1;
    c0.parent = id;
    ParametricSimplex c1 = c0;
    c1.vertices = {m, t.vertices[2], t.vertices[0]};
    c1.vertex_ids = {gm, t.vertex_ids[2], t.vertex_ids[0]};

    const int child_pending = std::max(pending_[static_cast<std::size_t>(id)] - 1, 0);
    pending_[static_cast<std::size_t>(id)] = 0;
    const int i0 = static_cast<int>(elements_.size());
    elements_.push_back(c0);
    elements_.push_back(c1);
    pending_.push_back(child_pending);
    pending_.push_back(child_pending);
    elements_[static_cast<std::size_t>(id)].children = {i0, i0 + 1};
    attach_edges(i0);
    attach_edges(i0 + 1);

    if (child_pending > 0) {
      work.push_back(i0);
      work.push_back(i0 + 1);
    }
    closure.push_back(i0);
    closure.push_back(i0 + 1);
    if (across >= 0) closure.push_back(across);
  }

  void rebuild_leaves() {
    leaves_.clear();
    leaf_pos_.assign(elements_.size(), -1);
    for (std::size_t i = 0; i < elements_.size(); ++i) {
      if (elements_[i].is_leaf()) {
        leaf_pos_[i] = static_cast<int>(leaves_.size());
        leaves_.push_back(static_cast<int>(i));
      }
    }
  }

  MacroTopology topo_;
  std::vector<ParametricSimplex> elements_;
  std::vector<int> pending_;
  std::vector<int> leaves_;
  std::vector<int> leaf_pos_;
  std::vector<NodeKey> vertex_keys_;
  std::unordered_map<NodeKey, int, NodeKeyHash> vertex_index_;
  std::unordered_map<std::uint64_t, std::array<int, 2>> edge_leaves_;
  std::unordered_set<std::uint64_t> split_edges_;
  RefinementCounters counters_;
};

/// Builds the initial conforming mesh of a macro topology.
inline ConformingMesh build_initial_mesh(MacroTopology topology) {
  return ConformingMesh(std::move(topology));
}

}  // namespace lbafem
