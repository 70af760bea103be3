#pragma once
/// \file charts.hpp
/// \brief Chart interface, macro surfaces and the built-in surfaces.
///
/// The chart of macro element e maps the reference triangle to the surface
/// patch, with corner k of the triangle going to local macro vertex k.

#include "lbafem/common.hpp"
#include "lbafem/mesh_forest.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <vector>

namespace lbafem {

struct Chart {
  std::function<Vec3(const Vec2&)> eval;
  std::function<Mat32(const Vec2&)> jacobian;
  bool lipschitz = true;
  /// Polynomial degree of the chart, or -1 when it is not a polynomial.
  int polynomial_degree = -1;
  /// Bi-Lipschitz constant L, or 0 when unknown.
  double lipschitz_constant = 0.0;
};

struct MacroSurface {
  std::string name;
  MacroTopology topology;
  std::vector<Chart> charts;

  const Chart& chart(int macro) const { return charts.at(static_cast<std::size_t>(macro)); }
};

/// Affine corners of a macro element: P(x) = a0 + x (a1 - a0) + y (a2 - a0).
struct AffineCorners {
  Vec3 a0 = Vec3::Zero();
  Vec3 a1 = Vec3::Zero();
  Vec3 a2 = Vec3::Zero();

  Vec3 at(const Vec2& x) const { return a0 + x.x() * (a1 - a0) + x.y() * (a2 - a0); }
  Mat32 jacobian() const {
    Mat32 j;
    j.col(0) = a1 - a0;
    j.col(1) = a2 - a0;
    return j;
  }
};

inline AffineCorners corners_of(const MacroTopology& topo, int macro) {
  const auto& t = topo.macro_elements[static_cast<std::size_t>(macro)];
  return {topo.vertex_positions[static_cast<std::size_t>(t[0])],
          topo.vertex_positions[static_cast<std::size_t>(t[1])],
          topo.vertex_positions[static_cast<std::size_t>(t[2])]};
}

inline Chart affine_chart(const AffineCorners& c) {
  Chart chart;
  chart.eval = [c](const Vec2& x) { return c.at(x); };
  const Mat32 j = c.jacobian();
  chart.jacobian = [j](const Vec2&) { return j; };
  chart.polynomial_degree = 1;
  return chart;
}

using HeightFunction = std::function<double(const Vec2&)>;
using HeightGradient = std::function<Vec2(const Vec2&)>;

/// Graph chart (x, y, g(x, y)) over the planar affine image of the reference
/// triangle with corners a0, a1, a2 (z components ignored).
inline Chart graph_chart(const AffineCorners& c, HeightFunction g, HeightGradient grad_g,
                         int polynomial_degree = -1) {
  Mat2 b;
  b.col(0) = (c.a1 - c.a0).head<2>();
  b.col(1) = (c.a2 - c.a0).head<2>();
  const Vec2 origin = c.a0.head<2>();
  Chart chart;
  chart.eval = [=](const Vec2& x) {
    const Vec2 p = origin + b * x;
    return Vec3(p.x(), p.y(), g(p));
  };
  chart.jacobian = [=](const Vec2& x) {
    const Vec2 p = origin + b * x;
    Mat32 j;
    j.topRows<2>() = b;
    j.row(2) = grad_g(p).transpose() * b;
    return j;
  };
  chart.polynomial_degree = polynomial_degree;
  return chart;
}

// Built-in surfaces
// -----------------

inline MacroSurface make_flat_surface(std::string name, std::vector<Vec3> vertices,
                                      std::vector<std::array<int, 3>> triangles,
                                      std::vector<int> refinement_edges = {}) {
  MacroSurface s;
  s.name = std::move(name);
  s.topology.vertex_positions = std::move(vertices);
  s.topology.macro_elements = std::move(triangles);
  s.topology.refinement_edges = std::move(refinement_edges);
  s.topology.analyze();
  for (std::size_t e = 0; e < s.topology.size(); ++e)
    s.charts.push_back(affine_chart(corners_of(s.topology, static_cast<int>(e))));
  return s;
}

/// Unit square [0,1]^2 split along the diagonal (0,0)-(1,1), which is the
/// refinement edge of both triangles.
inline MacroSurface flat_square() {
  return make_flat_surface("flat_square",
                           {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}},
                           {{0, 1, 2}, {0, 2, 3}}, {1, 2});
}

/// The reference triangle itself with the identity chart.
inline MacroSurface reference_triangle() {
  return make_flat_surface("reference_triangle", {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}},
                           {{0, 1, 2}});
}

/// L-shaped domain (-1,1)^2 \ [0,1)x(-1,0] in six triangles whose diagonals
/// meet at the re-entrant corner.
inline MacroSurface lshape() {
  return make_flat_surface("lshape",
                           {{-1, -1, 0},
                            {0, -1, 0},
                            {-1, 0, 0},
                            {0, 0, 0},
                            {1, 0, 0},
                            {-1, 1, 0},
                            {0, 1, 0},
                            {1, 1, 0}},
                           {{0, 1, 3}, {0, 3, 2}, {2, 3, 5}, {3, 6, 5}, {3, 4, 7}, {3, 7, 6}});
}

/// Octahedron topology with outward orientation.
inline MacroTopology octahedron_topology() {
  MacroTopology topo;
  topo.vertex_positions = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  topo.macro_elements = {{0, 2, 4}, {2, 1, 4}, {1, 3, 4}, {3, 0, 4},
                         {2, 0, 5}, {1, 2, 5}, {3, 1, 5}, {0, 3, 5}};
  topo.analyze();
  return topo;
}

/// Unit sphere by radial projection of the regular octahedron.
inline MacroSurface unit_sphere() {
  MacroSurface s;
  s.name = "sphere";
  s.topology = octahedron_topology();
  for (std::size_t e = 0; e < s.topology.size(); ++e) {
    const AffineCorners c = corners_of(s.topology, static_cast<int>(e));
    const Mat32 b = c.jacobian();
    Chart chart;
    chart.eval = [c](const Vec2& x) { return Vec3(c.at(x).normalized()); };
    chart.jacobian = [c, b](const Vec2& x) {
      const Vec3 p = c.at(x);
      const double r = p.norm();
      const Vec3 u = p / r;
      const Mat3 proj = (Mat3::Identity() - u * u.transpose()) / r;
      return Mat32(proj * b);
    };
    chart.lipschitz_constant = 3.0;
    s.charts.push_back(std::move(chart));
  }
  return s;
}

/// Graph surface z = g(x, y) over a planar macro triangulation.
inline MacroSurface graph_surface(std::string name, std::vector<Vec2> vertices,
                                  std::vector<std::array<int, 3>> triangles, HeightFunction g,
                                  HeightGradient grad_g, int polynomial_degree = -1,
                                  std::vector<int> refinement_edges = {}) {
  MacroSurface s;
  s.name = std::move(name);
  for (const auto& v : vertices) s.topology.vertex_positions.emplace_back(v.x(), v.y(), g(v));
  s.topology.macro_elements = std::move(triangles);
  s.topology.refinement_edges = std::move(refinement_edges);
  s.topology.analyze();
  for (std::size_t e = 0; e < s.topology.size(); ++e) {
    const auto& t = s.topology.macro_elements[e];
    AffineCorners c{Vec3(vertices[static_cast<std::size_t>(t[0])].x(),
                         vertices[static_cast<std::size_t>(t[0])].y(), 0.0),
                    Vec3(vertices[static_cast<std::size_t>(t[1])].x(),
                         vertices[static_cast<std::size_t>(t[1])].y(), 0.0),
                    Vec3(vertices[static_cast<std::size_t>(t[2])].x(),
                         vertices[static_cast<std::size_t>(t[2])].y(), 0.0)};
    s.charts.push_back(graph_chart(c, g, grad_g, polynomial_degree));
  }
  return s;
}

/// Parabola chart (x, y, x^2) over the reference triangle.
inline MacroSurface parabola_triangle() {
  return graph_surface(
      "parabola", {{0, 0}, {1, 0}, {0, 1}}, {{0, 1, 2}},
      [](const Vec2& p) { return p.x() * p.x(); },
      [](const Vec2& p) { return Vec2(2.0 * p.x(), 0.0); }, 2);
}

struct PeakParameters {
  double amplitude = 0.3;
  double width = 0.1;
  Vec2 center{0.5, 0.5};
};

/// Unit square carrying the graph of a Gaussian bump.
inline MacroSurface graph_peak_surface(const PeakParameters& p = {}) {
  auto g = [p](const Vec2& x) {
    return p.amplitude * std::exp(-(x - p.center).squaredNorm() / (p.width * p.width));
  };
  auto grad = [p, g](const Vec2& x) -> Vec2 {
    return (-2.0 / (p.width * p.width)) * g(x) * (x - p.center);
  };
  return graph_surface("graph_peak", {{0, 0}, {1, 0}, {1, 1}, {0, 1}}, {{0, 1, 2}, {0, 2, 3}}, g,
                       grad, -1, {1, 2});
}

/// Pyramid-like roof over [-1,1]^2 with height 0.5 (1 - max(|x|,|y|)^2): four
/// patches meeting at the centre, smooth inside each patch and kinked along
/// the diagonals.
inline MacroSurface pyramid() {
  auto g = [](const Vec2& x) {
    const double m = std::max(std::abs(x.x()), std::abs(x.y()));
    return 0.5 * (1.0 - m * m);
  };
  const std::vector<Vec2> vertices{{-1, -1}, {1, -1}, {1, 1}, {-1, 1}, {0, 0}};
  const std::vector<std::array<int, 3>> triangles{{0, 1, 4}, {1, 2, 4}, {2, 3, 4}, {3, 0, 4}};
  MacroSurface s;
  s.name = "pyramid";
  for (const auto& v : vertices) s.topology.vertex_positions.emplace_back(v.x(), v.y(), g(v));
  s.topology.macro_elements = triangles;
  s.topology.analyze();
  // Patch e is the sector where the active coordinate is fixed.
  const std::array<int, 4> active_axis{1, 0, 1, 0};
  for (std::size_t e = 0; e < triangles.size(); ++e) {
    AffineCorners c;
    const auto& t = triangles[e];
    c.a0 = Vec3(vertices[static_cast<std::size_t>(t[0])].x(), vertices[static_cast<std::size_t>(t[0])].y(), 0);
    c.a1 = Vec3(vertices[static_cast<std::size_t>(t[1])].x(), vertices[static_cast<std::size_t>(t[1])].y(), 0);
    c.a2 = Vec3(vertices[static_cast<std::size_t>(t[2])].x(), vertices[static_cast<std::size_t>(t[2])].y(), 0);
    const int ax = active_axis[e];
    s.charts.push_back(graph_chart(
        c, [ax](const Vec2& x) { return 0.5 * (1.0 - x(ax) * x(ax)); },
        [ax](const Vec2& x) {
          Vec2 d = Vec2::Zero();
          d(ax) = -x(ax);
          return d;
        },
        2));
  }
  return s;
}

// Registry
// --------

using SurfaceFactory = std::function<MacroSurface()>;

inline std::map<std::string, SurfaceFactory>& surface_registry() {
  static std::map<std::string, SurfaceFactory> registry{
      {"flat_square", flat_square},   {"reference_triangle", reference_triangle},
      {"lshape", lshape},             {"sphere", unit_sphere},
      {"parabola", parabola_triangle}, {"graph_peak", [] { return graph_peak_surface(); }},
      {"pyramid", pyramid}};
  return registry;
}

inline void register_surface(const std::string& name, SurfaceFactory factory) {
  surface_registry()[name] = std::move(factory);
}

inline MacroSurface make_surface(const std::string& name) {
  const auto& registry = surface_registry();
  const auto it = registry.find(name);
  if (it == registry.end()) throw UnknownKey("unknown surface '" + name + "'");
  return it->second();
}

}  // namespace lbafem
