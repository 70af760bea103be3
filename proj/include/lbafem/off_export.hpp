#pragma once
/// \file off_export.hpp
/// \brief ASCII OFF export of the interpolated surface and a reader for it.

#include "lbafem/common.hpp"
#include "lbafem/geometry.hpp"
#include "lbafem/lagrange.hpp"
#include "lbafem/mesh_forest.hpp"

#include <array>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

namespace lbafem {

struct OffMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
};

inline constexpr int kMaxOffLevel = 10;

/// Tessellates every leaf with 2^level segments per edge and evaluates the
/// interpolant at the sub-vertices. Shared points are merged by their dyadic
/// node key; faces keep the orientation of the parametric domain.
inline OffMesh tessellate_surface(const ConformingMesh& mesh, const SurfaceInterpolant& interp,
                                  int level) {
  if (level < 0 || level > kMaxOffLevel)
    throw RangeError("subdivision level must lie in [0, " + std::to_string(kMaxOffLevel) + "]");
  if (interp.nodes.size() == 0 ||
      interp.nodes.local_to_global.size() !=
          mesh.num_leaves() * static_cast<std::size_t>(interp.nodes.nodes_per_element))
    throw RangeError("interpolant does not match the mesh");
  const auto& basis = lagrange_basis(interp.degree);
  const std::int64_t m = std::int64_t{1} << level;
  const std::int64_t scale = m * kDyadicUnit;
  OffMesh out;
  std::unordered_map<NodeKey, int, NodeKeyHash> index;
  Eigen::VectorXd phi;
  std::vector<int> local(static_cast<std::size_t>((m + 1) * (m + 1)), -1);
  const auto leaves = mesh.leaves();
  for (std::size_t p = 0; p < leaves.size(); ++p) {
    const auto& t = mesh.element(leaves[p]);
    const Eigen::MatrixX3d X = interp.element_coefficients(p);
    for (std::int64_t j = 0; j <= m; ++j) {
      for (std::int64_t i = 0; i + j <= m; ++i) {
        const std::int64_t w0 = m - i - j;
        const std::int64_t x = w0 * t.vertices[0].x + i * t.vertices[1].x + j * t.vertices[2].x;
        const std::int64_t y = w0 * t.vertices[0].y + i * t.vertices[1].y + j * t.vertices[2].y;
        const NodeKey key = mesh.topology().key_of(t.macro_id, x, y, scale);
        const auto [it, inserted] = index.try_emplace(key, static_cast<int>(out.vertices.size()));
        if (inserted) {
          const Vec2 xi(static_cast<double>(i) / static_cast<double>(m),
                        static_cast<double>(j) / static_cast<double>(m));
          basis.values(xi, phi);
          out.vertices.push_back(X.transpose() * phi);
        }
        local[static_cast<std::size_t>(j * (m + 1) + i)] = it->second;
      }
    }
    const auto& v = t.vertices;
    const double orient = static_cast<double>(v[1].x - v[0].x) * static_cast<double>(v[2].y - v[0].y) -
                          static_cast<double>(v[2].x - v[0].x) * static_cast<double>(v[1].y - v[0].y);
    auto at = [&](std::int64_t i, std::int64_t j) {
      return local[static_cast<std::size_t>(j * (m + 1) + i)];
    };
    auto add = [&](int a, int b, int c) {
      if (orient < 0.0)
        out.faces.push_back({a, c, b});
      else
        out.faces.push_back({a, b, c});
    };
    for (std::int64_t j = 0; j < m; ++j) {
      for (std::int64_t i = 0; i + j < m; ++i) {
        add(at(i, j), at(i + 1, j), at(i, j + 1));
        if (i + j + 1 < m) add(at(i + 1, j), at(i + 1, j + 1), at(i, j + 1));
      }
    }
  }
  return out;
}

inline void write_off(const OffMesh& off, std::ostream& out) {
  out << "OFF\n" << off.vertices.size() << ' ' << off.faces.size() << " 0\n";
  char buf[128];
  for (const auto& v : off.vertices) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", v.x(), v.y(), v.z());
    out << buf;
  }
  for (const auto& f : off.faces) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
}

inline void export_surface_off(const ConformingMesh& mesh, const SurfaceInterpolant& interp,
                               const std::string& path, int level) {
  const OffMesh off = tessellate_surface(mesh, interp, level);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_off(off, out);
  out.flush();
  if (!out) throw IoError("failed writing '" + path + "'");
}

/// Reads an ASCII OFF file of triangles; counts and indices are checked.
inline OffMesh parse_off(std::istream& in, const std::string& source = "<off>") {
  auto fail = [&](const std::string& what) { throw ParseError(source + ": " + what); };
  std::string magic;
  if (!(in >> magic) || magic != "OFF") fail("missing OFF header");
  long long nv = 0, nf = 0, ne = 0;
  if (!(in >> nv >> nf >> ne) || nv < 0 || nf < 0 || ne < 0) fail("bad counts line");
  OffMesh off;
  off.vertices.resize(static_cast<std::size_t>(nv));
  for (auto& v : off.vertices)
    if (!(in >> v.x() >> v.y() >> v.z())) fail("truncated vertex list");
  off.faces.resize(static_cast<std::size_t>(nf));
  for (auto& f : off.faces) {
    int arity = 0;
    if (!(in >> arity >> f[0] >> f[1] >> f[2])) fail("truncated face list");
    if (arity != 3) fail("only triangular faces are supported");
    for (int idx : f)
      if (idx < 0 || idx >= nv) fail("face index " + std::to_string(idx) + " out of range");
  }
  std::string extra;
  if (in >> extra) fail("trailing content after the face list");
  return off;
}

inline OffMesh load_off(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return parse_off(in, path);
}

}  // namespace lbafem
