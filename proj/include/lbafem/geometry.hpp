#pragma once
/// \file geometry.hpp
/// \brief Lagrange interpolant X_T of the charts and the pointwise discrete
///        and exact geometry built from it: T, G, q, D, nu, co-normals,
///        coefficient derivatives, E_Gamma and the geometric indicator.
///
/// Each leaf is parametrised over the reference triangle by the affine map
/// xhat = p0 + B xi; all derivatives are taken with respect to the macro
/// parameter xhat.

#include "lbafem/charts.hpp"
#include "lbafem/common.hpp"
#include "lbafem/lagrange.hpp"
#include "lbafem/mesh_forest.hpp"
#include "lbafem/quadrature.hpp"

#include <array>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <unordered_map>
#include <vector>

namespace lbafem {

// Element maps
// ------------

struct ElementMap {
  Vec2 origin = Vec2::Zero();
  Mat2 B = Mat2::Identity();
  Mat2 Binv = Mat2::Identity();

  Vec2 to_param(const Vec2& xi) const { return origin + B * xi; }
  Vec2 to_reference(const Vec2& xhat) const { return Binv * (xhat - origin); }
};

inline ElementMap element_map(const ParametricSimplex& t) {
  ElementMap m;
  const Vec2 p0 = t.vertices[0].to_vec();
  m.origin = p0;
  m.B.col(0) = t.vertices[1].to_vec() - p0;
  m.B.col(1) = t.vertices[2].to_vec() - p0;
  m.Binv = m.B.inverse();
  return m;
}

/// Reference coordinates of local vertex k of a leaf.
inline Vec2 reference_vertex(int k) {
  switch (k) {
    case 1:
      return {1.0, 0.0};
    case 2:
      return {0.0, 1.0};
    default:
      return {0.0, 0.0};
  }
}

// Node numbering
// --------------

/// Global numbering of the degree-n Lagrange nodes of a conforming mesh,
/// deduplicated through canonical node keys.
struct NodeNumbering {
  int degree = 1;
  int nodes_per_element = 0;
  std::vector<NodeKey> keys;
  /// Representative (macro element, macro parameter) per global node.
  std::vector<std::pair<int, Vec2>> owner;
  /// leaves() order x nodes_per_element.
  std::vector<int> local_to_global;

  std::size_t size() const { return keys.size(); }
  std::span<const int> element_nodes(std::size_t leaf_pos) const {
    return {local_to_global.data() + leaf_pos * static_cast<std::size_t>(nodes_per_element),
            static_cast<std::size_t>(nodes_per_element)};
  }
};

inline NodeNumbering number_nodes(const ConformingMesh& mesh, int n) {
  const auto& basis = lagrange_basis(n);
  NodeNumbering out;
  out.degree = n;
  out.nodes_per_element = basis.size();
  out.local_to_global.reserve(mesh.num_leaves() * static_cast<std::size_t>(basis.size()));
  std::unordered_map<NodeKey, int, NodeKeyHash> index;
  const std::int64_t scale = static_cast<std::int64_t>(n) * kDyadicUnit;
  for (int id : mesh.leaves()) {
    const auto& t = mesh.element(id);
    for (const auto& [i, j] : basis.nodes()) {
      const std::int64_t w0 = n - i - j;
      const std::int64_t X = w0 * t.vertices[0].x + i * t.vertices[1].x + j * t.vertices[2].x;
      const std::int64_t Y = w0 * t.vertices[0].y + i * t.vertices[1].y + j * t.vertices[2].y;
      const NodeKey key = mesh.topology().key_of(t.macro_id, X, Y, scale);
      const auto [it, inserted] = index.try_emplace(key, static_cast<int>(out.keys.size()));
      if (inserted) {
        out.keys.push_back(key);
        out.owner.push_back(mesh.topology().canonical_point(key, scale));
      }
      out.local_to_global.push_back(it->second);
    }
  }
  return out;
}

/// Chart values at the degree-n nodes of one leaf, read at the canonical
/// point of each node key. Equal bit for bit to the rows of the global
/// interpolant.
inline Eigen::MatrixX3d local_node_values(const ConformingMesh& mesh, const MacroSurface& surface,
                                          int leaf_id, int n) {
  const auto& basis = lagrange_basis(n);
  const auto& t = mesh.element(leaf_id);
  const std::int64_t scale = static_cast<std::int64_t>(n) * kDyadicUnit;
  Eigen::MatrixX3d X(basis.size(), 3);
  Eigen::Index row = 0;
  for (const auto& [i, j] : basis.nodes()) {
    const std::int64_t w0 = n - i - j;
    const std::int64_t x = w0 * t.vertices[0].x + i * t.vertices[1].x + j * t.vertices[2].x;
    const std::int64_t y = w0 * t.vertices[0].y + i * t.vertices[1].y + j * t.vertices[2].y;
    const auto [macro, xhat] =
        mesh.topology().canonical_point(mesh.topology().key_of(t.macro_id, x, y, scale), scale);
    X.row(row++) = surface.chart(macro).eval(xhat).transpose();
  }
  return X;
}

// Frames
// ------

struct GeometryFrame {
  Vec2 xhat = Vec2::Zero();
  Vec3 point = Vec3::Zero();
  Mat32 T = Mat32::Zero();
  Mat2 G = Mat2::Identity();
  Mat2 Ginv = Mat2::Identity();
  double q = 1.0;
  Mat23 D = Mat23::Zero();
  Vec3 nu = Vec3::UnitZ();
  /// Discrete frames only: d_j q, d_j G^-1 and d_j T for j = 1, 2.
  std::array<double, 2> dq{0.0, 0.0};
  std::array<Mat2, 2> dGinv{Mat2::Zero(), Mat2::Zero()};
  std::array<Mat32, 2> dT{Mat32::Zero(), Mat32::Zero()};
  /// div G^-1 as the vector (sum_i d_i Ginv(i, j))_j.
  Vec2 divGinv() const {
    return {dGinv[0](0, 0) + dGinv[1](1, 0), dGinv[0](0, 1) + dGinv[1](1, 1)};
  }
};

namespace detail {

inline void fill_metric(GeometryFrame& f) {
  f.G = f.T.transpose() * f.T;
  const double det = f.G.determinant();
  if (!(det > 0.0) || !std::isfinite(det))
    throw DegenerateElement("first fundamental form is singular (det G = " +
                            std::to_string(det) + ")");
  f.q = std::sqrt(det);
  f.Ginv = f.G.inverse();
  f.D = f.Ginv * f.T.transpose();
  f.nu = f.T.col(0).cross(f.T.col(1)) / f.q;
}

}  // namespace detail

/// Exact frame of a chart at the macro parameter xhat.
inline GeometryFrame exact_frame(const Chart& chart, const Vec2& xhat) {
  GeometryFrame f;
  f.xhat = xhat;
  f.point = chart.eval(xhat);
  f.T = chart.jacobian(xhat);
  detail::fill_metric(f);
  return f;
}

/// Discrete frame from the local coefficients X (nodes x 3) and tabulated
/// reference basis data at one point.
inline GeometryFrame discrete_frame_from(const Eigen::MatrixX3d& X, const Eigen::VectorXd& values,
                                         const Eigen::MatrixX2d& grad_xi,
                                         const Eigen::MatrixX3d& hess_xi, const ElementMap& map,
                                         const Vec2& xi, bool with_derivatives = true) {
  GeometryFrame f;
  f.xhat = map.to_param(xi);
  f.point = X.transpose() * values;
  f.T = X.transpose() * grad_xi * map.Binv;
  detail::fill_metric(f);
  if (!with_derivatives) return f;
  // Hessian of each component in xhat: Binv^T H_xi Binv.
  const Eigen::Matrix<double, 3, 3> h = X.transpose() * hess_xi;
  Mat2 dG[2];
  for (int c = 0; c < 3; ++c) {
    Mat2 hx;
    hx << h(c, 0), h(c, 1), h(c, 1), h(c, 2);
    hx = map.Binv.transpose() * hx * map.Binv;
    for (int j = 0; j < 2; ++j)
      for (int i = 0; i < 2; ++i) f.dT[static_cast<std::size_t>(j)](c, i) = hx(i, j);
  }
  Mat2 adj;
  adj << f.G(1, 1), -f.G(0, 1), -f.G(1, 0), f.G(0, 0);
  for (int j = 0; j < 2; ++j) {
    const auto& dTj = f.dT[static_cast<std::size_t>(j)];
    dG[j] = dTj.transpose() * f.T + f.T.transpose() * dTj;
    f.dq[static_cast<std::size_t>(j)] = (adj.cwiseProduct(dG[j].transpose())).sum() / (2.0 * f.q);
    f.dGinv[static_cast<std::size_t>(j)] = -f.Ginv * dG[j] * f.Ginv;
  }
  return f;
}

// Interpolant
// -----------

struct SurfaceInterpolant {
  int degree = 1;
  NodeNumbering nodes;
  /// Chart value at every global node, evaluated once per node key.
  std::vector<Vec3> node_values;

  /// Local coefficient array (nodes x 3) of the leaf at position leaf_pos.
  Eigen::MatrixX3d element_coefficients(std::size_t leaf_pos) const {
    const auto ids = nodes.element_nodes(leaf_pos);
    Eigen::MatrixX3d X(static_cast<Eigen::Index>(ids.size()), 3);
    for (std::size_t k = 0; k < ids.size(); ++k)
      X.row(static_cast<Eigen::Index>(k)) = node_values[static_cast<std::size_t>(ids[k])].transpose();
    return X;
  }
};

/// Everything needed to evaluate geometry on one leaf.
struct ElementGeometry {
  int id = -1;
  int macro = 0;
  int degree = 1;
  double h = 0.0;
  ElementMap map;
  const Chart* chart = nullptr;
  Eigen::MatrixX3d X;
};

inline ElementGeometry element_geometry(const ConformingMesh& mesh, const MacroSurface& surface,
                                        const SurfaceInterpolant& interp, int leaf_id) {
  const int pos = mesh.leaf_position(leaf_id);
  if (pos < 0) throw UnknownElement("element " + std::to_string(leaf_id) + " is not a leaf");
  const auto& t = mesh.element(leaf_id);
  ElementGeometry g;
  g.id = leaf_id;
  g.macro = t.macro_id;
  g.degree = interp.degree;
  g.h = mesh_size(t);
  g.map = element_map(t);
  g.chart = &surface.chart(t.macro_id);
  g.X = interp.element_coefficients(static_cast<std::size_t>(pos));
  return g;
}

inline GeometryFrame discrete_frame(const ElementGeometry& g, const Vec2& xi,
                                    bool with_derivatives = true) {
  const auto& basis = lagrange_basis(g.degree);
  Eigen::VectorXd v;
  Eigen::MatrixX2d d;
  Eigen::MatrixX3d h;
  basis.values(xi, v);
  basis.gradients(xi, d);
  basis.hessians(xi, h);
  return discrete_frame_from(g.X, v, d, h, g.map, xi, with_derivatives);
}

inline GeometryFrame exact_frame(const ElementGeometry& g, const Vec2& xi) {
  return exact_frame(*g.chart, g.map.to_param(xi));
}

/// Builds X_T = I_T chi. Throws DegenerateElement when the interpolant has
/// q_Gamma <= 0 at a quadrature point or folds over (nu_Gamma . nu <= 0).
inline SurfaceInterpolant interpolate_chart(const ConformingMesh& mesh, const MacroSurface& surface,
                                            int n, bool check_orientation = true) {
  SurfaceInterpolant s;
  s.degree = n;
  s.nodes = number_nodes(mesh, n);
  s.node_values.resize(s.nodes.size());
  parallel_for(s.nodes.size(), [&](std::size_t i) {
    const auto& [macro, xhat] = s.nodes.owner[i];
    s.node_values[i] = surface.chart(macro).eval(xhat);
  });
  if (check_orientation) {
    const auto leaves = mesh.leaves();
    const auto& tab = tabulate(n, std::min(2 * n, kMaxQuadratureDegree));
    parallel_for(leaves.size(), [&](std::size_t p) {
      const auto g = element_geometry(mesh, surface, s, leaves[p]);
      for (std::size_t k = 0; k < tab.rule->size(); ++k) {
        const Vec2 xi(tab.rule->points[k][0], tab.rule->points[k][1]);
        const auto f = discrete_frame_from(g.X, tab.values[k], tab.gradients[k], tab.hessians[k],
                                           g.map, xi, false);
        const auto e = exact_frame(g, xi);
        if (f.nu.dot(e.nu) <= 0.0)
          throw DegenerateElement("surface interpolant folds over on element " +
                                  std::to_string(g.id));
      }
    });
  }
  return s;
}

// Faces
// -----

struct FaceFrame {
  GeometryFrame frame;
  /// Unit tangent and outward unit normal of the parametric face.
  Vec2 that = Vec2::Zero();
  Vec2 nhat = Vec2::Zero();
  /// Length of the parametric face in macro coordinates.
  double param_length = 0.0;
  /// Face area element r_Gamma = |T_Gamma that|.
  double r = 0.0;
  /// Unit co-normal n_Gamma = (q/r) D^T nhat.
  Vec3 conormal = Vec3::Zero();
  /// Jump weight (q/r) G^-1 nhat.
  Vec2 weight = Vec2::Zero();
};

/// Reference coordinates of the point with parameter s on local face k,
/// running from local vertex (k+1)%3 to (k+2)%3.
inline Vec2 face_point(int k, double s) {
  const Vec2 a = reference_vertex((k + 1) % 3);
  const Vec2 b = reference_vertex((k + 2) % 3);
  return a + s * (b - a);
}

/// Parametric tangent (unnormalised) and outward unit normal of a leaf face.
inline std::pair<Vec2, Vec2> face_directions(const ElementMap& map, int k) {
  const Vec2 a = map.to_param(reference_vertex((k + 1) % 3));
  const Vec2 b = map.to_param(reference_vertex((k + 2) % 3));
  const Vec2 opposite = map.to_param(reference_vertex(k));
  const Vec2 t = b - a;
  Vec2 n(t.y(), -t.x());
  n.normalize();
  if (n.dot(opposite - a) > 0.0) n = -n;
  return {t, n};
}

inline FaceFrame face_frame_from(const GeometryFrame& frame, const ElementMap& map, int k) {
  FaceFrame ff;
  ff.frame = frame;
  const auto [t, n] = face_directions(map, k);
  ff.param_length = t.norm();
  ff.that = t / ff.param_length;
  ff.nhat = n;
  ff.r = (frame.T * ff.that).norm();
  ff.weight = (frame.q / ff.r) * (frame.Ginv * n);
  ff.conormal = (frame.q / ff.r) * (frame.D.transpose() * n);
  return ff;
}

/// Face frame on local face k at reference point xi (which must lie on it).
inline FaceFrame face_frame(const ElementGeometry& g, int k, const Vec2& xi) {
  return face_frame_from(discrete_frame(g, xi), g.map, k);
}

// Geometric indicator and consistency error
// -----------------------------------------

namespace detail {

struct SampleTable {
  std::vector<Vec2> points;
  std::vector<Eigen::MatrixX2d> gradients;
};

inline const SampleTable& lambda_samples(int n) {
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<SampleTable>> cache;
  const std::lock_guard lock(mutex);
  auto& slot = cache[n];
  if (!slot) {
    slot = std::make_unique<SampleTable>();
    const int m = 2 * n + 2;
    for (int j = 0; j <= m; ++j)
      for (int i = 0; i + j <= m; ++i)
        slot->points.emplace_back(static_cast<double>(i) / m, static_cast<double>(j) / m);
    const auto& rule = triangle_rule(2 * n + 4);
    for (const auto& p : rule.points) slot->points.emplace_back(p[0], p[1]);
    const auto& basis = lagrange_basis(n);
    for (const auto& p : slot->points) {
      Eigen::MatrixX2d g;
      basis.gradients(p, g);
      slot->gradients.push_back(std::move(g));
    }
  }
  return *slot;
}

}  // namespace detail

/// lambda_T = max of |grad(chi - X_T)|_F over the degree-(2n+2) lattice and
/// the element quadrature nodes, times `safety`. Exactly zero when the chart
/// is a polynomial of degree <= n.
inline double geometric_indicator(const ElementGeometry& g, double safety = 1.0) {
  if (g.chart->polynomial_degree >= 0 && g.chart->polynomial_degree <= g.degree) return 0.0;
  const auto& samples = detail::lambda_samples(g.degree);
  double worst = 0.0;
  for (std::size_t k = 0; k < samples.points.size(); ++k) {
    const Mat32 t = g.X.transpose() * samples.gradients[k] * g.map.Binv;
    const Mat32 j = g.chart->jacobian(g.map.to_param(samples.points[k]));
    worst = std::max(worst, (j - t).norm());
  }
  return safety * worst;
}

/// lambda_T of one leaf without a global interpolant.
inline double geometric_indicator(const ConformingMesh& mesh, const MacroSurface& surface, int leaf_id,
                                  int n, double safety = 1.0) {
  const auto& t = mesh.element(leaf_id);
  ElementGeometry g;
  g.id = leaf_id;
  g.macro = t.macro_id;
  g.degree = n;
  g.map = element_map(t);
  g.chart = &surface.chart(t.macro_id);
  if (g.chart->polynomial_degree >= 0 && g.chart->polynomial_degree <= n) return 0.0;
  g.X = local_node_values(mesh, surface, leaf_id, n);
  return geometric_indicator(g, safety);
}

/// lambda_T memoized by element id. Element ids are never reused, so
/// entries stay valid across refinements.
class LambdaCache {
 public:
  LambdaCache(int degree, double safety) : degree_(degree), safety_(safety) {}

  int degree() const { return degree_; }
  double safety() const { return safety_; }

  /// Per-leaf lambda_T in leaves() order; only new leaves are evaluated.
  std::vector<double> evaluate(const ConformingMesh& mesh, const MacroSurface& surface) {
    const auto leaves = mesh.leaves();
    std::vector<double> out(leaves.size(), 0.0);
    std::vector<std::size_t> missing;
    for (std::size_t p = 0; p < leaves.size(); ++p) {
      const auto it = values_.find(leaves[p]);
      if (it == values_.end())
        missing.push_back(p);
      else
        out[p] = it->second;
    }
    parallel_for(missing.size(), [&](std::size_t k) {
      const std::size_t p = missing[k];
      out[p] = geometric_indicator(mesh, surface, leaves[p], degree_, safety_);
    });
    for (std::size_t p : missing) values_.emplace(leaves[p], out[p]);
    return out;
  }

  std::size_t size() const { return values_.size(); }
  void clear() { values_.clear(); }

 private:
  int degree_;
  double safety_;
  std::unordered_map<int, double> values_;
};

/// Per-leaf lambda_T in leaves() order.
inline std::vector<double> geometric_indicators(const ConformingMesh& mesh,
                                                const MacroSurface& surface,
                                                const SurfaceInterpolant& interp,
                                                double safety = 1.0) {
  const auto leaves = mesh.leaves();
  std::vector<double> out(leaves.size(), 0.0);
  parallel_for(leaves.size(), [&](std::size_t p) {
    out[p] = geometric_indicator(element_geometry(mesh, surface, interp, leaves[p]), safety);
  });
  return out;
}

/// E_Gamma = q^-1 T (q_Gamma G_Gamma^-1 - q G^-1) T^T.
inline Mat3 consistency_matrix(const GeometryFrame& discrete, const GeometryFrame& exact) {
  return (exact.T * (discrete.q * discrete.Ginv - exact.q * exact.Ginv) * exact.T.transpose()) /
         exact.q;
}

inline Mat3 consistency_matrix(const ElementGeometry& g, const Vec2& xi) {
  return consistency_matrix(discrete_frame(g, xi, false), exact_frame(g, xi));
}

/// Max entry norm of E_Gamma over the element quadrature nodes and lattice.
inline double consistency_error(const ElementGeometry& g) {
  double worst = 0.0;
  for (const auto& p : detail::lambda_samples(g.degree).points)
    worst = std::max(worst, consistency_matrix(g, p).cwiseAbs().maxCoeff());
  return worst;
}

/// Area of Gamma (discrete = true) or gamma by element quadrature.
inline double surface_area(const ConformingMesh& mesh, const MacroSurface& surface,
                           const SurfaceInterpolant& interp, bool discrete, int degree) {
  const auto& rule = triangle_rule(degree);
  double area = 0.0;
  for (int id : mesh.leaves()) {
    const auto g = element_geometry(mesh, surface, interp, id);
    const double jac = std::abs(g.map.B.determinant());
    for (std::size_t k = 0; k < rule.size(); ++k) {
      const Vec2 xi(rule.points[k][0], rule.points[k][1]);
      const double q = discrete ? discrete_frame(g, xi, false).q : exact_frame(g, xi).q;
      area += rule.weights[k] * jac * q;
    }
  }
  return area;
}

}  // namespace lbafem
