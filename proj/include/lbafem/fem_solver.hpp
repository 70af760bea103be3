#pragma once
/// \file fem_solver.hpp
/// \brief Continuous degree-n Lagrange space on the discrete surface,
///        Galerkin assembly and a Jacobi-preconditioned CG solver with
///        Dirichlet or zero-mean constraints.

#include "lbafem/charts.hpp"
#include "lbafem/common.hpp"
#include "lbafem/geometry.hpp"
#include "lbafem/lagrange.hpp"
#include "lbafem/mesh_forest.hpp"
#include "lbafem/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace lbafem {

enum class Constraint { Dirichlet, ZeroMean };

/// Scalar function of the ambient point in R^3.
using AmbientFunction = std::function<double(const Vec3&)>;
using AmbientGradient = std::function<Vec3(const Vec3&)>;

// Degrees of freedom
// ------------------

struct DofMap {
  int degree = 1;
  Constraint constraint = Constraint::Dirichlet;
  NodeNumbering nodes;
  /// 1 for dofs on the surface boundary; all zero on closed surfaces.
  std::vector<char> dirichlet_mask;

  std::size_t n_dofs() const { return nodes.size(); }
  std::size_t n_free() const {
    return n_dofs() -
           static_cast<std::size_t>(std::count(dirichlet_mask.begin(), dirichlet_mask.end(), 1));
  }
  std::span<const int> element_dofs(std::size_t leaf_pos) const {
    return nodes.element_nodes(leaf_pos);
  }
};

/// Closed surfaces get the zero-mean constraint, bounded ones zero Dirichlet data.
inline DofMap build_dofmap(const ConformingMesh& mesh, int n) {
  DofMap d;
  d.degree = n;
  d.nodes = number_nodes(mesh, n);
  d.constraint = mesh.topology().closed ? Constraint::ZeroMean : Constraint::Dirichlet;
  d.dirichlet_mask.assign(d.nodes.size(), 0);
  if (d.constraint == Constraint::Dirichlet)
    for (std::size_t i = 0; i < d.nodes.size(); ++i)
      d.dirichlet_mask[i] = mesh.topology().key_on_boundary(d.nodes.keys[i]) ? 1 : 0;
  return d;
}

// Sparse matrices
// ---------------

struct CsrMatrix {
  std::size_t rows = 0;
  std::vector<std::size_t> row_ptr{0};
  std::vector<int> cols;
  std::vector<double> values;

  std::size_t nnz() const { return values.size(); }

  void multiply(const Eigen::VectorXd& x, Eigen::VectorXd& y) const {
    y.resize(static_cast<Eigen::Index>(rows));
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
        s += values[k] * x(cols[k]);
      y(static_cast<Eigen::Index>(r)) = s;
    }
  }

  double at(std::size_t r, int c) const {
    const auto begin = cols.begin() + static_cast<std::ptrdiff_t>(row_ptr[r]);
    const auto end = cols.begin() + static_cast<std::ptrdiff_t>(row_ptr[r + 1]);
    const auto it = std::lower_bound(begin, end, c);
    if (it == end || *it != c) return 0.0;
    return values[static_cast<std::size_t>(it - cols.begin())];
  }

  Eigen::VectorXd diagonal() const {
    Eigen::VectorXd d = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(rows));
    for (std::size_t r = 0; r < rows; ++r) d(static_cast<Eigen::Index>(r)) = at(r, static_cast<int>(r));
    return d;
  }

  Eigen::MatrixXd to_dense() const {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows),
                                              static_cast<Eigen::Index>(rows));
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
        a(static_cast<Eigen::Index>(r), cols[k]) += values[k];
    return a;
  }
};

struct Triplet {
  int row = 0;
  int col = 0;
  double value = 0.0;
};

/// Builds a CSR matrix from triplets given in element order. Duplicates are
/// summed in (row, col, insertion) order, so the result is reproducible.
inline CsrMatrix csr_from_triplets(std::size_t rows, std::vector<Triplet> triplets) {
  std::stable_sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  CsrMatrix m;
  m.rows = rows;
  m.row_ptr.assign(rows + 1, 0);
  for (std::size_t k = 0; k < triplets.size();) {
    const auto& t = triplets[k];
    double s = 0.0;
    std::size_t e = k;
    while (e < triplets.size() && triplets[e].row == t.row && triplets[e].col == t.col)
      s += triplets[e++].value;
    m.cols.push_back(t.col);
    m.values.push_back(s);
    ++m.row_ptr[static_cast<std::size_t>(t.row) + 1];
    k = e;
  }
  for (std::size_t r = 0; r < rows; ++r) m.row_ptr[r + 1] += m.row_ptr[r];
  return m;
}

// Assembly
// --------

struct LinearSystem {
  CsrMatrix A;
  Eigen::VectorXd b;
  /// m_i = int_Gamma phi_i.
  Eigen::VectorXd mass;
};

struct LocalSystem {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  Eigen::VectorXd mass;
};

/// Element stiffness int grad phi_a G_Gamma^-1 grad phi_b^T q_Gamma, load
/// int f(chi) q phi_a and mass int phi_a q_Gamma, all over the leaf in macro
/// parameter coordinates.
inline LocalSystem local_system(const ElementGeometry& g, const AmbientFunction& f,
                                int quadrature_degree) {
  const auto& tab = tabulate(g.degree, quadrature_degree);
  const auto& rule = *tab.rule;
  const auto nloc = g.X.rows();
  const double jac = std::abs(g.map.B.determinant());
  LocalSystem s;
  s.A = Eigen::MatrixXd::Zero(nloc, nloc);
  s.b = Eigen::VectorXd::Zero(nloc);
  s.mass = Eigen::VectorXd::Zero(nloc);
  for (std::size_t k = 0; k < rule.size(); ++k) {
    const Vec2 xi(rule.points[k][0], rule.points[k][1]);
    const auto frame = discrete_frame_from(g.X, tab.values[k], tab.gradients[k], tab.hessians[k],
                                           g.map, xi, false);
    const double w = rule.weights[k] * jac;
    const Eigen::MatrixX2d grad = tab.gradients[k] * g.map.Binv;
    const Eigen::MatrixX2d flux = grad * frame.Ginv;
    for (Eigen::Index a = 0; a < nloc; ++a)
      for (Eigen::Index b = a; b < nloc; ++b)
        s.A(a, b) += w * frame.q * flux.row(a).dot(grad.row(b));
    s.mass += (w * frame.q) * tab.values[k];
    if (f) {
      const auto exact = exact_frame(*g.chart, frame.xhat);
      s.b += (w * f(exact.point) * exact.q) * tab.values[k];
    }
  }
  for (Eigen::Index a = 0; a < nloc; ++a)
    for (Eigen::Index b = 0; b < a; ++b) s.A(a, b) = s.A(b, a);
  return s;
}

/// |int_gamma f| / int_gamma |f| from a degree-40 rule on the twice
/// refined macro mesh with the exact chart.
inline double load_incompatibility(const MacroSurface& surface, const AmbientFunction& f) {
  ConformingMesh mesh(surface.topology);
  mesh.refine_uniform(2);
  const auto& rule = triangle_rule(kMaxQuadratureDegree);
  double integral = 0.0, magnitude = 0.0;
  for (int id : mesh.leaves()) {
    const auto& t = mesh.element(id);
    const auto map = element_map(t);
    const double jac = std::abs(map.B.determinant());
    for (std::size_t k = 0; k < rule.size(); ++k) {
      const auto e = exact_frame(surface.chart(t.macro_id),
                                 map.to_param(Vec2(rule.points[k][0], rule.points[k][1])));
      const double v = f(e.point) * e.q * rule.weights[k] * jac;
      integral += v;
      magnitude += std::abs(v);
    }
  }
  return magnitude > 0.0 ? std::abs(integral) / magnitude : 0.0;
}

/// Closed surfaces require int_gamma f = 0; throws IncompatibleLoad otherwise.
inline void check_load_compatibility(const MacroSurface& surface, const AmbientFunction& f,
                                     double tolerance = 1e-8) {
  if (!surface.topology.closed || !f) return;
  const double ratio = load_incompatibility(surface, f);
  if (ratio > tolerance)
    throw IncompatibleLoad("int f over the closed surface is " + std::to_string(ratio) +
                           " of int |f|");
}

inline LinearSystem assemble(const ConformingMesh& mesh, const MacroSurface& surface,
                             const SurfaceInterpolant& interp, const AmbientFunction& f,
                             const DofMap& dofs, const QuadratureOptions& quad = {}) {
  check_load_compatibility(surface, f);
  const auto leaves = mesh.leaves();
  const int degree = quad.element_degree(dofs.degree);
  std::vector<LocalSystem> locals(leaves.size());
  parallel_for(leaves.size(), [&](std::size_t p) {
    locals[p] = local_system(element_geometry(mesh, surface, interp, leaves[p]), f, degree);
  });
  LinearSystem sys;
  const auto n = static_cast<Eigen::Index>(dofs.n_dofs());
  sys.b = Eigen::VectorXd::Zero(n);
  sys.mass = Eigen::VectorXd::Zero(n);
  std::vector<Triplet> triplets;
  const auto nloc = static_cast<std::size_t>(dofs.nodes.nodes_per_element);
  triplets.reserve(leaves.size() * nloc * nloc);
  for (std::size_t p = 0; p < leaves.size(); ++p) {
    const auto ids = dofs.element_dofs(p);
    const auto& loc = locals[p];
    for (std::size_t a = 0; a < nloc; ++a) {
      const auto ea = static_cast<Eigen::Index>(a);
      sys.b(ids[a]) += loc.b(ea);
      sys.mass(ids[a]) += loc.mass(ea);
      for (std::size_t c = 0; c < nloc; ++c)
        triplets.push_back({ids[a], ids[c], loc.A(ea, static_cast<Eigen::Index>(c))});
    }
  }
  sys.A = csr_from_triplets(dofs.n_dofs(), std::move(triplets));
  return sys;
}

// Solver
// ------

struct DiscreteField {
  int degree = 1;
  Constraint constraint = Constraint::Dirichlet;
  Eigen::VectorXd coefficients;
  int cg_iterations = 0;
  double relative_residual = 0.0;
};

struct CgResult {
  Eigen::VectorXd x;
  int iterations = 0;
  double relative_residual = 0.0;
};

/// Preconditioned CG for A x = b where `apply` realises A. Stops when
/// |r| <= rel_tol |b|; throws NoConvergence after max_iterations.
template <class Apply, class Project>
CgResult pcg(Apply&& apply, const Eigen::VectorXd& b, const Eigen::VectorXd& inv_diag,
             double rel_tol, int max_iterations, Project&& project,
             const Eigen::VectorXd* x0 = nullptr) {
  CgResult res;
  const double bnorm = b.norm();
  res.x = x0 ? *x0 : Eigen::VectorXd::Zero(b.size());
  if (bnorm == 0.0 && !x0) return res;
  Eigen::VectorXd r(b.size());
  Eigen::VectorXd ap(b.size());
  apply(res.x, ap);
  r = b - ap;
  project(r);
  const double target = rel_tol * (bnorm > 0.0 ? bnorm : 1.0);
  double rnorm = r.norm();
  if (rnorm <= target) {
    res.relative_residual = bnorm > 0.0 ? rnorm / bnorm : rnorm;
    return res;
  }
  Eigen::VectorXd z = inv_diag.cwiseProduct(r);
  project(z);
  Eigen::VectorXd p = z;
  double rz = r.dot(z);
  for (int it = 1; it <= max_iterations; ++it) {
    apply(p, ap);
    const double alpha = rz / p.dot(ap);
    res.x += alpha * p;
    r -= alpha * ap;
    project(r);
    rnorm = r.norm();
    res.iterations = it;
    if (rnorm <= target) {
      res.relative_residual = bnorm > 0.0 ? rnorm / bnorm : rnorm;
      return res;
    }
    z = inv_diag.cwiseProduct(r);
    project(z);
    const double rz_new = r.dot(z);
    p = z + (rz_new / rz) * p;
    rz = rz_new;
  }
  throw NoConvergence("CG did not reach relative residual " + std::to_string(rel_tol) +
                      " within " + std::to_string(max_iterations) + " iterations (residual " +
                      std::to_string(bnorm > 0.0 ? rnorm / bnorm : rnorm) + ")");
}

/// Solves the constrained Galerkin system. Dirichlet dofs are fixed to zero
/// through a masked operator; on closed surfaces the quadrature remainder of
/// the constant load component is projected out and the solution normalised
/// to m^T U = 0.
inline DiscreteField solve(const LinearSystem& sys, const DofMap& dofs, double rel_tol = 1e-10,
                           const Eigen::VectorXd* initial_guess = nullptr) {
  const auto n = static_cast<Eigen::Index>(dofs.n_dofs());
  DiscreteField field;
  field.degree = dofs.degree;
  field.constraint = dofs.constraint;
  Eigen::VectorXd b = sys.b;
  Eigen::VectorXd inv_diag = sys.A.diagonal().cwiseInverse();
  const bool closed = dofs.constraint == Constraint::ZeroMean;
  const auto& mask = dofs.dirichlet_mask;
  if (closed) {
    b.array() -= b.mean();
  } else {
    for (Eigen::Index i = 0; i < n; ++i)
      if (mask[static_cast<std::size_t>(i)]) {
        b(i) = 0.0;
        inv_diag(i) = 1.0;
      }
  }
  auto apply = [&](const Eigen::VectorXd& x, Eigen::VectorXd& y) {
    sys.A.multiply(x, y);
    if (!closed)
      for (Eigen::Index i = 0; i < n; ++i)
        if (mask[static_cast<std::size_t>(i)]) y(i) = x(i);
  };
  auto project = [&](Eigen::VectorXd& v) {
    if (closed) v.array() -= v.mean();
  };
  Eigen::VectorXd x0;
  if (initial_guess && initial_guess->size() == n) {
    x0 = *initial_guess;
    if (!closed)
      for (Eigen::Index i = 0; i < n; ++i)
        if (mask[static_cast<std::size_t>(i)]) x0(i) = 0.0;
  }
  const int cap = static_cast<int>(std::max<Eigen::Index>(10 * n, 10));
  auto res = pcg(apply, b, inv_diag, rel_tol, cap, project, x0.size() == n ? &x0 : nullptr);
  if (closed) {
    const double mean = sys.mass.dot(res.x) / sys.mass.sum();
    res.x.array() -= mean;
  }
  field.coefficients = std::move(res.x);
  field.cg_iterations = res.iterations;
  field.relative_residual = res.relative_residual;
  return field;
}

// Field evaluation
// ----------------

struct FieldValue {
  double value = 0.0;
  Vec2 grad_hat = Vec2::Zero();
  Vec3 grad_surface = Vec3::Zero();
};

inline Eigen::VectorXd local_coefficients(const DiscreteField& u, const DofMap& dofs,
                                          std::size_t leaf_pos) {
  const auto ids = dofs.element_dofs(leaf_pos);
  Eigen::VectorXd c(static_cast<Eigen::Index>(ids.size()));
  for (std::size_t k = 0; k < ids.size(); ++k)
    c(static_cast<Eigen::Index>(k)) = u.coefficients(ids[k]);
  return c;
}

/// Value, parametric gradient and surface gradient grad_hat U D_Gamma.
inline FieldValue eval_field_gradient(const ElementGeometry& g, const Eigen::VectorXd& local,
                                      const Vec2& xi) {
  const auto& basis = lagrange_basis(g.degree);
  Eigen::VectorXd v;
  Eigen::MatrixX2d d;
  basis.values(xi, v);
  basis.gradients(xi, d);
  FieldValue out;
  out.value = v.dot(local);
  out.grad_hat = (local.transpose() * d * g.map.Binv).transpose();
  const auto frame = discrete_frame(g, xi, false);
  out.grad_surface = (out.grad_hat.transpose() * frame.D).transpose();
  return out;
}

}  // namespace lbafem
