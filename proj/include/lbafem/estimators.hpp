#pragma once
/// \file estimators.hpp
/// \brief Residual indicators eta_T, oscillation, energy error and
///        effectivity diagnostics.

#include "lbafem/charts.hpp"
#include "lbafem/common.hpp"
#include "lbafem/fem_solver.hpp"
#include "lbafem/geometry.hpp"
#include "lbafem/lagrange.hpp"
#include "lbafem/mesh_forest.hpp"
#include "lbafem/quadrature.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace lbafem {

struct ManufacturedProblem {
  std::string name;
  AmbientFunction f;
  /// Optional exact solution and its ambient gradient.
  AmbientFunction u;
  AmbientGradient grad_u;
  Constraint constraint = Constraint::Dirichlet;

  bool has_exact_solution() const { return static_cast<bool>(grad_u); }
};

/// Per-leaf indicators in leaves() order plus aggregates.
struct IndicatorSet {
  std::vector<int> element_ids;
  std::vector<double> eta_interior2;
  std::vector<double> eta_jump2;
  std::vector<double> lambda;
  std::vector<double> osc_u2;
  std::vector<double> osc_f2;
  /// Combined osc_T(U, f, T)^2 with the data and solution terms together.
  std::vector<double> osc2;

  std::size_t size() const { return element_ids.size(); }
  double eta2(std::size_t i) const { return eta_interior2[i] + eta_jump2[i]; }
  double eta_element(std::size_t i) const { return std::sqrt(eta2(i)); }
  std::vector<double> eta_elements() const {
    std::vector<double> out(size());
    for (std::size_t i = 0; i < size(); ++i) out[i] = eta_element(i);
    return out;
  }
  double eta() const {
    double s = 0.0;
    for (std::size_t i = 0; i < size(); ++i) s += eta2(i);
    return std::sqrt(s);
  }
  double lambda_max() const {
    double m = 0.0;
    for (double v : lambda) m = std::max(m, v);
    return m;
  }
  static double root_sum(const std::vector<double>& v) {
    return std::sqrt(std::accumulate(v.begin(), v.end(), 0.0));
  }
  /// False when the oscillation pass was skipped; the osc aggregates are then NaN.
  bool has_oscillation() const { return osc2.size() == size(); }
  double osc_u() const { return has_oscillation() ? root_sum(osc_u2) : kNaN; }
  double osc_f() const { return has_oscillation() ? root_sum(osc_f2) : kNaN; }
  double osc() const { return has_oscillation() ? root_sum(osc2) : kNaN; }

 private:
  static constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
};

// Pointwise residuals
// -------------------

/// Parametric gradient and Hessian (d11, d12, d22) of U in xhat.
struct LocalDerivatives {
  Vec2 grad = Vec2::Zero();
  Mat2 hess = Mat2::Zero();
};

inline LocalDerivatives local_derivatives(const Eigen::VectorXd& u, const Eigen::MatrixX2d& grad_xi,
                                          const Eigen::MatrixX3d& hess_xi, const ElementMap& map) {
  LocalDerivatives d;
  d.grad = (u.transpose() * grad_xi * map.Binv).transpose();
  const Eigen::RowVector3d h = u.transpose() * hess_xi;
  Mat2 hx;
  hx << h(0), h(1), h(1), h(2);
  d.hess = map.Binv.transpose() * hx * map.Binv;
  return d;
}

/// div_hat(q_Gamma grad_hat U G_Gamma^-1).
inline double flux_divergence(const GeometryFrame& f, const LocalDerivatives& d) {
  const Vec2 w = f.Ginv * d.grad;
  return f.dq[0] * w(0) + f.dq[1] * w(1) + f.q * (f.Ginv.cwiseProduct(d.hess)).sum() +
         f.q * d.grad.dot(f.divGinv());
}

/// R_T = f q / q_Gamma + q_Gamma^-1 div_hat(q_Gamma grad_hat U G_Gamma^-1).
inline double interior_residual(const GeometryFrame& discrete, double f_value, double q_exact,
                                const LocalDerivatives& d) {
  return f_value * q_exact / discrete.q + flux_divergence(discrete, d) / discrete.q;
}

inline double interior_residual(const ElementGeometry& g, const Eigen::VectorXd& u,
                                const AmbientFunction& f, const Vec2& xi) {
  const auto& basis = lagrange_basis(g.degree);
  Eigen::VectorXd v;
  Eigen::MatrixX2d dx;
  Eigen::MatrixX3d hx;
  basis.values(xi, v);
  basis.gradients(xi, dx);
  basis.hessians(xi, hx);
  const auto frame = discrete_frame_from(g.X, v, dx, hx, g.map, xi, true);
  const auto exact = exact_frame(g, xi);
  return interior_residual(frame, f ? f(exact.point) : 0.0, exact.q,
                           local_derivatives(u, dx, hx, g.map));
}

/// One side of an interior face at a matched point.
struct FaceSide {
  FaceFrame frame;
  Vec2 grad = Vec2::Zero();

  /// (q/r) grad_hat U G^-1 nhat, the co-normal derivative.
  double conormal_derivative() const { return grad.dot(frame.weight); }
  /// q grad_hat U G^-1 nhat, the parametric flux used by the oscillation.
  double parametric_flux() const { return frame.frame.q * grad.dot(frame.frame.Ginv * frame.nhat); }
};

inline FaceSide face_side(const ElementGeometry& g, const Eigen::VectorXd& u, int face,
                          const Vec2& xi) {
  const auto& basis = lagrange_basis(g.degree);
  thread_local Eigen::VectorXd v;
  thread_local Eigen::MatrixX2d dx;
  thread_local const Eigen::MatrixX3d no_hessian;
  basis.values(xi, v);
  basis.gradients(xi, dx);
  FaceSide s;
  s.frame = face_frame_from(discrete_frame_from(g.X, v, dx, no_hessian, g.map, xi, false), g.map, face);
  s.grad = (u.transpose() * dx * g.map.Binv).transpose();
  return s;
}

/// J_S = sum over both sides of (q/r) grad_hat U G^-1 nhat, each side with
/// its own outward normal.
inline double jump_residual(const FaceSide& plus, const FaceSide& minus) {
  return plus.conormal_derivative() + minus.conormal_derivative();
}

// Local L2 projection
// -------------------

enum class ProjectionDomain { Triangle, Edge };

/// Monomials of total degree <= m in (x, y) on the triangle or in s on an edge.
inline Eigen::VectorXd projection_monomials(ProjectionDomain domain, int m, const Vec2& p) {
  if (domain == ProjectionDomain::Edge) {
    Eigen::VectorXd v(m + 1);
    double s = 1.0;
    for (int k = 0; k <= m; ++k, s *= p.x()) v(k) = s;
    return v;
  }
  Eigen::VectorXd v((m + 1) * (m + 2) / 2);
  Eigen::Index idx = 0;
  for (int d = 0; d <= m; ++d)
    for (int b = 0; b <= d; ++b) v(idx++) = std::pow(p.x(), d - b) * std::pow(p.y(), b);
  return v;
}

/// Best L2 approximation in P_m from samples at quadrature points; returns
/// monomial coefficients. Throws SingularGram for a deficient rule.
inline Eigen::VectorXd l2_project_local(std::span<const double> values,
                                        std::span<const std::array<double, 2>> points,
                                        std::span<const double> weights, ProjectionDomain domain,
                                        int m) {
  if (m < 0) return Eigen::VectorXd();
  const auto size = projection_monomials(domain, m, Vec2::Zero()).size();
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(size, size);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(size);
  for (std::size_t k = 0; k < values.size(); ++k) {
    const auto phi = projection_monomials(domain, m, Vec2(points[k][0], points[k][1]));
    gram += weights[k] * phi * phi.transpose();
    rhs += weights[k] * values[k] * phi;
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  const auto d = ldlt.vectorD().cwiseAbs();
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || !(d.minCoeff() > 1e-14 * d.maxCoeff()))
    throw SingularGram("Gram matrix of P_" + std::to_string(m) + " is singular for this rule");
  return ldlt.solve(rhs);
}

/// Squared L2 norm of (id - Pi_m) g from samples, in the rule's own measure.
/// Bitwise constant samples give exactly zero.
inline double projection_residual2(std::span<const double> values,
                                   std::span<const std::array<double, 2>> points,
                                   std::span<const double> weights, ProjectionDomain domain,
                                   int m) {
  if (values.empty()) return 0.0;
  const bool constant = std::all_of(values.begin(), values.end(),
                                    [&](double v) { return v == values[0]; });
  if (constant && m >= 0) return 0.0;
  Eigen::VectorXd c;
  if (m >= 0) c = l2_project_local(values, points, weights, domain, m);
  double s = 0.0;
  for (std::size_t k = 0; k < values.size(); ++k) {
    double proj = 0.0;
    if (m >= 0) proj = projection_monomials(domain, m, Vec2(points[k][0], points[k][1])).dot(c);
    const double r = values[k] - proj;
    s += weights[k] * r * r;
  }
  return s;
}

/// Factored P_m projection for a fixed rule, reused across elements.
class LocalProjector {
 public:
  LocalProjector(std::span<const std::array<double, 2>> points, std::span<const double> weights,
                 ProjectionDomain domain, int m)
      : weights_(weights.begin(), weights.end()), m_(m) {
    if (m < 0) return;
    const auto size = projection_monomials(domain, m, Vec2::Zero()).size();
    phi_.resize(static_cast<Eigen::Index>(points.size()), size);
    for (std::size_t k = 0; k < points.size(); ++k)
      phi_.row(static_cast<Eigen::Index>(k)) =
          projection_monomials(domain, m, Vec2(points[k][0], points[k][1])).transpose();
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(size, size);
    for (std::size_t k = 0; k < points.size(); ++k) {
      const auto row = phi_.row(static_cast<Eigen::Index>(k));
      gram += weights_[k] * row.transpose() * row;
    }
    ldlt_.compute(gram);
    const auto d = ldlt_.vectorD().cwiseAbs();
    if (ldlt_.info() != Eigen::Success || !ldlt_.isPositive() ||
        !(d.minCoeff() > 1e-14 * d.maxCoeff()))
      throw SingularGram("Gram matrix of P_" + std::to_string(m) + " is singular for this rule");
  }

  /// Same quantity as projection_residual2 for this rule.
  double residual2(std::span<const double> values) const {
    if (values.empty()) return 0.0;
    const bool constant = std::all_of(values.begin(), values.end(),
                                      [&](double v) { return v == values[0]; });
    if (constant && m_ >= 0) return 0.0;
    const Eigen::Map<const Eigen::VectorXd> v(values.data(), static_cast<Eigen::Index>(values.size()));
    Eigen::VectorXd proj = Eigen::VectorXd::Zero(v.size());
    if (m_ >= 0) {
      const Eigen::Map<const Eigen::VectorXd> w(weights_.data(), v.size());
      proj = phi_ * ldlt_.solve(phi_.transpose() * w.cwiseProduct(v));
    }
    double s = 0.0;
    for (Eigen::Index k = 0; k < v.size(); ++k) {
      const double r = v(k) - proj(k);
      s += weights_[static_cast<std::size_t>(k)] * r * r;
    }
    return s;
  }

 private:
  std::vector<double> weights_;
  int m_;
  Eigen::MatrixXd phi_;
  Eigen::LDLT<Eigen::MatrixXd> ldlt_;
};

// Indicators
// ----------

struct EstimatorOptions {
  QuadratureOptions quadrature;
  double lambda_safety = 1.0;
};

struct ElementData {
  ElementGeometry geometry;
  Eigen::VectorXd u;
};

inline std::vector<ElementData> gather_elements(const ConformingMesh& mesh,
                                                const MacroSurface& surface,
                                                const SurfaceInterpolant& interp,
                                                const DofMap& dofs, const DiscreteField& U) {
  const auto leaves = mesh.leaves();
  std::vector<ElementData> out(leaves.size());
  parallel_for(leaves.size(), [&](std::size_t p) {
    out[p].geometry = element_geometry(mesh, surface, interp, leaves[p]);
    out[p].u = local_coefficients(U, dofs, p);
  });
  return out;
}

namespace detail {

/// Matched face sides at edge-rule parameter s: self point on local face k
/// and neighbour point through the stored correspondence.
inline std::pair<FaceSide, FaceSide> matched_sides(const ElementData& self,
                                                   const ElementData& other,
                                                   const FaceNeighbor& fn, double s) {
  const Vec2 xhat_other = fn.map.other_a + s * (fn.map.other_b - fn.map.other_a);
  const Vec2 xi_self = face_point(fn.local_face, s);
  const Vec2 xi_other = other.geometry.map.to_reference(xhat_other);
  return {face_side(self.geometry, self.u, fn.local_face, xi_self),
          face_side(other.geometry, other.u, fn.neighbor_face, xi_other)};
}

}  // namespace detail

/// eta_T^2 = h_T^2 int_T R^2 + h_T int_dT J^2 on Gamma. Each interior face is
/// integrated once and added to both incident elements with their own h.
inline void eta_indicators(const ConformingMesh& mesh, const std::vector<ElementData>& data,
                           const ManufacturedProblem& problem, const EstimatorOptions& opt,
                           IndicatorSet& out) {
  const auto leaves = mesh.leaves();
  const std::size_t count = leaves.size();
  out.element_ids.assign(leaves.begin(), leaves.end());
  out.eta_interior2.assign(count, 0.0);
  out.eta_jump2.assign(count, 0.0);
  if (count == 0) return;
  const int n = data.front().geometry.degree;
  const auto& tab = tabulate(n, opt.quadrature.element_degree(n));
  const auto& rule = *tab.rule;
  const auto& erule = edge_rule(opt.quadrature.edge_degree(n));

  // Face integrals per (leaf, local face); only the owning side computes.
  std::vector<std::array<double, 3>> face_int(count, {0.0, 0.0, 0.0});
  std::vector<std::array<int, 3>> face_other(count, {-1, -1, -1});
  parallel_for(count, [&](std::size_t p) {
    const auto& d = data[p];
    const auto& g = d.geometry;
    const double jac = std::abs(g.map.B.determinant());
    double interior = 0.0;
    for (std::size_t k = 0; k < rule.size(); ++k) {
      const Vec2 xi(rule.points[k][0], rule.points[k][1]);
      const auto frame = discrete_frame_from(g.X, tab.values[k], tab.gradients[k],
                                             tab.hessians[k], g.map, xi, true);
      const auto exact = exact_frame(*g.chart, frame.xhat);
      const double fval = problem.f ? problem.f(exact.point) : 0.0;
      const double r = interior_residual(
          frame, fval, exact.q, local_derivatives(d.u, tab.gradients[k], tab.hessians[k], g.map));
      interior += rule.weights[k] * jac * r * r * frame.q;
    }
    out.eta_interior2[p] = g.h * g.h * interior;
    for (const auto& fn : mesh.face_neighbors(leaves[p])) {
      if (fn.neighbor == kBoundaryMark || fn.neighbor < leaves[p]) continue;
      const auto q = static_cast<std::size_t>(mesh.leaf_position(fn.neighbor));
      double jump = 0.0;
      for (std::size_t k = 0; k < erule.size(); ++k) {
        const auto [plus, minus] = detail::matched_sides(d, data[q], fn, erule.points[k][0]);
        const double j = jump_residual(plus, minus);
        jump += erule.weights[k] * plus.frame.param_length * plus.frame.r * j * j;
      }
      face_int[p][static_cast<std::size_t>(fn.local_face)] = jump;
      face_other[p][static_cast<std::size_t>(fn.local_face)] = static_cast<int>(q);
    }
  });
  for (std::size_t p = 0; p < count; ++p)
    for (std::size_t k = 0; k < 3; ++k) {
      const int q = face_other[p][k];
      if (q < 0) continue;
      out.eta_jump2[p] += data[p].geometry.h * face_int[p][k];
      out.eta_jump2[static_cast<std::size_t>(q)] +=
          data[static_cast<std::size_t>(q)].geometry.h * face_int[p][k];
    }
}

/// osc_T(U,T)^2, osc_T(f,T)^2 and the combined osc_T(U,f,T)^2, all on the
/// parametric element and its edges with plain Lebesgue measure.
inline void oscillation(const ConformingMesh& mesh, const std::vector<ElementData>& data,
                        const ManufacturedProblem& problem, const EstimatorOptions& opt,
                        IndicatorSet& out) {
  const auto leaves = mesh.leaves();
  const std::size_t count = leaves.size();
  out.osc_u2.assign(count, 0.0);
  out.osc_f2.assign(count, 0.0);
  out.osc2.assign(count, 0.0);
  if (count == 0) return;
  const int n = data.front().geometry.degree;
  const int m_elem = 2 * n - 2;
  const int m_face = 2 * n - 1;
  const auto& tab =
      tabulate(n, std::min(opt.quadrature.element_degree(n) + 2 * m_elem + 2, kMaxQuadratureDegree));
  const auto& rule = *tab.rule;
  const auto& erule =
      edge_rule(std::min(opt.quadrature.edge_degree(n) + 2 * m_face + 2, kMaxQuadratureDegree));
  const LocalProjector elem_proj(rule.points, rule.weights, ProjectionDomain::Triangle, m_elem);
  const LocalProjector edge_proj(erule.points, erule.weights, ProjectionDomain::Edge, m_face);
  // Face terms per (leaf, local face); only the owning side computes.
  std::vector<std::array<double, 3>> face_u(count, {0.0, 0.0, 0.0});
  std::vector<std::array<double, 3>> face_both(count, {0.0, 0.0, 0.0});
  std::vector<std::array<int, 3>> face_other(count, {-1, -1, -1});
  parallel_for(count, [&](std::size_t p) {
    const auto& d = data[p];
    const auto& g = d.geometry;
    const double jac = std::abs(g.map.B.determinant());
    std::vector<double> div(rule.size()), fq(rule.size()), both(rule.size());
    for (std::size_t k = 0; k < rule.size(); ++k) {
      const Vec2 xi(rule.points[k][0], rule.points[k][1]);
      const auto frame = discrete_frame_from(g.X, tab.values[k], tab.gradients[k],
                                             tab.hessians[k], g.map, xi, true);
      const auto exact = exact_frame(*g.chart, frame.xhat);
      div[k] = flux_divergence(frame,
                               local_derivatives(d.u, tab.gradients[k], tab.hessians[k], g.map));
      fq[k] = (problem.f ? problem.f(exact.point) : 0.0) * exact.q;
      both[k] = fq[k] + div[k];
    }
    const double h2 = g.h * g.h;
    const double osc_u = h2 * jac * elem_proj.residual2(div);
    const double osc_f = h2 * jac * elem_proj.residual2(fq);
    const double osc = h2 * jac * elem_proj.residual2(both);
    for (const auto& fn : mesh.face_neighbors(leaves[p])) {
      if (fn.neighbor == kBoundaryMark || fn.neighbor < leaves[p]) continue;
      const auto q = static_cast<std::size_t>(mesh.leaf_position(fn.neighbor));
      std::vector<double> diff(erule.size()), sum(erule.size());
      double length = 0.0;
      for (std::size_t k = 0; k < erule.size(); ++k) {
        const auto [plus, minus] = detail::matched_sides(d, data[q], fn, erule.points[k][0]);
        diff[k] = plus.parametric_flux() - minus.parametric_flux();
        sum[k] = plus.parametric_flux() + minus.parametric_flux();
        length = plus.frame.param_length;
      }
      const auto f = static_cast<std::size_t>(fn.local_face);
      face_u[p][f] = length * edge_proj.residual2(diff);
      face_both[p][f] = length * edge_proj.residual2(sum);
      face_other[p][f] = static_cast<int>(q);
    }
    out.osc_u2[p] = osc_u;
    out.osc_f2[p] = osc_f;
    out.osc2[p] = osc;
  });
  for (std::size_t p = 0; p < count; ++p)
    for (std::size_t k = 0; k < 3; ++k) {
      const int q = face_other[p][k];
      if (q < 0) continue;
      const auto qq = static_cast<std::size_t>(q);
      out.osc_u2[p] += data[p].geometry.h * face_u[p][k];
      out.osc2[p] += data[p].geometry.h * face_both[p][k];
      out.osc_u2[qq] += data[qq].geometry.h * face_u[p][k];
      out.osc2[qq] += data[qq].geometry.h * face_both[p][k];
    }
}

/// eta, lambda and oscillation for the current discrete solution.
inline IndicatorSet estimate(const ConformingMesh& mesh, const MacroSurface& surface,
                             const SurfaceInterpolant& interp, const DofMap& dofs,
                             const DiscreteField& U, const ManufacturedProblem& problem,
                             const EstimatorOptions& opt = {}, bool with_oscillation = true,
                             LambdaCache* lambda_cache = nullptr) {
  const auto data = gather_elements(mesh, surface, interp, dofs, U);
  IndicatorSet out;
  eta_indicators(mesh, data, problem, opt, out);
  if (with_oscillation) oscillation(mesh, data, problem, opt, out);
  if (lambda_cache && lambda_cache->degree() == interp.degree &&
      lambda_cache->safety() == opt.lambda_safety) {
    out.lambda = lambda_cache->evaluate(mesh, surface);
    return out;
  }
  out.lambda.assign(out.size(), 0.0);
  parallel_for(out.size(), [&](std::size_t p) {
    out.lambda[p] = geometric_indicator(data[p].geometry, opt.lambda_safety);
  });
  return out;
}

/// Fills the oscillation terms of an IndicatorSet estimated without them.
inline void add_oscillation(const ConformingMesh& mesh, const MacroSurface& surface,
                            const SurfaceInterpolant& interp, const DofMap& dofs,
                            const DiscreteField& U, const ManufacturedProblem& problem,
                            const EstimatorOptions& opt, IndicatorSet& out) {
  oscillation(mesh, gather_elements(mesh, surface, interp, dofs, U), problem, opt, out);
}

// Energy error
// ------------

/// |grad_gamma(u - U)|_{L2(gamma)} with U lifted through the shared
/// parametric coordinates.
inline double energy_error(const ConformingMesh& mesh, const MacroSurface& surface,
                           const DofMap& dofs,
                           const DiscreteField& U, const ManufacturedProblem& problem,
                           const QuadratureOptions& quad = {}) {
  if (!problem.has_exact_solution())
    throw MissingExactSolution("problem '" + problem.name + "' has no exact gradient");
  const auto leaves = mesh.leaves();
  const int n = dofs.degree;
  const auto& tab = tabulate(n, quad.energy_degree(n));
  const auto& rule = *tab.rule;
  std::vector<double> parts(leaves.size(), 0.0);
  parallel_for(leaves.size(), [&](std::size_t p) {
    const auto& t = mesh.element(leaves[p]);
    const auto map = element_map(t);
    const auto& chart = surface.chart(t.macro_id);
    const auto u = local_coefficients(U, dofs, p);
    const double jac = std::abs(map.B.determinant());
    double s = 0.0;
    for (std::size_t k = 0; k < rule.size(); ++k) {
      const Vec2 xi(rule.points[k][0], rule.points[k][1]);
      const auto exact = exact_frame(chart, map.to_param(xi));
      const Vec2 grad_U = (u.transpose() * tab.gradients[k] * map.Binv).transpose();
      const Vec2 a = exact.T.transpose() * problem.grad_u(exact.point) - grad_U;
      s += rule.weights[k] * jac * a.dot(exact.Ginv * a) * exact.q;
    }
    parts[p] = s;
  });
  return std::sqrt(std::accumulate(parts.begin(), parts.end(), 0.0));
}

// Effectivity
// -----------

struct Effectivity {
  double error_over_eta = std::numeric_limits<double>::quiet_NaN();
  double osc_over_eta = std::numeric_limits<double>::quiet_NaN();
  double lambda_over_eta = std::numeric_limits<double>::quiet_NaN();
  /// Largest per-element osc_T(U,f,T) / eta_T over elements with eta_T > 0.
  double max_local_osc_ratio = 0.0;
  /// True when error and eta both vanish, so the ratios are undefined.
  bool degenerate = false;
};

inline Effectivity effectivity(const IndicatorSet& ind, double energy_err) {
  Effectivity e;
  const double eta = ind.eta();
  if (eta == 0.0) {
    e.degenerate = energy_err == 0.0;
    return e;
  }
  e.error_over_eta = energy_err / eta;
  e.osc_over_eta = ind.osc() / eta;
  e.lambda_over_eta = ind.lambda_max() / eta;
  for (std::size_t i = 0; i < ind.size(); ++i) {
    const double et = ind.eta_element(i);
    if (et > 0.0) e.max_local_osc_ratio = std::max(e.max_local_osc_ratio, std::sqrt(ind.osc2[i]) / et);
  }
  return e;
}

}  // namespace lbafem
