#pragma once
/// \file benchmarks.hpp
/// \brief Built-in benchmark problems: surface plus manufactured data.

#include "lbafem/charts.hpp"
#include "lbafem/common.hpp"
#include "lbafem/estimators.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <string>
#include <vector>

namespace lbafem {

struct Benchmark {
  std::string name;
  MacroSurface surface;
  ManufacturedProblem problem;
  /// Rate quantity: "energy_error" when an exact solution exists,
  /// otherwise the total estimator eta + lambda / omega.
  std::string rate_quantity = "energy_error";
};

/// -Delta_gamma of u(x, y) on the graph z = g(x, y), from the gradient w
/// and Hessian H of g and the derivatives of u:
/// G^-1 : Hess u + ((w^T H w) / q^4 - tr H / q^2) (w . grad u).
inline double graph_laplace_beltrami(const Vec2& w, const Mat2& H, const Vec2& grad_u,
                                     const Mat2& hess_u) {
  const double q2 = 1.0 + w.squaredNorm();
  const Mat2 ginv = Mat2::Identity() - w * w.transpose() / q2;
  const double lap = (ginv.cwiseProduct(hess_u)).sum() +
                     (w.dot(H * w) / (q2 * q2) - H.trace() / q2) * w.dot(grad_u);
  return -lap;
}

inline Benchmark flat_square_sin() {
  using std::numbers::pi;
  Benchmark b;
  b.name = "flat_square_sin";
  b.surface = flat_square();
  b.problem.name = b.name;
  b.problem.constraint = Constraint::Dirichlet;
  b.problem.u = [](const Vec3& x) { return std::sin(pi * x.x()) * std::sin(pi * x.y()); };
  b.problem.grad_u = [](const Vec3& x) {
    return Vec3(pi * std::cos(pi * x.x()) * std::sin(pi * x.y()),
                pi * std::sin(pi * x.x()) * std::cos(pi * x.y()), 0.0);
  };
  b.problem.f = [](const Vec3& x) {
    return 2.0 * pi * pi * std::sin(pi * x.x()) * std::sin(pi * x.y());
  };
  return b;
}

inline Benchmark lshape_f1() {
  Benchmark b;
  b.name = "lshape_f1";
  b.surface = lshape();
  b.problem.name = b.name;
  b.problem.constraint = Constraint::Dirichlet;
  b.problem.f = [](const Vec3&) { return 1.0; };
  b.rate_quantity = "total_estimator";
  return b;
}

/// u = xy is a degree-2 spherical harmonic: -Delta u = 6u, zero mean.
inline Benchmark sphere_xy() {
  Benchmark b;
  b.name = "sphere_xy";
  b.surface = unit_sphere();
  b.problem.name = b.name;
  b.problem.constraint = Constraint::ZeroMean;
  b.problem.u = [](const Vec3& x) { return x.x() * x.y(); };
  b.problem.grad_u = [](const Vec3& x) { return Vec3(x.y(), x.x(), 0.0); };
  b.problem.f = [](const Vec3& x) { return 6.0 * x.x() * x.y(); };
  return b;
}

/// Gaussian bump graph over the unit square with u = sin(pi x) sin(pi y).
inline Benchmark graph_peak(const PeakParameters& p = {}) {
  using std::numbers::pi;
  Benchmark b;
  b.name = "graph_peak";
  b.surface = graph_peak_surface(p);
  b.problem.name = b.name;
  b.problem.constraint = Constraint::Dirichlet;
  b.problem.u = [](const Vec3& x) { return std::sin(pi * x.x()) * std::sin(pi * x.y()); };
  b.problem.grad_u = [](const Vec3& x) {
    return Vec3(pi * std::cos(pi * x.x()) * std::sin(pi * x.y()),
                pi * std::sin(pi * x.x()) * std::cos(pi * x.y()), 0.0);
  };
  b.problem.f = [p](const Vec3& x) {
    const Vec2 r = x.head<2>() - p.center;
    const double s2 = p.width * p.width;
    const double g = p.amplitude * std::exp(-r.squaredNorm() / s2);
    const Vec2 w = (-2.0 / s2) * g * r;
    const Mat2 H = (-2.0 / s2) * g * (Mat2::Identity() - (2.0 / s2) * r * r.transpose());
    const double sx = std::sin(pi * x.x()), cx = std::cos(pi * x.x());
    const double sy = std::sin(pi * x.y()), cy = std::cos(pi * x.y());
    const Vec2 grad_u(pi * cx * sy, pi * sx * cy);
    Mat2 hess_u;
    hess_u << -pi * pi * sx * sy, pi * pi * cx * cy, pi * pi * cx * cy, -pi * pi * sx * sy;
    return graph_laplace_beltrami(w, H, grad_u, hess_u);
  };
  return b;
}

inline const std::map<std::string, Benchmark (*)()>& benchmark_registry() {
  static const std::map<std::string, Benchmark (*)()> registry{
      {"flat_square_sin", flat_square_sin},
      {"lshape_f1", lshape_f1},
      {"sphere_xy", sphere_xy},
      {"graph_peak", [] { return graph_peak(); }}};
  return registry;
}

inline Benchmark make_benchmark(const std::string& name) {
  const auto& registry = benchmark_registry();
  const auto it = registry.find(name);
  if (it == registry.end()) throw UnknownKey("unknown benchmark '" + name + "'");
  return it->second();
}

}  // namespace lbafem
