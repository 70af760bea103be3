#pragma once
/// \file quadrature.hpp
/// \brief Quadrature on the reference triangle conv{(0,0),(1,0),(0,1)} and on
///        the reference edge [0,1].

#include "lbafem/common.hpp"

#include <array>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <vector>

namespace lbafem {

inline constexpr int kMaxQuadratureDegree = 40;

enum class QuadratureDomain { Triangle, Edge };

struct QuadratureRule {
  QuadratureDomain domain = QuadratureDomain::Triangle;
  int degree = 0;
  /// Triangle: (xi, eta); edge: (s, 0).
  std::vector<std::array<double, 2>> points;
  std::vector<double> weights;

  std::size_t size() const { return weights.size(); }
};

namespace detail {

/// k-point Gauss-Legendre rule on [0,1], Newton iteration on P_k.
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre_unit(int k) {
  std::vector<double> x(static_cast<std::size_t>(k));
  std::vector<double> w(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    double t = std::cos(std::numbers::pi * (i + 0.75) / (k + 0.5));
    double dp = 1.0;
    for (int it = 0; it < 100; ++it) {
      const double p = std::legendre(static_cast<unsigned>(k), t);
      const double pm = k > 0 ? std::legendre(static_cast<unsigned>(k - 1), t) : 0.0;
      dp = k * (t * p - pm) / (t * t - 1.0);
      const double dt = p / dp;
      t -= dt;
      if (std::abs(dt) < 1e-16) break;
    }
    {
      const double p = std::legendre(static_cast<unsigned>(k), t);
      const double pm = std::legendre(static_cast<unsigned>(k - 1), t);
      dp = k * (t * p - pm) / (t * t - 1.0);
    }
    // Map [-1,1] -> [0,1].
    x[static_cast<std::size_t>(i)] = 0.5 * (1.0 - t);
    w[static_cast<std::size_t>(i)] = 1.0 / ((1.0 - t * t) * dp * dp);
  }
  return {x, w};
}

inline QuadratureRule make_triangle_rule(int degree) {
  QuadratureRule rule;
  rule.domain = QuadratureDomain::Triangle;
  rule.degree = degree;
  if (degree <= 1) {
    rule.points = {{1.0 / 3.0, 1.0 / 3.0}};
    rule.weights = {0.5};
    return rule;
  }
  if (degree == 2) {
    rule.points = {{1.0 / 6.0, 1.0 / 6.0}, {2.0 / 3.0, 1.0 / 6.0}, {1.0 / 6.0, 2.0 / 3.0}};
    rule.weights = {1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0};
    return rule;
  }
  // Collapsed (Duffy) product of Gauss-Legendre rules: x = u, y = (1-u) v.
  const int k = (degree + 3) / 2;
  const auto [gx, gw] = gauss_legendre_unit(k);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      const double u = gx[static_cast<std::size_t>(i)];
      const double v = gx[static_cast<std::size_t>(j)];
      rule.points.push_back({u, (1.0 - u) * v});
      rule.weights.push_back(gw[static_cast<std::size_t>(i)] * gw[static_cast<std::size_t>(j)] *
                             (1.0 - u));
    }
  }
  return rule;
}

inline QuadratureRule make_edge_rule(int degree) {
  QuadratureRule rule;
  rule.domain = QuadratureDomain::Edge;
  rule.degree = degree;
  const int k = std::max(1, (degree + 2) / 2);
  const auto [gx, gw] = gauss_legendre_unit(k);
  for (int i = 0; i < k; ++i) {
    rule.points.push_back({gx[static_cast<std::size_t>(i)], 0.0});
    rule.weights.push_back(gw[static_cast<std::size_t>(i)]);
  }
  return rule;
}

}  // namespace detail

/// Rule exact for polynomials of total degree <= exactness_degree. Rules are
/// built once and cached; the returned reference stays valid.
inline const QuadratureRule& quadrature_rule(QuadratureDomain domain, int exactness_degree) {
  if (exactness_degree < 0 || exactness_degree > kMaxQuadratureDegree)
    throw UnsupportedDegree("quadrature degree " + std::to_string(exactness_degree) +
                            " outside [0, " + std::to_string(kMaxQuadratureDegree) + "]");
  static std::mutex mutex;
  static std::map<std::pair<int, int>, QuadratureRule> cache;
  const std::lock_guard lock(mutex);
  const auto key = std::pair{static_cast<int>(domain), exactness_degree};
  auto it = cache.find(key);
  if (it == cache.end()) {
    it = cache
             .emplace(key, domain == QuadratureDomain::Triangle
                               ? detail::make_triangle_rule(exactness_degree)
                               : detail::make_edge_rule(exactness_degree))
             .first;
  }
  return it->second;
}

inline const QuadratureRule& triangle_rule(int degree) {
  return quadrature_rule(QuadratureDomain::Triangle, degree);
}
inline const QuadratureRule& edge_rule(int degree) {
  return quadrature_rule(QuadratureDomain::Edge, degree);
}

/// Quadrature exactness per integral family. Zero means the default for the
/// polynomial degree n: 2n+4 on elements, 2n+3 on edges, 2n+6 for energy
/// integrals against the exact chart.
struct QuadratureOptions {
  int element = 0;
  int edge = 0;
  int energy = 0;

  int element_degree(int n) const { return element > 0 ? element : 2 * n + 4; }
  int edge_degree(int n) const { return edge > 0 ? edge : 2 * n + 3; }
  int energy_degree(int n) const { return energy > 0 ? energy : 2 * n + 6; }
};

}  // namespace lbafem
