#pragma once
/// \file lagrange.hpp
/// \brief Degree-n Lagrange basis on the reference triangle with values,
///        gradients and Hessians, plus tabulation on quadrature rules.

#include "lbafem/common.hpp"
#include "lbafem/quadrature.hpp"

#include <array>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

namespace lbafem {

inline constexpr int kMaxLagrangeDegree = 3;

/// Symmetric 2x2 second derivative stored as (d11, d12, d22).
using Hessian2 = std::array<double, 3>;

class LagrangeBasis {
 public:
  /// Nodes are xi = (i/n, j/n), enumerated with j outer and i inner, so for
  /// n = 1 the order is (0,0), (1,0), (0,1).
  explicit LagrangeBasis(int n) : n_(n) {
    if (n < 1 || n > kMaxLagrangeDegree)
      throw UnsupportedDegree("Lagrange degree " + std::to_string(n) + " outside [1, " +
                              std::to_string(kMaxLagrangeDegree) + "]");
    for (int j = 0; j <= n; ++j)
      for (int i = 0; i + j <= n; ++i) nodes_.push_back({i, j});
    for (int d = 0; d <= n; ++d)
      for (int b = 0; b <= d; ++b) monomials_.push_back({d - b, b});
    const auto size = static_cast<Eigen::Index>(nodes_.size());
    Eigen::MatrixXd vandermonde(size, size);
    for (Eigen::Index k = 0; k < size; ++k) {
      const double x = static_cast<double>(nodes_[static_cast<std::size_t>(k)][0]) / n;
      const double y = static_cast<double>(nodes_[static_cast<std::size_t>(k)][1]) / n;
      for (Eigen::Index m = 0; m < size; ++m) {
        const auto [a, b] = monomials_[static_cast<std::size_t>(m)];
        vandermonde(k, m) = std::pow(x, a) * std::pow(y, b);
      }
    }
    coefficients_ = vandermonde.fullPivLu().inverse();
  }

  int degree() const { return n_; }
  int size() const { return static_cast<int>(nodes_.size()); }
  const std::vector<std::array<int, 2>>& nodes() const { return nodes_; }
  Vec2 node(int k) const {
    return {static_cast<double>(nodes_[static_cast<std::size_t>(k)][0]) / n_,
            static_cast<double>(nodes_[static_cast<std::size_t>(k)][1]) / n_};
  }

  void values(const Vec2& xi, Eigen::VectorXd& out) const {
    const auto mono = monomial_values(xi);
    out = coefficients_.transpose() * mono;
  }

  /// Row k holds the reference gradient of basis function k.
  void gradients(const Vec2& xi, Eigen::MatrixX2d& out) const {
    const auto size = static_cast<Eigen::Index>(nodes_.size());
    Eigen::VectorXd dx(size), dy(size);
    for (Eigen::Index m = 0; m < size; ++m) {
      const auto [a, b] = monomials_[static_cast<std::size_t>(m)];
      dx(m) = a > 0 ? a * ipow(xi.x(), a - 1) * ipow(xi.y(), b) : 0.0;
      dy(m) = b > 0 ? b * ipow(xi.x(), a) * ipow(xi.y(), b - 1) : 0.0;
    }
    out.resize(size, 2);
    out.col(0) = coefficients_.transpose() * dx;
    out.col(1) = coefficients_.transpose() * dy;
  }

  /// Row k holds (d11, d12, d22) of basis function k.
  void hessians(const Vec2& xi, Eigen::MatrixX3d& out) const {
    const auto size = static_cast<Eigen::Index>(nodes_.size());
    Eigen::MatrixX3d mono(size, 3);
    for (Eigen::Index m = 0; m < size; ++m) {
      const auto [a, b] = monomials_[static_cast<std::size_t>(m)];
      const double x = xi.x();
      const double y = xi.y();
      mono(m, 0) = a > 1 ? a * (a - 1) * ipow(x, a - 2) * ipow(y, b) : 0.0;
      mono(m, 1) = (a > 0 && b > 0) ? a * b * ipow(x, a - 1) * ipow(y, b - 1) : 0.0;
      mono(m, 2) = b > 1 ? b * (b - 1) * ipow(x, a) * ipow(y, b - 2) : 0.0;
    }
    out = coefficients_.transpose() * mono;
  }

 private:
  static double ipow(double x, int p) {
    double r = 1.0;
    for (int i = 0; i < p; ++i) r *= x;
    return r;
  }

  Eigen::VectorXd monomial_values(const Vec2& xi) const {
    Eigen::VectorXd mono(static_cast<Eigen::Index>(monomials_.size()));
    for (std::size_t m = 0; m < monomials_.size(); ++m)
      mono(static_cast<Eigen::Index>(m)) =
          ipow(xi.x(), monomials_[m][0]) * ipow(xi.y(), monomials_[m][1]);
    return mono;
  }

  int n_;
  std::vector<std::array<int, 2>> nodes_;
  std::vector<std::array<int, 2>> monomials_;
  /// phi_k = sum_m coefficients_(m, k) * monomial_m.
  Eigen::MatrixXd coefficients_;
};

inline const LagrangeBasis& lagrange_basis(int n) {
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<LagrangeBasis>> cache;
  const std::lock_guard lock(mutex);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<LagrangeBasis>(n);
  return *slot;
}

/// Basis values, gradients and Hessians at every node of a triangle rule.
struct BasisTabulation {
  const QuadratureRule* rule = nullptr;
  std::vector<Eigen::VectorXd> values;
  std::vector<Eigen::MatrixX2d> gradients;
  std::vector<Eigen::MatrixX3d> hessians;
};

inline const BasisTabulation& tabulate(int n, int quadrature_degree) {
  static std::mutex mutex;
  static std::map<std::pair<int, int>, std::unique_ptr<BasisTabulation>> cache;
  const auto& rule = triangle_rule(quadrature_degree);
  const auto& basis = lagrange_basis(n);
  const std::lock_guard lock(mutex);
  auto& slot = cache[{n, quadrature_degree}];
  if (!slot) {
    slot = std::make_unique<BasisTabulation>();
    slot->rule = &rule;
    for (const auto& p : rule.points) {
      const Vec2 xi(p[0], p[1]);
      Eigen::VectorXd v;
      Eigen::MatrixX2d g;
      Eigen::MatrixX3d h;
      basis.values(xi, v);
      basis.gradients(xi, g);
      basis.hessians(xi, h);
      slot->values.push_back(std::move(v));
      slot->gradients.push_back(std::move(g));
      slot->hessians.push_back(std::move(h));
    }
  }
  return *slot;
}

}  // namespace lbafem
