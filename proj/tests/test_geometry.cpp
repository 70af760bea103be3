#include "lbafem/charts.hpp"
#include "lbafem/geometry.hpp"
#include "lbafem/lagrange.hpp"
#include "lbafem/quadrature.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace lbafem;

namespace {

double factorial(int k) { return std::tgamma(k + 1.0); }

/// Integral of x^a y^b over the reference triangle.
double monomial_integral(int a, int b) { return factorial(a) * factorial(b) / factorial(a + b + 2); }

ConformingMesh mesh_of(const MacroSurface& s) { return ConformingMesh(s.topology); }

Vec3 interpolant_at(const ElementGeometry& g, const Vec2& xi) {
  Eigen::VectorXd v;
  lagrange_basis(g.degree).values(xi, v);
  return g.X.transpose() * v;
}

}  // namespace

TEST(Quadrature, SpecExamples) {
  const auto& r2 = triangle_rule(2);
  double s = 0.0;
  for (std::size_t k = 0; k < r2.size(); ++k) s += r2.weights[k] * r2.points[k][0] * r2.points[k][1];
  EXPECT_NEAR(s, 1.0 / 24.0, 1e-15);
  const auto& e1 = edge_rule(1);
  double w = 0.0;
  for (double x : e1.weights) w += x;
  EXPECT_NEAR(w, 1.0, 1e-15);
  const auto& r0 = triangle_rule(0);
  ASSERT_EQ(r0.size(), 1u);
  EXPECT_EQ(r0.weights[0], 0.5);
}

TEST(Quadrature, ExactOnMonomialsUpToMaximum) {
  for (int degree = 0; degree <= kMaxQuadratureDegree; ++degree) {
    const auto& rule = triangle_rule(degree);
    for (double w : rule.weights) EXPECT_GT(w, 0.0);
    for (int a = 0; a <= degree; ++a)
      for (int b = 0; a + b <= degree; ++b) {
        double s = 0.0;
        for (std::size_t k = 0; k < rule.size(); ++k)
          s += rule.weights[k] * std::pow(rule.points[k][0], a) * std::pow(rule.points[k][1], b);
        EXPECT_NEAR(s, monomial_integral(a, b), 1e-14) << degree << " " << a << " " << b;
      }
    const auto& edge = edge_rule(degree);
    for (int a = 0; a <= degree; ++a) {
      double s = 0.0;
      for (std::size_t k = 0; k < edge.size(); ++k) s += edge.weights[k] * std::pow(edge.points[k][0], a);
      EXPECT_NEAR(s, 1.0 / (a + 1), 1e-14);
    }
  }
}

TEST(Quadrature, UnsupportedDegreeThrows) {
  EXPECT_THROW(triangle_rule(kMaxQuadratureDegree + 1), UnsupportedDegree);
  EXPECT_THROW(edge_rule(-1), UnsupportedDegree);
}

TEST(Lagrange, NodalBasisProperties) {
  for (int n = 1; n <= 3; ++n) {
    const auto& basis = lagrange_basis(n);
    EXPECT_EQ(basis.size(), (n + 1) * (n + 2) / 2);
    for (int k = 0; k < basis.size(); ++k) {
      Eigen::VectorXd v;
      basis.values(basis.node(k), v);
      for (int j = 0; j < basis.size(); ++j) EXPECT_NEAR(v(j), j == k ? 1.0 : 0.0, 1e-13);
    }
    Eigen::VectorXd v;
    Eigen::MatrixX2d g;
    const Vec2 p(0.21, 0.37);
    basis.values(p, v);
    basis.gradients(p, g);
    EXPECT_NEAR(v.sum(), 1.0, 1e-14);
    EXPECT_NEAR(g.col(0).sum(), 0.0, 1e-12);
    const double h = 1e-6;
    Eigen::VectorXd vp, vm;
    basis.values(p + Vec2(h, 0), vp);
    basis.values(p - Vec2(h, 0), vm);
    EXPECT_LT(((vp - vm) / (2 * h) - g.col(0)).cwiseAbs().maxCoeff(), 1e-7);
  }
  EXPECT_THROW(LagrangeBasis(4), UnsupportedDegree);
  EXPECT_THROW(LagrangeBasis(0), UnsupportedDegree);
}

TEST(Interpolant, AffineChartReproducedExactly) {
  const auto s = lshape();
  auto mesh = mesh_of(s);
  mesh.refine_uniform(2);
  for (int n = 1; n <= 3; ++n) {
    const auto interp = interpolate_chart(mesh, s, n);
    for (int id : mesh.leaves()) {
      const auto g = element_geometry(mesh, s, interp, id);
      for (const Vec2 xi : {Vec2(0.2, 0.3), Vec2(0.7, 0.1)}) {
        EXPECT_LT((interpolant_at(g, xi) - g.chart->eval(g.map.to_param(xi))).norm(), 1e-14);
      }
    }
  }
}

TEST(Interpolant, ParabolaDegreeTwoReproduced) {
  const auto s = parabola_triangle();
  auto mesh = mesh_of(s);
  mesh.refine_uniform(1);
  const auto interp = interpolate_chart(mesh, s, 2);
  for (int id : mesh.leaves()) {
    const auto g = element_geometry(mesh, s, interp, id);
    const Vec2 xi(0.3, 0.25);
    EXPECT_LT((interpolant_at(g, xi) - g.chart->eval(g.map.to_param(xi))).norm(), 1e-14);
  }
}

TEST(Interpolant, ParabolaLinearIsPlaneZEqualsX) {
  const auto s = parabola_triangle();
  const auto mesh = mesh_of(s);
  const auto interp = interpolate_chart(mesh, s, 1);
  const auto g = element_geometry(mesh, s, interp, mesh.leaves()[0]);
  // Interpolation conditions at (0,0), (1,0), (0,1) give z = x.
  for (const Vec2 xi : {Vec2(0.1, 0.2), Vec2(0.6, 0.3), Vec2(0.0, 0.9)}) {
    const Vec2 xhat = g.map.to_param(xi);
    EXPECT_NEAR(interpolant_at(g, xi).z(), xhat.x(), 1e-15);
  }
}

TEST(Interpolant, SharedNodesAreBitIdentical) {
  const auto s = unit_sphere();
  auto mesh = mesh_of(s);
  mesh.refine_uniform(3);
  const auto interp = interpolate_chart(mesh, s, 2);
  for (int id : mesh.leaves()) {
    const auto g = element_geometry(mesh, s, interp, id);
    for (const auto& fn : mesh.face_neighbors(id)) {
      const auto o = element_geometry(mesh, s, interp, fn.neighbor);
      for (double t : {0.0, 0.5, 1.0}) {
        const Vec2 xs = g.map.to_reference(fn.map.self_a + t * (fn.map.self_b - fn.map.self_a));
        const Vec2 xo = o.map.to_reference(fn.map.other_a + t * (fn.map.other_b - fn.map.other_a));
        EXPECT_LT((interpolant_at(g, xs) - interpolant_at(o, xo)).norm(), 1e-15);
      }
    }
  }
}

TEST(Interpolant, DegenerateChartThrows) {
  MacroSurface s = reference_triangle();
  s.charts[0].eval = [](const Vec2& x) { return Vec3(x.x() + x.y(), 0, 0); };
  s.charts[0].jacobian = [](const Vec2&) {
    Mat32 j;
    j << 1, 1, 0, 0, 0, 0;
    return j;
  };
  const auto mesh = mesh_of(s);
  EXPECT_THROW(interpolate_chart(mesh, s, 1), DegenerateElement);
}

TEST(GeometricIndicator, AffineChartIsZero) {
  auto s = flat_square();
  auto mesh = mesh_of(s);
  const auto interp = interpolate_chart(mesh, s, 1);
  for (int id : mesh.leaves())
    EXPECT_EQ(geometric_indicator(element_geometry(mesh, s, interp, id)), 0.0);
  // Same with the polynomial flag cleared, so the sampling path runs.
  for (auto& c : s.charts) c.polynomial_degree = -1;
  for (int id : mesh.leaves())
    EXPECT_LT(geometric_indicator(element_geometry(mesh, s, interp, id)), 1e-14);
}

TEST(GeometricIndicator, ParabolaClosedForms) {
  const auto s = parabola_triangle();
  auto mesh = mesh_of(s);
  auto interp = interpolate_chart(mesh, s, 1);
  // grad(x^2 - x) = (2x - 1, 0), largest at x = 0 or 1.
  EXPECT_NEAR(geometric_indicator(element_geometry(mesh, s, interp, mesh.leaves()[0])), 1.0, 1e-14);
  mesh.refine_uniform(1);
  interp = interpolate_chart(mesh, s, 1);
  for (int id : mesh.leaves()) {
    const auto g = element_geometry(mesh, s, interp, id);
    double xmax = 0.0;
    for (const auto& v : mesh.element(id).vertices) xmax = std::max(xmax, v.to_vec().x());
    const double lambda = geometric_indicator(g);
    if (xmax == 0.5) {
      // Vertices (0,0), (0,1), (1/2,1/2): X = x/2, grad = (2x - 1/2, 0).
      EXPECT_NEAR(lambda, 0.5, 1e-14);
    } else {
      // Vertices (0,0), (1,0), (1/2,1/2): X = x - y/2, grad = (2x - 1, 1/2).
      EXPECT_NEAR(lambda, std::sqrt(1.25), 1e-14);
    }
  }
}

TEST(GeometricIndicator, PolynomialChartZeroAtEveryLevel) {
  const auto s = pyramid();
  auto mesh = mesh_of(s);
  for (int level = 0; level < 4; ++level) {
    const auto interp = interpolate_chart(mesh, s, 2);
    for (double l : geometric_indicators(mesh, s, interp)) EXPECT_EQ(l, 0.0);
    mesh.refine_uniform(1);
  }
}

TEST(GeometricIndicator, SphereDecayRate) {
  const auto s = unit_sphere();
  for (int n = 1; n <= 2; ++n) {
    auto mesh = mesh_of(s);
    mesh.refine_uniform(2);
    double previous = 0.0;
    for (int level = 0; level < 4; ++level) {
      const auto interp = interpolate_chart(mesh, s, n);
      const auto lambda = geometric_indicators(mesh, s, interp);
      const double current = *std::max_element(lambda.begin(), lambda.end());
      if (level > 0) {
        const double ratio = previous / current;
        EXPECT_GT(ratio, std::pow(2.0, n) / 2.0) << n << " " << level;
        EXPECT_LT(ratio, std::pow(2.0, n) * 2.0) << n << " " << level;
      }
      previous = current;
      mesh.refine_uniform(2);
    }
  }
}

TEST(GeometricIndicator, QuasiMonotoneUnderRefinement) {
  const auto s = unit_sphere();
  auto mesh = mesh_of(s);
  std::mt19937 rng(1);
  double worst = 0.0;
  for (int step = 0; step < 20; ++step) {
    const auto interp = interpolate_chart(mesh, s, 1);
    const auto lambda = geometric_indicators(mesh, s, interp);
    std::vector<double> by_id(mesh.num_elements(), 0.0);
    for (std::size_t p = 0; p < lambda.size(); ++p) by_id[static_cast<std::size_t>(mesh.leaves()[p])] = lambda[p];
    std::vector<int> marked;
    for (int id : mesh.leaves())
      if (rng() % 4 == 0) marked.push_back(id);
    if (marked.empty()) marked.push_back(mesh.leaves()[0]);
    mesh.refine(marked, 1);
    const auto fine = interpolate_chart(mesh, s, 1);
    const auto fine_lambda = geometric_indicators(mesh, s, fine);
    for (std::size_t p = 0; p < fine_lambda.size(); ++p) {
      int anc = mesh.leaves()[p];
      while (static_cast<std::size_t>(anc) >= by_id.size() || by_id[static_cast<std::size_t>(anc)] == 0.0) {
        anc = mesh.element(anc).parent;
        if (anc < 0) break;
      }
      if (anc >= 0) worst = std::max(worst, fine_lambda[p] / by_id[static_cast<std::size_t>(anc)]);
    }
  }
  EXPECT_LE(worst, 2.0);
}

TEST(Frames, IdentityAndLinearGraph) {
  const auto s = reference_triangle();
  const auto mesh = mesh_of(s);
  const auto interp = interpolate_chart(mesh, s, 2);
  const auto g = element_geometry(mesh, s, interp, mesh.leaves()[0]);
  const auto f = discrete_frame(g, Vec2(0.2, 0.2));
  EXPECT_LT((f.G - Mat2::Identity()).norm(), 1e-14);
  EXPECT_NEAR(f.q, 1.0, 1e-14);
  EXPECT_NEAR(f.dq[0], 0.0, 1e-12);
  EXPECT_NEAR(f.dq[1], 0.0, 1e-12);
  EXPECT_NEAR(exact_frame(g, Vec2(0.2, 0.2)).q, 1.0, 1e-15);

  const auto graph = graph_surface(
      "plane", {{0, 0}, {1, 0}, {0, 1}}, {{0, 1, 2}}, [](const Vec2& p) { return p.x(); },
      [](const Vec2&) { return Vec2(1.0, 0.0); }, 1);
  const auto gm = mesh_of(graph);
  const auto gi = interpolate_chart(gm, graph, 1);
  const auto gg = element_geometry(gm, graph, gi, gm.leaves()[0]);
  const auto gf = discrete_frame(gg, Vec2(0.3, 0.3));
  Mat2 expected;
  expected << 2, 0, 0, 1;
  EXPECT_LT((gf.G - expected).norm(), 1e-14);
  EXPECT_NEAR(gf.q, std::sqrt(2.0), 1e-14);
  EXPECT_NEAR(exact_frame(gg, Vec2(0.3, 0.3)).q, std::sqrt(2.0), 1e-14);
}

TEST(Frames, SphereAreaElementMatchesFiniteDifferences) {
  const auto s = unit_sphere();
  auto mesh = mesh_of(s);
  mesh.refine_uniform(2);
  for (int n = 1; n <= 3; ++n) {
    const auto interp = interpolate_chart(mesh, s, n);
    for (int id : mesh.leaves()) {
      const auto g = element_geometry(mesh, s, interp, id);
      const Vec2 xi(0.3, 0.4);
      const double h = 1e-6;
      // Central differences in the macro parameter directions.
      const Vec2 e1 = g.map.Binv.col(0) * h;
      const Vec2 e2 = g.map.Binv.col(1) * h;
      Mat32 t;
      t.col(0) = (interpolant_at(g, xi + e1) - interpolant_at(g, xi - e1)) / (2 * h);
      t.col(1) = (interpolant_at(g, xi + e2) - interpolant_at(g, xi - e2)) / (2 * h);
      const double q_fd = t.col(0).cross(t.col(1)).norm();
      EXPECT_NEAR(discrete_frame(g, xi).q, q_fd, 1e-6);
    }
  }
}

TEST(Frames, ConsistencyIdentities) {
  const auto s = unit_sphere();
  auto mesh = mesh_of(s);
  mesh.refine_uniform(3);
  const auto interp = interpolate_chart(mesh, s, 2);
  const auto& rule = triangle_rule(8);
  for (int id : mesh.leaves()) {
    const auto g = element_geometry(mesh, s, interp, id);
    for (const auto& p : rule.points) {
      const auto f = discrete_frame(g, Vec2(p[0], p[1]));
      EXPECT_LT((f.D * f.D.transpose() * f.G - Mat2::Identity()).norm(), 1e-10);
      EXPECT_LT((f.T * f.D + f.nu * f.nu.transpose() - Mat3::Identity()).norm(), 1e-10);
      const auto e = exact_frame(g, Vec2(p[0], p[1]));
      EXPECT_LT((e.T * e.D + e.nu * e.nu.transpose() - Mat3::Identity()).norm(), 1e-10);
      EXPECT_GT(f.nu.dot(e.nu), 0.0);
    }
  }
}

TEST(Frames, AnalyticDerivativesMatchFiniteDifferences) {
  const auto s = unit_sphere();
  auto mesh = mesh_of(s);
  std::mt19937 rng(9);
  for (int round = 0; round < 3; ++round) {
    std::vector<int> marked;
    for (int id : mesh.leaves())
      if (rng() % 2 == 0) marked.push_back(id);
    mesh.refine(marked, 1);
  }
  for (int n = 2; n <= 3; ++n) {
    const auto interp = interpolate_chart(mesh, s, n);
    for (int id : mesh.leaves()) {
      const auto g = element_geometry(mesh, s, interp, id);
      const Vec2 xi(0.25 + 0.1 * (rng() % 3), 0.2);
      const auto f = discrete_frame(g, xi);
      for (int j = 0; j < 2; ++j) {
        auto err = [&](double h) {
          const Vec2 step = g.map.Binv.col(j) * h;
          const auto fp = discrete_frame(g, xi + step);
          const auto fm = discrete_frame(g, xi - step);
          const double dq = (fp.q - fm.q) / (2 * h);
          const Mat2 dGinv = (fp.Ginv - fm.Ginv) / (2 * h);
          return std::max(std::abs(dq - f.dq[static_cast<std::size_t>(j)]),
                          (dGinv - f.dGinv[static_cast<std::size_t>(j)]).cwiseAbs().maxCoeff());
        };
        const double scale = 1.0 + std::abs(f.dq[static_cast<std::size_t>(j)]);
        EXPECT_LT(err(1e-4), 1e-6 * scale);
      }
    }
  }
}

TEST(Frames, SphereAreaConvergesMonotonically) {
  const auto s = unit_sphere();
  auto mesh = mesh_of(s);
  double previous_exact = 1e9;
  double previous_discrete = 1e9;
  for (int level = 0; level < 5; ++level) {
    const auto interp = interpolate_chart(mesh, s, 1);
    const double exact_err = std::abs(surface_area(mesh, s, interp, false, 8) - 4.0 * std::numbers::pi);
    const double discrete_err = std::abs(surface_area(mesh, s, interp, true, 8) - 4.0 * std::numbers::pi);
    EXPECT_LT(exact_err, previous_exact);
    EXPECT_LT(discrete_err, previous_discrete);
    previous_exact = exact_err;
    previous_discrete = discrete_err;
    mesh.refine_uniform(2);
  }
  EXPECT_LT(previous_exact, 1e-8);
}

TEST(FaceFrame, FlatReferenceTriangle) {
  const auto s = reference_triangle();
  const auto mesh = mesh_of(s);
  const auto interp = interpolate_chart(mesh, s, 1);
  const auto g = element_geometry(mesh, s, interp, mesh.leaves()[0]);
  for (int k = 0; k < 3; ++k) {
    const auto ff = face_frame(g, k, face_point(k, 0.4));
    EXPECT_NEAR(ff.r, 1.0, 1e-15);
    // The outward normal points away from the opposite vertex.
    const Vec2 mid = g.map.to_param(face_point(k, 0.5));
    const Vec2 opp = g.map.to_param(reference_vertex(k));
    EXPECT_GT(ff.nhat.dot(mid - opp), 0.0);
    EXPECT_LT((ff.conormal - Vec3(ff.nhat.x(), ff.nhat.y(), 0)).norm(), 1e-15);
  }
}

TEST(FaceFrame, OppositeConormalsOnFlatInteriorFaces) {
  const auto s = lshape();
  auto mesh = mesh_of(s);
  mesh.refine_uniform(3);
  const auto interp = interpolate_chart(mesh, s, 2);
  for (int id : mesh.leaves()) {
    const auto g = element_geometry(mesh, s, interp, id);
    for (const auto& fn : mesh.face_neighbors(id)) {
      if (fn.neighbor == kBoundaryMark) continue;
      const auto o = element_geometry(mesh, s, interp, fn.neighbor);
      const Vec2 xo = o.map.to_reference(fn.map.other_a + 0.3 * (fn.map.other_b - fn.map.other_a));
      const auto fp = face_frame(g, fn.local_face, face_point(fn.local_face, 0.3));
      const auto fm = face_frame(o, fn.neighbor_face, xo);
      EXPECT_LT((fp.conormal + fm.conormal).norm(), 1e-13);
    }
  }
}

TEST(FaceFrame, SphereConormalIsUnitAndTangent) {
  const auto s = unit_sphere();
  auto mesh = mesh_of(s);
  mesh.refine_uniform(2);
  const auto interp = interpolate_chart(mesh, s, 2);
  for (int id : mesh.leaves()) {
    const auto g = element_geometry(mesh, s, interp, id);
    for (int k = 0; k < 3; ++k) {
      const auto ff = face_frame(g, k, face_point(k, 0.7));
      EXPECT_NEAR(ff.conormal.norm(), 1.0, 1e-12);
      EXPECT_LE(std::abs(ff.frame.nu.dot(ff.conormal)), 1e-12);
      EXPECT_LT((ff.conormal - (ff.frame.q / ff.r) * ff.frame.D.transpose() * ff.nhat).norm(), 1e-14);
    }
  }
}

TEST(ConsistencyMatrix, VanishesForPolynomialAndFlatCharts) {
  for (const auto& s : {flat_square(), parabola_triangle()}) {
    auto mesh = mesh_of(s);
    mesh.refine_uniform(2);
    const auto interp = interpolate_chart(mesh, s, 2);
    for (int id : mesh.leaves())
      EXPECT_LT(consistency_error(element_geometry(mesh, s, interp, id)), 1e-13);
  }
}

TEST(ConsistencyMatrix, SphereRatioToLambdaBounded) {
  const auto s = unit_sphere();
  auto mesh = mesh_of(s);
  std::vector<double> ratios;
  for (int level = 0; level < 4; ++level) {
    mesh.refine_uniform(2);
    const auto interp = interpolate_chart(mesh, s, 1);
    double worst = 0.0;
    for (int id : mesh.leaves()) {
      const auto g = element_geometry(mesh, s, interp, id);
      worst = std::max(worst, consistency_error(g) / geometric_indicator(g));
    }
    ratios.push_back(worst);
  }
  for (std::size_t i = 1; i < ratios.size(); ++i) {
    EXPECT_LT(ratios[i] / ratios[i - 1], 2.0);
    EXPECT_GT(ratios[i] / ratios[i - 1], 0.5);
  }
}
