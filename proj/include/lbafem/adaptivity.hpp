#pragma once
/// \file adaptivity.hpp
/// \brief GREEDY thresholding, ADAPT_SURFACE, minimal Doerfler marking,
///        the ADAPT_PDE inner loop and the AFEM outer driver.

#include "lbafem/charts.hpp"
#include "lbafem/common.hpp"
#include "lbafem/estimators.hpp"
#include "lbafem/fem_solver.hpp"
#include "lbafem/geometry.hpp"
#include "lbafem/mesh_forest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace lbafem {

struct AfemParams {
  int n = 1;
  double theta = 0.5;
  double rho = 0.5;
  double omega = 0.1;
  /// Bisection depth of REFINE.
  int b = 1;
  /// Initial tolerance; 0 selects eta measured on the macro mesh.
  double eps0 = 0.0;
  /// Stop once eps_k drops below this value (0 disables).
  double eps_stop = 0.0;
  /// Geometric threshold of the initial pre-refinement.
  double delta0 = 0.1;
  int max_outer = 8;
  int max_inner = 50;
  std::size_t max_elements = 4'000'000;
  /// Ends the run without error instead of solving on a mesh with more dofs
  /// than this (0 disables).
  std::size_t max_dofs = 0;
  double rel_tol = 1e-10;
  EstimatorOptions estimator;
  bool record_wall_time = true;
  /// Uniform mode: rounds and bisection depth per round.
  int uniform_rounds = 5;
  int uniform_depth = 2;

  /// Throws RangeError for parameters outside their admissible ranges.
  void validate() const {
    auto require = [](bool ok, const std::string& what) {
      if (!ok) throw RangeError(what);
    };
    require(n >= 1 && n <= kMaxLagrangeDegree, "n must lie in [1, " +
                                                   std::to_string(kMaxLagrangeDegree) + "]");
    require(theta > 0.0 && theta <= 1.0, "theta must lie in (0, 1]");
    require(rho > 0.0 && rho < 1.0, "rho must lie in (0, 1)");
    require(omega > 0.0, "omega must be positive");
    require(b >= 1, "b must be at least 1");
    require(eps0 >= 0.0, "eps0 must be non-negative");
    require(eps_stop >= 0.0, "eps_stop must be non-negative");
    require(delta0 > 0.0, "delta0 must be positive");
    require(max_outer >= 0, "max_outer must be non-negative");
    require(max_inner >= 1, "max_inner must be at least 1");
    require(max_elements >= 1, "max_elements must be at least 1");
    require(rel_tol > 0.0 && rel_tol < 1.0, "rel_tol must lie in (0, 1)");
    require(estimator.lambda_safety > 0.0, "lambda_safety must be positive");
    require(uniform_rounds >= 0, "uniform_rounds must be non-negative");
    require(uniform_depth >= 1, "uniform_depth must be at least 1");
  }
};

inline constexpr double kNotComputed = std::numeric_limits<double>::quiet_NaN();

/// One recorded event of a run.
struct HistoryRow {
  int k = 0;
  int j = 0;
  std::string phase;
  std::size_t n_elements = 0;
  std::size_t n_dofs = 0;
  std::size_t n_marked = 0;
  double eta = kNotComputed;
  double lambda = kNotComputed;
  double osc_u = kNotComputed;
  double osc_f = kNotComputed;
  double energy_error = kNotComputed;
  double eps_k = kNotComputed;
  int cg_iters = 0;
  double wall_ms = 0.0;
};

struct RunHistory {
  std::size_t initial_elements = 0;
  std::vector<HistoryRow> rows;
};

using RowSink = std::function<void(const HistoryRow&)>;

// GREEDY and ADAPT_SURFACE
// ------------------------

struct GreedyResult {
  std::size_t marked = 0;
  int rounds = 0;
  /// Largest indicator value on the returned mesh.
  double final_max = 0.0;
};

/// Marks every leaf whose indicator exceeds tol and refines with depth b until
/// none does. `indicator(mesh)` returns values in leaves() order and is
/// re-evaluated after every round.
template <class Indicator>
GreedyResult greedy(ConformingMesh& mesh, Indicator&& indicator, double tol, int b,
                    std::size_t max_elements) {
  GreedyResult out;
  for (;;) {
    const std::vector<double> values = indicator(mesh);
    const auto leaves = mesh.leaves();
    std::vector<int> marked;
    double m = 0.0;
    for (std::size_t p = 0; p < values.size(); ++p) {
      m = std::max(m, values[p]);
      if (values[p] > tol) marked.push_back(leaves[p]);
    }
    if (marked.empty()) {
      out.final_max = m;
      return out;
    }
    mesh.refine(marked, b);
    out.marked += marked.size();
    ++out.rounds;
    if (mesh.num_leaves() > max_elements)
      throw BudgetExceeded("GREEDY exceeded " + std::to_string(max_elements) +
                           " elements with indicator max " + std::to_string(m) +
                           " above tolerance " + std::to_string(tol));
  }
}

struct SurfaceResult {
  GreedyResult greedy;
  SurfaceInterpolant interp;
};

/// GREEDY with the geometric indicator lambda_T; on exit max lambda_T <= tol.
inline SurfaceResult adapt_surface(ConformingMesh& mesh, const MacroSurface& surface, int n,
                                   double tol, int b, std::size_t max_elements,
                                   double lambda_safety = 1.0, LambdaCache* cache = nullptr) {
  LambdaCache local(n, lambda_safety);
  LambdaCache& c = cache && cache->degree() == n && cache->safety() == lambda_safety ? *cache : local;
  SurfaceResult out;
  out.greedy = greedy(
      mesh, [&](const ConformingMesh& m) { return c.evaluate(m, surface); }, tol, b,
      max_elements);
  out.interp = interpolate_chart(mesh, surface, n);
  return out;
}

// MARK
// ----

/// Minimal Doerfler set: positions of the shortest prefix of the
/// descending order (ties by position, which is ascending element id for
/// leaves()) whose squared mass reaches theta^2 times the total.
inline std::vector<std::size_t> dorfler_mark(std::span<const double> eta, double theta) {
  std::vector<std::size_t> order(eta.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return eta[a] > eta[b]; });
  double total = 0.0;
  for (double v : eta) total += v * v;
  std::vector<std::size_t> marked;
  if (total == 0.0) return marked;
  const double target = theta * theta * total;
  double acc = 0.0;
  std::size_t next = 0;
  for (; next < order.size() && acc < target && eta[order[next]] > 0.0; ++next) {
    marked.push_back(order[next]);
    acc += eta[order[next]] * eta[order[next]];
  }
  // The mass in position order must also reach the target, as the total does.
  const auto indexed_mass = [&] {
    std::vector<char> in(eta.size(), 0);
    for (std::size_t p : marked) in[p] = 1;
    double m = 0.0;
    for (std::size_t p = 0; p < eta.size(); ++p)
      if (in[p]) m += eta[p] * eta[p];
    return m;
  };
  while (next < order.size() && eta[order[next]] > 0.0 && indexed_mass() < target)
    marked.push_back(order[next++]);
  return marked;
}

// ADAPT_PDE and AFEM
// ------------------

/// Mesh, interpolant and discrete solution carried through a run.
struct AfemState {
  const MacroSurface* surface = nullptr;
  const ManufacturedProblem* problem = nullptr;
  ConformingMesh mesh;
  SurfaceInterpolant interp;
  DofMap dofs;
  DiscreteField U;
  IndicatorSet indicators;
  double energy_error = kNotComputed;
  LambdaCache lambda_cache;

  AfemState(const MacroSurface& s, const ManufacturedProblem& p, int n = 1, double safety = 1.0)
      : surface(&s), problem(&p), mesh(s.topology), lambda_cache(n, safety) {}
};

namespace detail {

class Clock {
 public:
  explicit Clock(bool enabled) : enabled_(enabled), start_(std::chrono::steady_clock::now()) {}
  double ms() const {
    if (!enabled_) return 0.0;
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  bool enabled_;
  std::chrono::steady_clock::time_point start_;
};

inline void emit(RunHistory& h, const RowSink& sink, HistoryRow row) {
  h.rows.push_back(std::move(row));
  if (sink) sink(h.rows.back());
}

/// SOLVE and ESTIMATE on the current mesh; interp and dofs must be current.
inline void solve_and_estimate(AfemState& s, const AfemParams& p, bool renumber = true,
                               bool with_oscillation = true) {
  if (renumber) s.dofs = build_dofmap(s.mesh, p.n);
  const auto sys = assemble(s.mesh, *s.surface, s.interp, s.problem->f, s.dofs,
                            p.estimator.quadrature);
  s.U = solve(sys, s.dofs, p.rel_tol);
  s.indicators = estimate(s.mesh, *s.surface, s.interp, s.dofs, s.U, *s.problem, p.estimator,
                          with_oscillation, &s.lambda_cache);
  s.energy_error = s.problem->has_exact_solution()
                       ? lbafem::energy_error(s.mesh, *s.surface, s.dofs, s.U, *s.problem,
                                              p.estimator.quadrature)
                       : kNotComputed;
}

inline HistoryRow solution_row(const AfemState& s, int k, int j, std::string phase, double eps) {
  HistoryRow r;
  r.k = k;
  r.j = j;
  r.phase = std::move(phase);
  r.n_elements = s.mesh.num_leaves();
  r.n_dofs = s.dofs.n_dofs();
  r.eta = s.indicators.eta();
  r.lambda = s.indicators.lambda_max();
  r.osc_u = s.indicators.osc_u();
  r.osc_f = s.indicators.osc_f();
  r.energy_error = s.energy_error;
  r.eps_k = eps;
  r.cg_iters = s.U.cg_iterations;
  return r;
}

template <class Fn>
auto with_context(int k, int j, Fn&& fn) {
  try {
    return fn();
  } catch (Error& e) {
    e.add_context("k=" + std::to_string(k) + ", j=" + std::to_string(j));
    throw;
  }
}

}  // namespace detail

struct PdeResult {
  /// MARK/REFINE passes in this call; 0 when the entry mesh already meets eps.
  int iterations = 0;
  /// True when max_dofs ended the call before a solve.
  bool budget_stop = false;
};

/// SOLVE -> ESTIMATE -> MARK -> REFINE until eta <= eps. The interpolant is
/// rebuilt after every REFINE; marking uses eta_T only.
inline PdeResult adapt_pde(AfemState& s, double eps, const AfemParams& p, int k, RunHistory& h,
                           const RowSink& sink = {}, const detail::Clock& clock = detail::Clock(false)) {
  PdeResult out;
  if (s.lambda_cache.degree() != p.n || s.lambda_cache.safety() != p.estimator.lambda_safety)
    s.lambda_cache = LambdaCache(p.n, p.estimator.lambda_safety);
  {
    const auto lambda = s.lambda_cache.evaluate(s.mesh, *s.surface);
    const double worst = lambda.empty() ? 0.0 : *std::max_element(lambda.begin(), lambda.end());
    if (!(worst <= p.omega * eps))
      throw ContractViolation("ADAPT_PDE entered with lambda " + std::to_string(worst) +
                              " > omega eps " + std::to_string(p.omega * eps) + " [k=" +
                              std::to_string(k) + ", j=0]");
  }
  for (int j = 0;; ++j) {
    s.dofs = build_dofmap(s.mesh, p.n);
    if (p.max_dofs > 0 && s.dofs.n_dofs() > p.max_dofs) {
      HistoryRow row;
      row.k = k;
      row.j = j;
      row.phase = "budget_stop";
      row.n_elements = s.mesh.num_leaves();
      row.n_dofs = s.dofs.n_dofs();
      row.eps_k = eps;
      row.wall_ms = clock.ms();
      detail::emit(h, sink, std::move(row));
      out.budget_stop = true;
      return out;
    }
    detail::with_context(k, j, [&] {
      detail::solve_and_estimate(s, p, false, false);
      return 0;
    });
    if (s.indicators.eta() <= eps) {
      detail::with_context(k, j, [&] {
        add_oscillation(s.mesh, *s.surface, s.interp, s.dofs, s.U, *s.problem, p.estimator,
                        s.indicators);
        return 0;
      });
      auto row = detail::solution_row(s, k, j, "pde_exit", eps);
      row.wall_ms = clock.ms();
      detail::emit(h, sink, std::move(row));
      return out;
    }
    if (j >= p.max_inner)
      throw BudgetExceeded("ADAPT_PDE reached max_inner = " + std::to_string(p.max_inner) +
                           " with eta " + std::to_string(s.indicators.eta()) + " > eps " +
                           std::to_string(eps) + " [k=" + std::to_string(k) +
                           ", j=" + std::to_string(j) + "]");
    auto row = detail::solution_row(s, k, j, "pde", eps);
    const auto eta = s.indicators.eta_elements();
    const auto positions = dorfler_mark(eta, p.theta);
    std::vector<int> marked;
    marked.reserve(positions.size());
    for (std::size_t q : positions) marked.push_back(s.indicators.element_ids[q]);
    row.n_marked = marked.size();
    row.wall_ms = clock.ms();
    detail::emit(h, sink, std::move(row));
    ++out.iterations;
    detail::with_context(k, j, [&] {
      s.mesh.refine(marked, p.b);
      if (s.mesh.num_leaves() > p.max_elements)
        throw BudgetExceeded("ADAPT_PDE exceeded " + std::to_string(p.max_elements) +
                             " elements");
      s.interp = interpolate_chart(s.mesh, *s.surface, p.n);
      return 0;
    });
  }
}

namespace detail {

inline HistoryRow surface_row(const ConformingMesh& mesh, const SurfaceResult& r, int k,
                              std::string phase, double eps) {
  HistoryRow row;
  row.k = k;
  row.phase = std::move(phase);
  row.n_elements = mesh.num_leaves();
  row.n_marked = r.greedy.marked;
  row.lambda = r.greedy.final_max;
  row.eps_k = eps;
  return row;
}

}  // namespace detail

/// AFEM: pre-refine to lambda <= delta0, then alternate ADAPT_SURFACE(omega
/// eps_k) and ADAPT_PDE(eps_k) with eps_{k+1} = rho eps_k. The final state is
/// left in `state` when given.
inline RunHistory afem_run(const MacroSurface& surface, const ManufacturedProblem& problem,
                           const AfemParams& p, const RowSink& sink = {},
                           AfemState* final_state = nullptr) {
  p.validate();
  const detail::Clock clock(p.record_wall_time);
  AfemState local(surface, problem, p.n, p.estimator.lambda_safety);
  AfemState& s = final_state ? *final_state : local;
  if (final_state) s = AfemState(surface, problem, p.n, p.estimator.lambda_safety);
  RunHistory h;
  h.initial_elements = s.mesh.num_leaves();

  double eps = p.eps0;
  if (!(eps > 0.0)) {
    detail::with_context(0, 0, [&] {
      s.interp = interpolate_chart(s.mesh, surface, p.n);
      detail::solve_and_estimate(s, p);
      return 0;
    });
    eps = s.indicators.eta();
  }
  auto pre = detail::with_context(0, 0, [&] {
    return adapt_surface(s.mesh, surface, p.n, p.delta0, p.b, p.max_elements,
                         p.estimator.lambda_safety, &s.lambda_cache);
  });
  s.interp = std::move(pre.interp);
  detail::with_context(0, 0, [&] {
    detail::solve_and_estimate(s, p);
    return 0;
  });
  {
    auto row = detail::solution_row(s, 0, 0, "init", eps);
    row.n_marked = pre.greedy.marked;
    row.lambda = pre.greedy.final_max;
    row.wall_ms = clock.ms();
    detail::emit(h, sink, std::move(row));
  }
  if (!(eps > 0.0)) return h;
  for (int k = 0; k < p.max_outer; ++k) {
    if (k > 0) eps = p.rho * eps;
    if (p.eps_stop > 0.0 && eps < p.eps_stop) break;
    auto surf = detail::with_context(k, 0, [&] {
      return adapt_surface(s.mesh, surface, p.n, p.omega * eps, p.b, p.max_elements,
                           p.estimator.lambda_safety, &s.lambda_cache);
    });
    s.interp = std::move(surf.interp);
    auto row = detail::surface_row(s.mesh, surf, k, "surface", eps);
    row.wall_ms = clock.ms();
    detail::emit(h, sink, std::move(row));
    if (adapt_pde(s, eps, p, k, h, sink, clock).budget_stop) break;
  }
  return h;
}

/// Uniform baseline: solve and estimate, then bisect every element
/// uniform_depth times, for uniform_rounds + 1 meshes. The final state is
/// left in `state` when given.
inline RunHistory uniform_run(const MacroSurface& surface, const ManufacturedProblem& problem,
                              const AfemParams& p, const RowSink& sink = {},
                              AfemState* final_state = nullptr) {
  p.validate();
  const detail::Clock clock(p.record_wall_time);
  AfemState local(surface, problem, p.n, p.estimator.lambda_safety);
  AfemState& s = final_state ? *final_state : local;
  if (final_state) s = AfemState(surface, problem, p.n, p.estimator.lambda_safety);
  RunHistory h;
  h.initial_elements = s.mesh.num_leaves();
  for (int r = 0; r <= p.uniform_rounds; ++r) {
    s.dofs = build_dofmap(s.mesh, p.n);
    if (p.max_dofs > 0 && s.dofs.n_dofs() > p.max_dofs) break;
    detail::with_context(r, 0, [&] {
      s.interp = interpolate_chart(s.mesh, surface, p.n);
      detail::solve_and_estimate(s, p, false);
      return 0;
    });
    auto row = detail::solution_row(s, r, 0, "uniform", kNotComputed);
    row.wall_ms = clock.ms();
    detail::emit(h, sink, std::move(row));
    if (r < p.uniform_rounds) {
      s.mesh.refine_uniform(p.uniform_depth);
      if (s.mesh.num_leaves() > p.max_elements)
        throw BudgetExceeded("uniform run exceeded " + std::to_string(p.max_elements) +
                             " elements [k=" + std::to_string(r) + "]");
    }
  }
  return h;
}

// History analysis
// ----------------

/// Violations of the recorded exit contracts: lambda <= delta0 after
/// pre-refinement, lambda <= omega eps_k after every ADAPT_SURFACE,
/// eta <= eps_k after every ADAPT_PDE and eps_{k+1} = rho eps_k.
inline std::vector<std::string> replay_contracts(const RunHistory& h, const AfemParams& p) {
  std::vector<std::string> out;
  auto where = [](const HistoryRow& r) {
    return "k=" + std::to_string(r.k) + ", j=" + std::to_string(r.j) + " (" + r.phase + ")";
  };
  const HistoryRow* last_surface = nullptr;
  for (const auto& r : h.rows) {
    if (r.phase == "init" && !(r.lambda <= p.delta0))
      out.push_back(where(r) + ": lambda " + std::to_string(r.lambda) + " > delta0");
    if (r.phase == "surface") {
      if (!(r.lambda <= p.omega * r.eps_k))
        out.push_back(where(r) + ": lambda " + std::to_string(r.lambda) + " > omega eps_k");
      if (last_surface && r.k == last_surface->k + 1 && r.eps_k != p.rho * last_surface->eps_k)
        out.push_back(where(r) + ": eps_k is not rho eps_{k-1}");
      last_surface = &r;
    }
    if (r.phase == "pde_exit" && !(r.eta <= r.eps_k))
      out.push_back(where(r) + ": eta " + std::to_string(r.eta) + " > eps_k");
  }
  return out;
}

/// J per outer step k: MARK/REFINE passes of ADAPT_PDE.
inline std::vector<int> inner_iterations(const RunHistory& h) {
  std::vector<int> out;
  for (const auto& r : h.rows) {
    if (r.phase != "pde" && r.phase != "pde_exit") continue;
    if (r.k >= static_cast<int>(out.size())) out.resize(static_cast<std::size_t>(r.k) + 1, 0);
    if (r.phase == "pde") ++out[static_cast<std::size_t>(r.k)];
  }
  return out;
}

}  // namespace lbafem
