// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// `acceptance 3 7` runs only criteria 3 and 7.

#include "lbafem/runner.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <vector>

using namespace lbafem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// Histories shared between criteria
// ---------------------------------

struct TimedRun {
  std::string label;
  AfemParams params;
  RunHistory history;
  double seconds = 0.0;
};

std::map<std::string, TimedRun>& run_cache() {
  static std::map<std::string, TimedRun> cache;
  return cache;
}

const TimedRun& timed_run(const std::string& label, const std::string& benchmark, RunMode mode,
                          const AfemParams& p) {
  auto& cache = run_cache();
  if (auto it = cache.find(label); it != cache.end()) return it->second;
  RunConfig c;
  c.benchmark = benchmark;
  c.mode = mode;
  c.params = p;
  const auto t0 = Clock::now();
  auto run = run_benchmark(c);
  TimedRun out{label, p, std::move(run.history), seconds_since(t0)};
  std::printf("  [%s] %zu rows, %.1f s\n", label.c_str(), out.history.rows.size(), out.seconds);
  std::fflush(stdout);
  return cache.emplace(label, std::move(out)).first->second;
}

AfemParams quiet(AfemParams p) {
  p.record_wall_time = false;
  return p;
}

const TimedRun& sphere_rate_run(int n) {
  AfemParams p;
  p.n = n;
  p.rho = 0.7;
  p.delta0 = 0.5;
  p.max_outer = 200;
  p.max_dofs = n == 1 ? 100'000 : 200'000;
  return timed_run("sphere_xy n=" + std::to_string(n), "sphere_xy", RunMode::Adaptive, quiet(p));
}

const TimedRun& lshape_run(RunMode mode) {
  AfemParams p;
  p.n = 2;
  if (mode == RunMode::Uniform) {
    p.uniform_rounds = 6;
    p.uniform_depth = 2;
    return timed_run("lshape_f1 uniform", "lshape_f1", mode, quiet(p));
  }
  p.max_outer = 200;
  p.max_dofs = 60'000;
  return timed_run("lshape_f1 adaptive", "lshape_f1", mode, quiet(p));
}

const TimedRun& sphere_default_run() {
  AfemParams p;
  p.max_outer = 5;
  return timed_run("sphere_xy defaults", "sphere_xy", RunMode::Adaptive, quiet(p));
}

// Rate extraction, written out here rather than taken from the library
// ---------------------------------------------------------------------

struct Series {
  std::vector<double> n;
  std::vector<double> value;
};

/// Exit rows (pde_exit / uniform), N = #T - #T(first row), strictly
/// increasing N.
Series series(const RunHistory& h, const std::function<double(const HistoryRow&)>& quantity) {
  Series s;
  if (h.rows.empty()) return s;
  const double t0 = static_cast<double>(h.rows.front().n_elements);
  for (const auto& r : h.rows) {
    if (r.phase != "pde_exit" && r.phase != "uniform") continue;
    const double n = static_cast<double>(r.n_elements) - t0;
    if (n <= 0.0 || (!s.n.empty() && n <= s.n.back())) continue;
    s.n.push_back(n);
    s.value.push_back(quantity(r));
  }
  return s;
}

/// Least-squares slope of log value against log N over the last `window` points.
double tail_slope(const Series& s, std::size_t window) {
  if (s.n.size() < std::max<std::size_t>(window, 3)) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t first = s.n.size() - window;
  Eigen::MatrixXd a(static_cast<Eigen::Index>(window), 2);
  Eigen::VectorXd y(static_cast<Eigen::Index>(window));
  for (std::size_t i = 0; i < window; ++i) {
    a(static_cast<Eigen::Index>(i), 0) = std::log(s.n[first + i]);
    a(static_cast<Eigen::Index>(i), 1) = 1.0;
    y(static_cast<Eigen::Index>(i)) = std::log(s.value[first + i]);
  }
  return a.colPivHouseholderQr().solve(y)(0);
}

std::size_t max_solved_dofs(const RunHistory& h) {
  std::size_t m = 0;
  for (const auto& r : h.rows)
    if (std::isfinite(r.eta)) m = std::max(m, r.n_dofs);
  return m;
}

// Criteria
// --------

Outcome criterion_1() {
  Outcome o{true, ""};
  const double target[] = {0.0, -0.5, -1.0};
  const double tol[] = {0.0, 0.10, 0.15};
  for (int n = 1; n <= 2; ++n) {
    const auto& run = sphere_rate_run(n);
    const double slope = tail_slope(series(run.history, [](const HistoryRow& r) { return r.energy_error; }), 4);
    const std::size_t dofs = max_solved_dofs(run.history);
    const bool ok = std::abs(slope - target[n]) <= tol[n] && dofs <= 200'000 && run.seconds <= 120.0;
    o.pass = o.pass && ok;
    o.detail += "n=" + std::to_string(n) + ": slope " + fmt("%.3f", slope) + " (target " +
                fmt("%.1f", target[n]) + fmt(" +- %.2f)", tol[n]) + ", " + std::to_string(dofs) +
                " dofs, " + fmt("%.1f s", run.seconds) + (n == 1 ? "; " : "");
  }
  return o;
}

Outcome criterion_2() {
  const auto& uni = lshape_run(RunMode::Uniform);
  const auto& ada = lshape_run(RunMode::Adaptive);
  const double omega = AfemParams{}.omega;
  auto total = [omega](const HistoryRow& r) { return r.eta + r.lambda / omega; };
  const double su = tail_slope(series(uni.history, total), 4);
  const double sa = tail_slope(series(ada.history, total), 4);
  const bool ok = su >= -0.45 && sa <= -0.85 && uni.seconds <= 60.0 && ada.seconds <= 60.0;
  return {ok, "uniform slope " + fmt("%.3f", su) + fmt(" (%.1f s)", uni.seconds) + ", adaptive slope " +
                  fmt("%.3f", sa) + fmt(" (%.1f s)", ada.seconds)};
}

Outcome criterion_3() {
  Outcome o{true, ""};
  const auto bench = sphere_xy();
  for (int n = 1; n <= 2; ++n) {
    ConformingMesh mesh(bench.surface.topology);
    LambdaCache cache(n, 1.0);
    Series s;
    std::size_t cumulative = 0;
    const int steps = n == 1 ? 5 : 9;
    double tol = 0.5;
    bool exits_ok = true;
    for (int j = 0; j < steps; ++j, tol /= 2) {
      const auto r = adapt_surface(mesh, bench.surface, n, tol, 1, 10'000'000, 1.0, &cache);
      exits_ok = exits_ok && r.greedy.final_max <= tol;
      cumulative += r.greedy.marked;
      s.n.push_back(1.0 / tol);
      s.value.push_back(static_cast<double>(cumulative));
    }
    const double slope = tail_slope(s, 4);
    const double expected = 2.0 / n;
    const bool ok = exits_ok && std::abs(slope - expected) <= 0.2 * expected;
    o.pass = o.pass && ok;
    o.detail += "n=" + std::to_string(n) + ": slope " + fmt("%.3f", slope) + " vs " +
                fmt("%.1f", expected) + (n == 1 ? "; " : "");
  }
  return o;
}

/// Exit contracts replayed from the rows alone.
int contract_violations(const RunHistory& h, const AfemParams& p) {
  int bad = 0;
  for (const auto& r : h.rows) {
    if (r.phase == "init" && !(r.lambda <= p.delta0)) ++bad;
    if (r.phase == "surface" && !(r.lambda <= p.omega * r.eps_k)) ++bad;
    if (r.phase == "pde_exit" && !(r.eta <= r.eps_k)) ++bad;
  }
  return bad;
}

Outcome criterion_4() {
  std::vector<const TimedRun*> runs{&sphere_rate_run(1), &sphere_rate_run(2),
                                    &lshape_run(RunMode::Adaptive), &sphere_default_run()};
  for (const char* name : {"flat_square_sin", "graph_peak", "lshape_f1"}) {
    for (int n = 1; n <= 2; ++n) {
      AfemParams p;
      p.n = n;
      p.max_outer = 200;
      p.max_dofs = 20'000;
      runs.push_back(&timed_run(std::string(name) + " n=" + std::to_string(n) + " budget", name,
                                RunMode::Adaptive, quiet(p)));
    }
  }
  int violations = 0;
  std::size_t surface_exits = 0;
  std::size_t pde_exits = 0;
  for (const auto* r : runs) {
    violations += contract_violations(r->history, r->params);
    for (const auto& row : r->history.rows) {
      surface_exits += row.phase == "surface" ? 1 : 0;
      pde_exits += row.phase == "pde_exit" ? 1 : 0;
    }
  }
  return {violations == 0 && pde_exits > 0,
          std::to_string(violations) + " violations over " + std::to_string(runs.size()) + " runs, " +
              std::to_string(surface_exits) + " surface exits, " + std::to_string(pde_exits) +
              " pde exits"};
}

Outcome criterion_5() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> real(0.0, 1.0);
  std::uniform_int_distribution<int> small(0, 3);
  int failures = 0;
  int cases = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 1 + static_cast<std::size_t>(trial % 12);
    std::vector<double> eta(m);
    for (auto& e : eta) e = trial % 2 ? real(rng) : static_cast<double>(small(rng));
    for (double theta : {0.3, 0.5, 0.8, 1.0}) {
      ++cases;
      double total = 0.0;
      for (double e : eta) total += e * e;
      const double target = theta * theta * total;
      std::size_t best = m + 1;
      for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
        double mass = 0.0;
        for (std::size_t i = 0; i < m; ++i)
          if (mask & (1u << i)) mass += eta[i] * eta[i];
        if (mass >= target) best = std::min<std::size_t>(best, static_cast<std::size_t>(std::popcount(mask)));
      }
      auto marked = dorfler_mark(eta, theta);
      std::sort(marked.begin(), marked.end());
      double mass = 0.0;
      for (auto i : marked) mass += eta[i] * eta[i];
      if (marked.size() != best || !(mass >= target)) ++failures;
    }
  }
  return {failures == 0, std::to_string(failures) + " failures in " + std::to_string(cases) + " cases"};
}

/// Conformity from first principles: every leaf edge, identified by the
/// canonical keys of its end points, is shared by exactly two leaves, or by
/// one leaf when it lies on the surface boundary.
bool conforming(const ConformingMesh& mesh) {
  const auto& topo = mesh.topology();
  std::map<std::pair<NodeKey, NodeKey>, int> edges;
  std::map<std::pair<NodeKey, NodeKey>, bool> boundary;
  for (int id : mesh.leaves()) {
    const auto& t = mesh.element(id);
    for (int k = 0; k < 3; ++k) {
      const auto& a = t.vertices[static_cast<std::size_t>(k)];
      const auto& b = t.vertices[static_cast<std::size_t>((k + 1) % 3)];
      NodeKey ka = topo.key_of(t.macro_id, a.x, a.y, kDyadicUnit);
      NodeKey kb = topo.key_of(t.macro_id, b.x, b.y, kDyadicUnit);
      if (kb < ka) std::swap(ka, kb);
      const auto e = std::make_pair(ka, kb);
      if (++edges[e] == 1)
        boundary[e] = topo.key_on_boundary(topo.key_of(t.macro_id, a.x + b.x, a.y + b.y, 2 * kDyadicUnit));
    }
  }
  for (const auto& [e, count] : edges)
    if (count != (boundary[e] ? 1 : 2)) return false;
  return true;
}

Outcome criterion_6() {
  Outcome o{true, ""};
  for (const char* name : {"lshape", "sphere"}) {
    ConformingMesh mesh(make_surface(name).topology);
    const std::size_t t0 = mesh.num_leaves();
    std::mt19937_64 rng(17);
    std::size_t cumulative = 0;
    bool ok = true;
    Series constant;
    for (int step = 1; step <= 10'000; ++step) {
      const auto leaves = mesh.leaves();
      std::uniform_int_distribution<std::size_t> pick(0, leaves.size() - 1);
      std::set<int> marked;
      const int count = 1 + static_cast<int>(rng() % 4);
      for (int i = 0; i < count; ++i) marked.insert(leaves[pick(rng)]);
      const std::vector<int> m(marked.begin(), marked.end());
      mesh.refine(m);
      cumulative += m.size();
      if (step % 250 == 0) {
        ok = ok && conforming(mesh);
        constant.n.push_back(static_cast<double>(cumulative));
        constant.value.push_back(static_cast<double>(mesh.num_leaves() - t0) / static_cast<double>(cumulative));
      }
    }
    // Growth like (sum #M)^a with a > 0 would make the constant unbounded.
    const double trend = tail_slope(constant, constant.n.size());
    const double c_max = *std::max_element(constant.value.begin(), constant.value.end());
    const bool pass = ok && trend < 0.05;
    o.pass = o.pass && pass;
    o.detail += std::string(name) + ": conforming=" + (ok ? "yes" : "no") + ", C_max " +
                fmt("%.3f", c_max) + ", log-log trend " + fmt("%.4f", trend) +
                (std::string(name) == "lshape" ? "; " : "");
  }
  return o;
}

Outcome criterion_7() {
  Outcome o{true, ""};
  const auto bench = sphere_xy();
  for (int n = 1; n <= 2; ++n) {
    ConformingMesh mesh(bench.surface.topology);
    mesh.refine_uniform(2);
    std::vector<double> ratio;
    for (int level = 0; level < 5; ++level) {
      const auto interp = interpolate_chart(mesh, bench.surface, n);
      double worst = 0.0;
      for (int id : mesh.leaves()) {
        const auto g = element_geometry(mesh, bench.surface, interp, id);
        worst = std::max(worst, consistency_error(g) / geometric_indicator(g));
      }
      ratio.push_back(worst);
      mesh.refine_uniform(2);
    }
    double variation = 1.0;
    for (std::size_t k = 1; k < ratio.size(); ++k)
      variation = std::max(variation, std::max(ratio[k] / ratio[k - 1], ratio[k - 1] / ratio[k]));
    const bool ok = std::all_of(ratio.begin(), ratio.end(), [](double r) { return std::isfinite(r); }) &&
                    variation < 2.0;
    o.pass = o.pass && ok;
    o.detail += "n=" + std::to_string(n) + ": max ratio " +
                fmt("%.3f", *std::max_element(ratio.begin(), ratio.end())) + ", variation x" +
                fmt("%.2f", variation) + (n == 1 ? "; " : "");
  }
  return o;
}

Outcome criterion_8() {
  const auto& run = sphere_default_run();
  std::map<int, int> inner;
  for (const auto& r : run.history.rows) {
    if (r.phase == "surface") inner.try_emplace(r.k, 0);
    if (r.phase == "pde") ++inner[r.k];
  }
  bool ok = !inner.empty();
  std::string js;
  int previous = -1;
  for (const auto& [k, j] : inner) {
    ok = ok && j <= 8;
    if (k > 2 && previous >= 0) ok = ok && j <= previous;
    previous = k >= 2 ? j : -1;
    js += (js.empty() ? "" : ",") + std::to_string(j);
  }
  return {ok, "J = [" + js + "]" + fmt(", %.1f s", run.seconds)};
}

Outcome criterion_9() {
  AfemParams p;
  p.uniform_rounds = 5;
  p.uniform_depth = 2;
  const auto& flat = timed_run("flat_square_sin uniform n=1", "flat_square_sin", RunMode::Uniform, quiet(p));
  AfemParams q;
  q.max_outer = 200;
  q.max_dofs = 20'000;
  const auto& lshape1 = timed_run("lshape_f1 n=1 budget", "lshape_f1", RunMode::Adaptive, quiet(q));
  bool zero = true;
  for (const auto* h : {&flat.history, &lshape1.history})
    for (const auto& r : h->rows)
      if (!std::isnan(r.osc_u)) zero = zero && r.osc_u == 0.0;
  const double s_osc = tail_slope(series(flat.history, [](const HistoryRow& r) { return r.osc_f; }), 4);
  const double s_err = tail_slope(series(flat.history, [](const HistoryRow& r) { return r.energy_error; }), 4);
  const bool ok = zero && s_osc <= s_err - 0.4;
  return {ok, std::string("osc_U zero: ") + (zero ? "yes" : "no") + ", osc_f slope " + fmt("%.3f", s_osc) +
                  ", energy slope " + fmt("%.3f", s_err)};
}

Outcome criterion_10() {
  std::string detail;
  bool ok = true;
  {
    const auto s = reference_triangle();
    ConformingMesh mesh(s.topology);
    const auto interp = interpolate_chart(mesh, s, 1);
    const auto g = element_geometry(mesh, s, interp, mesh.leaves()[0]);
    const auto local = local_system(g, {}, 6);
    Eigen::Matrix3d expected;
    expected << 2, -1, -1, -1, 1, 0, -1, 0, 1;
    expected *= 0.5;
    // Local node k sits at parametric vertex (0,0), (1,0) or (0,1).
    std::array<int, 3> index{};
    for (int k = 0; k < 3; ++k) {
      const Vec2 v = g.map.to_param(reference_vertex(k));
      index[static_cast<std::size_t>(k)] = v.x() == 1.0 ? 1 : (v.y() == 1.0 ? 2 : 0);
    }
    double err = 0.0;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        err = std::max(err, std::abs(local.A(a, b) - expected(index[static_cast<std::size_t>(a)],
                                                              index[static_cast<std::size_t>(b)])));
    ok = ok && err <= 1e-12;
    detail += "stiffness err " + fmt("%.1e", err);
  }
  {
    const auto bench = flat_square_sin();
    ConformingMesh mesh(bench.surface.topology);
    mesh.refine_uniform(4);
    const auto dofs = build_dofmap(mesh, 1);
    DiscreteField zero;
    zero.constraint = dofs.constraint;
    zero.coefficients = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dofs.n_dofs()));
    const double err = std::abs(energy_error(mesh, bench.surface, dofs, zero, bench.problem) -
                                std::numbers::pi / std::sqrt(2.0));
    ok = ok && err <= 1e-6;
    detail += ", |e(0) - pi/sqrt2| " + fmt("%.1e", err);
  }
  {
    double worst = 0.0;
    std::size_t largest = 0;
    for (const auto& [name, n, depth] : {std::tuple{"flat_square_sin", 1, 8}, std::tuple{"graph_peak", 2, 6},
                                         std::tuple{"lshape_f1", 3, 3}}) {
      const auto bench = make_benchmark(name);
      ConformingMesh mesh(bench.surface.topology);
      mesh.refine_uniform(depth);
      const auto interp = interpolate_chart(mesh, bench.surface, n);
      const auto dofs = build_dofmap(mesh, n);
      largest = std::max(largest, dofs.n_dofs());
      const auto sys = assemble(mesh, bench.surface, interp, bench.problem.f, dofs);
      const auto u = solve(sys, dofs, 1e-12);
      std::vector<Eigen::Index> free;
      for (std::size_t i = 0; i < dofs.n_dofs(); ++i)
        if (!dofs.dirichlet_mask[i]) free.push_back(static_cast<Eigen::Index>(i));
      const Eigen::MatrixXd full = sys.A.to_dense();
      const auto m = static_cast<Eigen::Index>(free.size());
      Eigen::MatrixXd a(m, m);
      Eigen::VectorXd b(m);
      for (Eigen::Index i = 0; i < m; ++i) {
        b(i) = sys.b(free[static_cast<std::size_t>(i)]);
        for (Eigen::Index j = 0; j < m; ++j)
          a(i, j) = full(free[static_cast<std::size_t>(i)], free[static_cast<std::size_t>(j)]);
      }
      const Eigen::VectorXd x = a.llt().solve(b);
      for (Eigen::Index i = 0; i < m; ++i)
        worst = std::max(worst, std::abs(x(i) - u.coefficients(free[static_cast<std::size_t>(i)])));
    }
    ok = ok && worst <= 1e-8 && largest <= 1000;
    detail += ", CG vs dense " + fmt("%.1e", worst) + " (<= " + std::to_string(largest) + " dofs)";
  }
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"smooth-surface optimal rate", criterion_1},
      {"adaptive beats uniform on singular data", criterion_2},
      {"geometric estimator decay", criterion_3},
      {"contract replay", criterion_4},
      {"Doerfler minimality", criterion_5},
      {"conformity and refinement complexity", criterion_6},
      {"consistency-error bound", criterion_7},
      {"inner-loop boundedness", criterion_8},
      {"oscillation structure", criterion_9},
      {"numerical oracles", criterion_10},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  std::vector<std::string> lines;
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    char head[160];
    std::snprintf(head, sizeof head, "criterion %2d %s: %s [%.1f s] ", id, o.pass ? "PASS" : "FAIL",
                  criteria[i].first.c_str(), seconds_since(t0));
    lines.push_back(head + o.detail);
    std::printf("%s\n", lines.back().c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  std::printf("\nsummary\n");
  for (const auto& l : lines) std::printf("%s\n", l.c_str());
  return failed == 0 ? 0 : 1;
}
