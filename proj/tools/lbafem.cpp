// lbafem: command-line driver.
//
//   lbafem solve <config>
//   lbafem rates <history.csv> --quantity=energy_error --window=4 [--omega=0.1]
//   lbafem export-mesh <state> --level=1 [--output=surface.off]
//   lbafem check
//
// Exit status: 0 success, 2 contract violation, 1 any other error.

#include "lbafem/runner.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace lbafem;

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitContract = 2;

struct CheckResult {
  bool ok = true;
  std::string detail;
};

int cmd_solve(const std::string& config_path) {
  const RunConfig config = load_config(config_path);
  const auto run = solve_and_export(config);
  const auto paths = output_paths(config);
  if (config.mode == RunMode::Adaptive) {
    const auto violations = replay_contracts(run.history, config.params);
    for (const auto& v : violations) std::cerr << "contract violation: " << v << '\n';
    if (!violations.empty()) return kExitContract;
  }
  const auto& last = run.history.rows.back();
  std::printf("%s: %zu rows, final mesh %zu elements / %zu dofs, eta %.6g\n",
              config.benchmark.c_str(), run.history.rows.size(), last.n_elements, last.n_dofs,
              last.eta);
  std::printf("wrote %s\nwrote %s\n", paths.history_csv.c_str(), paths.state.c_str());
  if (config.off_level >= 0) std::printf("wrote %s\n", paths.surface_off.c_str());
  return kExitOk;
}

int cmd_rates(const std::string& csv, const std::string& quantity, int window, double omega) {
  const auto history = load_history_csv(csv);
  const auto fit = fit_rate(history, quantity, window, omega);
  std::printf("quantity %s, window %zu\n", quantity.c_str(), fit.points.size());
  for (const auto& p : fit.points) std::printf("  N=%.17g  value=%.17g\n", p.n, p.value);
  std::printf("slope %.6f\nintercept %.6f\n", fit.slope, fit.intercept);
  return kExitOk;
}

int cmd_export_mesh(const std::string& state_path, int level, std::string output) {
  const auto state = load_state(state_path);
  const auto bench = make_benchmark(state.benchmark);
  const auto mesh = restore_mesh(bench.surface.topology, state);
  const auto interp = interpolate_chart(mesh, bench.surface, state.n);
  if (output.empty()) output = std::filesystem::path(state_path).replace_extension(".off").string();
  export_surface_off(mesh, interp, output, level);
  std::printf("wrote %s (%zu elements, level %d)\n", output.c_str(), mesh.num_leaves(), level);
  return kExitOk;
}

// Invariant suite
// ---------------

CheckResult check_conformity() {
  std::mt19937_64 rng(7);
  for (const auto& name : {"lshape", "sphere"}) {
    ConformingMesh mesh(make_surface(name).topology);
    for (int step = 0; step < 300; ++step) {
      const auto leaves = mesh.leaves();
      std::uniform_int_distribution<std::size_t> pick(0, leaves.size() - 1);
      const int id = leaves[pick(rng)];
      mesh.refine(std::span<const int>(&id, 1));
      std::string why;
      if (!mesh.is_conforming(&why))
        return {false, std::string(name) + " step " + std::to_string(step) + ": " + why};
    }
  }
  return {};
}

CheckResult check_local_stiffness() {
  const auto s = reference_triangle();
  ConformingMesh mesh(s.topology);
  const auto interp = interpolate_chart(mesh, s, 1);
  const auto g = element_geometry(mesh, s, interp, mesh.leaves()[0]);
  const auto local = local_system(g, {}, 4);
  const double row_sum = local.A.rowwise().sum().cwiseAbs().maxCoeff();
  const double trace = local.A.trace();
  if (row_sum > 1e-12 || std::abs(trace - 2.0) > 1e-12)
    return {false, "row sums " + std::to_string(row_sum) + ", trace " + std::to_string(trace)};
  return {};
}

CheckResult check_dorfler() {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 1 + trial % 10;
    std::vector<double> eta(m);
    for (auto& e : eta) e = u(rng);
    for (double theta : {0.3, 0.5, 0.8, 1.0}) {
      double total = 0.0;
      for (double e : eta) total += e * e;
      const double target = theta * theta * total;
      std::size_t best = m;
      for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
        double mass = 0.0;
        for (std::size_t i = 0; i < m; ++i)
          if (mask & (1u << i)) mass += eta[i] * eta[i];
        if (mass >= target) best = std::min<std::size_t>(best, std::popcount(mask));
      }
      if (dorfler_mark(eta, theta).size() != best)
        return {false, "trial " + std::to_string(trial) + " theta " + std::to_string(theta)};
    }
  }
  return {};
}

CheckResult check_energy_oracle() {
  const auto bench = flat_square_sin();
  ConformingMesh mesh(bench.surface.topology);
  mesh.refine_uniform(4);
  const auto dofs = build_dofmap(mesh, 1);
  DiscreteField zero;
  zero.degree = 1;
  zero.constraint = dofs.constraint;
  zero.coefficients = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dofs.n_dofs()));
  const double e = energy_error(mesh, bench.surface, dofs, zero, bench.problem, {});
  const double expected = std::numbers::pi / std::sqrt(2.0);
  if (std::abs(e - expected) > 1e-6) return {false, "got " + std::to_string(e)};
  return {};
}

CheckResult check_contracts() {
  RunConfig config;
  config.benchmark = "sphere_xy";
  config.params.max_outer = 2;
  config.params.record_wall_time = false;
  const auto run = run_benchmark(config);
  const auto violations = replay_contracts(run.history, config.params);
  if (!violations.empty()) return {false, violations.front()};
  std::ostringstream csv;
  write_history_csv(run.history, csv);
  std::istringstream in(csv.str());
  const auto back = parse_history_csv(in);
  std::ostringstream again;
  write_history_csv(back, again);
  if (again.str() != csv.str()) return {false, "history CSV round trip differs"};
  return {};
}

CheckResult check_off() {
  const auto bench = sphere_xy();
  ConformingMesh mesh(bench.surface.topology);
  mesh.refine_uniform(2);
  const auto interp = interpolate_chart(mesh, bench.surface, 2);
  const auto off = tessellate_surface(mesh, interp, 1);
  std::ostringstream out;
  write_off(off, out);
  std::istringstream in(out.str());
  const auto back = parse_off(in);
  if (back.vertices.size() != off.vertices.size() || back.faces.size() != 4 * mesh.num_leaves())
    return {false, "counts differ"};
  // Closed surface: V - E + F = 2 with E = 3F/2.
  const auto v = static_cast<long long>(back.vertices.size());
  const auto f = static_cast<long long>(back.faces.size());
  if (2 * v - f != 4) return {false, "Euler characteristic " + std::to_string(v - f / 2)};
  return {};
}

int cmd_check() {
  const std::vector<std::pair<std::string, std::function<CheckResult()>>> checks{
      {"conformity under random refinement", check_conformity},
      {"flat P1 stiffness", check_local_stiffness},
      {"Doerfler minimality", check_dorfler},
      {"energy error of U=0", check_energy_oracle},
      {"exit contracts and CSV round trip", check_contracts},
      {"OFF export round trip", check_off},
  };
  int failed = 0;
  for (const auto& [name, run] : checks) {
    CheckResult r;
    try {
      r = run();
    } catch (const std::exception& e) {
      r = {false, e.what()};
    }
    std::printf("%s %s%s%s\n", r.ok ? "PASS" : "FAIL", name.c_str(), r.detail.empty() ? "" : ": ",
                r.detail.c_str());
    failed += r.ok ? 0 : 1;
  }
  return failed == 0 ? kExitOk : kExitContract;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive finite elements for the Laplace-Beltrami operator on parametric surfaces"};
  app.require_subcommand(1);

  std::string config_path;
  auto* solve = app.add_subcommand("solve", "Run a benchmark and write history.csv, mesh.state, surface.off");
  solve->add_option("config", config_path, "Configuration file")->required();

  std::string csv_path;
  std::string quantity = "energy_error";
  int window = 4;
  double omega = 0.1;
  auto* rates = app.add_subcommand("rates", "Fit a log-log convergence rate to a history");
  rates->add_option("history", csv_path, "History CSV")->required();
  rates->add_option("--quantity", quantity, "energy_error, eta, lambda, osc_u, osc_f or total_estimator")
      ->capture_default_str();
  rates->add_option("--window", window, "Trailing points used (<= 0: all)")->capture_default_str();
  rates->add_option("--omega", omega, "omega in eta + lambda / omega")->capture_default_str();

  std::string state_path;
  std::string output;
  int level = 1;
  auto* exp = app.add_subcommand("export-mesh", "Write a saved mesh state as OFF");
  exp->add_option("state", state_path, "Mesh state file")->required();
  exp->add_option("--level", level, "Subdivisions per element edge, as a power of two")
      ->capture_default_str();
  exp->add_option("--output,-o", output, "Output path (default: state path with .off)");

  auto* check = app.add_subcommand("check", "Run the invariant suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitError;
  }

  try {
    if (*solve) return cmd_solve(config_path);
    if (*rates) return cmd_rates(csv_path, quantity, window, omega);
    if (*exp) return cmd_export_mesh(state_path, level, output);
    if (*check) return cmd_check();
  } catch (const ContractViolation& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitContract;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
