#pragma once
/// \file runner.hpp
/// \brief Runs a configured benchmark and writes its outputs.

#include "lbafem/adaptivity.hpp"
#include "lbafem/benchmarks.hpp"
#include "lbafem/config.hpp"
#include "lbafem/history_io.hpp"
#include "lbafem/off_export.hpp"
#include "lbafem/state_io.hpp"

#include <filesystem>
#include <memory>
#include <string>

namespace lbafem {

struct BenchmarkRun {
  std::unique_ptr<Benchmark> benchmark;
  std::unique_ptr<AfemState> state;
  RunHistory history;
};

/// Adaptive or uniform run of the configured benchmark. Rows go to `sink`
/// as they are recorded.
inline BenchmarkRun run_benchmark(const RunConfig& config, const RowSink& sink = {}) {
  validate(config);
  BenchmarkRun run;
  run.benchmark = std::make_unique<Benchmark>(make_benchmark(config.benchmark));
  const auto& p = config.params;
  run.state = std::make_unique<AfemState>(run.benchmark->surface, run.benchmark->problem, p.n,
                                          p.estimator.lambda_safety);
  if (config.mode == RunMode::Uniform)
    run.history = uniform_run(run.benchmark->surface, run.benchmark->problem, p, sink, run.state.get());
  else
    run.history = afem_run(run.benchmark->surface, run.benchmark->problem, p, sink, run.state.get());
  return run;
}

struct RunOutputs {
  std::string history_csv;
  std::string state;
  std::string surface_off;
};

inline RunOutputs output_paths(const RunConfig& config) {
  const std::filesystem::path dir(config.output_dir);
  return {(dir / "history.csv").string(), (dir / "mesh.state").string(),
          (dir / "surface.off").string()};
}

/// Runs the benchmark with the history streamed to history.csv, then saves
/// the final mesh state and, unless off_level < 0, the surface as OFF.
inline BenchmarkRun solve_and_export(const RunConfig& config) {
  validate(config);
  std::error_code ec;
  std::filesystem::create_directories(config.output_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + config.output_dir + "': " + ec.message());
  const auto paths = output_paths(config);
  auto writer = std::make_shared<CsvHistoryWriter>(paths.history_csv);
  auto run = run_benchmark(config, [writer](const HistoryRow& r) { (*writer)(r); });
  save_state(capture_state(run.state->mesh, config.benchmark, config.params.n), paths.state);
  if (config.off_level >= 0) {
    const auto interp = interpolate_chart(run.state->mesh, run.benchmark->surface, config.params.n);
    export_surface_off(run.state->mesh, interp, paths.surface_off, config.off_level);
  }
  return run;
}

}  // namespace lbafem
