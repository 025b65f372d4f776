#pragma once

// Pipeline commands behind the CLI. Each command writes its artifacts into
// the configured output directory and returns the JSON summary it wrote.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "windtree/experiment.hpp"
#include "windtree/hmm.hpp"

namespace windtree::pipeline {

using nlohmann::json;

struct HmmConfig {
  std::size_t m = 3;
  double gamma_diag_init = 0.8;
  int max_iters = 15;
  double tol = 0.0;
  ResidualVariant residual_variant = ResidualVariant::Conditional;
  InitScheme init_scheme = InitScheme::QuantileKMeans;
  bool update_delta = true;
  int histogram_bins = 10;
};

struct SimulateConfig {
  double slope = 1.414;
  std::int64_t n_collisions = 500;
};

struct PipelineConfig {
  SweepSpec sweep;
  HmmConfig hmm;
  SimulateConfig simulate;
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 20240101;
  int jobs = 1;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

/// Fields present in `j` override `base`; unknown keys are rejected.
PipelineConfig config_from_json(const json& j, PipelineConfig base = {});
json config_to_json(const PipelineConfig& config);
PipelineConfig load_config(const std::filesystem::path& path);

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitSimulation = 3;
inline constexpr int kExitFit = 4;

/// trajectory.csv, trajectory.json, trajectory.svg, summary.json.
json cmd_simulate(const PipelineConfig& config);

/// sweep.csv (t,slope,D,logD) and sweep_meta.json. Throws
/// CorridorTruncation if more than 10% of the slopes fail.
json cmd_sweep(const PipelineConfig& config);

/// model.json, residuals.csv (t,x,u) and histogram.json from an observations
/// CSV (defaults to <output_dir>/sweep.csv).
json cmd_fit(const PipelineConfig& config, std::optional<std::filesystem::path> observations = {});

struct DiagnoseResult {
  json report;
  bool passed = false;
};

/// Re-checks the invariants of whatever artifacts exist in the output
/// directory and writes diagnose.json.
DiagnoseResult cmd_diagnose(const PipelineConfig& config);

/// Runs a command by name, mapping failures to exit codes and writing
/// error.json (also printed to stderr) when something goes wrong.
int run(const std::string& command, const PipelineConfig& config,
        std::optional<std::filesystem::path> observations = {});

}  // namespace windtree::pipeline
