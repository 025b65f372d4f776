// windtree: simulate, sweep, fit, diagnose.
//
//   windtree sweep --config configs/default.json --out out --jobs 4
//   windtree fit --out out
//   windtree diagnose --out out

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "windtree/errors.hpp"
#include "windtree/pipeline.hpp"

namespace wp = windtree::pipeline;

namespace {

// Overrides are kept optional so that only flags given on the command line
// replace values from the config file.
struct Overrides {
  std::optional<std::string> config;
  std::optional<std::string> out;
  std::optional<int> jobs;
  std::optional<std::uint64_t> seed;
  std::optional<double> slope;
  std::optional<std::int64_t> collisions;
  std::optional<double> slope_start;
  std::optional<double> slope_step;
  std::optional<int> count;
  std::optional<int> k_min;
  std::optional<int> k_max;
  std::optional<std::size_t> states;
  std::optional<double> gamma_diag;
  std::optional<int> iters;
  std::optional<double> tol;
  std::optional<std::string> variant;
  std::optional<std::string> init_scheme;
  std::optional<bool> update_delta;
  std::optional<int> bins;
  std::optional<std::string> input;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "JSON config file");
  cmd->add_option("--out,--output-dir", o.out, "output directory");
  cmd->add_option("--jobs", o.jobs, "worker threads");
  cmd->add_option("--seed", o.seed, "seed for sampling-based checks");
  cmd->add_option("--slope", o.slope, "simulate: initial slope");
  cmd->add_option("--collisions,--n-collisions", o.collisions, "simulate: number of collisions");
  cmd->add_option("--slope-start", o.slope_start, "sweep: first slope");
  cmd->add_option("--slope-step", o.slope_step, "sweep: slope increment");
  cmd->add_option("--count", o.count, "sweep: number of slopes");
  cmd->add_option("--k-min", o.k_min, "sweep: first collision in the window");
  cmd->add_option("--k-max", o.k_max, "sweep: last collision in the window");
  cmd->add_option("--states,--m", o.states, "fit: number of hidden states");
  cmd->add_option("--gamma-diag-init", o.gamma_diag, "fit: initial diagonal of Gamma");
  cmd->add_option("--iters,--max-iters", o.iters, "fit: EM iterations");
  cmd->add_option("--tol", o.tol, "fit: early-stop tolerance (0 runs all iterations)");
  cmd->add_option("--residual-variant", o.variant, "fit: conditional | marginal");
  cmd->add_option("--init-scheme", o.init_scheme, "fit: quantile | quantile_kmeans");
  cmd->add_option("--update-delta", o.update_delta, "fit: re-estimate the initial distribution");
  cmd->add_option("--histogram-bins", o.bins, "fit: residual histogram bins");
}

template <typename T, typename U>
void apply(const std::optional<T>& v, U& field) {
  if (v) field = *v;
}

wp::PipelineConfig build_config(const Overrides& o) {
  wp::PipelineConfig c = o.config ? wp::load_config(*o.config) : wp::PipelineConfig{};
  apply(o.out, c.output_dir);
  apply(o.jobs, c.jobs);
  apply(o.seed, c.seed);
  apply(o.slope, c.simulate.slope);
  apply(o.collisions, c.simulate.n_collisions);
  apply(o.slope_start, c.sweep.slope_start);
  apply(o.slope_step, c.sweep.slope_step);
  apply(o.count, c.sweep.count);
  apply(o.k_min, c.sweep.k_min);
  apply(o.k_max, c.sweep.k_max);
  apply(o.states, c.hmm.m);
  apply(o.gamma_diag, c.hmm.gamma_diag_init);
  apply(o.iters, c.hmm.max_iters);
  apply(o.tol, c.hmm.tol);
  apply(o.update_delta, c.hmm.update_delta);
  apply(o.bins, c.hmm.histogram_bins);
  // Enum fields go through the JSON reader so that spelling is checked once.
  wp::json enums = wp::json::object();
  if (o.variant) enums["residual_variant"] = *o.variant;
  if (o.init_scheme) enums["init_scheme"] = *o.init_scheme;
  if (!enums.empty()) c = wp::config_from_json({{"hmm", enums}}, c);
  return c;
}

int config_failure(const std::string& message) {
  std::cerr << wp::json{{"error", {{"type", "ConfigError"}, {"message", message},
                                   {"exit_code", wp::kExitConfig}}}}.dump()
            << '\n';
  return wp::kExitConfig;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ehrenfest wind-tree billiard and Gaussian HMM pipeline"};
  app.require_subcommand(1);
  Overrides o;
  for (const char* name : {"simulate", "sweep", "fit", "diagnose"}) {
    auto* cmd = app.add_subcommand(name);
    add_common(cmd, o);
    if (std::string(name) == "fit") cmd->add_option("--input", o.input, "observations CSV (t,slope,D,logD)");
  }
  app.get_subcommand("simulate")->description("trajectory CSV/JSON/SVG and a summary for one slope");
  app.get_subcommand("sweep")->description("recurrence statistic over the slope grid");
  app.get_subcommand("fit")->description("Baum-Welch fit, pseudo-residuals and their histogram");
  app.get_subcommand("diagnose")->description("re-check invariants of the artifacts in --out");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return config_failure(e.what());
  }

  wp::PipelineConfig config;
  try {
    config = build_config(o);
    config.validate();
  } catch (const windtree::ConfigError& e) {
    return config_failure(e.what());
  }

  const std::string command = app.get_subcommands().front()->get_name();
  std::optional<std::filesystem::path> input;
  if (o.input) input = *o.input;
  return wp::run(command, config, input);
}
