#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <numeric>
#include <string>
#include <sys/wait.h>

#include "windtree/errors.hpp"
#include "windtree/io.hpp"
#include "windtree/pipeline.hpp"

using namespace windtree;
using namespace windtree::pipeline;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("windtree_pipeline_" + name);
  fs::remove_all(dir);
  return dir;
}

// Runs the CLI and returns its exit status.
int cli(const std::string& args) {
  const std::string cmd = std::string(WINDTREE_CLI) + " " + args + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

PipelineConfig small_config(const fs::path& out) {
  PipelineConfig c;
  c.output_dir = out;
  c.sweep.count = 40;
  c.sweep.k_min = 100;
  c.sweep.k_max = 200;
  return c;
}

json read_json(const fs::path& p) { return json::parse(io::read_file(p)); }

}  // namespace

TEST(Config, DefaultsReproduceReferencePipeline) {
  const PipelineConfig c;
  EXPECT_EQ(c.sweep.slope_start, 1.4140);
  EXPECT_EQ(c.sweep.slope_step, 0.0025);
  EXPECT_EQ(c.sweep.count, 300);
  EXPECT_EQ(c.sweep.k_min, 500);
  EXPECT_EQ(c.sweep.k_max, 1000);
  EXPECT_EQ(c.hmm.m, 3u);
  EXPECT_EQ(c.hmm.gamma_diag_init, 0.8);
  EXPECT_EQ(c.hmm.max_iters, 15);
  EXPECT_EQ(c.hmm.tol, 0.0);
  EXPECT_EQ(c.hmm.residual_variant, ResidualVariant::Conditional);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, CheckedInFileMatchesDefaults) {
  const PipelineConfig file = load_config(fs::path(WINDTREE_SOURCE_DIR) / "configs" / "default.json");
  EXPECT_EQ(config_to_json(file), config_to_json(PipelineConfig{}));
}

TEST(Config, JsonRoundTripAndOverrides) {
  PipelineConfig c;
  c.sweep.count = 7;
  c.hmm.residual_variant = ResidualVariant::Marginal;
  c.hmm.init_scheme = InitScheme::Quantile;
  c.simulate.slope = 1.9;
  c.jobs = 3;
  const PipelineConfig back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));

  const PipelineConfig partial = config_from_json(json::parse(R"({"hmm": {"m": 2}})"));
  EXPECT_EQ(partial.hmm.m, 2u);
  EXPECT_EQ(partial.sweep.count, 300);
}

TEST(Config, Rejections) {
  EXPECT_THROW(config_from_json(json::parse(R"({"bogus": 1})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"hmm": {"states": 3}})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"hmm": {"m": "three"}})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"hmm": {"residual_variant": "joint"}})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"sweep": 5})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse("[1]")), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);

  PipelineConfig c;
  c.sweep.k_min = 2000;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.jobs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.hmm.m = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Simulate, SlopeTwoSingleCollision) {
  PipelineConfig c;
  c.output_dir = scratch("sim2");
  c.simulate = {2.0, 1};
  cmd_simulate(c);
  const auto rows = io::parse_trajectory_csv(io::read_file(c.output_dir / "trajectory.csv"));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].k, 0);
  EXPECT_EQ(rows[0].point.x, 0.0);
  EXPECT_EQ(rows[0].point.y, 0.0);
  EXPECT_EQ(rows[1].k, 1);
  EXPECT_EQ(rows[1].point.x, 0.5);
  EXPECT_EQ(rows[1].point.y, 1.0);
  EXPECT_TRUE(fs::exists(c.output_dir / "trajectory.svg"));
  const json s = read_json(c.output_dir / "summary.json");
  EXPECT_TRUE(s.at("motion_class").is_null());
  fs::remove_all(c.output_dir);
}

TEST(Simulate, ZeroCollisions) {
  PipelineConfig c;
  c.output_dir = scratch("sim0");
  c.simulate = {1.414, 0};
  const json s = cmd_simulate(c);
  EXPECT_EQ(io::read_file(c.output_dir / "trajectory.csv"), "k,x,y,t,wall\n0,0,0,0,\n");
  EXPECT_EQ(s.at("n_events"), 0);
  EXPECT_TRUE(read_json(c.output_dir / "trajectory.json").at("events").empty());
  fs::remove_all(c.output_dir);
}

TEST(Simulate, RecurrentSummary) {
  PipelineConfig c;
  c.output_dir = scratch("sim_rec");
  c.simulate = {1.414, 300};
  cmd_simulate(c);
  const json s = read_json(c.output_dir / "summary.json");
  EXPECT_EQ(s.at("motion_class").at("label"), "Recurrent");
  EXPECT_EQ(s.at("n_events"), 300);
  EXPECT_LE(s.at("distance").at("min").get<double>(), s.at("distance").at("max").get<double>());
  EXPECT_EQ(io::dump(s), io::read_file(c.output_dir / "summary.json"));
  const auto d = cmd_diagnose(c);
  EXPECT_TRUE(d.passed) << d.report.dump(2);
  fs::remove_all(c.output_dir);
}

TEST(Sweep, CountOneGivesOneRow) {
  PipelineConfig c = small_config(scratch("sweep1"));
  c.sweep.count = 1;
  cmd_sweep(c);
  const auto obs = io::parse_sweep_csv(io::read_file(c.output_dir / "sweep.csv"));
  ASSERT_EQ(obs.size(), 1u);
  const json meta = read_json(c.output_dir / "sweep_meta.json");
  EXPECT_EQ(meta.at("log_base"), "e");
  EXPECT_TRUE(meta.at("failures").empty());
  fs::remove_all(c.output_dir);
}

TEST(Sweep, RerunAndJobCountGiveIdenticalBytes) {
  PipelineConfig a = small_config(scratch("sweep_a"));
  PipelineConfig b = small_config(scratch("sweep_b"));
  b.jobs = 4;
  cmd_sweep(a);
  const std::string first = io::read_file(a.output_dir / "sweep.csv");
  cmd_sweep(a);
  cmd_sweep(b);
  EXPECT_EQ(io::read_file(a.output_dir / "sweep.csv"), first);
  EXPECT_EQ(io::read_file(b.output_dir / "sweep.csv"), first);
  fs::remove_all(a.output_dir);
  fs::remove_all(b.output_dir);
}

TEST(Sweep, TooManyFailuresIsAnError) {
  PipelineConfig c = small_config(scratch("sweep_fail"));
  c.sweep.slope_start = 0.0;
  c.sweep.slope_step = 0.0;  // every slope runs down a corridor
  c.sweep.count = 3;
  EXPECT_THROW(cmd_sweep(c), CorridorTruncation);
  EXPECT_EQ(read_json(c.output_dir / "sweep_meta.json").at("failures").size(), 3u);
  EXPECT_EQ(run("sweep", c), kExitSimulation);
  EXPECT_EQ(read_json(c.output_dir / "error.json").at("error").at("type"), "CorridorTruncation");
  fs::remove_all(c.output_dir);
}

TEST(Fit, EndToEndArtifacts) {
  PipelineConfig c = small_config(scratch("fit"));
  cmd_sweep(c);
  const json model = cmd_fit(c);
  EXPECT_EQ(model.at("m"), 3);
  const auto trace = model.at("loglik_trace").get<std::vector<double>>();
  ASSERT_EQ(trace.size(), 15u);
  for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_GE(trace[i], trace[i - 1] - 1e-9);
  const auto mu = model.at("mu").get<std::vector<double>>();
  EXPECT_TRUE(std::is_sorted(mu.begin(), mu.end()));
  EXPECT_TRUE(model.at("metadata").at("degenerate_states").is_array());

  const json hist = read_json(c.output_dir / "histogram.json");
  const auto counts = hist.at("counts").get<std::vector<std::int64_t>>();
  EXPECT_EQ(counts.size(), 10u);
  EXPECT_EQ(std::accumulate(counts.begin(), counts.end(), std::int64_t{0}), 40);
  EXPECT_EQ(io::parse_residuals_csv(io::read_file(c.output_dir / "residuals.csv")).size(), 40u);

  // Deterministic across reruns.
  const std::string model_text = io::read_file(c.output_dir / "model.json");
  cmd_fit(c);
  EXPECT_EQ(io::read_file(c.output_dir / "model.json"), model_text);

  const auto d = cmd_diagnose(c);
  EXPECT_TRUE(d.passed) << d.report.dump(2);
  fs::remove_all(c.output_dir);
}

TEST(Fit, SingleStateMeanIsSampleMean) {
  PipelineConfig c = small_config(scratch("fit1"));
  cmd_sweep(c);
  c.hmm.m = 1;
  const json model = cmd_fit(c);
  const auto obs = io::parse_sweep_csv(io::read_file(c.output_dir / "sweep.csv"));
  double mean = 0.0;
  for (const auto& o : obs) mean += o.x;
  mean /= static_cast<double>(obs.size());
  EXPECT_NEAR(model.at("mu").at(0).get<double>(), mean, 1e-12);
  fs::remove_all(c.output_dir);
}

TEST(Fit, MalformedInputFails) {
  PipelineConfig c = small_config(scratch("fit_bad"));
  io::write_file(c.output_dir / "sweep.csv", "t,slope,D,logD\n1,1.4,2.0,oops\n");
  EXPECT_THROW(cmd_fit(c), FormatError);
  EXPECT_EQ(run("fit", c), kExitFit);
  const json err = read_json(c.output_dir / "error.json");
  EXPECT_EQ(err.at("error").at("type"), "FormatError");
  EXPECT_EQ(err.at("error").at("exit_code"), kExitFit);

  io::write_file(c.output_dir / "sweep.csv", "t,slope,D,logD\n1,1.4,2.0,0.69\n");
  EXPECT_THROW(cmd_fit(c), InsufficientData);  // fewer rows than states
  EXPECT_EQ(run("fit", c, c.output_dir / "missing.csv"), kExitFit);
  fs::remove_all(c.output_dir);
}

TEST(Diagnose, DetectsTamperedResiduals) {
  PipelineConfig c = small_config(scratch("tamper"));
  cmd_sweep(c);
  cmd_fit(c);
  ASSERT_TRUE(cmd_diagnose(c).passed);
  auto rows = io::parse_residuals_csv(io::read_file(c.output_dir / "residuals.csv"));
  rows[3].u = 0.5 * rows[3].u + 0.25;
  io::write_file(c.output_dir / "residuals.csv", io::residuals_csv(rows));
  const auto d = cmd_diagnose(c);
  EXPECT_FALSE(d.passed);
  EXPECT_EQ(run("diagnose", c), kExitFit);
  fs::remove_all(c.output_dir);
}

TEST(Diagnose, EmptyDirectoryIsNotAPass) {
  PipelineConfig c;
  c.output_dir = scratch("empty");
  fs::create_directories(c.output_dir);
  EXPECT_FALSE(cmd_diagnose(c).passed);
  c.output_dir = scratch("never_created");
  EXPECT_EQ(run("diagnose", c), kExitFit);
  fs::remove_all(c.output_dir);
}

TEST(Cli, ExitCodesAndFlags) {
  const fs::path out = scratch("cli");
  const std::string o = "--out " + out.string();
  EXPECT_EQ(cli("simulate " + o + " --slope 2 --collisions 1"), 0);
  EXPECT_EQ(io::parse_trajectory_csv(io::read_file(out / "trajectory.csv")).size(), 2u);

  EXPECT_EQ(cli("sweep " + o + " --count 12 --k-min 50 --k-max 100 --jobs 2"), 0);
  EXPECT_EQ(io::parse_sweep_csv(io::read_file(out / "sweep.csv")).size(), 12u);
  EXPECT_EQ(cli("fit " + o + " --states 2 --iters 4"), 0);
  const json model = read_json(out / "model.json");
  EXPECT_EQ(model.at("m"), 2);
  EXPECT_EQ(model.at("loglik_trace").size(), 4u);
  EXPECT_EQ(cli("diagnose " + o), 0);
  EXPECT_TRUE(read_json(out / "diagnose.json").at("passed").get<bool>());

  // Config errors.
  EXPECT_EQ(cli("sweep " + o + " --k-min 0"), kExitConfig);
  EXPECT_EQ(cli("sweep " + o + " --no-such-flag"), kExitConfig);
  EXPECT_EQ(cli("fit " + o + " --residual-variant joint"), kExitConfig);
  EXPECT_EQ(cli("fit --config /nonexistent.json"), kExitConfig);
  EXPECT_EQ(cli(""), kExitConfig);

  // Simulation failure: every slope of this sweep runs down a corridor.
  EXPECT_EQ(cli("sweep " + o + " --slope-start 0 --slope-step 0 --count 2 --k-min 5 --k-max 10"),
            kExitSimulation);
  EXPECT_TRUE(fs::exists(out / "error.json"));

  // Fit failure.
  EXPECT_EQ(cli("fit " + o + " --input " + (out / "nope.csv").string()), kExitFit);
  fs::remove_all(out);
}

TEST(Cli, ConfigFileWithOverride) {
  const fs::path out = scratch("cli_cfg");
  PipelineConfig c = small_config(out);
  c.sweep.count = 5;
  io::write_file(out / "cfg.json", io::dump(config_to_json(c)));
  EXPECT_EQ(cli("sweep --config " + (out / "cfg.json").string() + " --count 3"), 0);
  EXPECT_EQ(io::parse_sweep_csv(io::read_file(out / "sweep.csv")).size(), 3u);
  fs::remove_all(out);
}
