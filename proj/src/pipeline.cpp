#include "windtree/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <set>

#include "windtree/errors.hpp"
#include "windtree/io.hpp"

namespace windtree::pipeline {

namespace fs = std::filesystem;

namespace {

template <typename T>
void take(const json& j, const char* key, T& out, std::set<std::string>& seen) {
  seen.insert(key);
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

void reject_unknown(const json& j, const std::set<std::string>& seen, const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    if (!seen.count(key)) throw ConfigError("unknown config key '" + where + key + "'");
  }
}

const json& object_at(const json& j, const char* key) {
  const json& sub = j.at(key);
  if (!sub.is_object()) throw ConfigError(std::string("config field '") + key + "' must be an object");
  return sub;
}

ResidualVariant variant_from(const std::string& s) {
  if (s == "conditional") return ResidualVariant::Conditional;
  if (s == "marginal") return ResidualVariant::Marginal;
  throw ConfigError("residual_variant must be 'conditional' or 'marginal'");
}

InitScheme scheme_from(const std::string& s) {
  if (s == "quantile") return InitScheme::Quantile;
  if (s == "quantile_kmeans") return InitScheme::QuantileKMeans;
  throw ConfigError("init_scheme must be 'quantile' or 'quantile_kmeans'");
}

json vec_json(Vec2 v) { return json::array({v.x, v.y}); }

json state_summary(const ParticleState& s) {
  return {{"position", vec_json(s.position)},
          {"velocity", vec_json(s.velocity)},
          {"elapsed_time", s.elapsed_time}};
}

std::vector<double> observation_values(const std::vector<SlopeObservation>& obs) {
  std::vector<double> x;
  x.reserve(obs.size());
  for (const auto& o : obs) x.push_back(o.x);
  return x;
}

// Shared by cmd_fit and the diagnose recomputation.
std::vector<io::ResidualRow> residual_rows(const std::vector<SlopeObservation>& obs,
                                           const PseudoResiduals& res) {
  std::vector<io::ResidualRow> rows;
  rows.reserve(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) rows.push_back({obs[i].t, obs[i].x, res.u[i]});
  return rows;
}

json histogram_json(const std::vector<std::int64_t>& counts, std::size_t total,
                    ResidualVariant variant) {
  return {{"bins", counts.size()},
          {"counts", counts},
          {"total", total},
          {"expected_per_bin", static_cast<double>(total) / static_cast<double>(counts.size())},
          {"chi_square", chi_square_uniform(counts)},
          {"residual_variant", std::string(to_string(variant))}};
}

std::string error_type(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "ConfigError";
  if (dynamic_cast<const DegenerateVelocity*>(&e)) return "DegenerateVelocity";
  if (dynamic_cast<const CorridorTruncation*>(&e)) return "CorridorTruncation";
  if (dynamic_cast<const InsufficientData*>(&e)) return "InsufficientData";
  if (dynamic_cast<const EmptyObservations*>(&e)) return "EmptyObservations";
  if (dynamic_cast<const NumericalUnderflow*>(&e)) return "NumericalUnderflow";
  if (dynamic_cast<const FormatError*>(&e)) return "FormatError";
  if (dynamic_cast<const std::invalid_argument*>(&e)) return "InvalidArgument";
  return "Error";
}

// Invariant checks for diagnose. Each check is a named pass/fail with detail.
class Checklist {
 public:
  void add(const std::string& name, bool ok, json detail = nullptr) {
    json c = {{"name", name}, {"passed", ok}};
    if (!detail.is_null()) c["detail"] = std::move(detail);
    checks_.push_back(std::move(c));
    all_ok_ = all_ok_ && ok;
  }
  // Runs `fn`; an exception counts as a failed check.
  template <typename Fn>
  void guarded(const std::string& name, Fn&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      add(name, false, {{"exception", e.what()}});
    }
  }
  bool ok() const { return all_ok_; }
  json to_json() const { return checks_; }

 private:
  json checks_ = json::array();
  bool all_ok_ = true;
};

bool round_trips_csv(const std::string& text, const std::string& kind) {
  if (kind == "sweep") return io::sweep_csv(io::parse_sweep_csv(text)) == text;
  if (kind == "residuals") return io::residuals_csv(io::parse_residuals_csv(text)) == text;
  return io::trajectory_csv(io::parse_trajectory_csv(text)) == text;
}

bool round_trips_json(const std::string& text) { return io::dump(json::parse(text)) == text; }

void diagnose_trajectory(const fs::path& dir, Checklist& checks) {
  const auto csv_path = dir / "trajectory.csv";
  const auto json_path = dir / "trajectory.json";
  if (!fs::exists(json_path)) return;
  checks.guarded("trajectory", [&] {
    const TrajectoryLog log = io::trajectory_from_json(json::parse(io::read_file(json_path)));

    double worst_speed = 0.0;
    for (const auto& s : log.post_collision_states) {
      worst_speed = std::max(worst_speed, std::abs(s.velocity.norm() - 1.0));
    }
    checks.add("trajectory.speed_conserved", worst_speed <= 1e-9, {{"max_deviation", worst_speed}});

    bool on_wall = true;
    bool increasing = true;
    bool clear = true;
    double prev_t = log.initial.elapsed_time;
    Vec2 prev_p = log.initial.position;
    for (const auto& e : log.events) {
      const double dx = std::abs(e.point.x - static_cast<double>(e.obstacle_center.x));
      const double dy = std::abs(e.point.y - static_cast<double>(e.obstacle_center.y));
      const bool on_boundary = std::max(dx, dy) <= 0.5 + kWallTolerance &&
                               (std::abs(dx - 0.5) <= kWallTolerance || std::abs(dy - 0.5) <= kWallTolerance);
      on_wall = on_wall && on_boundary;
      increasing = increasing && e.time > prev_t;
      clear = clear && !segment_enters_obstacle(prev_p, e.point);
      prev_t = e.time;
      prev_p = e.point;
    }
    checks.add("trajectory.points_on_walls", on_wall);
    checks.add("trajectory.times_increasing", increasing);
    checks.add("trajectory.free_flight", clear);
    checks.add("trajectory.json_round_trip", round_trips_json(io::read_file(json_path)));
    if (fs::exists(csv_path)) {
      const std::string text = io::read_file(csv_path);
      checks.add("trajectory.csv_round_trip", round_trips_csv(text, "trajectory"));
      checks.add("trajectory.csv_matches_log", text == io::trajectory_csv(log));
    }
  });
}

void diagnose_sweep(const PipelineConfig& config, const fs::path& dir, Checklist& checks,
                    std::vector<SlopeObservation>& obs) {
  const auto path = dir / "sweep.csv";
  if (!fs::exists(path)) return;
  checks.guarded("sweep", [&] {
    const std::string text = io::read_file(path);
    obs = io::parse_sweep_csv(text);
    checks.add("sweep.csv_round_trip", round_trips_csv(text, "sweep"));

    bool grid = true;
    bool logs = true;
    int prev_t = 0;
    for (const auto& o : obs) {
      grid = grid && o.t > prev_t && o.t <= config.sweep.count && o.slope == config.sweep.slope(o.t);
      logs = logs && o.D > 0.0 && o.x == std::log(o.D);
      prev_t = o.t;
    }
    checks.add("sweep.slopes_on_grid", grid);
    checks.add("sweep.logD_is_ln_D", logs);
    if (fs::exists(dir / "sweep_meta.json")) {
      const std::string meta_text = io::read_file(dir / "sweep_meta.json");
      checks.add("sweep.meta_round_trip", round_trips_json(meta_text));
      const json meta = json::parse(meta_text);
      const auto failures = meta.at("failures").size();
      checks.add("sweep.rows_plus_failures_equal_count",
                 obs.size() + failures == static_cast<std::size_t>(meta.at("count").get<int>()));
    }
  });
}

void diagnose_model(const fs::path& dir, Checklist& checks,
                    const std::vector<SlopeObservation>& sweep_obs) {
  const auto model_path = dir / "model.json";
  if (!fs::exists(model_path)) return;
  checks.guarded("model", [&] {
    const std::string text = io::read_file(model_path);
    checks.add("model.json_round_trip", round_trips_json(text));
    const json model = json::parse(text);
    const HmmParams params = io::params_from_json(model);

    bool stochastic = true;
    try {
      params.validate();
    } catch (const std::invalid_argument&) {
      stochastic = false;
    }
    checks.add("model.stochastic", stochastic);
    checks.add("model.means_sorted", std::is_sorted(params.mu.begin(), params.mu.end()));

    const auto trace = model.at("loglik_trace").get<std::vector<double>>();
    double worst_drop = 0.0;
    for (std::size_t i = 1; i < trace.size(); ++i) worst_drop = std::max(worst_drop, trace[i - 1] - trace[i]);
    checks.add("model.loglik_non_decreasing", worst_drop <= 1e-9, {{"max_drop", worst_drop}});

    // Observations the model was fitted on: the sweep alongside it, unless
    // the fit was pointed elsewhere.
    std::vector<SlopeObservation> obs = sweep_obs;
    const json& meta = model.at("metadata");
    const fs::path source = meta.at("observations_file").get<std::string>();
    if (source.filename() != "sweep.csv" || obs.empty()) {
      if (fs::exists(source)) obs = io::parse_sweep_csv(io::read_file(source));
    }
    const auto res_path = dir / "residuals.csv";
    if (fs::exists(res_path)) {
      const std::string res_text = io::read_file(res_path);
      checks.add("residuals.csv_round_trip", round_trips_csv(res_text, "residuals"));
      const auto rows = io::parse_residuals_csv(res_text);
      bool unit = true;
      for (const auto& r : rows) unit = unit && r.u >= 0.0 && r.u <= 1.0;
      checks.add("residuals.in_unit_interval", unit);

      if (!obs.empty()) {
        const auto variant = variant_from(meta.at("residual_variant").get<std::string>());
        const auto recomputed = pseudo_residuals(params, observation_values(obs), variant);
        double worst = rows.size() == obs.size() ? 0.0 : 1.0;
        for (std::size_t i = 0; i < std::min(rows.size(), obs.size()); ++i) {
          worst = std::max(worst, std::abs(rows[i].u - recomputed.u[i]));
          if (rows[i].t != obs[i].t || rows[i].x != obs[i].x) worst = 1.0;
        }
        checks.add("residuals.match_recomputation", worst <= 1e-12, {{"max_abs_diff", worst}});
      }

      const auto hist_path = dir / "histogram.json";
      if (fs::exists(hist_path)) {
        const std::string hist_text = io::read_file(hist_path);
        checks.add("histogram.json_round_trip", round_trips_json(hist_text));
        const json hist = json::parse(hist_text);
        const auto counts = hist.at("counts").get<std::vector<std::int64_t>>();
        std::int64_t sum = 0;
        for (auto c : counts) sum += c;
        std::vector<double> u;
        for (const auto& r : rows) u.push_back(r.u);
        checks.add("histogram.sums_to_rows", sum == static_cast<std::int64_t>(rows.size()),
                   {{"sum", sum}, {"rows", rows.size()}});
        checks.add("histogram.matches_residuals",
                   counts == residual_histogram(u, static_cast<int>(counts.size())));
      }
    }
  });
}

}  // namespace

void PipelineConfig::validate() const {
  try {
    sweep.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("sweep: ") + e.what());
  }
  if (hmm.m < 1) throw ConfigError("hmm.m must be >= 1");
  if (!(hmm.gamma_diag_init >= 0.0 && hmm.gamma_diag_init <= 1.0)) {
    throw ConfigError("hmm.gamma_diag_init must lie in [0, 1]");
  }
  if (hmm.m > 1 && hmm.gamma_diag_init == 1.0) {
    // Still stochastic, but EM could never leave the initial state.
    throw ConfigError("hmm.gamma_diag_init must be < 1 when m > 1");
  }
  if (hmm.max_iters < 0) throw ConfigError("hmm.max_iters must be >= 0");
  if (!(hmm.tol >= 0.0)) throw ConfigError("hmm.tol must be >= 0");
  if (hmm.histogram_bins < 2) throw ConfigError("hmm.histogram_bins must be >= 2");
  if (!std::isfinite(simulate.slope)) throw ConfigError("simulate.slope must be finite");
  if (simulate.n_collisions < 0) throw ConfigError("simulate.n_collisions must be >= 0");
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

PipelineConfig config_from_json(const json& j, PipelineConfig base) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  PipelineConfig c = std::move(base);
  std::set<std::string> top;
  try {
    if (j.contains("sweep")) {
      const json& s = object_at(j, "sweep");
      std::set<std::string> seen;
      take(s, "slope_start", c.sweep.slope_start, seen);
      take(s, "slope_step", c.sweep.slope_step, seen);
      take(s, "count", c.sweep.count, seen);
      take(s, "k_min", c.sweep.k_min, seen);
      take(s, "k_max", c.sweep.k_max, seen);
      reject_unknown(s, seen, "sweep.");
    }
    top.insert("sweep");
    if (j.contains("hmm")) {
      const json& h = object_at(j, "hmm");
      std::set<std::string> seen;
      take(h, "m", c.hmm.m, seen);
      take(h, "gamma_diag_init", c.hmm.gamma_diag_init, seen);
      take(h, "max_iters", c.hmm.max_iters, seen);
      take(h, "tol", c.hmm.tol, seen);
      take(h, "update_delta", c.hmm.update_delta, seen);
      take(h, "histogram_bins", c.hmm.histogram_bins, seen);
      std::string variant(to_string(c.hmm.residual_variant));
      std::string scheme(to_string(c.hmm.init_scheme));
      take(h, "residual_variant", variant, seen);
      take(h, "init_scheme", scheme, seen);
      c.hmm.residual_variant = variant_from(variant);
      c.hmm.init_scheme = scheme_from(scheme);
      reject_unknown(h, seen, "hmm.");
    }
    top.insert("hmm");
    if (j.contains("simulate")) {
      const json& s = object_at(j, "simulate");
      std::set<std::string> seen;
      take(s, "slope", c.simulate.slope, seen);
      take(s, "n_collisions", c.simulate.n_collisions, seen);
      reject_unknown(s, seen, "simulate.");
    }
    top.insert("simulate");
    std::string out = c.output_dir.string();
    take(j, "output_dir", out, top);
    c.output_dir = out;
    take(j, "seed", c.seed, top);
    take(j, "jobs", c.jobs, top);
  } catch (const json::exception& e) {
    throw ConfigError(e.what());
  }
  reject_unknown(j, top, "");
  return c;
}

json config_to_json(const PipelineConfig& c) {
  return {{"sweep",
           {{"slope_start", c.sweep.slope_start},
            {"slope_step", c.sweep.slope_step},
            {"count", c.sweep.count},
            {"k_min", c.sweep.k_min},
            {"k_max", c.sweep.k_max}}},
          {"hmm",
           {{"m", c.hmm.m},
            {"gamma_diag_init", c.hmm.gamma_diag_init},
            {"max_iters", c.hmm.max_iters},
            {"tol", c.hmm.tol},
            {"residual_variant", std::string(to_string(c.hmm.residual_variant))},
            {"init_scheme", std::string(to_string(c.hmm.init_scheme))},
            {"update_delta", c.hmm.update_delta},
            {"histogram_bins", c.hmm.histogram_bins}}},
          {"simulate", {{"slope", c.simulate.slope}, {"n_collisions", c.simulate.n_collisions}}},
          {"output_dir", c.output_dir.string()},
          {"seed", c.seed},
          {"jobs", c.jobs}};
}

PipelineConfig load_config(const fs::path& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

json cmd_simulate(const PipelineConfig& config) {
  config.validate();
  const fs::path& dir = config.output_dir;
  const TrajectoryLog log = simulate(state_from_slope(config.simulate.slope), config.simulate.n_collisions);

  io::write_file(dir / "trajectory.csv", io::trajectory_csv(log));
  io::write_file(dir / "trajectory.json", io::dump(io::trajectory_json(log)));
  io::write_file(dir / "trajectory.svg", io::trajectory_svg(log));

  json summary = {{"slope", config.simulate.slope},
                  {"n_requested", config.simulate.n_collisions},
                  {"n_events", log.events.size()},
                  {"truncated", log.truncated()},
                  {"corner_count", log.corner_count()},
                  {"final_state", state_summary(log.final_state())}};
  summary["truncation_reason"] = log.truncation_reason ? json(*log.truncation_reason) : json(nullptr);

  const auto d = distance_series(log);
  if (d.empty()) {
    summary["distance"] = nullptr;
  } else {
    const auto lo = std::min_element(d.begin(), d.end());
    const auto hi = std::max_element(d.begin(), d.end());
    summary["distance"] = {{"min", *lo},
                           {"argmin_k", lo - d.begin() + 1},
                           {"max", *hi},
                           {"argmax_k", hi - d.begin() + 1},
                           {"last", d.back()}};
  }

  const ClassifierOptions opts;
  if (log.events.size() >= static_cast<std::size_t>(2 * opts.quasi_window)) {
    const MotionClass mc = classify_motion(log, opts);
    summary["motion_class"] = {
        {"label", std::string(to_string(mc.label))},
        {"min_return_distance", mc.evidence.min_return_distance},
        {"max_distance", mc.evidence.max_distance},
        {"recurrence_threshold", mc.evidence.recurrence_threshold},
        {"best_lag", mc.evidence.best_lag},
        {"best_match_fraction", mc.evidence.best_match_fraction}};
  } else {
    summary["motion_class"] = nullptr;
    summary["motion_class_note"] = "needs at least " + std::to_string(2 * opts.quasi_window) + " collisions";
  }
  io::write_file(dir / "summary.json", io::dump(summary));
  return summary;
}

json cmd_sweep(const PipelineConfig& config) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const SweepResult result = build_sweep(config.sweep, config.jobs);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  io::write_file(config.output_dir / "sweep.csv", io::sweep_csv(result.observations));

  json failures = json::array();
  for (const auto& g : result.gaps) failures.push_back({{"t", g.t}, {"slope", g.slope}, {"reason", g.reason}});
  json meta = config_to_json(config).at("sweep");
  meta["end_slope"] = config.sweep.end_slope();
  meta["statistic"] = "D = min over k_min <= k <= k_max of |p_k|";
  meta["log_base"] = "e";
  meta["rows"] = result.observations.size();
  meta["failures"] = std::move(failures);
  meta["jobs"] = config.jobs;
  meta["elapsed_seconds"] = seconds;
  io::write_file(config.output_dir / "sweep_meta.json", io::dump(meta));

  if (10 * result.gaps.size() > static_cast<std::size_t>(config.sweep.count)) {
    throw CorridorTruncation(std::to_string(result.gaps.size()) + " of " +
                             std::to_string(config.sweep.count) + " slopes failed");
  }
  return meta;
}

json cmd_fit(const PipelineConfig& config, std::optional<fs::path> observations) {
  config.validate();
  const fs::path source = observations.value_or(config.output_dir / "sweep.csv");
  const auto obs = io::parse_sweep_csv(io::read_file(source));
  if (obs.size() < config.hmm.m) {
    throw InsufficientData("need at least m = " + std::to_string(config.hmm.m) + " observations, got " +
                           std::to_string(obs.size()));
  }
  const auto x = observation_values(obs);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) throw FormatError("logD is not finite in row " + std::to_string(i + 1));
  }

  const HmmParams init = initial_params(x, config.hmm.m, config.hmm.gamma_diag_init, config.hmm.init_scheme);
  const FitReport fit = baum_welch(x, init, {config.hmm.max_iters, config.hmm.tol, config.hmm.update_delta});
  const PseudoResiduals res = pseudo_residuals(fit.params, x, config.hmm.residual_variant);
  const auto counts = residual_histogram(res.u, config.hmm.histogram_bins);

  json model = io::params_json(fit.params);
  model["loglik_trace"] = fit.loglik_trace;
  model["state_order"] = fit.state_order;
  model["metadata"] = {
      {"observations_file", source.string()},
      {"observations", obs.size()},
      {"init_scheme", std::string(to_string(config.hmm.init_scheme))},
      {"gamma_diag_init", config.hmm.gamma_diag_init},
      {"max_iters", config.hmm.max_iters},
      {"tol", config.hmm.tol},
      {"update_delta", config.hmm.update_delta},
      {"iterations", fit.iterations},
      {"log_likelihood", log_likelihood(fit.params, x)},
      {"residual_variant", std::string(to_string(config.hmm.residual_variant))},
      {"degenerate_states", fit.degenerate_states},
      {"stationary_distribution", stationary_distribution(fit.params.gamma)}};

  io::write_file(config.output_dir / "model.json", io::dump(model));
  io::write_file(config.output_dir / "residuals.csv", io::residuals_csv(residual_rows(obs, res)));
  io::write_file(config.output_dir / "histogram.json",
                 io::dump(histogram_json(counts, obs.size(), config.hmm.residual_variant)));
  return model;
}

DiagnoseResult cmd_diagnose(const PipelineConfig& config) {
  config.validate();
  const fs::path& dir = config.output_dir;
  if (!fs::is_directory(dir)) throw FormatError("no output directory " + dir.string());

  Checklist checks;
  std::vector<SlopeObservation> obs;
  diagnose_trajectory(dir, checks);
  diagnose_sweep(config, dir, checks, obs);
  diagnose_model(dir, checks, obs);

  DiagnoseResult result;
  result.report = {{"output_dir", dir.string()}, {"checks", checks.to_json()}};
  result.passed = checks.ok() && !result.report["checks"].empty();
  result.report["passed"] = result.passed;
  io::write_file(dir / "diagnose.json", io::dump(result.report));
  return result;
}

int run(const std::string& command, const PipelineConfig& config,
        std::optional<fs::path> observations) {
  const int failure_code = (command == "fit" || command == "diagnose") ? kExitFit : kExitSimulation;
  auto report = [&](const std::string& type, const std::string& message, int code) {
    const json err = {{"error", {{"command", command}, {"type", type}, {"message", message}, {"exit_code", code}}}};
    std::cerr << err.dump() << '\n';
    try {
      io::write_file(config.output_dir / "error.json", io::dump(err));
    } catch (const std::exception&) {
      // stderr already carries the report
    }
    return code;
  };

  try {
    if (command == "simulate") {
      cmd_simulate(config);
    } else if (command == "sweep") {
      cmd_sweep(config);
    } else if (command == "fit") {
      cmd_fit(config, observations);
    } else if (command == "diagnose") {
      const auto result = cmd_diagnose(config);
      if (!result.passed) return report("InvariantViolation", "diagnose checks failed; see diagnose.json", kExitFit);
    } else {
      return report("ConfigError", "unknown command '" + command + "'", kExitConfig);
    }
  } catch (const ConfigError& e) {
    return report("ConfigError", e.what(), kExitConfig);
  } catch (const std::exception& e) {
    return report(error_type(e), e.what(), failure_code);
  }
  // A stale error from an earlier run would be misleading.
  std::error_code ec;
  fs::remove(config.output_dir / "error.json", ec);
  return kExitOk;
}

}  // namespace windtree::pipeline
