#include "windtree/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

#include "windtree/errors.hpp"
#include "windtree/parallel.hpp"

namespace windtree {

void SweepSpec::validate() const {
  if (!std::isfinite(slope_start) || !std::isfinite(slope_step)) {
    throw std::invalid_argument("sweep slopes must be finite");
  }
  if (count < 1) throw std::invalid_argument("sweep count must be >= 1");
  if (k_min < 1 || k_min > k_max) {
    throw std::invalid_argument("sweep window must satisfy 1 <= k_min <= k_max");
  }
}

SlopeObservation recurrence_statistic(double slope, const SweepSpec& spec, int t) {
  if (!std::isfinite(slope)) throw std::invalid_argument("slope must be finite");
  const TrajectoryLog log = simulate(state_from_slope(slope), spec.k_max);
  if (static_cast<int>(log.events.size()) < spec.k_max) {
    throw CorridorTruncation(log.truncation_reason.value_or("trajectory ended early"));
  }
  double D = std::numeric_limits<double>::infinity();
  for (int k = spec.k_min; k <= spec.k_max; ++k) {
    D = std::min(D, log.events[static_cast<std::size_t>(k - 1)].point.norm());
  }
  return {t, slope, D, std::log(D)};
}

SweepResult build_sweep(const SweepSpec& spec, int jobs) {
  spec.validate();
  const auto n = static_cast<std::size_t>(spec.count);
  std::vector<std::optional<SlopeObservation>> slots(n);
  std::vector<std::string> reasons(n);

  detail::parallel_for(n, jobs, [&](std::size_t i) {
    const int t = static_cast<int>(i) + 1;
    try {
      slots[i] = recurrence_statistic(spec.slope(t), spec, t);
    } catch (const Error& e) {
      reasons[i] = e.what();
    }
  });

  SweepResult result;
  for (std::size_t i = 0; i < n; ++i) {
    const int t = static_cast<int>(i) + 1;
    if (slots[i]) {
      result.observations.push_back(*slots[i]);
    } else {
      result.gaps.push_back({t, spec.slope(t), reasons[i]});
    }
  }
  return result;
}

std::string_view to_string(MotionLabel label) {
  switch (label) {
    case MotionLabel::Recurrent:
      return "Recurrent";
    case MotionLabel::QuasiPeriodicDivergent:
      return "QuasiPeriodicDivergent";
    case MotionLabel::RapidDivergent:
      return "RapidDivergent";
  }
  return "Unknown";
}

MotionClass classify_motion(const TrajectoryLog& log, const ClassifierOptions& options) {
  if (options.quasi_window < 1) throw std::invalid_argument("quasi_window must be >= 1");
  const auto& ev = log.events;
  const std::size_t n = ev.size();
  const auto window = static_cast<std::size_t>(options.quasi_window);
  if (n < 2 * window) {
    throw InsufficientData("classification needs at least 2 * quasi_window collisions");
  }
  const std::size_t half = n / 2;
  const Vec2 start = log.initial.position;

  MotionEvidence evidence;
  evidence.min_return_distance = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) {
    const double d = distance(ev[k].point, start);
    evidence.max_distance = std::max(evidence.max_distance, d);
    if (k >= half) evidence.min_return_distance = std::min(evidence.min_return_distance, d);
  }
  evidence.recurrence_threshold =
      std::max(options.eps_recur, options.recur_fraction * evidence.max_distance);

  for (std::size_t lag = 1; lag <= window && half + lag < n; ++lag) {
    std::size_t matched = 0;
    for (std::size_t k = half; k + lag < n; ++k) {
      if (ev[k + lag].wall == ev[k].wall &&
          std::abs(ev[k + lag].point.y - ev[k].point.y) <= options.eps) {
        ++matched;
      }
    }
    const double fraction = static_cast<double>(matched) / static_cast<double>(n - lag - half);
    if (fraction > evidence.best_match_fraction) {
      evidence.best_match_fraction = fraction;
      evidence.best_lag = static_cast<int>(lag);
    }
  }

  MotionLabel label = MotionLabel::RapidDivergent;
  if (evidence.min_return_distance <= evidence.recurrence_threshold) {
    label = MotionLabel::Recurrent;
  } else if (evidence.best_match_fraction >= options.min_match_fraction) {
    label = MotionLabel::QuasiPeriodicDivergent;
  }
  return {label, evidence};
}

MotionClass classify_motion(const TrajectoryLog& log, double eps, int quasi_window) {
  ClassifierOptions options;
  options.eps = eps;
  options.quasi_window = quasi_window;
  return classify_motion(log, options);
}

double growth_exponent(const TrajectoryLog& log) {
  const std::size_t n = log.events.size();
  if (n < 20) throw InsufficientData("growth exponent needs at least 20 collisions");

  std::vector<double> running_max(n);
  double widest = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    widest = std::max(widest, distance(log.events[k].point, log.initial.position));
    running_max[k] = widest;
  }

  // Sample K log-uniformly between K_lo and n, skipping the first transient.
  const double k_lo = std::clamp(static_cast<double>(n) / 10.0, 1.0, 100.0);
  const double k_hi = static_cast<double>(n);
  constexpr int kSamples = 30;
  std::vector<std::size_t> ks;
  for (int i = 0; i <= kSamples; ++i) {
    const double f = static_cast<double>(i) / kSamples;
    const auto k = static_cast<std::size_t>(std::lround(std::exp(std::log(k_lo) * (1.0 - f) +
                                                                 std::log(k_hi) * f)));
    const std::size_t kk = std::clamp<std::size_t>(k, 1, n);
    if (ks.empty() || ks.back() != kk) ks.push_back(kk);
  }

  double mean_x = 0.0;
  double mean_y = 0.0;
  std::vector<double> xs;
  std::vector<double> ys;
  for (std::size_t k : ks) {
    const double elapsed = log.events[k - 1].time - log.initial.elapsed_time;
    const double spread = running_max[k - 1];
    if (!(elapsed > 0.0) || !(spread > 0.0)) continue;
    xs.push_back(std::log(elapsed));
    ys.push_back(std::log(spread));
    mean_x += xs.back();
    mean_y += ys.back();
  }
  if (xs.size() < 2) throw InsufficientData("too few usable samples for regression");
  mean_x /= static_cast<double>(xs.size());
  mean_y /= static_cast<double>(xs.size());
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mean_x) * (ys[i] - mean_y);
    sxx += (xs[i] - mean_x) * (xs[i] - mean_x);
  }
  if (sxx == 0.0) throw InsufficientData("degenerate time samples");
  return sxy / sxx;
}

DiffusionEstimate estimate_diffusion_exponent(const std::vector<double>& directions,
                                              std::int64_t n_collisions, int jobs) {
  if (directions.size() < 10) throw InsufficientData("need at least 10 directions");
  if (n_collisions < 10000) throw InsufficientData("need at least 1e4 collisions per direction");

  std::vector<std::optional<double>> slots(directions.size());
  detail::parallel_for(directions.size(), jobs, [&](std::size_t i) {
    const TrajectoryLog log = simulate(state_from_angle(directions[i]), n_collisions);
    if (!log.truncated()) slots[i] = growth_exponent(log);
  });

  DiffusionEstimate est;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i]) {
      est.exponents.push_back(*slots[i]);
    } else {
      est.failed_directions.push_back(directions[i]);
    }
  }
  if (est.exponents.size() < 5) {
    throw CorridorTruncation("fewer than 5 directions produced a full trajectory");
  }
  std::vector<double> sorted = est.exponents;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = sorted.size() / 2;
  est.median = sorted.size() % 2 == 1 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
  return est;
}

}  // namespace windtree
