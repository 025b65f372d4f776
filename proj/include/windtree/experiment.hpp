#pragma once

// Experiments on top of the billiard: the recurrence statistic D over a grid
// of initial slopes, a motion-type classifier, and a desk-scale estimate of
// the diffusion exponent.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "windtree/billiard.hpp"

namespace windtree {

struct SweepSpec {
  double slope_start = 1.4140;
  double slope_step = 0.0025;
  int count = 300;
  int k_min = 500;
  int k_max = 1000;

  /// Slope of the t-th sample, t = 1..count. Computed from the index, never
  /// by repeated addition.
  double slope(int t) const { return slope_start + static_cast<double>(t - 1) * slope_step; }
  double end_slope() const { return slope(count); }

  /// Throws std::invalid_argument on a non-finite slope grid, count < 1 or
  /// a bad collision window (1 <= k_min <= k_max required).
  void validate() const;
};

struct SlopeObservation {
  int t = 0;  // 1-based index in the sweep
  double slope = 0.0;
  double D = 0.0;  // min distance from the origin over collisions k_min..k_max
  double x = 0.0;  // ln D
};

struct SweepGap {
  int t = 0;
  double slope = 0.0;
  std::string reason;
};

struct SweepResult {
  std::vector<SlopeObservation> observations;  // in slope order, gaps omitted
  std::vector<SweepGap> gaps;
};

/// D(slope) for a particle leaving the origin with velocity along (1, slope).
/// Throws CorridorTruncation if fewer than k_max collisions happen.
SlopeObservation recurrence_statistic(double slope, const SweepSpec& spec, int t = 1);

/// Evaluates every slope of the grid. Up to `jobs` worker threads; the result
/// does not depend on the job count.
SweepResult build_sweep(const SweepSpec& spec, int jobs = 1);

enum class MotionLabel { Recurrent, QuasiPeriodicDivergent, RapidDivergent };

std::string_view to_string(MotionLabel label);

struct MotionEvidence {
  double min_return_distance = 0.0;  // over the final half, to the start point
  double max_distance = 0.0;         // over the whole log
  double recurrence_threshold = 0.0;
  int best_lag = 0;
  double best_match_fraction = 0.0;
};

struct MotionClass {
  MotionLabel label = MotionLabel::RapidDivergent;
  MotionEvidence evidence;
};

struct ClassifierOptions {
  double eps = 1.0;          // y-coordinate match tolerance
  int quasi_window = 100;    // largest lag tested, in collisions
  double eps_recur = 1.0;    // absolute return distance
  double recur_fraction = 0.1;  // return distance relative to the explored radius
  double min_match_fraction = 0.5;
};

/// Recurrent: over the final half of the log the particle comes back within
/// max(eps_recur, recur_fraction * max distance) of its start.
/// QuasiPeriodicDivergent: otherwise, some lag tau <= quasi_window repeats the
/// collision y-coordinate within eps on the same wall type for at least
/// min_match_fraction of the final half.
/// RapidDivergent: neither.
/// Throws InsufficientData when the log holds fewer than 2 * quasi_window events.
MotionClass classify_motion(const TrajectoryLog& log, const ClassifierOptions& options);
MotionClass classify_motion(const TrajectoryLog& log, double eps = 1.0, int quasi_window = 100);

/// Slope of ln(max_{k<=K} |p_k - p_0|) against ln t(K) over logarithmically
/// spaced K. Needs at least 20 events.
double growth_exponent(const TrajectoryLog& log);

struct DiffusionEstimate {
  double median = 0.0;
  std::vector<double> exponents;  // successful directions, input order
  std::vector<double> failed_directions;
};

/// Launches one trajectory from the origin per direction (angle in radians),
/// and returns the median growth exponent. Requires >= 10 directions,
/// n_collisions >= 1e4 and at least 5 directions that do not escape down a
/// corridor.
DiffusionEstimate estimate_diffusion_exponent(const std::vector<double>& directions,
                                              std::int64_t n_collisions, int jobs = 1);

}  // namespace windtree
