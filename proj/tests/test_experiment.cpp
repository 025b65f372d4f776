#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "windtree/errors.hpp"
#include "windtree/experiment.hpp"

using namespace windtree;

namespace {

SweepSpec small_spec() {
  SweepSpec s;
  s.count = 24;
  s.k_min = 50;
  s.k_max = 120;
  return s;
}

// Hand-built log whose event points are given; times are cumulative path
// length along the polyline.
TrajectoryLog synthetic_log(const std::vector<Vec2>& points) {
  TrajectoryLog log;
  log.initial = {{0, 0}, {1, 0}, 0};
  Vec2 prev{0, 0};
  double t = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    t += distance(prev, points[i]);
    CollisionEvent e;
    e.point = points[i];
    e.time = t;
    e.index = static_cast<std::int64_t>(i + 1);
    log.events.push_back(e);
    log.post_collision_states.push_back({points[i], {1, 0}, t});
    prev = points[i];
  }
  return log;
}

}  // namespace

TEST(SweepSpec, DefaultsAndGrid) {
  const SweepSpec s;
  EXPECT_EQ(s.slope_start, 1.4140);
  EXPECT_EQ(s.slope_step, 0.0025);
  EXPECT_EQ(s.count, 300);
  EXPECT_EQ(s.k_min, 500);
  EXPECT_EQ(s.k_max, 1000);
  EXPECT_NEAR(s.end_slope(), 2.1615, 1e-12);
  EXPECT_EQ(s.slope(1), 1.4140);
  EXPECT_NEAR(s.slope(2), 1.4165, 1e-15);
  EXPECT_NO_THROW(s.validate());
  // Index-based slopes do not drift the way a running sum does.
  double running = s.slope_start;
  for (int t = 2; t <= s.count; ++t) running += s.slope_step;
  EXPECT_EQ(s.slope(s.count), s.slope_start + 299.0 * s.slope_step);
  EXPECT_NEAR(running, s.slope(s.count), 1e-12);
}

TEST(SweepSpec, Validation) {
  SweepSpec s;
  s.count = 0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = {};
  s.k_min = 0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = {};
  s.k_min = 1001;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = {};
  s.slope_step = NAN;
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(RecurrenceStatistic, MatchesDirectMinimum) {
  const SweepSpec spec = small_spec();
  for (double slope : {1.414, 1.5, 1.718, 2.1}) {
    const SlopeObservation o = recurrence_statistic(slope, spec, 7);
    const TrajectoryLog log = simulate(state_from_slope(slope), spec.k_max);
    double d = INFINITY;
    for (int k = spec.k_min; k <= spec.k_max; ++k) {
      const Vec2 p = log.events[static_cast<std::size_t>(k - 1)].point;
      d = std::min(d, std::sqrt(p.x * p.x + p.y * p.y));
    }
    EXPECT_EQ(o.t, 7);
    EXPECT_EQ(o.slope, slope);
    EXPECT_NEAR(o.D, d, 1e-14 * d);
    EXPECT_EQ(o.x, std::log(o.D));
  }
}

TEST(RecurrenceStatistic, NeverBelowClosestWall) {
  // Every collision point is at least as far from the origin as (0.5, 0.5).
  const SweepSpec spec = small_spec();
  for (int t = 1; t <= spec.count; ++t) {
    EXPECT_GE(recurrence_statistic(spec.slope(t), spec).D, std::sqrt(0.5) - 1e-12);
  }
}

TEST(RecurrenceStatistic, CorridorSlopeFails) {
  SweepSpec spec = small_spec();
  EXPECT_THROW(recurrence_statistic(0.0, spec), CorridorTruncation);
  EXPECT_THROW(recurrence_statistic(NAN, spec), std::invalid_argument);
}

TEST(BuildSweep, SingleSlope) {
  SweepSpec spec = small_spec();
  spec.count = 1;
  const SweepResult r = build_sweep(spec);
  ASSERT_EQ(r.observations.size(), 1u);
  EXPECT_EQ(r.observations[0].t, 1);
  EXPECT_EQ(r.observations[0].slope, spec.slope_start);
}

TEST(BuildSweep, SlopeOrderAndJobIndependence) {
  const SweepSpec spec = small_spec();
  const SweepResult one = build_sweep(spec, 1);
  ASSERT_EQ(one.observations.size(), static_cast<std::size_t>(spec.count));
  for (int jobs : {2, 3, 8}) {
    const SweepResult many = build_sweep(spec, jobs);
    ASSERT_EQ(many.observations.size(), one.observations.size());
    for (std::size_t i = 0; i < one.observations.size(); ++i) {
      EXPECT_EQ(many.observations[i].t, static_cast<int>(i + 1));
      EXPECT_EQ(many.observations[i].slope, one.observations[i].slope);
      EXPECT_EQ(many.observations[i].x, one.observations[i].x);
    }
  }
  // Same spec twice: same bits.
  const SweepResult again = build_sweep(spec, 1);
  for (std::size_t i = 0; i < one.observations.size(); ++i) {
    EXPECT_EQ(again.observations[i].x, one.observations[i].x);
  }
}

TEST(BuildSweep, FailedSlopesBecomeGaps) {
  SweepSpec spec = small_spec();
  spec.slope_start = -1.0;
  spec.slope_step = 1.0;
  spec.count = 3;  // slopes -1, 0, 1; slope 0 runs down a corridor
  const SweepResult r = build_sweep(spec, 2);
  ASSERT_EQ(r.gaps.size(), 1u);
  EXPECT_EQ(r.gaps[0].t, 2);
  EXPECT_FALSE(r.gaps[0].reason.empty());
  ASSERT_EQ(r.observations.size(), 2u);
  EXPECT_EQ(r.observations[0].t, 1);
  EXPECT_EQ(r.observations[1].t, 3);
}

TEST(ClassifyMotion, MotionTypesAtFiveHundred) {
  EXPECT_EQ(classify_motion(simulate(state_from_slope(1.414), 500)).label, MotionLabel::Recurrent);
  EXPECT_EQ(classify_motion(simulate(state_from_slope(1.732), 500)).label,
            MotionLabel::QuasiPeriodicDivergent);
  EXPECT_EQ(classify_motion(simulate(state_from_slope(1.618), 500)).label, MotionLabel::RapidDivergent);
}

TEST(ClassifyMotion, RecurrentAtThreeHundred) {
  EXPECT_EQ(classify_motion(simulate(state_from_slope(1.414), 300)).label, MotionLabel::Recurrent);
}

TEST(ClassifyMotion, MirrorInvariant) {
  for (double slope : {1.414, 1.618, 1.732, 1.9}) {
    const auto a = classify_motion(simulate(state_from_slope(slope), 500));
    const auto b = classify_motion(simulate(state_from_slope(-slope), 500));
    EXPECT_EQ(a.label, b.label) << slope;
    EXPECT_EQ(a.evidence.min_return_distance, b.evidence.min_return_distance);
  }
}

TEST(ClassifyMotion, EvidenceIsConsistent) {
  const auto mc = classify_motion(simulate(state_from_slope(1.732), 500));
  EXPECT_GE(mc.evidence.best_lag, 1);
  EXPECT_LE(mc.evidence.best_lag, 100);
  EXPECT_GE(mc.evidence.best_match_fraction, 0.5);
  EXPECT_GT(mc.evidence.min_return_distance, mc.evidence.recurrence_threshold);
}

TEST(ClassifyMotion, NeedsEnoughCollisions) {
  EXPECT_THROW(classify_motion(simulate(state_from_slope(1.414), 150)), InsufficientData);
  EXPECT_THROW(classify_motion(simulate(state_from_slope(1.414), 50), 1.0, 0), std::invalid_argument);
}

TEST(GrowthExponent, SyntheticLogs) {
  // Bounded orbit on the unit circle: the radius never grows.
  std::vector<Vec2> circle;
  for (int k = 1; k <= 2000; ++k) circle.push_back({std::cos(0.7 * k), std::sin(0.7 * k)});
  EXPECT_NEAR(growth_exponent(synthetic_log(circle)), 0.0, 1e-9);

  // Straight flight: distance equals elapsed time.
  std::vector<Vec2> line;
  for (int k = 1; k <= 2000; ++k) line.push_back({static_cast<double>(k), 0.0});
  EXPECT_NEAR(growth_exponent(synthetic_log(line)), 1.0, 1e-9);

  EXPECT_THROW(growth_exponent(synthetic_log(std::vector<Vec2>(10, {1, 1}))), InsufficientData);
}

TEST(GrowthExponent, RapidDivergenceIsNearBallistic) {
  const double e = growth_exponent(simulate(state_from_slope(1.618), 20000));
  EXPECT_GT(e, 0.85);
  EXPECT_LT(e, 1.1);
}

TEST(DiffusionExponent, Preconditions) {
  EXPECT_THROW(estimate_diffusion_exponent(std::vector<double>(9, 1.0), 10000), InsufficientData);
  EXPECT_THROW(estimate_diffusion_exponent(std::vector<double>(10, 1.0), 9999), InsufficientData);
  // Every direction runs down a corridor.
  EXPECT_THROW(estimate_diffusion_exponent(std::vector<double>(10, 0.0), 10000), CorridorTruncation);
}

TEST(DiffusionExponent, FailedDirectionsAreReported) {
  std::vector<double> dirs(12, 0.0);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ang(0.1, 1.4);
  for (std::size_t i = 0; i < 6; ++i) dirs[i] = ang(rng);
  const DiffusionEstimate est = estimate_diffusion_exponent(dirs, 10000, 2);
  EXPECT_EQ(est.exponents.size(), 6u);
  EXPECT_EQ(est.failed_directions.size(), 6u);
  std::vector<double> sorted = est.exponents;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_DOUBLE_EQ(est.median, 0.5 * (sorted[2] + sorted[3]));
}
