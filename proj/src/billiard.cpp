#include "windtree/billiard.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

#include "windtree/errors.hpp"

namespace windtree {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::array<std::string_view, 5> kWallNames = {"Left", "Right", "Bottom", "Top",
                                                        "Corner"};

// Odd center of the cell a walk starting at `coord` moving with `v` begins in.
// Cell boundaries sit on even integers; a walker exactly on one belongs to the
// cell it is about to enter.
std::int64_t start_center(double coord, double v) {
  const double even = 2.0 * std::floor(coord / 2.0);
  if (coord == even && v < 0.0) return static_cast<std::int64_t>(even) - 1;
  return static_cast<std::int64_t>(even) + 1;
}

// Entry/exit of the ray along one axis with respect to the slab [lo, hi].
// A ray parallel to the slab is inside for all t only when strictly between
// the faces; touching a face tangentially is not a hit.
struct SlabSpan {
  double enter;
  double exit;
};

std::optional<SlabSpan> slab(double p, double v, double lo, double hi) {
  if (v == 0.0) {
    if (p > lo && p < hi) return SlabSpan{-kInf, kInf};
    return std::nullopt;
  }
  const double a = (lo - p) / v;
  const double b = (hi - p) / v;
  return SlabSpan{std::min(a, b), std::max(a, b)};
}

// Hit of the ray against the obstacle of one cell, snapped onto its boundary.
std::optional<CollisionEvent> hit_square(const ParticleState& s, LatticePoint c) {
  const Vec2 p = s.position;
  const Vec2 v = s.velocity;
  const double lo_x = static_cast<double>(c.x) - 0.5;
  const double hi_x = static_cast<double>(c.x) + 0.5;
  const double lo_y = static_cast<double>(c.y) - 0.5;
  const double hi_y = static_cast<double>(c.y) + 0.5;

  const auto sx = slab(p.x, v.x, lo_x, hi_x);
  if (!sx) return std::nullopt;
  const auto sy = slab(p.y, v.y, lo_y, hi_y);
  if (!sy) return std::nullopt;

  const double t_enter = std::max(sx->enter, sy->enter);
  const double t_exit = std::min(sx->exit, sy->exit);
  if (!(t_enter < t_exit)) return std::nullopt;  // miss or tangential touch
  if (t_exit <= kWallTolerance) return std::nullopt;  // behind, or departing wall
  if (t_enter < kWallTolerance) {
    throw std::invalid_argument("particle starts inside an obstacle or heads into its wall");
  }

  CollisionEvent ev;
  ev.obstacle_center = c;
  ev.time = s.elapsed_time + t_enter;
  Vec2 q = p + v * t_enter;
  const double near_y = std::abs(q.y - lo_y) < std::abs(q.y - hi_y) ? lo_y : hi_y;
  const double near_x = std::abs(q.x - lo_x) < std::abs(q.x - hi_x) ? lo_x : hi_x;

  if (sx->enter > sy->enter) {
    q.x = v.x > 0.0 ? lo_x : hi_x;
    ev.wall = v.x > 0.0 ? Wall::Left : Wall::Right;
    if (std::abs(q.y - near_y) <= kWallTolerance) {
      q.y = near_y;
      ev.wall = Wall::Corner;
    }
  } else if (sy->enter > sx->enter) {
    q.y = v.y > 0.0 ? lo_y : hi_y;
    ev.wall = v.y > 0.0 ? Wall::Bottom : Wall::Top;
    if (std::abs(q.x - near_x) <= kWallTolerance) {
      q.x = near_x;
      ev.wall = Wall::Corner;
    }
  } else {
    q = {v.x > 0.0 ? lo_x : hi_x, v.y > 0.0 ? lo_y : hi_y};
    ev.wall = Wall::Corner;
  }
  ev.point = q;
  return ev;
}

void check_velocity(Vec2 v) {
  if (!v.finite() || std::abs(v.norm() - 1.0) > 1e-6) {
    throw DegenerateVelocity("velocity must be a unit vector");
  }
}

}  // namespace

std::string_view to_string(Wall wall) { return kWallNames[static_cast<std::size_t>(wall)]; }

std::optional<Wall> wall_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kWallNames.size(); ++i) {
    if (kWallNames[i] == name) return static_cast<Wall>(i);
  }
  return std::nullopt;
}

std::size_t TrajectoryLog::corner_count() const {
  return static_cast<std::size_t>(std::count_if(
      events.begin(), events.end(), [](const CollisionEvent& e) { return e.wall == Wall::Corner; }));
}

LatticePoint locate_cell(Vec2 p) {
  auto axis = [](double c) -> std::int64_t {
    const double even = 2.0 * std::floor(c / 2.0);
    if (c == even && c < 0.0) return static_cast<std::int64_t>(even) - 1;
    return static_cast<std::int64_t>(even) + 1;
  };
  return {axis(p.x), axis(p.y)};
}

bool inside_obstacle(Vec2 p, double margin) {
  const LatticePoint c = locate_cell(p);
  const double half = 0.5 - margin;
  return std::abs(p.x - static_cast<double>(c.x)) < half &&
         std::abs(p.y - static_cast<double>(c.y)) < half;
}

ParticleState state_from_slope(double slope, Vec2 p) {
  return {p, normalized({1.0, slope}), 0.0};
}

ParticleState state_from_angle(double theta, Vec2 p) {
  return {p, {std::cos(theta), std::sin(theta)}, 0.0};
}

std::optional<CollisionEvent> next_collision(const ParticleState& s, double horizon) {
  check_velocity(s.velocity);
  if (!s.position.finite()) throw std::invalid_argument("position must be finite");
  if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be positive");

  const Vec2 p = s.position;
  const Vec2 v = s.velocity;
  LatticePoint cell{start_center(p.x, v.x), start_center(p.y, v.y)};

  // Period-2 grid walk. Boundaries are exact even integers, so crossing times
  // are recomputed from them rather than accumulated.
  const std::int64_t step_x = v.x > 0.0 ? 2 : -2;
  const std::int64_t step_y = v.y > 0.0 ? 2 : -2;
  auto crossing = [](std::int64_t center, std::int64_t step, double pos, double vel) {
    if (vel == 0.0) return kInf;
    return (static_cast<double>(center + step / 2) - pos) / vel;
  };
  double t_x = crossing(cell.x, step_x, p.x, v.x);
  double t_y = crossing(cell.y, step_y, p.y, v.y);

  for (;;) {
    if (auto ev = hit_square(s, cell)) {
      if (ev->time - s.elapsed_time > horizon) return std::nullopt;
      return ev;
    }
    const double t_leave = std::min(t_x, t_y);
    if (t_leave > horizon) return std::nullopt;
    if (t_x <= t_y) {
      cell.x += step_x;
      t_x = crossing(cell.x, step_x, p.x, v.x);
    }
    if (t_y <= t_leave) {
      cell.y += step_y;
      t_y = crossing(cell.y, step_y, p.y, v.y);
    }
  }
}

Vec2 reflect(Vec2 v, Wall wall) {
  Vec2 r = v;
  switch (wall) {
    case Wall::Left:
    case Wall::Right:
      r.x = -r.x;
      break;
    case Wall::Bottom:
    case Wall::Top:
      r.y = -r.y;
      break;
    case Wall::Corner:
      r = -r;
      break;
  }
  return normalized(r);
}

TrajectoryLog simulate(const ParticleState& initial, std::int64_t n_collisions, double horizon) {
  if (n_collisions < 0) throw std::invalid_argument("n_collisions must be >= 0");
  if (inside_obstacle(initial.position)) {
    throw std::invalid_argument("initial position lies inside an obstacle");
  }
  check_velocity(initial.velocity);

  TrajectoryLog log;
  log.initial = initial;
  log.events.reserve(static_cast<std::size_t>(n_collisions));
  log.post_collision_states.reserve(static_cast<std::size_t>(n_collisions));

  ParticleState state = initial;
  for (std::int64_t k = 1; k <= n_collisions; ++k) {
    auto ev = next_collision(state, horizon);
    if (!ev) {
      log.truncation_reason = "no obstacle within horizon after " + std::to_string(k - 1) +
                              " collisions (corridor direction)";
      break;
    }
    ev->index = k;
    state = {ev->point, reflect(state.velocity, ev->wall), ev->time};
    log.events.push_back(*ev);
    log.post_collision_states.push_back(state);
  }
  return log;
}

ParticleState advance(const ParticleState& s, double duration) {
  if (duration < 0.0) throw std::invalid_argument("duration must be >= 0");
  const double end = s.elapsed_time + duration;
  ParticleState state = s;
  for (;;) {
    const double remaining = end - state.elapsed_time;
    if (remaining <= 0.0) return state;
    auto ev = next_collision(state, remaining);
    if (!ev) {
      return {state.position + state.velocity * remaining, state.velocity, end};
    }
    state = {ev->point, reflect(state.velocity, ev->wall), ev->time};
  }
}

bool segment_enters_obstacle(Vec2 a, Vec2 b, double margin) {
  const Vec2 d = b - a;
  const auto odd_range = [](double lo, double hi) {
    // Odd centers whose unit square can overlap [lo, hi].
    auto first = static_cast<std::int64_t>(std::floor((lo - 0.5 - 1.0) / 2.0)) * 2 + 1;
    const auto last = static_cast<std::int64_t>(std::ceil(hi + 0.5));
    return std::pair{first, last};
  };
  const auto [x0, x1] = odd_range(std::min(a.x, b.x), std::max(a.x, b.x));
  const auto [y0, y1] = odd_range(std::min(a.y, b.y), std::max(a.y, b.y));
  const double half = 0.5 - margin;
  for (std::int64_t cx = x0; cx <= x1; cx += 2) {
    for (std::int64_t cy = y0; cy <= y1; cy += 2) {
      // Parametric overlap of the segment with the open shrunk square.
      double lo = 0.0;
      double hi = 1.0;
      auto clip = [&](double p, double v, double c) {
        if (v == 0.0) return std::abs(p - c) < half;
        double t0 = (c - half - p) / v;
        double t1 = (c + half - p) / v;
        if (t0 > t1) std::swap(t0, t1);
        lo = std::max(lo, t0);
        hi = std::min(hi, t1);
        return lo < hi;
      };
      if (clip(a.x, d.x, static_cast<double>(cx)) && clip(a.y, d.y, static_cast<double>(cy))) {
        return true;
      }
    }
  }
  return false;
}

std::vector<double> distance_series(const TrajectoryLog& log) {
  std::vector<double> d;
  d.reserve(log.events.size());
  for (const auto& e : log.events) d.push_back(e.point.norm());
  return d;
}

}  // namespace windtree
