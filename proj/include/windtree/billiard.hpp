#pragma once

// Event-driven billiard in the periodic wind-tree: unit square obstacles
// centered at every point of the plane whose coordinates are both odd.
// Obstacle (cx, cy) occupies [cx - 0.5, cx + 0.5] x [cy - 0.5, cy + 0.5];
// neighbouring obstacles are separated by gaps of width 1.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "windtree/vec2.hpp"

namespace windtree {

/// Points within this distance of a wall are considered on it. Also the
/// minimum path length before a departing particle may hit anything.
inline constexpr double kWallTolerance = 1e-9;
inline constexpr double kDefaultHorizon = 1e6;

enum class Wall { Left, Right, Bottom, Top, Corner };

std::string_view to_string(Wall wall);
std::optional<Wall> wall_from_string(std::string_view name);

/// Center of an obstacle, i.e. an odd-integer lattice point. Also names the
/// period-2 cell [cx - 1, cx + 1) x [cy - 1, cy + 1) that contains it.
struct LatticePoint {
  std::int64_t x = 1;
  std::int64_t y = 1;
  constexpr bool operator==(const LatticePoint&) const = default;
};

struct ParticleState {
  Vec2 position;
  Vec2 velocity;
  double elapsed_time = 0.0;
};

struct CollisionEvent {
  Vec2 point;
  double time = 0.0;  // cumulative path length at impact
  Wall wall = Wall::Left;
  LatticePoint obstacle_center;
  std::int64_t index = 0;  // 1-based collision ordinal
};

struct TrajectoryLog {
  ParticleState initial;
  std::vector<CollisionEvent> events;
  std::vector<ParticleState> post_collision_states;  // aligned with events
  // Set when the run stopped before the requested number of collisions.
  std::optional<std::string> truncation_reason;

  bool truncated() const { return truncation_reason.has_value(); }
  const ParticleState& final_state() const {
    return post_collision_states.empty() ? initial : post_collision_states.back();
  }
  std::size_t corner_count() const;
};

/// Period-2 cell containing p, named by its obstacle center. On each axis the
/// nearest odd integer is taken; at even coordinates (cell boundaries) the tie
/// is broken away from zero, with 0 mapping to +1.
LatticePoint locate_cell(Vec2 p);

/// True if p lies strictly inside some obstacle, by more than `margin`.
bool inside_obstacle(Vec2 p, double margin = 0.0);

/// Unit-speed state at p travelling with direction (1, slope).
ParticleState state_from_slope(double slope, Vec2 p = {});
/// Unit-speed state at p travelling at angle theta (radians) from the x-axis.
ParticleState state_from_angle(double theta, Vec2 p = {});

/// First obstacle hit along the ray from s within path length `horizon`.
/// Returns nullopt when nothing is hit, which happens for corridor
/// directions (axis-parallel rays inside a gap) or a short horizon.
/// Throws DegenerateVelocity when |velocity| differs from 1 by more than 1e-6,
/// and std::invalid_argument when s starts inside an obstacle or on a wall
/// heading into it.
std::optional<CollisionEvent> next_collision(const ParticleState& s,
                                             double horizon = kDefaultHorizon);

/// Specular reflection off the given wall; a corner retroreflects.
Vec2 reflect(Vec2 v, Wall wall);

/// Runs until n_collisions events are logged or a ray escapes the horizon,
/// in which case the log is returned truncated with the reason recorded.
TrajectoryLog simulate(const ParticleState& initial, std::int64_t n_collisions,
                       double horizon = kDefaultHorizon);

/// State reached after travelling `duration` further along the billiard flow
/// (linear motion between reflections).
ParticleState advance(const ParticleState& s, double duration);

/// True if the open segment a-b passes through the interior of an obstacle
/// shrunk by `margin` on every side.
bool segment_enters_obstacle(Vec2 a, Vec2 b, double margin = kWallTolerance);

/// d(k): distance of the k-th collision point from the origin, k = 1..n.
std::vector<double> distance_series(const TrajectoryLog& log);

}  // namespace windtree
