#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "resample/errors.hpp"
#include "resample/rng.hpp"

namespace resample {

using Vec2 = std::array<double, 2>;

inline double dist(const Vec2& a, const Vec2& b) {
  return std::hypot(a[0] - b[0], a[1] - b[1]);
}

/// Axis-aligned box, used for start regions.
struct Box2 {
  Vec2 lo{-0.55, -0.85};
  Vec2 hi{0.55, -0.55};
};

/// A 2D reach task in the arena [-1,1]^2: the agent starts in a box below a
/// horizontal wall and must pass through a gap in the wall to reach a goal
/// disc on the other side. Collisions stop motion at the wall instead of
/// ending the episode, so wall-adjacent states are recoverable.
struct EnvSpec {
  std::string id = "bottleneck";
  double gap_center = 0.0;     // x position of the gap, in [-1,1]
  double gap_width = 0.2;
  Vec2 goal{0.35, 0.7};
  Box2 start_region{};
  int horizon = 80;
  double success_radius = 0.06;
  double wall_y = 0.0;
  double action_scale = 0.05;  // max per-step displacement per axis
  double perturbation = 0.0;   // observation noise std; eval protocol uses 0.03

  double gap_left() const { return gap_center - 0.5 * gap_width; }
  double gap_right() const { return gap_center + 0.5 * gap_width; }

  void validate() const {
    if (gap_width <= 0.0) throw InvalidArgumentError("gap_width must be positive");
    if (gap_left() < -1.0 || gap_right() > 1.0)
      throw InvalidArgumentError("gap does not fit inside the arena");
    if (horizon < 1) throw InvalidArgumentError("horizon must be >= 1");
    if (success_radius <= 0.0) throw InvalidArgumentError("success_radius must be positive");
    if (action_scale <= 0.0) throw InvalidArgumentError("action_scale must be positive");
    if (std::fabs(wall_y) >= 1.0) throw InvalidArgumentError("wall must be inside the arena");
    for (int d = 0; d < 2; ++d)
      if (start_region.lo[d] > start_region.hi[d] || start_region.lo[d] < -1.0 ||
          start_region.hi[d] > 1.0)
        throw InvalidArgumentError("start_region must be a box inside the arena");
    // Start box and goal must sit on opposite sides of the wall so the
    // bottleneck is actually on the path.
    const double goal_side = goal[1] - wall_y;
    if (goal_side == 0.0) throw InvalidArgumentError("goal may not lie on the wall");
    if ((start_region.lo[1] - wall_y) * goal_side > 0.0 ||
        (start_region.hi[1] - wall_y) * goal_side > 0.0)
      throw InvalidArgumentError("start_region must lie across the wall from the goal");
  }
};

struct EnvState {
  Vec2 agent{0.0, 0.0};
  int t = 0;
  bool done = false;
  bool succeeded = false;
};

inline EnvState reset(const EnvSpec& spec, Rng& rng) {
  spec.validate();
  EnvState s;
  s.agent[0] = rng.uniform(spec.start_region.lo[0], spec.start_region.hi[0]);
  s.agent[1] = rng.uniform(spec.start_region.lo[1], spec.start_region.hi[1]);
  return s;
}

struct StepResult {
  EnvState state;
  double reward = 0.0;
  bool done = false;
};

namespace detail {

// Clip the motion segment from -> to at the wall unless it crosses inside
// the gap. Returns the final position.
inline Vec2 wall_clip(const EnvSpec& spec, const Vec2& from, const Vec2& to) {
  const double y0 = from[1] - spec.wall_y;
  const double y1 = to[1] - spec.wall_y;
  if (y0 == 0.0) return to;  // never happens: positions stay off the wall
  if (y0 * y1 > 0.0) return to;                      // same side, no crossing
  const double t = y0 / (y0 - y1);                   // in [0,1]
  const double xc = from[0] + t * (to[0] - from[0]); // crossing x
  if (xc > spec.gap_left() && xc < spec.gap_right()) return to;
  // Blocked: stop at the wall, a hair back on the starting side.
  const double side = y0 > 0.0 ? 1.0 : -1.0;
  return {xc, spec.wall_y + side * 1e-9};
}

}  // namespace detail

/// Advance one step. Actions live in the [-1,1]^2 box (inf-norm clipped)
/// and are scaled by action_scale. Reward is 1 exactly once, on first
/// entering the goal disc; the episode ends on success or at the horizon.
inline StepResult step(const EnvSpec& spec, const EnvState& state, const Vec2& action) {
  if (state.done) throw UsageError("step on a finished episode");
  Vec2 a{clamp(action[0], -1.0, 1.0), clamp(action[1], -1.0, 1.0)};
  Vec2 desired{clamp(state.agent[0] + a[0] * spec.action_scale, -1.0, 1.0),
               clamp(state.agent[1] + a[1] * spec.action_scale, -1.0, 1.0)};
  StepResult r;
  r.state = state;
  r.state.agent = detail::wall_clip(spec, state.agent, desired);
  r.state.t = state.t + 1;
  if (dist(r.state.agent, spec.goal) <= spec.success_radius) {
    r.reward = 1.0;
    r.state.succeeded = true;
    r.state.done = true;
  } else if (r.state.t >= spec.horizon) {
    r.state.done = true;
  }
  r.done = r.state.done;
  return r;
}

/// Observation fed to policies: the agent position plus optional Gaussian
/// noise (the evaluation-time perturbation knob). Dynamics stay clean; the
/// noise corrupts what the policy sees, so action errors compound into
/// genuinely off-distribution states.
inline std::vector<double> observe(const EnvSpec& spec, const EnvState& state, Rng& rng) {
  std::vector<double> obs{state.agent[0], state.agent[1]};
  if (spec.perturbation > 0.0)
    for (auto& v : obs) v += rng.normal(0.0, spec.perturbation);
  return obs;
}

/// Waypoint expert: approach a staging point under the gap, cross, then
/// head to the goal. noise_std is the per-axis displacement noise in arena
/// units (default 0.1 * action_scale).
inline Vec2 scripted_expert(const EnvSpec& spec, const EnvState& state, double noise_std,
                            Rng& rng) {
  const double side = spec.goal[1] > spec.wall_y ? 1.0 : -1.0;
  const bool past = (state.agent[1] - spec.wall_y) * side > 0.0;
  Vec2 target;
  if (past) {
    target = spec.goal;
  } else if (std::fabs(state.agent[0] - spec.gap_center) > 0.25 * spec.gap_width) {
    target = {spec.gap_center, spec.wall_y - side * 3.0 * spec.action_scale};
  } else {
    target = {spec.gap_center, spec.wall_y + side * 3.0 * spec.action_scale};
  }
  Vec2 dir{target[0] - state.agent[0], target[1] - state.agent[1]};
  const double n = std::hypot(dir[0], dir[1]);
  Vec2 act;
  if (n > spec.action_scale) {
    act = {dir[0] / n, dir[1] / n};
  } else {
    act = {dir[0] / spec.action_scale, dir[1] / spec.action_scale};
  }
  if (noise_std > 0.0) {
    act[0] += rng.normal(0.0, noise_std / spec.action_scale);
    act[1] += rng.normal(0.0, noise_std / spec.action_scale);
  }
  return {clamp(act[0], -1.0, 1.0), clamp(act[1], -1.0, 1.0)};
}

inline double default_expert_noise(const EnvSpec& spec) { return 0.1 * spec.action_scale; }

/// A family of tasks sharing dynamics and differing only in gap position
/// and goal, analogous to tasks within one benchmark category.
inline std::vector<EnvSpec> make_task_family(std::uint64_t category_seed, int count = 4) {
  if (count < 1) throw InvalidArgumentError("family size must be >= 1");
  Rng rng(derive_seed(category_seed, "task-family"));
  std::vector<EnvSpec> family;
  family.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    EnvSpec spec;
    const double slot = count == 1 ? 0.5 : static_cast<double>(i) / (count - 1);
    spec.gap_center = -0.45 + 0.9 * slot + rng.uniform(-0.04, 0.04);
    spec.goal = {clamp(spec.gap_center + rng.uniform(-0.25, 0.25), -0.7, 0.7), 0.7};
    spec.id = "bottleneck-f" + std::to_string(category_seed) + "-t" + std::to_string(i);
    spec.validate();
    family.push_back(spec);
  }
  return family;
}

}  // namespace resample
