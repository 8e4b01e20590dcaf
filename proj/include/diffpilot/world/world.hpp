#pragma once

#include <array>
#include <cmath>
#include <string>
#include <string_view>

#include "diffpilot/copilot/copilot.hpp"

namespace diffpilot::world {

using Point = Eigen::Vector2d;
using nn::Vec;

enum class GoalSide { left, right, random };

inline std::string_view to_string(GoalSide g) {
  switch (g) {
    case GoalSide::left: return "left";
    case GoalSide::right: return "right";
    case GoalSide::random: return "random";
  }
  return "?";
}

inline GoalSide goal_side_from_string(std::string_view s) {
  if (s == "left") return GoalSide::left;
  if (s == "right") return GoalSide::right;
  if (s == "random") return GoalSide::random;
  throw ConfigError("unknown goal side: " + std::string(s));
}

enum class StepEvent { Running, SuccessLeft, SuccessRight, Timeout };

inline std::string_view to_string(StepEvent e) {
  switch (e) {
    case StepEvent::Running: return "Running";
    case StepEvent::SuccessLeft: return "SuccessLeft";
    case StepEvent::SuccessRight: return "SuccessRight";
    case StepEvent::Timeout: return "Timeout";
  }
  return "?";
}

inline StepEvent step_event_from_string(std::string_view s) {
  if (s == "Running") return StepEvent::Running;
  if (s == "SuccessLeft") return StepEvent::SuccessLeft;
  if (s == "SuccessRight") return StepEvent::SuccessRight;
  if (s == "Timeout") return StepEvent::Timeout;
  throw ParseError("unknown step event: " + std::string(s));
}

inline bool is_terminal(StepEvent e) { return e != StepEvent::Running; }
inline bool is_success(StepEvent e) { return e == StepEvent::SuccessLeft || e == StepEvent::SuccessRight; }

struct WorldParams {
  double dt = 0.05;
  double v_max = 0.5;
  double drag = 4.0;
  double goal_radius = 0.07;
  int timeout = 300;
  Point start = {0.5, 0.85};
  double start_jitter = 0.1;
  std::array<Point, 2> goals = {Point(0.15, 0.15), Point(0.85, 0.15)};
  double action_limit = 1.0;

  copilot::ActionBox action_box() const {
    return {Vec::Constant(2, -action_limit), Vec::Constant(2, action_limit)};
  }
};

struct WorldState {
  Point pos = Point::Zero();
  Point vel = Point::Zero();
  Point goal = Point::Zero();
  int step = 0;
  StepEvent last_event = StepEvent::Running;

  bool terminal() const { return is_terminal(last_event); }
  bool operator==(const WorldState&) const = default;
};

/// Top-centre start with uniform jitter; the goal sits in a lower corner.
/// The side draw (for random) comes before the jitter draws.
inline WorldState reset(const WorldParams& p, GoalSide side, nn::Rng& rng) {
  if (side == GoalSide::random) side = rng.uniform() < 0.5 ? GoalSide::left : GoalSide::right;
  WorldState s;
  s.pos = p.start;
  s.pos.x() += rng.uniform(-p.start_jitter, p.start_jitter);
  s.pos.y() += rng.uniform(-p.start_jitter, p.start_jitter);
  s.pos = s.pos.cwiseMax(0.0).cwiseMin(1.0);
  s.goal = p.goals[side == GoalSide::left ? 0 : 1];
  return s;
}

inline GoalSide goal_side_of(const WorldParams& p, const WorldState& s) {
  return (s.goal - p.goals[0]).squaredNorm() <= (s.goal - p.goals[1]).squaredNorm() ? GoalSide::left : GoalSide::right;
}

/// Semi-implicit Euler with linear drag, then wall clamping:
///   vel <- clamp(vel + (force - drag vel) dt, +-v_max);  pos <- clamp(pos + vel dt, [0,1]^2)
/// Reaching either goal ends the episode; otherwise step == timeout does.
inline WorldState step(const WorldParams& p, const WorldState& s, const Vec& action) {
  if (s.terminal()) throw ContractViolation("step: episode already ended (" + std::string(to_string(s.last_event)) + ")");
  if (action.size() != 2) throw ContractViolation("step: action must have 2 components");
  if (!action.allFinite()) throw NumericError("step: non-finite action");
  const Point f = action.cwiseMax(-p.action_limit).cwiseMin(p.action_limit);
  WorldState n = s;
  n.vel = (s.vel + (f - p.drag * s.vel) * p.dt).cwiseMax(-p.v_max).cwiseMin(p.v_max);
  n.pos = (s.pos + n.vel * p.dt).cwiseMax(0.0).cwiseMin(1.0);
  n.step = s.step + 1;
  const double dl = (n.pos - p.goals[0]).norm(), dr = (n.pos - p.goals[1]).norm();
  if (dl <= p.goal_radius || dr <= p.goal_radius)
    n.last_event = dl <= dr ? StepEvent::SuccessLeft : StepEvent::SuccessRight;
  else if (n.step >= p.timeout)
    n.last_event = StepEvent::Timeout;
  else
    n.last_event = StepEvent::Running;
  return n;
}

/// (pos, vel, goal), or the goal-stripped (pos, vel) prefix.
inline Vec observe(const WorldState& s, bool strip_goal) {
  Vec o(strip_goal ? 4 : 6);
  o.segment(0, 2) = s.pos;
  o.segment(2, 2) = s.vel;
  if (!strip_goal) o.segment(4, 2) = s.goal;
  return o;
}

inline bool reached_own_goal(const WorldParams& p, const WorldState& s) {
  if (!is_success(s.last_event)) return false;
  return (s.last_event == StepEvent::SuccessLeft) == (goal_side_of(p, s) == GoalSide::left);
}

}  // namespace diffpilot::world
