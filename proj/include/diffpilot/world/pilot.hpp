#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "diffpilot/world/world.hpp"

namespace diffpilot::world {

enum class PilotKind { expert, laggy, noisy, zero, random };

inline std::string_view to_string(PilotKind k) {
  switch (k) {
    case PilotKind::expert: return "expert";
    case PilotKind::laggy: return "laggy";
    case PilotKind::noisy: return "noisy";
    case PilotKind::zero: return "zero";
    case PilotKind::random: return "random";
  }
  return "?";
}

inline PilotKind pilot_kind_from_string(std::string_view s) {
  if (s == "expert") return PilotKind::expert;
  if (s == "laggy") return PilotKind::laggy;
  if (s == "noisy") return PilotKind::noisy;
  if (s == "zero") return PilotKind::zero;
  if (s == "random") return PilotKind::random;
  throw ConfigError("unknown pilot kind: " + std::string(s));
}

struct PilotConfig {
  PilotKind kind = PilotKind::expert;
  double p_laggy = 0.85;
  double p_noisy = 0.6;
  double kp = 1.2;
  double kd = 0.0;

  void validate() const {
    if (!(p_laggy >= 0.0 && p_laggy <= 1.0)) throw ConfigError("p_laggy must lie in [0, 1]");
    if (!(p_noisy >= 0.0 && p_noisy <= 1.0)) throw ConfigError("p_noisy must lie in [0, 1]");
    if (!std::isfinite(kp) || !std::isfinite(kd)) throw ConfigError("PD gains must be finite");
  }
};

/// PD law toward the state's goal, clamped to the action box.
inline Vec expert_action(const PilotConfig& c, const WorldParams& p, const WorldState& s) {
  const Point f = c.kp * (s.goal - s.pos) - c.kd * s.vel;
  return Vec(f.cwiseMax(-p.action_limit).cwiseMin(p.action_limit));
}

inline Vec uniform_action(const WorldParams& p, nn::Rng& rng) {
  Vec a(2);
  a[0] = rng.uniform(-p.action_limit, p.action_limit);
  a[1] = rng.uniform(-p.action_limit, p.action_limit);
  return a;
}

/// One surrogate-pilot action. Laggy and noisy pilots draw their Bernoulli
/// first on every call, so the draw count per step is fixed by kind.
/// A laggy pilot with no previous action behaves like the expert.
inline Vec pilot_act(const PilotConfig& c, const WorldParams& p, const WorldState& s,
                     const std::optional<Vec>& prev, nn::Rng& rng) {
  c.validate();
  switch (c.kind) {
    case PilotKind::expert:
      return expert_action(c, p, s);
    case PilotKind::laggy: {
      const bool repeat = rng.uniform() < c.p_laggy;
      return repeat && prev ? *prev : expert_action(c, p, s);
    }
    case PilotKind::noisy:
      return rng.uniform() < c.p_noisy ? uniform_action(p, rng) : expert_action(c, p, s);
    case PilotKind::zero:
      return Vec::Zero(2);
    case PilotKind::random:
      return uniform_action(p, rng);
  }
  throw ContractViolation("pilot_act: unknown pilot kind");
}

}  // namespace diffpilot::world
