#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "diffpilot/copilot/copilot.hpp"
#include "diffpilot/diffusion/checkpoint.hpp"
#include "diffpilot/world/pilot.hpp"
#include "diffpilot/world/trajectory.hpp"

namespace diffpilot::bridge {

using diffusion::Model;

inline constexpr const char* kProtocolVersion = "1";

struct SessionConfig {
  double default_gamma = 0.4;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> transcript_dir;
  world::WorldParams world;
};

using LogFn = std::function<void(const std::string& level, const std::string& msg)>;

/// One client's episode loop. Each text frame in yields at most one text
/// frame out; SetGamma is the only message that is not answered (unless it
/// is rejected).
class Session {
 public:
  Session(std::shared_ptr<const Model> model, SessionConfig cfg, std::string id = "0", LogFn log = {})
      : model_(std::move(model)), cfg_(std::move(cfg)), id_(std::move(id)), log_(std::move(log)),
        gamma_(cfg_.default_gamma), root_(cfg_.seed) {
    if (!model_) throw ContractViolation("Session: model required");
    copilot::CopilotConfig::make(gamma_, model_->schedule.K());
    if (model_->denoiser.obs_dim != 4 || model_->denoiser.action_dim != 2)
      throw ConfigError("Session: checkpoint must map 4-dim observations to 2-dim actions");
  }

  std::optional<std::string> handle(const std::string& text) {
    json msg;
    try {
      msg = json::parse(text);
    } catch (const json::exception& e) {
      return error("parse", e.what());
    }
    if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string())
      return error("bad_request", "message must be an object with a string \"type\"");
    const std::string type = msg["type"].get<std::string>();
    try {
      if (type == "Hello") return hello(msg);
      if (type == "Reset") return reset(msg);
      if (type == "Step") return step(msg);
      if (type == "SetGamma") return set_gamma(msg);
    } catch (const json::exception& e) {
      return error("bad_request", e.what());
    }
    return error("unknown_type", "unknown message type: " + type);
  }

  double gamma() const { return gamma_; }
  const std::optional<world::WorldState>& state() const { return state_; }
  const std::vector<world::TrajectoryRecord>& transcript() const { return transcript_; }
  std::size_t episodes_started() const { return episode_; }
  const std::vector<std::filesystem::path>& transcripts_written() const { return written_; }

 private:
  static json vec2(const Eigen::Vector2d& v) { return json::array({v.x(), v.y()}); }
  static json vec2(const nn::Vec& v) { return json::array({v[0], v[1]}); }

  std::string error(const std::string& code, const std::string& message) const {
    return json{{"type", "Error"}, {"code", code}, {"message", message}}.dump();
  }

  std::optional<std::string> hello(const json& msg) {
    if (msg.contains("seed")) {
      if (!msg["seed"].is_number_unsigned()) return error("bad_request", "seed must be a nonnegative integer");
      root_ = nn::Rng(msg["seed"].get<std::uint64_t>());
      episode_ = 0;
    }
    const auto& w = cfg_.world;
    json config = {
        {"protocol", kProtocolVersion},
        {"K", model_->schedule.K()},
        {"gamma", gamma_},
        {"k_sw", copilot::switch_step(gamma_, model_->schedule.K())},
        {"sigma_mode", std::string(diffusion::to_string(model_->schedule.sigma_mode()))},
        {"seed", root_.seed()},
        {"dt", w.dt},
        {"timeout", w.timeout},
    };
    json arena = {
        {"bounds", json::array({json::array({0.0, 0.0}), json::array({1.0, 1.0})})},
        {"goals", json::array({vec2(w.goals[0]), vec2(w.goals[1])})},
        {"goal_radius", w.goal_radius},
        {"action_box", json::array({json::array({-w.action_limit, -w.action_limit}),
                                    json::array({w.action_limit, w.action_limit})})},
    };
    return json{{"type", "Ready"}, {"config", config}, {"arena", arena}}.dump();
  }

  std::optional<std::string> reset(const json& msg) {
    world::GoalSide side = world::GoalSide::random;
    if (msg.contains("goal_side")) {
      try {
        side = world::goal_side_from_string(msg["goal_side"].get<std::string>());
      } catch (const ConfigError& e) {
        return error("bad_request", e.what());
      }
    }
    // Episode i uses sub-streams 2i (world) and 2i+1 (copilot).
    world_rng_ = root_.derive(2 * episode_);
    copilot_rng_ = root_.derive(2 * episode_ + 1);
    ++episode_;
    state_ = world::reset(cfg_.world, side, world_rng_);
    transcript_.clear();
    return state_json(std::nullopt, std::nullopt);
  }

  std::optional<std::string> set_gamma(const json& msg) {
    if (!msg.contains("gamma") || !msg["gamma"].is_number()) return error("bad_gamma", "gamma must be a number in [0, 1]");
    const double g = msg["gamma"].get<double>();
    if (!(g >= 0.0 && g <= 1.0)) return error("bad_gamma", "gamma must lie in [0, 1]");
    gamma_ = g;
    return std::nullopt;
  }

  std::optional<std::string> step(const json& msg) {
    if (!state_) return error("no_episode", "send Reset before Step");
    if (state_->terminal()) return error("terminal", "episode ended; send Reset");
    if (!msg.contains("action") || !msg["action"].is_array() || msg["action"].size() != 2 ||
        !msg["action"][0].is_number() || !msg["action"][1].is_number())
      return error("bad_request", "action must be an array of 2 numbers");
    nn::Vec a(2);
    a << msg["action"][0].get<double>(), msg["action"][1].get<double>();
    if (!a.allFinite()) return error("bad_request", "action must be finite");
    if (msg.contains("gamma")) {
      if (!msg["gamma"].is_number()) return error("bad_gamma", "gamma must be a number in [0, 1]");
      const double g = msg["gamma"].get<double>();
      if (!(g >= 0.0 && g <= 1.0)) return error("bad_gamma", "gamma must lie in [0, 1]");
      gamma_ = g;
    }
    const auto box = cfg_.world.action_box();
    const nn::Vec pilot = box.clamp(a);
    const auto ccfg = copilot::CopilotConfig::make(gamma_, model_->schedule.K());
    const nn::Vec shared = copilot::copilot_act(model_->denoiser, model_->schedule, world::observe(*state_, true), pilot,
                                                ccfg, copilot_rng_, box);
    const world::WorldState before = *state_;
    state_ = world::step(cfg_.world, before, shared);
    transcript_.push_back({before.step, world::observe(before, false), shared, state_->last_event, gamma_, pilot});
    if (state_->terminal()) persist_transcript();
    return state_json(pilot, shared);
  }

  std::string state_json(const std::optional<nn::Vec>& pilot, const std::optional<nn::Vec>& shared) const {
    const auto& s = *state_;
    return json{
        {"type", "State"},
        {"pos", vec2(s.pos)},
        {"vel", vec2(s.vel)},
        {"goal", vec2(s.goal)},
        {"step", s.step},
        {"pilot_action", pilot ? vec2(*pilot) : json(nullptr)},
        {"shared_action", shared ? vec2(*shared) : json(nullptr)},
        {"event", std::string(world::to_string(s.last_event))},
        {"gamma", gamma_},
    }
        .dump();
  }

  void persist_transcript() {
    if (!cfg_.transcript_dir) return;
    const auto path = *cfg_.transcript_dir / ("session-" + id_ + "-episode-" + std::to_string(episode_) + ".ndjson");
    try {
      std::filesystem::create_directories(*cfg_.transcript_dir);
      std::ostringstream os;
      world::write_ndjson(os, transcript_);
      write_text_file(path, os.str());
      written_.push_back(path);
    } catch (const std::exception& e) {
      if (log_) log_("error", "transcript " + path.string() + ": " + e.what());
    }
  }

  std::shared_ptr<const Model> model_;
  SessionConfig cfg_;
  std::string id_;
  LogFn log_;
  double gamma_;
  nn::Rng root_;
  nn::Rng world_rng_, copilot_rng_;
  std::size_t episode_ = 0;
  std::optional<world::WorldState> state_;
  std::vector<world::TrajectoryRecord> transcript_;
  std::vector<std::filesystem::path> written_;
};

}  // namespace diffpilot::bridge
