#pragma once

#include <cmath>
#include <filesystem>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "diffpilot/copilot/copilot.hpp"
#include "diffpilot/diffusion/checkpoint.hpp"
#include "diffpilot/world/pilot.hpp"
#include "diffpilot/world/trajectory.hpp"

namespace diffpilot::eval {

using diffusion::Model;
using world::PilotKind;
using world::TrajectoryRecord;

inline const std::vector<double>& default_gammas() {
  static const std::vector<double> g = {0.0, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0};
  return g;
}

struct SweepConfig {
  std::vector<double> gammas = default_gammas();
  std::vector<PilotKind> pilots = {PilotKind::noisy, PilotKind::laggy};
  std::size_t episodes = 200;
  std::uint64_t base_seed = 0;
  world::GoalSide goal_side = world::GoalSide::left;
  world::WorldParams world;
  world::PilotConfig pilot;  // probabilities and gains; kind set per cell
};

struct CellResult {
  PilotKind pilot = PilotKind::noisy;
  double gamma = 0.0;
  int k_sw = 0;
  std::size_t episodes = 0;
  std::size_t n_correct = 0, n_wrong = 0, n_timeout = 0;
  std::size_t n_left = 0;  // successes at the left goal, either kind
  double success_correct = 0.0, success_wrong = 0.0, timeout = 0.0;
  double mean_steps_to_success = std::numeric_limits<double>::quiet_NaN();  // NaN when no success
  std::vector<std::uint64_t> seeds;

  double left_share() const {
    const auto s = n_correct + n_wrong;
    return s ? static_cast<double>(n_left) / static_cast<double>(s) : std::numeric_limits<double>::quiet_NaN();
  }
};

struct SweepResult {
  SweepConfig config;
  std::vector<CellResult> cells;  // pilot-major, gamma-minor

  const CellResult& cell(PilotKind p, double gamma) const {
    for (const auto& c : cells)
      if (c.pilot == p && c.gamma == gamma) return c;
    throw ContractViolation("sweep result has no such cell");
  }
};

/// Generators of one episode: world, pilot and copilot streams.
struct EpisodeStreams {
  nn::Rng world, pilot, copilot;

  explicit EpisodeStreams(std::uint64_t seed) {
    const nn::Rng root(seed);
    world = root.derive(0);
    pilot = root.derive(1);
    copilot = root.derive(2);
  }
};

/// Episode seed. The same seeds are reused in every cell so cells differ
/// only by pilot kind and gamma.
inline std::uint64_t episode_seed(std::uint64_t base_seed, std::size_t episode) { return base_seed + episode; }

/// Runs `n` episodes of one (pilot, gamma) cell in lockstep, batching the
/// copilot over live episodes. Per-episode results do not depend on the
/// batching. With a null `model` (or gamma = 0) the pilot drives directly.
inline CellResult run_cell(const Model* model, const SweepConfig& cfg, PilotKind kind, double gamma,
                           std::vector<std::vector<TrajectoryRecord>>* trajectories = nullptr) {
  if (cfg.episodes < 1) throw ConfigError("sweep: episodes per cell must be >= 1");
  const int K = model ? model->schedule.K() : 1;
  const auto ccfg = copilot::CopilotConfig::make(gamma, K);
  const bool assist = model && ccfg.k_sw() > 0;
  if (!model && gamma != 0.0) throw ConfigError("sweep: gamma > 0 requires a model");
  world::PilotConfig pc = cfg.pilot;
  pc.kind = kind;
  const auto box = cfg.world.action_box();

  const std::size_t n = cfg.episodes;
  CellResult res;
  res.pilot = kind;
  res.gamma = gamma;
  res.k_sw = model ? ccfg.k_sw() : 0;
  res.episodes = n;

  std::vector<EpisodeStreams> streams;
  std::vector<world::WorldState> states;
  std::vector<std::optional<nn::Vec>> prev(n);
  streams.reserve(n);
  for (std::size_t e = 0; e < n; ++e) {
    const auto seed = episode_seed(cfg.base_seed, e);
    res.seeds.push_back(seed);
    streams.emplace_back(seed);
    states.push_back(world::reset(cfg.world, cfg.goal_side, streams.back().world));
  }
  if (trajectories) trajectories->assign(n, {});

  std::vector<std::size_t> live(n);
  for (std::size_t e = 0; e < n; ++e) live[e] = e;
  double steps_sum = 0.0;
  while (!live.empty()) {
    const auto m = static_cast<Eigen::Index>(live.size());
    nn::Tensor2 obs(m, 4), pilot(m, 2);
    for (Eigen::Index r = 0; r < m; ++r) {
      const std::size_t e = live[static_cast<std::size_t>(r)];
      const nn::Vec a = world::pilot_act(pc, cfg.world, states[e], prev[e], streams[e].pilot);
      prev[e] = a;
      pilot.row(r) = a.transpose();
      obs.row(r) = world::observe(states[e], true).transpose();
    }
    nn::Tensor2 shared = pilot;
    if (assist) {
      std::vector<nn::Rng> rngs;
      rngs.reserve(live.size());
      for (std::size_t e : live) rngs.push_back(streams[e].copilot);
      shared = copilot::copilot_act_batch(model->denoiser, model->schedule, obs, pilot, ccfg, rngs, box);
      for (std::size_t r = 0; r < live.size(); ++r) streams[live[r]].copilot = rngs[r];
    }
    std::vector<std::size_t> still;
    for (Eigen::Index r = 0; r < m; ++r) {
      const std::size_t e = live[static_cast<std::size_t>(r)];
      const nn::Vec a = shared.row(r).transpose();
      const world::WorldState before = states[e];
      states[e] = world::step(cfg.world, before, a);
      if (trajectories)
        (*trajectories)[e].push_back({before.step, world::observe(before, false), a, states[e].last_event, gamma,
                                      nn::Vec(pilot.row(r).transpose())});
      const auto ev = states[e].last_event;
      if (ev == world::StepEvent::Running) {
        still.push_back(e);
        continue;
      }
      if (ev == world::StepEvent::Timeout) {
        ++res.n_timeout;
      } else {
        (world::reached_own_goal(cfg.world, states[e]) ? res.n_correct : res.n_wrong) += 1;
        if (ev == world::StepEvent::SuccessLeft) ++res.n_left;
        steps_sum += states[e].step;
      }
    }
    live.swap(still);
  }
  const double dn = static_cast<double>(n);
  res.success_correct = static_cast<double>(res.n_correct) / dn;
  res.success_wrong = static_cast<double>(res.n_wrong) / dn;
  res.timeout = static_cast<double>(res.n_timeout) / dn;
  if (res.n_correct + res.n_wrong > 0) res.mean_steps_to_success = steps_sum / static_cast<double>(res.n_correct + res.n_wrong);
  return res;
}

inline SweepResult run_sweep(const Model& model, const SweepConfig& cfg) {
  SweepResult out{cfg, {}};
  for (PilotKind p : cfg.pilots)
    for (double g : cfg.gammas) out.cells.push_back(run_cell(&model, cfg, p, g));
  return out;
}

/// The same episodes driven by the pilot alone.
inline CellResult run_unassisted(const SweepConfig& cfg, PilotKind kind,
                                 std::vector<std::vector<TrajectoryRecord>>* trajectories = nullptr) {
  return run_cell(nullptr, cfg, kind, 0.0, trajectories);
}

inline std::string sweep_csv(const SweepResult& r) {
  std::ostringstream os;
  os << "pilot,gamma,episodes,success_correct,success_wrong,timeout,mean_steps_to_success\n";
  for (const auto& c : r.cells)
    os << world::to_string(c.pilot) << ',' << format_real(c.gamma) << ',' << c.episodes << ','
       << format_real(c.success_correct) << ',' << format_real(c.success_wrong) << ',' << format_real(c.timeout) << ','
       << (std::isnan(c.mean_steps_to_success) ? std::string() : format_real(c.mean_steps_to_success)) << '\n';
  return os.str();
}

inline json sweep_json(const SweepResult& r) {
  json cells = json::array();
  for (const auto& c : r.cells) {
    const double ls = c.left_share();
    cells.push_back({
        {"pilot", std::string(world::to_string(c.pilot))},
        {"gamma", c.gamma},
        {"k_sw", c.k_sw},
        {"episodes", c.episodes},
        {"success_correct", c.success_correct},
        {"success_wrong", c.success_wrong},
        {"timeout", c.timeout},
        {"mean_steps_to_success", std::isnan(c.mean_steps_to_success) ? json(nullptr) : json(c.mean_steps_to_success)},
        {"left_share", std::isnan(ls) ? json(nullptr) : json(ls)},
        {"seeds", c.seeds},
    });
  }
  return {
      {"base_seed", r.config.base_seed},
      {"episodes", r.config.episodes},
      {"goal_side", std::string(world::to_string(r.config.goal_side))},
      {"p_laggy", r.config.pilot.p_laggy},
      {"p_noisy", r.config.pilot.p_noisy},
      {"cells", cells},
  };
}

/// Writes DIR/sweep.csv and DIR/sweep.json.
inline void emit_report(const SweepResult& r, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  write_text_file(dir / "sweep.csv", sweep_csv(r));
  write_text_file(dir / "sweep.json", to_canonical(sweep_json(r)) + "\n");
}

}  // namespace diffpilot::eval
