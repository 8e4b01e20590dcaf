// diffpilot: collect demonstrations, train the denoiser, evaluate the copilot.

#include <cstdlib>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "diffpilot/bridge/server.hpp"
#include "diffpilot/copilot/bound.hpp"
#include "diffpilot/data/dataset.hpp"
#include "diffpilot/eval/sweep.hpp"
#include "diffpilot/stats/energy.hpp"
#include "diffpilot/toy/toy2d.hpp"

namespace fs = std::filesystem;
using namespace diffpilot;

namespace {

void setup_logging() {
  const char* env = std::getenv("COPILOT_LOG");
  const std::string level = env ? env : "info";
  spdlog::set_level(spdlog::level::from_str(level));
  spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
}

bridge::LogFn spdlog_sink() {
  return [](const std::string& level, const std::string& msg) { spdlog::log(spdlog::level::from_str(level), msg); };
}

diffusion::ProgressFn train_progress() {
  return [](int step, double loss) { spdlog::info("step {:>6}  running loss {:.5f}", step, loss); };
}

std::string write_csv_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_text_file(path, text);
  return path.string();
}

struct CollectArgs {
  std::size_t episodes = 2000;
  std::uint64_t seed = 0;
  std::string out;
};

void cmd_collect(const CollectArgs& a) {
  data::CollectConfig cfg;
  cfg.episodes = a.episodes;
  spdlog::info("collecting {} expert episodes (seed {})", a.episodes, a.seed);
  const auto ds = data::collect_demos(cfg, a.seed);
  data::save_dataset(ds, a.out);
  spdlog::info("kept {}/{} episodes (left {}, right {}), {} pairs -> {}", ds.meta.episodes_kept, ds.meta.episodes_run,
               ds.meta.left, ds.meta.right, ds.meta.count, a.out);
}

struct TrainArgs {
  std::string demos, out;
  int K = 50;
  diffusion::TrainConfig train;
  std::string hidden = "256,256,256";
  std::string activation = "relu";
  std::string sigma_mode = "beta";
  std::string lr_schedule = "cosine";
  double beta_start = 0.0, beta_end = 0.0;
  std::uint64_t seed = 0;
};

std::vector<std::size_t> parse_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(static_cast<std::size_t>(std::stoul(tok)));
  if (out.empty()) throw ConfigError("empty size list: " + s);
  return out;
}

diffusion::NoiseSchedule schedule_from_args(int K, double start, double end, diffusion::SigmaMode mode) {
  if (start == 0.0 && end == 0.0) return diffusion::make_default_schedule(K, mode);
  return diffusion::make_linear_schedule(K, start, end, mode);
}

void cmd_train(TrainArgs a) {
  const auto ds = data::load_dataset(a.demos);
  a.train.hidden = parse_sizes(a.hidden);
  a.train.activation = nn::activation_from_string(a.activation);
  if (a.lr_schedule != "cosine" && a.lr_schedule != "constant") throw ConfigError("unknown lr schedule: " + a.lr_schedule);
  a.train.cosine_lr = a.lr_schedule == "cosine";
  const auto s = schedule_from_args(a.K, a.beta_start, a.beta_end, diffusion::sigma_mode_from_string(a.sigma_mode));
  spdlog::info("training on {} pairs: K={}, steps={}, batch={}, lr={}", ds.data.size(), a.K, a.train.steps,
               a.train.batch_size, a.train.lr);
  nn::Rng rng(a.seed);
  diffusion::TrainReport rep;
  const auto d = diffusion::train_denoiser(ds.data, s, a.train, rng, &rep, train_progress());
  diffusion::save_checkpoint(d, s, a.out);
  spdlog::info("final running loss {:.5f} -> {}", rep.final_running_loss, a.out);
}

struct SweepArgs {
  std::string ckpt, out;
  std::vector<double> gammas = eval::default_gammas();
  std::vector<std::string> pilots = {"noisy", "laggy"};
  std::size_t episodes = 200;
  std::uint64_t seed = 0;
  std::string goal = "left";
  double p_laggy = 0.85, p_noisy = 0.6;
};

void cmd_sweep(const SweepArgs& a) {
  const auto model = diffusion::load_checkpoint(a.ckpt);
  eval::SweepConfig cfg;
  cfg.gammas = a.gammas;
  cfg.pilots.clear();
  for (const auto& p : a.pilots) cfg.pilots.push_back(world::pilot_kind_from_string(p));
  cfg.episodes = a.episodes;
  cfg.base_seed = a.seed;
  cfg.goal_side = world::goal_side_from_string(a.goal);
  cfg.pilot.p_laggy = a.p_laggy;
  cfg.pilot.p_noisy = a.p_noisy;
  eval::SweepResult res{cfg, {}};
  for (auto p : cfg.pilots)
    for (double g : cfg.gammas) {
      res.cells.push_back(eval::run_cell(&model, cfg, p, g));
      const auto& c = res.cells.back();
      spdlog::info("{:>6} gamma={:.2f}  correct={:.3f} wrong={:.3f} timeout={:.3f}", world::to_string(p), g,
                   c.success_correct, c.success_wrong, c.timeout);
    }
  eval::emit_report(res, a.out);
  spdlog::info("wrote {}/sweep.csv and sweep.json", a.out);
}

struct BoundArgs {
  std::string ckpt, demos, out;
  std::vector<double> deltas = {0.05};
  std::vector<double> gammas = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  Eigen::Index n = 10000;
  Eigen::Index probes = 100000;
  std::uint64_t seed = 0;
};

void cmd_bound(const BoundArgs& a) {
  const auto model = diffusion::load_checkpoint(a.ckpt);
  const auto ds = data::load_dataset(a.demos);
  nn::Rng rng(a.seed);
  nn::Rng probe_rng = rng.derive(0);
  const auto probes = copilot::make_probe_set(model.denoiser, model.schedule, ds.data.obs, ds.data.act, a.probes, probe_rng);
  const double kappa = copilot::estimate_kappa(model.denoiser, model.schedule, probes);
  spdlog::info("kappa = {:.4f} over {} probes", kappa, a.probes);
  const copilot::SourceSampler source = [&ds](Eigen::Index n, nn::Rng& r) {
    copilot::SourceBatch b{nn::Tensor2(n, 4), nn::Tensor2(n, 2)};
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto j = static_cast<Eigen::Index>(r.below(static_cast<std::uint64_t>(ds.data.size())));
      b.obs.row(i) = ds.data.obs.row(j);
      b.act.row(i) = ds.data.act.row(j);
    }
    return b;
  };
  std::ostringstream os;
  bool header = true;
  for (std::size_t i = 0; i < a.deltas.size(); ++i) {
    const copilot::BoundParams bp{2, kappa, a.deltas[i]};
    nn::Rng sweep_rng = rng.derive(1);  // same draws for every delta
    const auto rows = copilot::displacement_sweep(model.denoiser, model.schedule, source, a.gammas, a.n, bp, sweep_rng,
                                                  world::WorldParams{}.action_box());
    std::ostringstream part;
    copilot::write_displacement_csv(part, rows);
    std::string text = part.str();
    if (!header) text = text.substr(text.find('\n') + 1);
    header = false;
    os << text;
    for (const auto& r : rows)
      spdlog::info("delta={} gamma={:.2f} msd={:.4f} bound={:.4f} violations={:.4f}", a.deltas[i], r.gamma,
                   r.mean_sq_disp, r.bound_value, r.violation_rate);
  }
  spdlog::info("wrote {}", write_csv_file(a.out, os.str()));
}

struct ToyArgs {
  std::string out;
  bool train = false;
  std::string ckpt;
  Eigen::Index n = 2000;
  int steps = 20000;
  std::uint64_t seed = 0;
};

void cmd_toy2d(const ToyArgs& a) {
  fs::create_directories(a.out);
  const toy::TriangleSource src;
  const toy::TrimodalTarget tgt;
  nn::Rng rng(a.seed);
  const fs::path ckpt = a.ckpt.empty() ? fs::path(a.out) / "toy_ckpt.json" : fs::path(a.ckpt);
  diffusion::Model model;
  if (a.train) {
    toy::ToyTrainConfig cfg;
    cfg.train.steps = a.steps;
    nn::Rng train_rng = rng.derive(0);
    spdlog::info("training the toy model ({} steps, K={})", cfg.train.steps, cfg.K);
    model.denoiser = toy::train_toy_model(tgt, cfg, train_rng, &model.schedule, nullptr, train_progress());
    diffusion::save_checkpoint(model.denoiser, model.schedule, ckpt);
  } else {
    model = diffusion::load_checkpoint(ckpt);
  }
  const int K = model.schedule.K();
  std::vector<int> ks;
  for (double g : {0.0, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0}) ks.push_back(copilot::switch_step(g, K));
  nn::Rng grid_rng = rng.derive(1);
  const auto cells = toy::run_partial_grid(model.denoiser, model.schedule, src, ks, a.n, grid_rng);
  {
    std::ofstream f(fs::path(a.out) / "grid.csv", std::ios::binary);
    toy::write_grid_csv(f, cells);
    std::ofstream g(fs::path(a.out) / "grid.svg", std::ios::binary);
    toy::write_grid_svg(g, cells, K);
  }
  nn::Rng ref_rng = rng.derive(2);
  const auto ref = toy::sample_trimodal(tgt, ref_rng, a.n);
  json summary = json::array();
  for (const auto& c : cells) {
    const auto ed = stats::energy_distance(c.out, ref);
    const double msd = (c.out - c.src).rowwise().squaredNorm().mean();
    const double mix = toy::label_mixing_score(c, tgt);
    summary.push_back({{"k_sw", c.k_sw}, {"mean_sq_disp", msd}, {"energy_distance", ed.value},
                       {"energy_distance_se", ed.std_error}, {"label_mixing", mix}});
    spdlog::info("k_sw={:>3}  msd={:.4f}  energy={:.5f} (se {:.5f})  mixing={:.3f}", c.k_sw, msd, ed.value,
                 ed.std_error, mix);
  }
  write_text_file(fs::path(a.out) / "summary.json", to_canonical(summary) + "\n");
  spdlog::info("wrote grid.csv, grid.svg and summary.json to {}", a.out);
}

struct ServeArgs {
  std::string ckpt, out, static_dir, host = "127.0.0.1";
  unsigned short port = 8765;
  double gamma = 0.4;
  std::uint64_t seed = 0;
};

bridge::Server* g_server = nullptr;

void cmd_serve(const ServeArgs& a) {
  auto model = std::make_shared<const diffusion::Model>(diffusion::load_checkpoint(a.ckpt));
  bridge::ServerConfig cfg;
  cfg.address = a.host;
  cfg.port = a.port;
  cfg.session.default_gamma = a.gamma;
  cfg.session.seed = a.seed;
  if (!a.out.empty()) cfg.session.transcript_dir = fs::path(a.out);
  if (!a.static_dir.empty()) cfg.static_dir = fs::path(a.static_dir);
  copilot::CopilotConfig::make(a.gamma, model->schedule.K());
  bridge::Server server(model, cfg, spdlog_sink());
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) std::thread([] { g_server->stop(); }).detach();
  });
  spdlog::info("listening on ws://{}:{}/session (gamma {})", a.host, server.port(), a.gamma);
  server.run();
  server.stop();
  g_server = nullptr;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Diffusion copilot for shared autonomy in a 2D control world"};
  app.require_subcommand(1);

  CollectArgs ca;
  auto* collect = app.add_subcommand("collect", "Roll out the scripted expert and store goal-stripped demonstrations");
  collect->add_option("--episodes", ca.episodes, "Expert episodes to run")->capture_default_str();
  collect->add_option("--seed", ca.seed, "Random seed")->capture_default_str();
  collect->add_option("--out", ca.out, "Output directory")->required();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train the denoiser on a demonstration directory");
  train->add_option("--demos", ta.demos, "Dataset directory")->required();
  train->add_option("--out", ta.out, "Checkpoint path")->required();
  train->add_option("--k", ta.K, "Diffusion steps")->capture_default_str();
  train->add_option("--steps", ta.train.steps, "Optimizer steps")->capture_default_str();
  train->add_option("--batch", ta.train.batch_size, "Minibatch size")->capture_default_str();
  train->add_option("--lr", ta.train.lr, "Adam learning rate")->capture_default_str();
  train->add_option("--lr-schedule", ta.lr_schedule, "cosine or constant")->capture_default_str();
  train->add_option("--param-ema", ta.train.param_ema, "Weight averaging decay (0 disables)")->capture_default_str();
  train->add_option("--hidden", ta.hidden, "Hidden layer widths, comma separated")->capture_default_str();
  train->add_option("--activation", ta.activation, "relu or silu")->capture_default_str();
  train->add_option("--sigma-mode", ta.sigma_mode, "beta or beta_tilde")->capture_default_str();
  train->add_option("--beta-start", ta.beta_start, "First beta (default 0.1/K)");
  train->add_option("--beta-end", ta.beta_end, "Last beta (default 20/K)");
  train->add_option("--seed", ta.seed, "Random seed")->capture_default_str();

  SweepArgs sa;
  auto* sweep = app.add_subcommand("sweep", "Evaluate surrogate pilots across a gamma grid");
  sweep->add_option("--ckpt", sa.ckpt, "Checkpoint path")->required();
  sweep->add_option("--out", sa.out, "Output directory")->required();
  sweep->add_option("--gammas", sa.gammas, "Forward diffusion ratios")->delimiter(',')->capture_default_str();
  sweep->add_option("--pilots", sa.pilots, "Pilot kinds")->delimiter(',')->capture_default_str();
  sweep->add_option("--episodes", sa.episodes, "Episodes per cell")->capture_default_str();
  sweep->add_option("--seed", sa.seed, "Base seed")->capture_default_str();
  sweep->add_option("--goal", sa.goal, "Pilot goal: left, right or random")->capture_default_str();
  sweep->add_option("--p-laggy", sa.p_laggy, "Laggy pilot repeat probability")->capture_default_str();
  sweep->add_option("--p-noisy", sa.p_noisy, "Noisy pilot uniform-action probability")->capture_default_str();

  BoundArgs ba;
  auto* bound = app.add_subcommand("bound", "Displacement statistics against the high-probability bound");
  bound->add_option("--ckpt", ba.ckpt, "Checkpoint path")->required();
  bound->add_option("--demos", ba.demos, "Dataset directory (probe and source points)")->required();
  bound->add_option("--out", ba.out, "CSV path")->required();
  bound->add_option("--delta", ba.deltas, "Failure probabilities")->delimiter(',')->capture_default_str();
  bound->add_option("--gammas", ba.gammas, "Forward diffusion ratios")->delimiter(',')->capture_default_str();
  bound->add_option("--n", ba.n, "Copilot calls per gamma")->capture_default_str();
  bound->add_option("--probes", ba.probes, "Probe points for kappa")->capture_default_str();
  bound->add_option("--seed", ba.seed, "Random seed")->capture_default_str();

  ToyArgs ya;
  auto* toy2d = app.add_subcommand("toy2d", "Triangle-to-trimodal partial diffusion grid (CSV + SVG)");
  toy2d->add_option("--out", ya.out, "Output directory")->required();
  toy2d->add_flag("--train", ya.train, "Train the toy model first (else load --ckpt or OUT/toy_ckpt.json)");
  toy2d->add_option("--ckpt", ya.ckpt, "Toy checkpoint path");
  toy2d->add_option("--n", ya.n, "Points per k_sw")->capture_default_str();
  toy2d->add_option("--steps", ya.steps, "Training steps with --train")->capture_default_str();
  toy2d->add_option("--seed", ya.seed, "Random seed")->capture_default_str();

  ServeArgs va;
  auto* serve = app.add_subcommand("serve", "WebSocket session server for interactive piloting");
  serve->add_option("--ckpt", va.ckpt, "Checkpoint path")->required();
  serve->add_option("--port", va.port, "TCP port")->capture_default_str();
  serve->add_option("--host", va.host, "Bind address")->capture_default_str();
  serve->add_option("--gamma", va.gamma, "Default forward diffusion ratio")->capture_default_str();
  serve->add_option("--out", va.out, "Transcript directory");
  serve->add_option("--static", va.static_dir, "Directory of static files to serve");
  serve->add_option("--seed", va.seed, "Session seed")->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*collect) cmd_collect(ca);
    if (*train) cmd_train(ta);
    if (*sweep) cmd_sweep(sa);
    if (*bound) cmd_bound(ba);
    if (*toy2d) cmd_toy2d(ya);
    if (*serve) cmd_serve(va);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
