#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "diffpilot/diffusion/checkpoint.hpp"
#include "diffpilot/diffusion/train.hpp"
#include "diffpilot/world/pilot.hpp"

namespace diffpilot::data {

using diffusion::NormStats;
using nn::Tensor2;

inline constexpr const char* kRecordsFile = "demos.ndjson";
inline constexpr const char* kMetaFile = "demos.meta.json";

struct DatasetMeta {
  std::size_t count = 0;           // stored (obs, action) records
  std::size_t episodes_run = 0;    // expert episodes rolled out
  std::size_t episodes_kept = 0;   // successful episodes stored
  std::size_t left = 0, right = 0; // goal-side tally of stored episodes
  NormStats norm;
  std::string config_hash;
  std::uint64_t seed = 0;
};

struct DemoDataset {
  diffusion::TrainingData data;
  DatasetMeta meta;
};

struct CollectConfig {
  std::size_t episodes = 2000;
  world::WorldParams world;
  world::PilotConfig expert;  // kind is forced to expert
  double min_success_rate = 0.9;
};

/// FNV-1a, 64 bit.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline json collect_config_json(const CollectConfig& c) {
  const auto& w = c.world;
  return {
      {"episodes", c.episodes},
      {"world",
       {{"dt", w.dt},
        {"v_max", w.v_max},
        {"drag", w.drag},
        {"goal_radius", w.goal_radius},
        {"timeout", w.timeout},
        {"start", {w.start.x(), w.start.y()}},
        {"start_jitter", w.start_jitter},
        {"goals", {{w.goals[0].x(), w.goals[0].y()}, {w.goals[1].x(), w.goals[1].y()}}},
        {"action_limit", w.action_limit}}},
      {"expert", {{"kp", c.expert.kp}, {"kd", c.expert.kd}}},
  };
}

inline std::string config_hash(const CollectConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(to_canonical(collect_config_json(c)))));
  return buf;
}

/// Rolls out the expert with a random goal side per episode and keeps the
/// goal-stripped (obs, action) pairs of successful episodes. Episode e draws
/// from Rng(seed).derive(e).
inline DemoDataset collect_demos(const CollectConfig& cfg, std::uint64_t seed) {
  if (cfg.episodes < 2) throw ConfigError("collect_demos: need at least 2 episodes");
  world::PilotConfig pc = cfg.expert;
  pc.kind = world::PilotKind::expert;
  pc.validate();
  const nn::Rng root(seed);

  std::vector<Eigen::Vector<double, 6>> rows;  // obs(4) | act(2)
  DemoDataset ds;
  for (std::size_t e = 0; e < cfg.episodes; ++e) {
    nn::Rng rng = root.derive(e);
    world::WorldState s = world::reset(cfg.world, world::GoalSide::random, rng);
    std::vector<Eigen::Vector<double, 6>> ep;
    while (!s.terminal()) {
      const nn::Vec a = world::pilot_act(pc, cfg.world, s, std::nullopt, rng);
      Eigen::Vector<double, 6> r;
      r << world::observe(s, true), a;
      ep.push_back(r);
      s = world::step(cfg.world, s, a);
    }
    if (!world::reached_own_goal(cfg.world, s)) continue;
    ++ds.meta.episodes_kept;
    (world::goal_side_of(cfg.world, s) == world::GoalSide::left ? ds.meta.left : ds.meta.right) += 1;
    rows.insert(rows.end(), ep.begin(), ep.end());
  }
  ds.meta.episodes_run = cfg.episodes;
  const double rate = static_cast<double>(ds.meta.episodes_kept) / static_cast<double>(cfg.episodes);
  if (rate < cfg.min_success_rate) {
    std::ostringstream m;
    m << "collect_demos: expert success rate " << rate << " is below " << cfg.min_success_rate
      << "; dynamics or expert gains are broken";
    throw IntegrityError(m.str());
  }
  if (ds.meta.left == 0 || ds.meta.right == 0) throw IntegrityError("collect_demos: one goal side has no episodes");

  const auto n = static_cast<Eigen::Index>(rows.size());
  ds.data.obs = Tensor2(n, 4);
  ds.data.act = Tensor2(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    ds.data.obs.row(i) = rows[static_cast<std::size_t>(i)].head<4>().transpose();
    ds.data.act.row(i) = rows[static_cast<std::size_t>(i)].tail<2>().transpose();
  }
  ds.data.norm = NormStats::compute(ds.data.obs, ds.data.act);
  ds.meta.count = rows.size();
  ds.meta.norm = ds.data.norm;
  ds.meta.config_hash = config_hash(cfg);
  ds.meta.seed = seed;
  return ds;
}

inline json meta_to_json(const DatasetMeta& m) {
  using diffusion::detail::vec_to_json;
  return {
      {"count", m.count},
      {"episodes_run", m.episodes_run},
      {"episodes_kept", m.episodes_kept},
      {"goal_tally", {{"left", m.left}, {"right", m.right}}},
      {"norm",
       {{"obs_mean", vec_to_json(m.norm.obs_mean)},
        {"obs_std", vec_to_json(m.norm.obs_std)},
        {"act_mean", vec_to_json(m.norm.act_mean)},
        {"act_std", vec_to_json(m.norm.act_std)}}},
      {"config_hash", m.config_hash},
      {"seed", m.seed},
  };
}

inline DatasetMeta meta_from_json(const json& j) {
  using diffusion::detail::vec_from_json;
  DatasetMeta m;
  try {
    m.count = j.at("count").get<std::size_t>();
    m.episodes_run = j.at("episodes_run").get<std::size_t>();
    m.episodes_kept = j.at("episodes_kept").get<std::size_t>();
    m.left = j.at("goal_tally").at("left").get<std::size_t>();
    m.right = j.at("goal_tally").at("right").get<std::size_t>();
    const json& n = j.at("norm");
    m.norm.obs_mean = vec_from_json(n.at("obs_mean"), "obs_mean");
    m.norm.obs_std = vec_from_json(n.at("obs_std"), "obs_std");
    m.norm.act_mean = vec_from_json(n.at("act_mean"), "act_mean");
    m.norm.act_std = vec_from_json(n.at("act_std"), "act_std");
    m.config_hash = j.at("config_hash").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("dataset meta: ") + e.what());
  }
  if (m.norm.obs_mean.size() != 4 || m.norm.obs_std.size() != 4 || m.norm.act_mean.size() != 2 ||
      m.norm.act_std.size() != 2)
    throw IntegrityError("dataset meta: normalization statistics have the wrong dimensions");
  m.norm.validate();
  return m;
}

inline std::string records_to_ndjson(const diffusion::TrainingData& d) {
  std::ostringstream os;
  for (Eigen::Index i = 0; i < d.act.rows(); ++i) {
    json r = {{"obs", diffusion::detail::vec_to_json(d.obs.row(i).transpose())},
              {"act", diffusion::detail::vec_to_json(d.act.row(i).transpose())}};
    write_canonical(os, r);
    os << '\n';
  }
  return os.str();
}

inline void save_dataset(const DemoDataset& ds, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  write_text_file(dir / kRecordsFile, records_to_ndjson(ds.data));
  write_text_file(dir / kMetaFile, to_canonical(meta_to_json(ds.meta)) + "\n");
}

namespace detail {
inline bool close_rel(const nn::Vec& a, const nn::Vec& b, double tol) {
  if (a.size() != b.size()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (std::abs(a[i] - b[i]) > tol * std::max({1.0, std::abs(a[i]), std::abs(b[i])})) return false;
  return true;
}
}  // namespace detail

/// Loads and verifies a dataset directory: record count, finiteness,
/// goal-side coverage and agreement of the stored statistics with the records.
inline DemoDataset load_dataset(const std::filesystem::path& dir) {
  DemoDataset ds;
  ds.meta = meta_from_json(parse_json(read_text_file(dir / kMetaFile), (dir / kMetaFile).string()));
  if (ds.meta.left == 0 || ds.meta.right == 0) throw IntegrityError("dataset meta: one goal side has no episodes");
  const std::string text = read_text_file(dir / kRecordsFile);

  std::vector<Eigen::Vector<double, 6>> rows;
  rows.reserve(ds.meta.count);
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    pos = nl == std::string::npos ? text.size() : nl + 1;
    ++line_no;
    if (line.empty()) continue;
    Eigen::Vector<double, 6> r;
    try {
      const json j = json::parse(line);
      const json& o = j.at("obs");
      const json& a = j.at("act");
      if (!o.is_array() || o.size() != 4 || !a.is_array() || a.size() != 2)
        throw ParseError("record must hold obs[4] and act[2]", line_no);
      for (std::size_t c = 0; c < 4; ++c) r[static_cast<Eigen::Index>(c)] = o[c].get<double>();
      for (std::size_t c = 0; c < 2; ++c) r[static_cast<Eigen::Index>(4 + c)] = a[c].get<double>();
    } catch (const json::exception& e) {
      throw ParseError(std::string("demos: ") + e.what(), line_no);
    }
    if (!r.allFinite()) throw IntegrityError("demos: non-finite value on line " + std::to_string(line_no));
    rows.push_back(r);
  }
  if (rows.size() != ds.meta.count)
    throw IntegrityError("demos: expected " + std::to_string(ds.meta.count) + " records, found " +
                         std::to_string(rows.size()));
  if (rows.empty()) throw IntegrityError("demos: dataset is empty");

  const auto n = static_cast<Eigen::Index>(rows.size());
  ds.data.obs = Tensor2(n, 4);
  ds.data.act = Tensor2(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    ds.data.obs.row(i) = rows[static_cast<std::size_t>(i)].head<4>().transpose();
    ds.data.act.row(i) = rows[static_cast<std::size_t>(i)].tail<2>().transpose();
  }
  ds.data.norm = NormStats::compute(ds.data.obs, ds.data.act);
  constexpr double tol = 1e-9;
  if (!detail::close_rel(ds.data.norm.obs_mean, ds.meta.norm.obs_mean, tol) ||
      !detail::close_rel(ds.data.norm.obs_std, ds.meta.norm.obs_std, tol) ||
      !detail::close_rel(ds.data.norm.act_mean, ds.meta.norm.act_mean, tol) ||
      !detail::close_rel(ds.data.norm.act_std, ds.meta.norm.act_std, tol))
    throw IntegrityError("demos: stored normalization statistics do not match the records");
  // Keep the stored values so a reload reproduces the original bytes.
  ds.data.norm = ds.meta.norm;
  return ds;
}

}  // namespace diffpilot::data
