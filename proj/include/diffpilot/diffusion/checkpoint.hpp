#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "diffpilot/diffusion/denoiser.hpp"
#include "diffpilot/json_io.hpp"

namespace diffpilot::diffusion {

/// A trained denoiser together with the schedule it was trained under.
struct Model {
  Denoiser denoiser;
  NoiseSchedule schedule;
};

namespace detail {

inline json vec_to_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Vec vec_from_json(const json& a, const std::string& what) {
  if (!a.is_array()) throw ParseError("checkpoint: " + what + " must be an array");
  Vec v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].is_number()) throw ParseError("checkpoint: " + what + " must contain numbers");
    v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  }
  return v;
}

}  // namespace detail

inline json checkpoint_to_json(const Denoiser& d, const NoiseSchedule& s) {
  d.validate();
  d.check_schedule(s);
  json spec = {
      {"input_dim", d.spec.input_dim},
      {"hidden_dims", d.spec.hidden_dims},
      {"output_dim", d.spec.output_dim},
      {"activation", std::string(nn::to_string(d.spec.activation))},
      {"obs_dim", d.obs_dim},
      {"action_dim", d.action_dim},
      {"timestep_embed_dim", d.timestep_embed_dim},
  };
  json layers = json::array();
  for (const auto& L : d.params.layers) {
    json w = json::array();
    for (Eigen::Index r = 0; r < L.w.rows(); ++r) w.push_back(detail::vec_to_json(L.w.row(r).transpose()));
    layers.push_back({{"w", std::move(w)}, {"b", detail::vec_to_json(L.b)}});
  }
  json norm = {
      {"obs_mean", detail::vec_to_json(d.norm.obs_mean)},
      {"obs_std", detail::vec_to_json(d.norm.obs_std)},
      {"act_mean", detail::vec_to_json(d.norm.act_mean)},
      {"act_std", detail::vec_to_json(d.norm.act_std)},
  };
  json schedule = {
      {"K", s.K()},
      {"beta", s.betas()},
      {"sigma_mode", std::string(to_string(s.sigma_mode()))},
  };
  return {{"spec", std::move(spec)}, {"layers", std::move(layers)}, {"norm", std::move(norm)}, {"schedule", std::move(schedule)}};
}

inline Model checkpoint_from_json(const json& j) {
  try {
    Model m;
    const auto& sp = j.at("spec");
    Denoiser& d = m.denoiser;
    d.spec.input_dim = sp.at("input_dim").get<std::size_t>();
    d.spec.hidden_dims = sp.at("hidden_dims").get<std::vector<std::size_t>>();
    d.spec.output_dim = sp.at("output_dim").get<std::size_t>();
    d.spec.activation = nn::activation_from_string(sp.at("activation").get<std::string>());
    d.obs_dim = sp.at("obs_dim").get<std::size_t>();
    d.action_dim = sp.at("action_dim").get<std::size_t>();
    d.timestep_embed_dim = sp.at("timestep_embed_dim").get<std::size_t>();
    d.spec.validate();

    for (const auto& Lj : j.at("layers")) {
      const auto& wj = Lj.at("w");
      nn::Layer L;
      L.b = detail::vec_from_json(Lj.at("b"), "layer bias");
      const auto rows = static_cast<Eigen::Index>(wj.size());
      const auto cols = rows > 0 ? static_cast<Eigen::Index>(wj[0].size()) : 0;
      L.w.resize(rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r) {
        const Vec row = detail::vec_from_json(wj[static_cast<std::size_t>(r)], "weight row");
        if (row.size() != cols) throw ParseError("checkpoint: ragged weight matrix");
        L.w.row(r) = row.transpose();
      }
      if (!L.w.allFinite() || !L.b.allFinite()) throw IntegrityError("checkpoint: non-finite parameter");
      d.params.layers.push_back(std::move(L));
    }
    d.params.m = nn::zeros_like(d.params.layers);
    d.params.v = nn::zeros_like(d.params.layers);

    const auto& nj = j.at("norm");
    d.norm.obs_mean = detail::vec_from_json(nj.at("obs_mean"), "obs_mean");
    d.norm.obs_std = detail::vec_from_json(nj.at("obs_std"), "obs_std");
    d.norm.act_mean = detail::vec_from_json(nj.at("act_mean"), "act_mean");
    d.norm.act_std = detail::vec_from_json(nj.at("act_std"), "act_std");
    d.norm.validate();

    const auto& sj = j.at("schedule");
    m.schedule = NoiseSchedule::from_betas(sj.at("beta").get<std::vector<double>>(),
                                           sigma_mode_from_string(sj.at("sigma_mode").get<std::string>()));
    if (sj.at("K").get<int>() != m.schedule.K()) throw IntegrityError("checkpoint: schedule K does not match beta length");
    d.K = m.schedule.K();
    d.validate();
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  } catch (const ContractViolation& e) {
    throw IntegrityError(std::string("checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const Denoiser& d, const NoiseSchedule& s, const std::filesystem::path& path) {
  write_text_file(path, to_canonical(checkpoint_to_json(d, s)) + "\n");
}

inline Model load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_json(parse_json(read_text_file(path), "checkpoint " + path.string()));
}

}  // namespace diffpilot::diffusion
