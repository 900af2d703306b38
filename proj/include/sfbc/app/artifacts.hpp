#pragma once

// On-disk model artifacts: a binary checkpoint holding every real array plus a
// JSON sidecar with the scalar configuration needed to rebuild the model.

#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "sfbc/critic/critic.hpp"
#include "sfbc/diffusion/gaussian_behavior.hpp"
#include "sfbc/diffusion/score_model.hpp"
#include "sfbc/error.hpp"
#include "sfbc/numerics/checkpoint.hpp"
#include "sfbc/numerics/standardize.hpp"

namespace sfbc::app {

namespace fs = std::filesystem;
using nlohmann::json;
using numerics::Matrix;
using numerics::Vector;

inline void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

inline json read_json(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Parse, path.string() + ": " + e.what());
  }
}

namespace detail {

inline json spec_to_json(const numerics::MlpSpec& spec) {
  std::vector<std::string> acts;
  for (auto a : spec.hidden_activations) acts.push_back(numerics::to_string(a));
  return {{"layer_widths", spec.layer_widths},
          {"hidden_activations", acts},
          {"output_activation", numerics::to_string(spec.output_activation)}};
}

inline numerics::MlpSpec spec_from_json(const json& j) {
  numerics::MlpSpec spec;
  spec.layer_widths = j.at("layer_widths").get<std::vector<int>>();
  for (const auto& a : j.at("hidden_activations"))
    spec.hidden_activations.push_back(numerics::activation_from_string(a.get<std::string>()));
  spec.output_activation =
      numerics::activation_from_string(j.at("output_activation").get<std::string>());
  spec.validate();
  return spec;
}

inline void append_norm(std::vector<numerics::NamedArray>& arrays, const numerics::Standardizer& s) {
  if (s.empty()) return;
  const auto n = static_cast<std::uint64_t>(s.mean.size());
  arrays.push_back({"state_norm.mean", {n}, {s.mean.data(), s.mean.data() + s.mean.size()}});
  arrays.push_back({"state_norm.scale", {n}, {s.scale.data(), s.scale.data() + s.scale.size()}});
}

inline numerics::Standardizer read_norm(const std::vector<numerics::NamedArray>& arrays) {
  numerics::Standardizer s;
  for (const auto& a : arrays) {
    if (a.name == "state_norm.mean")
      s.mean = Eigen::Map<const numerics::Vector>(a.data.data(), static_cast<Eigen::Index>(a.data.size()));
    if (a.name == "state_norm.scale")
      s.scale = Eigen::Map<const numerics::Vector>(a.data.data(), static_cast<Eigen::Index>(a.data.size()));
  }
  require(s.mean.size() == s.scale.size(), ErrorKind::Parse, "incomplete state normalizer");
  return s;
}

inline void require_file(const fs::path& p) {
  require(fs::exists(p), ErrorKind::Io, "missing file " + p.string());
}

}  // namespace detail

// ---- diffusion behavior -------------------------------------------------

inline void save_score_model(const diffusion::ScoreModel& m, const diffusion::SamplerSettings& s,
                             const fs::path& stem) {
  auto arrays = numerics::to_named_arrays(m.params, "net.");
  detail::append_norm(arrays, m.state_norm);
  numerics::write_checkpoint(stem.string() + ".ckpt", arrays);
  write_json(stem.string() + ".json",
             {{"kind", "diffusion"},
              {"state_dim", m.state_dim},
              {"action_dim", m.action_dim},
              {"embed_dim", m.embed_dim},
              {"beta_min", m.schedule.beta_min},
              {"beta_max", m.schedule.beta_max},
              {"solver", diffusion::to_string(s.solver)},
              {"steps", s.steps},
              {"t_min", s.t_min},
              {"network", detail::spec_to_json(m.spec)}});
}

struct LoadedScoreModel {
  diffusion::ScoreModel model;
  diffusion::SamplerSettings settings;
};

inline LoadedScoreModel load_score_model(const fs::path& stem) {
  detail::require_file(stem.string() + ".json");
  detail::require_file(stem.string() + ".ckpt");
  const json j = read_json(stem.string() + ".json");
  require(j.at("kind") == "diffusion", ErrorKind::Parse, stem.string() + " is not a diffusion model");
  LoadedScoreModel out;
  auto& m = out.model;
  m.state_dim = j.at("state_dim");
  m.action_dim = j.at("action_dim");
  m.embed_dim = j.at("embed_dim");
  m.schedule.beta_min = j.at("beta_min");
  m.schedule.beta_max = j.at("beta_max");
  m.spec = detail::spec_from_json(j.at("network"));
  const auto arrays = numerics::read_checkpoint(stem.string() + ".ckpt");
  m.params = numerics::from_named_arrays(arrays, m.spec, "net.");
  m.state_norm = detail::read_norm(arrays);
  m.validate();
  out.settings.solver = diffusion::ode_solver_from_string(j.at("solver"));
  out.settings.steps = j.at("steps");
  out.settings.t_min = j.at("t_min");
  return out;
}

// ---- gaussian behavior --------------------------------------------------

inline void save_gaussian(const diffusion::GaussianBehavior& g, const fs::path& stem) {
  auto arrays = numerics::to_named_arrays(g.params, "net.");
  detail::append_norm(arrays, g.state_norm);
  numerics::write_checkpoint(stem.string() + ".ckpt", arrays);
  write_json(stem.string() + ".json", {{"kind", "gaussian"},
                                       {"state_dim", g.state_dim},
                                       {"action_dim", g.action_dim},
                                       {"log_std_min", diffusion::kLogStdMin},
                                       {"log_std_max", diffusion::kLogStdMax},
                                       {"network", detail::spec_to_json(g.spec)}});
}

inline diffusion::GaussianBehavior load_gaussian(const fs::path& stem) {
  detail::require_file(stem.string() + ".json");
  detail::require_file(stem.string() + ".ckpt");
  const json j = read_json(stem.string() + ".json");
  require(j.at("kind") == "gaussian", ErrorKind::Parse, stem.string() + " is not a gaussian model");
  diffusion::GaussianBehavior g;
  g.state_dim = j.at("state_dim");
  g.action_dim = j.at("action_dim");
  g.spec = detail::spec_from_json(j.at("network"));
  const auto arrays = numerics::read_checkpoint(stem.string() + ".ckpt");
  g.params = numerics::from_named_arrays(arrays, g.spec, "net.");
  g.state_norm = detail::read_norm(arrays);
  g.validate();
  return g;
}

/// "diffusion" or "gaussian", read from the sidecar.
inline std::string behavior_kind(const fs::path& stem) {
  detail::require_file(stem.string() + ".json");
  return read_json(stem.string() + ".json").at("kind").get<std::string>();
}

// ---- critic -------------------------------------------------------------

inline void save_critic(const critic::Critic& c, const fs::path& stem) {
  auto arrays = numerics::to_named_arrays(c.params, "net.");
  detail::append_norm(arrays, c.state_norm);
  arrays.push_back({"target_stats", {2}, {c.stats.mean, c.stats.std}});
  numerics::write_checkpoint(stem.string() + ".ckpt", arrays);
  write_json(stem.string() + ".json", {{"kind", "critic"},
                                       {"state_dim", c.state_dim},
                                       {"action_dim", c.action_dim},
                                       {"target_mean", c.stats.mean},
                                       {"target_std", c.stats.std},
                                       {"normalized", c.stats.applied},
                                       {"network", detail::spec_to_json(c.spec)}});
}

inline critic::Critic load_critic(const fs::path& stem) {
  detail::require_file(stem.string() + ".json");
  detail::require_file(stem.string() + ".ckpt");
  const json j = read_json(stem.string() + ".json");
  require(j.at("kind") == "critic", ErrorKind::Parse, stem.string() + " is not a critic");
  critic::Critic c;
  c.state_dim = j.at("state_dim");
  c.action_dim = j.at("action_dim");
  c.spec = detail::spec_from_json(j.at("network"));
  const auto arrays = numerics::read_checkpoint(stem.string() + ".ckpt");
  c.params = numerics::from_named_arrays(arrays, c.spec, "net.");
  c.state_norm = detail::read_norm(arrays);
  const auto& ts = numerics::find_array(arrays, "target_stats");
  require(ts.data.size() == 2, ErrorKind::Parse, "target_stats must hold 2 values");
  c.stats = {ts.data[0], ts.data[1], j.at("normalized").get<bool>()};
  numerics::check_shapes(c.spec, c.params);
  return c;
}

}  // namespace sfbc::app
