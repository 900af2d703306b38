#pragma once

// Run configuration. Every field has a default; a JSON file may set any
// subset, and command-line flags are applied on top of the file.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>

#include <nlohmann/json.hpp>

#include "sfbc/error.hpp"

namespace sfbc::app {

enum class Ablation { None, Gaussian, NoPlanning };

inline std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::None: return "none";
    case Ablation::Gaussian: return "gaussian";
    case Ablation::NoPlanning: return "no-planning";
  }
  return "none";
}

inline Ablation ablation_from_string(const std::string& s) {
  if (s == "none") return Ablation::None;
  if (s == "gaussian") return Ablation::Gaussian;
  if (s == "no-planning") return Ablation::NoPlanning;
  throw Error(ErrorKind::InvalidArgument, "unknown ablation '" + s + "' (gaussian|no-planning)");
}

struct BehaviorSection {
  int epochs = 200;
  double lr = 1e-3;
  int batch_size = 512;
  int hidden = 128;
  int depth = 3;
  double gaussian_lr = 3e-4;
};

struct CriticSection {
  int epochs = 25;
  double lr = 1e-3;
  int batch_size = 512;
  int hidden = 256;
  int depth = 2;
};

struct PlanningSection {
  double gamma = 0.99;
  int k_iters = 3;
  double alpha = 20.0;
  int mc_samples = 16;
  int value_batch = 512;
  int value_steps = 15;  // ODE steps for the V estimate
};

struct PolicySection {
  int candidates = 32;
  double alpha = 20.0;
  int top_k = 1;
  int diffusion_steps = 30;
  std::string solver = "heun";
};

struct EvalSection {
  int episodes = 100;
  std::uint64_t seed = 1000;
};

struct RunConfig {
  std::string env = "bidirectional-car";
  std::string dataset;
  std::string out_dir = "run";
  std::uint64_t seed = 0;
  Ablation ablation = Ablation::None;
  bool behavior_only = false;
  BehaviorSection behavior;
  CriticSection critic;
  PlanningSection planning;
  PolicySection policy;
  EvalSection eval;

  void validate() const {
    auto positive = [](bool ok, const std::string& what) {
      require(ok, ErrorKind::InvalidArgument, "config: " + what);
    };
    positive(env == "bidirectional-car", "env must be 'bidirectional-car'");
    positive(behavior.epochs >= 0 && critic.epochs >= 0, "epochs must be >= 0");
    positive(behavior.lr > 0 && behavior.gaussian_lr > 0 && critic.lr > 0,
             "learning rates must be > 0");
    positive(behavior.batch_size >= 1 && critic.batch_size >= 1, "batch sizes must be >= 1");
    positive(behavior.hidden >= 1 && behavior.depth >= 1 && critic.hidden >= 1 && critic.depth >= 1,
             "network sizes must be >= 1");
    positive(planning.gamma > 0 && planning.gamma <= 1, "gamma must be in (0, 1]");
    positive(planning.k_iters >= 1, "k_iters must be >= 1");
    positive(planning.alpha >= 0 && policy.alpha >= 0, "alpha must be >= 0");
    positive(planning.mc_samples >= 1 && planning.value_batch >= 1 && planning.value_steps >= 1,
             "mc_samples, value_batch and value_steps must be >= 1");
    positive(policy.candidates >= 1 && policy.top_k >= 1 && policy.top_k <= policy.candidates,
             "need candidates >= 1 and 1 <= top_k <= candidates");
    positive(policy.diffusion_steps >= 1, "diffusion_steps must be >= 1");
    positive(policy.solver == "heun" || policy.solver == "euler", "solver must be heun|euler");
    positive(eval.episodes >= 1, "eval episodes must be >= 1");
  }
};

namespace detail {

template <class T>
void take(const nlohmann::json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                       const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    require(known, ErrorKind::InvalidArgument, "config: unknown key '" + where + key + "'");
  }
}

}  // namespace detail

inline nlohmann::json to_json(const RunConfig& c) {
  return {
      {"env", c.env},
      {"dataset", c.dataset},
      {"out_dir", c.out_dir},
      {"seed", c.seed},
      {"ablation", to_string(c.ablation)},
      {"behavior_only", c.behavior_only},
      {"behavior",
       {{"epochs", c.behavior.epochs}, {"lr", c.behavior.lr}, {"batch_size", c.behavior.batch_size},
        {"hidden", c.behavior.hidden}, {"depth", c.behavior.depth},
        {"gaussian_lr", c.behavior.gaussian_lr}}},
      {"critic",
       {{"epochs", c.critic.epochs}, {"lr", c.critic.lr}, {"batch_size", c.critic.batch_size},
        {"hidden", c.critic.hidden}, {"depth", c.critic.depth}}},
      {"planning",
       {{"gamma", c.planning.gamma}, {"k_iters", c.planning.k_iters}, {"alpha", c.planning.alpha},
        {"mc_samples", c.planning.mc_samples}, {"value_batch", c.planning.value_batch},
        {"value_steps", c.planning.value_steps}}},
      {"policy",
       {{"candidates", c.policy.candidates}, {"alpha", c.policy.alpha}, {"top_k", c.policy.top_k},
        {"diffusion_steps", c.policy.diffusion_steps}, {"solver", c.policy.solver}}},
      {"eval", {{"episodes", c.eval.episodes}, {"seed", c.eval.seed}}},
  };
}

/// Defaults overridden by whatever keys `j` sets. Unknown keys are rejected.
inline RunConfig config_from_json(const nlohmann::json& j) {
  using detail::take;
  RunConfig c;
  try {
    detail::check_keys(j, {"env", "dataset", "out_dir", "seed", "ablation", "behavior_only",
                           "behavior", "critic", "planning", "policy", "eval"},
                       "");
    take(j, "env", c.env);
    take(j, "dataset", c.dataset);
    take(j, "out_dir", c.out_dir);
    take(j, "seed", c.seed);
    take(j, "behavior_only", c.behavior_only);
    if (j.contains("ablation")) c.ablation = ablation_from_string(j.at("ablation").get<std::string>());
    if (j.contains("behavior")) {
      const auto& b = j.at("behavior");
      detail::check_keys(b, {"epochs", "lr", "batch_size", "hidden", "depth", "gaussian_lr"},
                         "behavior.");
      take(b, "epochs", c.behavior.epochs);
      take(b, "lr", c.behavior.lr);
      take(b, "batch_size", c.behavior.batch_size);
      take(b, "hidden", c.behavior.hidden);
      take(b, "depth", c.behavior.depth);
      take(b, "gaussian_lr", c.behavior.gaussian_lr);
    }
    if (j.contains("critic")) {
      const auto& q = j.at("critic");
      detail::check_keys(q, {"epochs", "lr", "batch_size", "hidden", "depth"}, "critic.");
      take(q, "epochs", c.critic.epochs);
      take(q, "lr", c.critic.lr);
      take(q, "batch_size", c.critic.batch_size);
      take(q, "hidden", c.critic.hidden);
      take(q, "depth", c.critic.depth);
    }
    if (j.contains("planning")) {
      const auto& p = j.at("planning");
      detail::check_keys(
          p, {"gamma", "k_iters", "alpha", "mc_samples", "value_batch", "value_steps"}, "planning.");
      take(p, "gamma", c.planning.gamma);
      take(p, "k_iters", c.planning.k_iters);
      take(p, "alpha", c.planning.alpha);
      take(p, "mc_samples", c.planning.mc_samples);
      take(p, "value_batch", c.planning.value_batch);
      take(p, "value_steps", c.planning.value_steps);
    }
    if (j.contains("policy")) {
      const auto& p = j.at("policy");
      detail::check_keys(p, {"candidates", "alpha", "top_k", "diffusion_steps", "solver"},
                         "policy.");
      take(p, "candidates", c.policy.candidates);
      take(p, "alpha", c.policy.alpha);
      take(p, "top_k", c.policy.top_k);
      take(p, "diffusion_steps", c.policy.diffusion_steps);
      take(p, "solver", c.policy.solver);
    }
    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      detail::check_keys(e, {"episodes", "seed"}, "eval.");
      take(e, "episodes", c.eval.episodes);
      take(e, "seed", c.eval.seed);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::Parse, path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace sfbc::app
