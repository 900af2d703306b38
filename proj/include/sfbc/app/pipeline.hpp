#pragma once

// End-to-end training and evaluation on Bidirectional-Car.
//
// Run directory layout:
//   config.json                resolved configuration
//   behavior.ckpt/.json        diffusion or gaussian behavior model
//   critic.ckpt/.json          final action evaluation model
//   metrics.csv                phase,iteration,name,value,seed
//   targets.csv                iteration,record,target
//   INCOMPLETE                 present until training finishes

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sfbc/app/artifacts.hpp"
#include "sfbc/app/config.hpp"
#include "sfbc/critic/critic.hpp"
#include "sfbc/diffusion/gaussian_behavior.hpp"
#include "sfbc/diffusion/score_model.hpp"
#include "sfbc/envs/car.hpp"
#include "sfbc/envs/dataset.hpp"
#include "sfbc/policy/sfbc_policy.hpp"

namespace sfbc::app {

inline constexpr const char* kIncompleteMarker = "INCOMPLETE";

struct MetricsRow {
  std::string phase;
  int iteration = 0;
  std::string name;
  double value = 0.0;
  std::uint64_t seed = 0;
};

/// Append-only CSV sink; rows are flushed as they arrive.
class MetricsWriter {
 public:
  explicit MetricsWriter(const fs::path& path) : out_(path) {
    require(static_cast<bool>(out_), ErrorKind::Io, "cannot write " + path.string());
    out_ << "phase,iteration,name,value,seed\n" << std::setprecision(17);
  }
  void add(const MetricsRow& r) {
    out_ << r.phase << ',' << r.iteration << ',' << r.name << ',' << r.value << ',' << r.seed
         << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

inline diffusion::SamplerSettings sampler_settings(const RunConfig& cfg, int steps) {
  diffusion::SamplerSettings s;
  s.steps = steps;
  s.solver = diffusion::ode_solver_from_string(cfg.policy.solver);
  return s;
}

inline critic::PlanningConfig planning_config(const RunConfig& cfg) {
  critic::PlanningConfig p;
  p.gamma = cfg.planning.gamma;
  p.alpha = cfg.planning.alpha;
  p.mc_samples = cfg.planning.mc_samples;
  p.iterations = cfg.ablation == Ablation::NoPlanning ? 1 : cfg.planning.k_iters;
  p.value_batch = cfg.planning.value_batch;
  p.critic = {cfg.critic.hidden, cfg.critic.depth, cfg.critic.epochs, cfg.critic.batch_size,
              cfg.critic.lr};
  p.seed = derive_seed(cfg.seed, 2);
  return p;
}

inline policy::PolicyConfig policy_config(const RunConfig& cfg) {
  return {cfg.policy.candidates, cfg.policy.alpha, cfg.policy.top_k};
}

using Progress = std::function<void(const std::string&)>;

struct TrainSummary {
  std::size_t records = 0;
  double behavior_final_loss = 0.0;
  std::vector<Vector> target_history;
};

namespace detail {

inline void write_targets_csv(const fs::path& path, const std::vector<Vector>& history) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out << "iteration,record,target\n" << std::setprecision(17);
  for (std::size_t k = 0; k < history.size(); ++k)
    for (Eigen::Index n = 0; n < history[k].size(); ++n)
      out << k << ',' << n << ',' << history[k](n) << '\n';
}

template <diffusion::ActionSampler Sampler>
void run_planning(const RunConfig& cfg, const envs::TransitionTable& table, const Sampler& sampler,
                  const fs::path& out, MetricsWriter& metrics, TrainSummary& summary,
                  const Progress& progress) {
  const auto pcfg = planning_config(cfg);
  auto result = critic::train_evaluation_loop(
      table, sampler, pcfg, [&](int k, int epoch, double mse) {
        metrics.add({"critic-k" + std::to_string(k), epoch, "mse", mse, cfg.seed});
        if (progress && epoch + 1 == pcfg.critic.epochs)
          progress("critic k=" + std::to_string(k) + " mse " + std::to_string(mse));
      });
  for (std::size_t k = 0; k < result.target_history.size(); ++k) {
    const Vector& r = result.target_history[k];
    metrics.add({"planning", static_cast<int>(k), "target_mean", r.mean(), cfg.seed});
    metrics.add({"planning", static_cast<int>(k), "target_max", r.maxCoeff(), cfg.seed});
  }
  save_critic(result.critic, out / "critic");
  write_targets_csv(out / "targets.csv", result.target_history);
  summary.target_history = std::move(result.target_history);
}

}  // namespace detail

/// Runs the behavior phase and (unless behavior_only) K planning iterations,
/// writing every artifact under cfg.out_dir.
inline TrainSummary train_run(const RunConfig& cfg, const envs::Dataset& ds,
                              const Progress& progress = {}) {
  cfg.validate();
  const fs::path out = cfg.out_dir;
  fs::create_directories(out);
  { std::ofstream(out / kIncompleteMarker) << "training did not finish\n"; }
  write_json(out / "config.json", to_json(cfg));
  MetricsWriter metrics(out / "metrics.csv");

  const envs::TransitionTable table = envs::flatten(ds);
  TrainSummary summary;
  summary.records = static_cast<std::size_t>(table.size());
  metrics.add({"data", 0, "records", static_cast<double>(table.size()), cfg.seed});
  metrics.add({"data", 0, "trajectories", static_cast<double>(ds.trajectories.size()), cfg.seed});

  const std::uint64_t behavior_seed = derive_seed(cfg.seed, 1);
  auto log_epoch = [&](int epoch, double loss) {
    metrics.add({"behavior", epoch, "loss", loss, cfg.seed});
    summary.behavior_final_loss = loss;
    if (progress && (epoch % 20 == 0 || epoch + 1 == cfg.behavior.epochs))
      progress("behavior epoch " + std::to_string(epoch) + " loss " + std::to_string(loss));
  };

  if (cfg.ablation == Ablation::Gaussian) {
    diffusion::GaussianTrainConfig gcfg;
    gcfg.hidden = cfg.behavior.hidden;
    gcfg.depth = cfg.behavior.depth;
    gcfg.epochs = cfg.behavior.epochs;
    gcfg.batch_size = cfg.behavior.batch_size;
    gcfg.lr = cfg.behavior.gaussian_lr;
    gcfg.seed = behavior_seed;
    const auto g = diffusion::train_gaussian_behavior(table.states, table.actions, gcfg, log_epoch);
    save_gaussian(g, out / "behavior");
    if (!cfg.behavior_only) detail::run_planning(cfg, table, g, out, metrics, summary, progress);
  } else {
    diffusion::BehaviorTrainConfig bcfg;
    bcfg.net.hidden = cfg.behavior.hidden;
    bcfg.net.depth = cfg.behavior.depth;
    bcfg.epochs = cfg.behavior.epochs;
    bcfg.batch_size = cfg.behavior.batch_size;
    bcfg.lr = cfg.behavior.lr;
    bcfg.seed = behavior_seed;
    const auto model = diffusion::train_behavior(table.states, table.actions, bcfg, log_epoch);
    save_score_model(model, sampler_settings(cfg, cfg.policy.diffusion_steps), out / "behavior");
    if (!cfg.behavior_only) {
      const diffusion::DiffusionSampler sampler{&model,
                                                sampler_settings(cfg, cfg.planning.value_steps)};
      detail::run_planning(cfg, table, sampler, out, metrics, summary, progress);
    }
  }
  fs::remove(out / kIncompleteMarker);
  return summary;
}

/// Behavior model of either kind, loaded from a run directory.
struct LoadedBehavior {
  std::optional<diffusion::ScoreModel> diffusion_model;
  std::optional<diffusion::GaussianBehavior> gaussian;
  diffusion::SamplerSettings settings;

  std::string kind() const { return diffusion_model ? "diffusion" : "gaussian"; }
};

inline LoadedBehavior load_behavior(const fs::path& run_dir) {
  LoadedBehavior b;
  const fs::path stem = run_dir / "behavior";
  if (behavior_kind(stem) == "gaussian") {
    b.gaussian = load_gaussian(stem);
  } else {
    auto loaded = load_score_model(stem);
    b.diffusion_model = std::move(loaded.model);
    b.settings = loaded.settings;
  }
  return b;
}

/// Calls f(sampler) with the concrete sampler type of `b`.
template <class F>
decltype(auto) with_sampler(const LoadedBehavior& b, const diffusion::SamplerSettings& settings,
                            F&& f) {
  if (b.gaussian) return f(*b.gaussian);
  const diffusion::DiffusionSampler s{&*b.diffusion_model, settings};
  return f(s);
}

struct EvalOptions {
  int episodes = 100;
  std::uint64_t seed = 1000;
  policy::PolicyConfig policy;
  diffusion::SamplerSettings sampler;
};

inline EvalOptions eval_options(const RunConfig& cfg) {
  return {cfg.eval.episodes, cfg.eval.seed, policy_config(cfg),
          sampler_settings(cfg, cfg.policy.diffusion_steps)};
}

/// Deterministic SfBC policy: best of M behavior candidates under the critic.
/// Candidate noise is drawn fresh each step from the episode's stream.
inline envs::EvalReport evaluate_run(const fs::path& run_dir, const EvalOptions& opt) {
  require(fs::exists(run_dir), ErrorKind::Io, "run directory " + run_dir.string() + " not found");
  require(!fs::exists(run_dir / kIncompleteMarker), ErrorKind::Io,
          "run " + run_dir.string() + " is incomplete");
  const LoadedBehavior behavior = load_behavior(run_dir);
  const critic::Critic q = load_critic(run_dir / "critic");
  return with_sampler(behavior, opt.sampler, [&](const auto& sampler) {
    envs::Policy pol = [&](const envs::CarState& s, Rng& rng) {
      return policy::select_action_eval(s.as_vector(), sampler, q, opt.policy, rng)(0);
    };
    return envs::evaluate_policy(pol, opt.episodes, opt.seed);
  });
}

}  // namespace sfbc::app
