#pragma once

// Bidirectional-Car: a car on [-1, 1] that earns reward 1 for reaching either
// end within the rated time. Throttle sign picks the direction, its magnitude
// the speed: v' = a * v_max, x' = x + v'.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>

#include "sfbc/envs/dataset.hpp"
#include "sfbc/error.hpp"
#include "sfbc/numerics/random.hpp"

namespace sfbc::envs {

struct CarParams {
  double v_max = 0.05;
  int max_steps = 60;
  double init_halfwidth = 0.2;
};

struct CarState {
  double x = 0.0;
  double v = 0.0;

  Vector as_vector() const {
    Vector s(2);
    s << x, v;
    return s;
  }
};

struct StepResult {
  CarState state;
  double reward = 0.0;
  bool terminal = false;
  bool timeout = false;
};

inline CarState car_reset(Rng& rng, const CarParams& p = {}) {
  std::uniform_real_distribution<double> ux(-p.init_halfwidth, p.init_halfwidth);
  return {ux(rng), 0.0};
}

/// One transition. `step_index` is the 0-based index of this step within the
/// episode; the episode times out once max_steps steps have elapsed.
inline StepResult car_step(const CarState& s, double action, int step_index,
                           const CarParams& p = {}) {
  require(std::isfinite(action), ErrorKind::NonFinite, "car_step: non-finite action");
  const double a = std::clamp(action, -1.0, 1.0);
  StepResult r;
  r.state.v = a * p.v_max;
  r.state.x = s.x + r.state.v;
  // absorb accumulated rounding so that e.g. 20 full-throttle steps land exactly on 1
  if (std::abs(r.state.x) >= 1.0 - 1e-12) {
    r.state.x = std::copysign(1.0, r.state.x);
    r.reward = 1.0;
    r.terminal = true;
    return r;
  }
  r.timeout = step_index + 1 >= p.max_steps;
  return r;
}

using Policy = std::function<double(const CarState&, Rng&)>;

struct RolloutOutcome {
  Trajectory trajectory;
  CarState final_state;
  bool arrived = false;
};

inline RolloutOutcome rollout(const Policy& policy, Rng& rng, const CarParams& p = {}) {
  RolloutOutcome out;
  CarState s = car_reset(rng, p);
  for (int step = 0;; ++step) {
    const double a = std::clamp(policy(s, rng), -1.0, 1.0);
    const StepResult r = car_step(s, a, step, p);
    out.trajectory.observations.push_back({s.x, s.v});
    out.trajectory.actions.push_back({a});
    out.trajectory.rewards.push_back(r.reward);
    out.trajectory.terminals.push_back(r.terminal);
    out.trajectory.timeouts.push_back(r.timeout);
    s = r.state;
    if (r.terminal || r.timeout) {
      out.arrived = r.terminal;
      break;
    }
  }
  out.final_state = s;
  return out;
}

enum class DatasetMode { Both, Single };

inline std::string to_string(DatasetMode m) { return m == DatasetMode::Both ? "both" : "single"; }

inline DatasetMode dataset_mode_from_string(const std::string& s) {
  if (s == "both") return DatasetMode::Both;
  if (s == "single") return DatasetMode::Single;
  throw Error(ErrorKind::InvalidArgument, "unknown dataset mode '" + s + "' (both|single)");
}

struct BehaviorMixture {
  double throttle_min = 0.2;
  double throttle_max = 1.0;
  double throttle_noise = 0.15;
};

namespace detail {

inline Dataset generate_once(DatasetMode mode, std::size_t n_traj, std::uint64_t seed,
                             const CarParams& p, const BehaviorMixture& mix) {
  Rng rng(seed);
  std::bernoulli_distribution coin(0.5);
  std::uniform_real_distribution<double> throttle(mix.throttle_min, mix.throttle_max);
  std::normal_distribution<double> jitter(0.0, mix.throttle_noise);
  Dataset ds;
  ds.meta.mode = to_string(mode);
  ds.meta.seed = seed;
  ds.meta.generated = n_traj;
  for (std::size_t k = 0; k < n_traj; ++k) {
    const double side = coin(rng) ? 1.0 : -1.0;
    const double u = throttle(rng);
    Policy behavior = [&](const CarState&, Rng& r) {
      return side * std::clamp(u + jitter(r), 0.0, 1.0);
    };
    auto out = rollout(behavior, rng, p);
    if (mode == DatasetMode::Single && out.final_state.x <= -1.0) continue;
    ds.trajectories.push_back(std::move(out.trajectory));
  }
  return ds;
}

inline bool reaches(const Trajectory& t, double side) {
  return t.terminals.back() && t.observations.back()[0] * side > 0.0;
}

}  // namespace detail

/// Offline data from a two-sided throttle mixture. In single mode, every
/// trajectory that ends at the left endpoint is dropped.
inline Dataset generate_dataset(DatasetMode mode, std::size_t n_traj, std::uint64_t seed,
                                const CarParams& p = {}, const BehaviorMixture& mix = {}) {
  require(n_traj >= 2, ErrorKind::InvalidArgument, "generate_dataset needs n_traj >= 2");
  // Both mode must contain arrivals at each end; retry on derived seeds.
  for (std::uint64_t attempt = 0;; ++attempt) {
    const std::uint64_t s = attempt == 0 ? seed : derive_seed(seed, attempt);
    Dataset ds = detail::generate_once(mode, n_traj, s, p, mix);
    ds.meta.seed = seed;
    if (ds.trajectories.empty()) continue;
    if (mode == DatasetMode::Single) return ds;
    bool left = false, right = false;
    for (const auto& t : ds.trajectories) {
      left = left || detail::reaches(t, -1.0);
      right = right || detail::reaches(t, 1.0);
    }
    if (left && right) return ds;
  }
}

struct EvalReport {
  int episodes = 0;
  int successes = 0;
  int left_arrivals = 0;
  int right_arrivals = 0;
  double score = 0.0;  // 100 * success fraction
};

inline double normalized_score(int successes, int episodes) {
  require(episodes >= 1, ErrorKind::InvalidArgument, "need at least one episode");
  return 100.0 * successes / episodes;
}

/// Runs n episodes, episode i on its own stream derived from `seed`.
inline EvalReport evaluate_policy(const Policy& policy, int n_episodes, std::uint64_t seed,
                                  const CarParams& p = {}) {
  require(n_episodes >= 1, ErrorKind::InvalidArgument, "evaluate_policy: n_episodes must be >= 1");
  EvalReport rep;
  rep.episodes = n_episodes;
  for (int i = 0; i < n_episodes; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    RolloutOutcome out;
    try {
      out = rollout(policy, rng, p);
    } catch (const std::exception& e) {
      throw Error(ErrorKind::InvalidArgument,
                  "policy failed in episode " + std::to_string(i) + ": " + e.what());
    }
    if (out.arrived) {
      ++rep.successes;
      (out.final_state.x > 0.0 ? rep.right_arrivals : rep.left_arrivals) += 1;
    }
  }
  rep.score = normalized_score(rep.successes, rep.episodes);
  return rep;
}

}  // namespace sfbc::envs
