#pragma once

// Q-target recursions over sequentially ordered dataset trajectories.

#include <cmath>
#include <string>
#include <vector>

#include "sfbc/envs/dataset.hpp"
#include "sfbc/error.hpp"
#include "sfbc/numerics/mlp.hpp"

namespace sfbc::critic {

using numerics::Matrix;
using numerics::Vector;

inline void check_episode_flags(const std::vector<bool>& episode_last, Eigen::Index n) {
  require(static_cast<Eigen::Index>(episode_last.size()) == n, ErrorKind::ShapeMismatch,
          "episode flags do not cover every record");
  require(n == 0 || episode_last.back(), ErrorKind::InvalidArgument,
          "final record is not marked as the end of an episode");
}

/// Discounted return-to-go within each episode.
inline Vector vanilla_returns(const Vector& rewards, const std::vector<bool>& episode_last,
                              double gamma) {
  check_episode_flags(episode_last, rewards.size());
  Vector r(rewards.size());
  for (Eigen::Index n = rewards.size(); n-- > 0;) {
    const bool last = episode_last[static_cast<std::size_t>(n)];
    r(n) = last ? rewards(n) : rewards(n) + gamma * r(n + 1);
  }
  return r;
}

inline Vector vanilla_returns(const envs::TransitionTable& table, double gamma) {
  return vanilla_returns(table.rewards, table.episode_last, gamma);
}

/// R_n = r_n + gamma * max(R_{n+1}, V_{n+1}) inside an episode, r_n at its last
/// step. `values(n)` is the state value of record n's state.
inline Vector plan_targets(const Vector& rewards, const std::vector<bool>& episode_last,
                           const Vector& values, double gamma) {
  check_episode_flags(episode_last, rewards.size());
  require(values.size() == rewards.size(), ErrorKind::ShapeMismatch,
          "plan_targets: " + std::to_string(values.size()) + " values for " +
              std::to_string(rewards.size()) + " records");
  Vector r(rewards.size());
  for (Eigen::Index n = rewards.size(); n-- > 0;) {
    if (episode_last[static_cast<std::size_t>(n)])
      r(n) = rewards(n);
    else
      r(n) = rewards(n) + gamma * std::max(r(n + 1), values(n + 1));
  }
  return r;
}

inline Vector plan_targets(const envs::TransitionTable& table, const Vector& values, double gamma) {
  return plan_targets(table.rewards, table.episode_last, values, gamma);
}

struct TargetStats {
  double mean = 0.0;
  double std = 1.0;
  bool applied = true;  // false when the targets had zero variance

  double denormalize(double x) const { return applied ? mean + std * x : x; }
  Vector denormalize(const Vector& x) const {
    return applied ? Vector((x.array() * std + mean).matrix()) : x;
  }
};

struct NormalizedTargets {
  Vector values;
  TargetStats stats;
  bool warned = false;
};

/// Zero mean, unit population variance. Constant targets pass through unchanged.
inline NormalizedTargets normalize_targets(const Vector& targets) {
  require(targets.size() >= 2, ErrorKind::InvalidArgument,
          "normalize_targets needs at least 2 records");
  const double mean = targets.mean();
  const double var = (targets.array() - mean).square().mean();
  const double std = std::sqrt(var);
  NormalizedTargets out;
  if (!(std > 0.0)) {
    out.values = targets;
    out.stats = {mean, 0.0, false};
    out.warned = true;
    return out;
  }
  out.values = ((targets.array() - mean) / std).matrix();
  out.stats = {mean, std, true};
  return out;
}

}  // namespace sfbc::critic
