#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sfbc/error.hpp"
#include "sfbc/numerics/mlp.hpp"

namespace sfbc::envs {

using numerics::Matrix;
using numerics::Vector;

struct Trajectory {
  std::vector<std::vector<double>> observations;
  std::vector<std::vector<double>> actions;
  std::vector<double> rewards;
  std::vector<bool> terminals;
  std::vector<bool> timeouts;

  std::size_t size() const { return rewards.size(); }
  bool operator==(const Trajectory&) const = default;
};

struct DatasetMeta {
  std::string env = "bidirectional-car";
  std::string mode = "both";
  std::uint64_t seed = 0;
  std::size_t generated = 0;  // trajectories before filtering

  bool operator==(const DatasetMeta&) const = default;
};

struct Dataset {
  std::vector<Trajectory> trajectories;
  DatasetMeta meta;

  std::size_t num_records() const {
    std::size_t n = 0;
    for (const auto& t : trajectories) n += t.size();
    return n;
  }
  bool operator==(const Dataset&) const = default;
};

/// Throws if the dataset breaks its structural invariants.
inline void validate(const Dataset& ds) {
  require(!ds.trajectories.empty(), ErrorKind::InvalidArgument, "dataset has no trajectories");
  const auto& first = ds.trajectories.front();
  require(!first.observations.empty(), ErrorKind::InvalidArgument, "empty trajectory");
  const std::size_t sd = first.observations.front().size();
  const std::size_t ad = first.actions.front().size();
  for (std::size_t k = 0; k < ds.trajectories.size(); ++k) {
    const auto& t = ds.trajectories[k];
    const std::string where = "trajectory " + std::to_string(k);
    const std::size_t n = t.rewards.size();
    require(n > 0, ErrorKind::InvalidArgument, where + " is empty");
    require(t.observations.size() == n && t.actions.size() == n && t.terminals.size() == n &&
                t.timeouts.size() == n,
            ErrorKind::ShapeMismatch, where + " has columns of different lengths");
    for (std::size_t i = 0; i < n; ++i) {
      require(t.observations[i].size() == sd && t.actions[i].size() == ad,
              ErrorKind::ShapeMismatch, where + " has inconsistent state/action dims");
      require(std::isfinite(t.rewards[i]), ErrorKind::NonFinite, where + " has a non-finite reward");
      if (i + 1 < n)
        require(!t.terminals[i] && !t.timeouts[i], ErrorKind::InvalidArgument,
                where + " ends before its last record");
    }
    require(t.terminals.back() != t.timeouts.back(), ErrorKind::InvalidArgument,
            where + ": last record needs exactly one of terminal/timeout");
  }
}

/// Column-major view of all records, in file order, plus episode boundaries.
struct TransitionTable {
  Matrix states;   // state_dim x N
  Matrix actions;  // action_dim x N
  Vector rewards;
  std::vector<bool> terminals;
  std::vector<bool> timeouts;
  std::vector<bool> episode_last;  // last record of its trajectory
  Vector targets;                  // Q-target scratch column

  Eigen::Index size() const { return rewards.size(); }
};

inline TransitionTable flatten(const Dataset& ds) {
  validate(ds);
  const auto n = static_cast<Eigen::Index>(ds.num_records());
  const auto sd = static_cast<Eigen::Index>(ds.trajectories.front().observations.front().size());
  const auto ad = static_cast<Eigen::Index>(ds.trajectories.front().actions.front().size());
  TransitionTable tt;
  tt.states.resize(sd, n);
  tt.actions.resize(ad, n);
  tt.rewards.resize(n);
  tt.targets = Vector::Zero(n);
  Eigen::Index j = 0;
  for (const auto& t : ds.trajectories) {
    for (std::size_t i = 0; i < t.size(); ++i, ++j) {
      for (Eigen::Index d = 0; d < sd; ++d) tt.states(d, j) = t.observations[i][d];
      for (Eigen::Index d = 0; d < ad; ++d) tt.actions(d, j) = t.actions[i][d];
      tt.rewards(j) = t.rewards[i];
      tt.terminals.push_back(t.terminals[i]);
      tt.timeouts.push_back(t.timeouts[i]);
      tt.episode_last.push_back(i + 1 == t.size());
    }
  }
  return tt;
}

}  // namespace sfbc::envs
