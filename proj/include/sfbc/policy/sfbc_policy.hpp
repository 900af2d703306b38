#pragma once

// Selecting from behavior candidates: draw M actions from the behavior model,
// score them with the critic, then resample (training) or take the best (eval).

#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

#include "sfbc/critic/critic.hpp"
#include "sfbc/diffusion/action_sampler.hpp"
#include "sfbc/error.hpp"
#include "sfbc/numerics/random.hpp"
#include "sfbc/policy/importance.hpp"

namespace sfbc::policy {

using numerics::Matrix;
using numerics::Vector;

struct PolicyConfig {
  int candidates = 32;  // M
  double alpha = 20.0;
  int top_k = 1;

  void validate() const {
    require(candidates >= 1, ErrorKind::InvalidArgument, "candidate count must be >= 1");
    require(top_k >= 1 && top_k <= candidates, ErrorKind::InvalidArgument,
            "top_k must be in [1, candidates]");
    require(alpha >= 0.0, ErrorKind::InvalidArgument, "alpha must be >= 0");
  }
};

struct Candidates {
  Matrix actions;  // action_dim x M
  Vector q;        // normalized-scale Q per candidate
};

template <diffusion::ActionSampler Sampler>
Candidates draw_candidates(const Vector& state, const Sampler& behavior,
                           const critic::Critic& q_model, int count, Rng& rng) {
  const Matrix states = state.replicate(1, count);
  Candidates c;
  c.actions = behavior.sample(states, rng);
  c.q = q_model.predict_normalized(states, c.actions);
  return c;
}

/// Index drawn from a categorical distribution.
inline std::size_t resample_index(std::span<const double> weights, Rng& rng) {
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  return pick(rng);
}

/// Indices of the k largest Q values; ties go to the lower index.
inline std::vector<std::size_t> top_k_indices(const Vector& q, int k) {
  require(k >= 1 && k <= q.size(), ErrorKind::InvalidArgument, "top_k out of range");
  std::vector<std::size_t> idx(static_cast<std::size_t>(q.size()));
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return q(static_cast<Eigen::Index>(a)) > q(static_cast<Eigen::Index>(b));
  });
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

/// Mean of the top-k candidates by Q (the argmax candidate when k = 1).
inline Vector pick_top_k(const Candidates& c, int k) {
  Vector a = Vector::Zero(c.actions.rows());
  for (auto i : top_k_indices(c.q, k)) a += c.actions.col(static_cast<Eigen::Index>(i));
  return a / static_cast<double>(k);
}

/// One of the candidates, chosen with probability softmax(alpha * Q).
inline Vector resample_candidate(const Candidates& c, double alpha, Rng& rng) {
  const std::vector<double> q(c.q.data(), c.q.data() + c.q.size());
  const auto w = importance_weights(q, alpha);
  return c.actions.col(static_cast<Eigen::Index>(resample_index(w, rng)));
}

template <diffusion::ActionSampler Sampler>
Vector select_action_stochastic(const Vector& state, const Sampler& behavior,
                                const critic::Critic& q_model, const PolicyConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto c = draw_candidates(state, behavior, q_model, cfg.candidates, rng);
  return resample_candidate(c, cfg.alpha, rng);
}

template <diffusion::ActionSampler Sampler>
Vector select_action_eval(const Vector& state, const Sampler& behavior,
                          const critic::Critic& q_model, const PolicyConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto c = draw_candidates(state, behavior, q_model, cfg.candidates, rng);
  return pick_top_k(c, cfg.top_k);
}

/// select_action_eval for every state column at once (one joint sampler batch).
template <diffusion::ActionSampler Sampler>
Matrix select_actions_eval_batch(const Matrix& states, const Sampler& behavior,
                                 const critic::Critic& q_model, const PolicyConfig& cfg,
                                 Rng& rng) {
  cfg.validate();
  const Eigen::Index n = states.cols();
  const int m = cfg.candidates;
  Matrix rep(states.rows(), n * m);
  for (Eigen::Index j = 0; j < n; ++j) rep.middleCols(j * m, m) = states.col(j).replicate(1, m);
  const Matrix acts = behavior.sample(rep, rng);
  const Vector q = q_model.predict_normalized(rep, acts);
  Matrix out(acts.rows(), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    Candidates c{acts.middleCols(j * m, m), q.segment(j * m, m)};
    out.col(j) = pick_top_k(c, cfg.top_k);
  }
  return out;
}

}  // namespace sfbc::policy
