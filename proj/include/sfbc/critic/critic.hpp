#pragma once

// Action evaluation model Q(s, a) and the iterative in-sample planning loop
// that produces its regression targets.

#include <functional>
#include <string>
#include <vector>

#include "sfbc/critic/planning.hpp"
#include "sfbc/diffusion/action_sampler.hpp"
#include "sfbc/envs/dataset.hpp"
#include "sfbc/error.hpp"
#include "sfbc/numerics/adam.hpp"
#include "sfbc/numerics/mlp.hpp"
#include "sfbc/numerics/random.hpp"
#include "sfbc/numerics/standardize.hpp"
#include "sfbc/policy/importance.hpp"

namespace sfbc::critic {

struct Critic {
  numerics::MlpSpec spec;
  numerics::MlpParams params;
  TargetStats stats;  // of the targets this critic was fit to
  int state_dim = 0;
  int action_dim = 0;
  numerics::Standardizer state_norm;

  Matrix input(const Matrix& states, const Matrix& actions) const {
    require(states.rows() == state_dim && actions.rows() == action_dim &&
                states.cols() == actions.cols(),
            ErrorKind::ShapeMismatch, "critic input shapes disagree");
    Matrix in(state_dim + action_dim, states.cols());
    in.topRows(state_dim) = state_norm.apply(states);
    in.bottomRows(action_dim) = actions;
    return in;
  }

  /// Q on the normalized target scale (what importance weights see).
  Vector predict_normalized(const Matrix& states, const Matrix& actions) const {
    return numerics::forward(spec, params, input(states, actions)).row(0).transpose();
  }

  /// Q on the raw return scale.
  Vector predict(const Matrix& states, const Matrix& actions) const {
    return stats.denormalize(predict_normalized(states, actions));
  }
};

struct CriticConfig {
  int hidden = 256;
  int depth = 2;
  int epochs = 100;
  int batch_size = 512;
  double lr = 1e-3;
};

template <class RngT>
Critic make_critic(int state_dim, int action_dim, const CriticConfig& cfg, RngT& rng) {
  Critic c;
  c.state_dim = state_dim;
  c.action_dim = action_dim;
  c.spec = numerics::MlpSpec::uniform(state_dim + action_dim, cfg.hidden, cfg.depth, 1,
                                      numerics::Activation::SiLU);
  c.params = numerics::init_params(c.spec, rng);
  return c;
}

using EpochLogger = std::function<void(int epoch, double mse)>;

/// Fresh critic regressed onto normalized targets with Adam (no target networks).
inline Critic fit_critic(const Matrix& states, const Matrix& actions,
                         const NormalizedTargets& targets, const CriticConfig& cfg,
                         std::uint64_t seed, const EpochLogger& log = {}) {
  require(states.cols() > 0 && states.cols() == actions.cols() &&
              targets.values.size() == states.cols(),
          ErrorKind::ShapeMismatch, "fit_critic: dataset and targets disagree");
  Rng rng(seed);
  Critic c = make_critic(static_cast<int>(states.rows()), static_cast<int>(actions.rows()), cfg, rng);
  c.stats = targets.stats;
  c.state_norm = numerics::Standardizer::fit(states);
  const Matrix inputs = c.input(states, actions);
  const Matrix y = targets.values.transpose();
  auto adam = numerics::AdamState::for_params(c.params);
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = numerics::permutation(inputs.cols(), rng);
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += batch) {
      const std::size_t end = std::min(order.size(), begin + batch);
      const Matrix x = numerics::gather_columns(inputs, order, begin, end);
      const Matrix t = numerics::gather_columns(y, order, begin, end);
      auto [loss, grads] = numerics::mlp_gradients(
          c.spec, c.params, x, [&](const Matrix& out) { return numerics::mean_squared_error(out, t); });
      if (!std::isfinite(loss))
        throw Error(ErrorKind::NonFinite,
                    "critic loss became non-finite at epoch " + std::to_string(epoch));
      numerics::adam_update(adam, c.params, grads, cfg.lr);
      loss_sum += loss;
      ++batches;
    }
    if (log) log(epoch, loss_sum / batches);
  }
  return c;
}

/// V = sum_m softmax(alpha q)_m q_m over candidate Q-values.
inline double estimate_state_value(std::span<const double> qvalues, double alpha) {
  return policy::softmax_weighted_mean(qvalues, alpha);
}

/// Monte Carlo + importance-sampling V for every state column, on the raw
/// return scale. Weights use the critic's normalized output; the affine
/// de-normalization commutes with the weighted mean.
template <diffusion::ActionSampler Sampler>
Vector estimate_state_values(const Matrix& states, const Critic& critic, const Sampler& behavior,
                             double alpha, int mc_samples, int batch_states, Rng& rng) {
  require(alpha >= 0.0 && mc_samples >= 1 && batch_states >= 1, ErrorKind::InvalidArgument,
          "estimate_state_values: need alpha >= 0, mc_samples >= 1, batch >= 1");
  const Eigen::Index n = states.cols();
  Vector v(n);
  std::vector<double> q(static_cast<std::size_t>(mc_samples));
  for (Eigen::Index begin = 0; begin < n; begin += batch_states) {
    const Eigen::Index b = std::min<Eigen::Index>(batch_states, n - begin);
    Matrix rep(states.rows(), b * mc_samples);
    for (Eigen::Index j = 0; j < b; ++j)
      rep.middleCols(j * mc_samples, mc_samples) = states.col(begin + j).replicate(1, mc_samples);
    const Matrix acts = behavior.sample(rep, rng);
    const Vector qn = critic.predict_normalized(rep, acts);
    require(qn.allFinite(), ErrorKind::NonFinite, "critic produced non-finite Q values");
    for (Eigen::Index j = 0; j < b; ++j) {
      for (int m = 0; m < mc_samples; ++m) q[static_cast<std::size_t>(m)] = qn(j * mc_samples + m);
      v(begin + j) = critic.stats.denormalize(estimate_state_value(q, alpha));
    }
  }
  return v;
}

/// Single-state convenience form.
template <diffusion::ActionSampler Sampler>
double estimate_state_value(const Vector& state, const Critic& critic, const Sampler& behavior,
                            double alpha, int mc_samples, Rng& rng) {
  return estimate_state_values(Matrix(state), critic, behavior, alpha, mc_samples, 1, rng)(0);
}

struct PlanningConfig {
  double gamma = 0.99;
  double alpha = 20.0;
  int mc_samples = 16;
  int iterations = 3;  // K
  int value_batch = 512;
  CriticConfig critic;
  std::uint64_t seed = 0;

  void validate() const {
    require(gamma > 0.0 && gamma <= 1.0, ErrorKind::InvalidArgument, "gamma must be in (0, 1]");
    require(alpha >= 0.0, ErrorKind::InvalidArgument, "alpha must be >= 0");
    require(mc_samples >= 1, ErrorKind::InvalidArgument, "mc_samples must be >= 1");
    require(iterations >= 1, ErrorKind::InvalidArgument, "K must be >= 1");
    require(critic.lr > 0.0 && critic.batch_size >= 1, ErrorKind::InvalidArgument,
            "critic learning rate and batch size must be positive");
  }
};

struct EvaluationResult {
  Critic critic;
  std::vector<Vector> target_history;  // R^(0) ... R^(K)
};

/// Called after every critic epoch with (iteration k, epoch, mse).
using IterationLogger = std::function<void(int k, int epoch, double mse)>;

/// K rounds of: normalize targets, fit a freshly initialized critic, estimate
/// V for every record under the current policy, recompute targets by planning.
template <diffusion::ActionSampler Sampler>
EvaluationResult train_evaluation_loop(const envs::TransitionTable& table, const Sampler& behavior,
                                       const PlanningConfig& cfg, const IterationLogger& log = {}) {
  cfg.validate();
  EvaluationResult result;
  result.target_history.push_back(vanilla_returns(table, cfg.gamma));
  for (int k = 1; k <= cfg.iterations; ++k) {
    const auto normalized = normalize_targets(result.target_history.back());
    EpochLogger epoch_log;
    if (log) epoch_log = [&](int epoch, double mse) { log(k, epoch, mse); };
    result.critic = fit_critic(table.states, table.actions, normalized, cfg.critic,
                               derive_seed(cfg.seed, static_cast<std::uint64_t>(k)), epoch_log);
    // fresh V samples every iteration
    Rng value_rng(derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(k)));
    const Vector values = estimate_state_values(table.states, result.critic, behavior, cfg.alpha,
                                                cfg.mc_samples, cfg.value_batch, value_rng);
    result.target_history.push_back(plan_targets(table, values, cfg.gamma));
  }
  return result;
}

}  // namespace sfbc::critic
