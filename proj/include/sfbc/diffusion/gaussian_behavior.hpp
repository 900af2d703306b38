#pragma once

// Unimodal baseline: tanh-squashed diagonal Gaussian fit by maximum likelihood.

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sfbc/diffusion/score_model.hpp"
#include "sfbc/error.hpp"
#include "sfbc/numerics/adam.hpp"
#include "sfbc/numerics/mlp.hpp"
#include "sfbc/numerics/random.hpp"

namespace sfbc::diffusion {

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;
// Data actions at the bounds would map to infinite pre-squash values.
inline constexpr double kSquashClip = 0.999;

struct GaussianBehavior {
  numerics::MlpSpec spec;
  numerics::MlpParams params;
  int state_dim = 0;
  int action_dim = 0;
  numerics::Standardizer state_norm;

  void validate() const {
    numerics::check_shapes(spec, params);
    require(spec.input_width() == state_dim && spec.output_width() == 2 * action_dim,
            ErrorKind::ShapeMismatch, "gaussian behavior network shape mismatch");
  }

  struct Heads {
    Matrix mean;
    Matrix log_std;   // clamped
    Matrix raw_log_std;
  };

  Heads heads(const Matrix& states) const {
    const Matrix out = numerics::forward(spec, params, state_norm.apply(states));
    Heads h;
    h.mean = out.topRows(action_dim);
    h.raw_log_std = out.bottomRows(action_dim);
    h.log_std = h.raw_log_std.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
    return h;
  }

  int dim() const { return action_dim; }

  /// Squashed samples, one per state column.
  Matrix sample(const Matrix& states, Rng& rng) const {
    const Heads h = heads(states);
    const Matrix xi = numerics::standard_normal(action_dim, states.cols(), rng);
    return (h.mean.array() + h.log_std.array().exp() * xi.array()).tanh().matrix();
  }

  /// tanh(mean): the mode of the pre-squash Gaussian pushed through the squash.
  Matrix mean_action(const Matrix& states) const { return heads(states).mean.array().tanh().matrix(); }

  /// Per-example log-density of squashed actions, including the tanh Jacobian.
  Vector log_prob(const Matrix& states, const Matrix& actions) const {
    const Heads h = heads(states);
    const Matrix a = actions.cwiseMax(-kSquashClip).cwiseMin(kSquashClip);
    const Matrix z = a.array().atanh().matrix();
    const Matrix zscore = ((z - h.mean).array() / h.log_std.array().exp()).matrix();
    const double log_norm = 0.5 * std::log(2.0 * std::numbers::pi);
    Vector lp(states.cols());
    for (Eigen::Index j = 0; j < states.cols(); ++j) {
      double s = 0.0;
      for (Eigen::Index d = 0; d < action_dim; ++d)
        s += -h.log_std(d, j) - 0.5 * zscore(d, j) * zscore(d, j) - log_norm -
             std::log1p(-a(d, j) * a(d, j));
      lp(j) = s;
    }
    return lp;
  }
};

struct GaussianTrainConfig {
  int hidden = 128;
  int depth = 3;
  int epochs = 200;
  int batch_size = 512;
  double lr = 3e-4;
  std::uint64_t seed = 0;
};

inline GaussianBehavior train_gaussian_behavior(const Matrix& states, const Matrix& actions,
                                                const GaussianTrainConfig& cfg,
                                                const EpochLogger& log = {}) {
  require(states.cols() > 0 && states.cols() == actions.cols(), ErrorKind::InvalidArgument,
          "train_gaussian_behavior: empty or mismatched dataset");
  Rng rng(cfg.seed);
  GaussianBehavior g;
  g.state_dim = static_cast<int>(states.rows());
  g.action_dim = static_cast<int>(actions.rows());
  g.spec = numerics::MlpSpec::uniform(g.state_dim, cfg.hidden, cfg.depth, 2 * g.action_dim,
                                      numerics::Activation::ReLU);
  g.params = numerics::init_params(g.spec, rng);
  g.state_norm = numerics::Standardizer::fit(states);
  const Matrix inputs = g.state_norm.apply(states);

  const Matrix z_all =
      actions.cwiseMax(-kSquashClip).cwiseMin(kSquashClip).array().atanh().matrix();
  auto adam = numerics::AdamState::for_params(g.params);
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  const int ad = g.action_dim;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = numerics::permutation(states.cols(), rng);
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += batch) {
      const std::size_t end = std::min(order.size(), begin + batch);
      const Matrix s = numerics::gather_columns(inputs, order, begin, end);
      const Matrix z = numerics::gather_columns(z_all, order, begin, end);
      const double n = static_cast<double>(s.cols());
      // Negative log-likelihood in pre-squash space; the Jacobian term is constant in theta.
      auto [loss, grads] = numerics::mlp_gradients(g.spec, g.params, s, [&](const Matrix& out) {
        numerics::LossAndGrad lg;
        lg.output_grad = Matrix::Zero(out.rows(), out.cols());
        double total = 0.0;
        for (Eigen::Index j = 0; j < out.cols(); ++j) {
          for (Eigen::Index d = 0; d < ad; ++d) {
            const double mean = out(d, j);
            const double raw = out(ad + d, j);
            const double ls = std::clamp(raw, kLogStdMin, kLogStdMax);
            const double zs = (z(d, j) - mean) * std::exp(-ls);
            total += ls + 0.5 * zs * zs;
            lg.output_grad(d, j) = -zs * std::exp(-ls) / n;
            lg.output_grad(ad + d, j) =
                (raw > kLogStdMin && raw < kLogStdMax) ? (1.0 - zs * zs) / n : 0.0;
          }
        }
        lg.loss = total / n;
        return lg;
      });
      if (!std::isfinite(loss))
        throw Error(ErrorKind::NonFinite, "gaussian behavior loss became non-finite at epoch " +
                                              std::to_string(epoch));
      numerics::adam_update(adam, g.params, grads, cfg.lr);
      loss_sum += loss;
      ++batches;
    }
    if (log) log(epoch, loss_sum / batches);
  }
  return g;
}

}  // namespace sfbc::diffusion
