#pragma once

// Conditional score-based behavior model.
//
// The network predicts the noise eps_theta(a_t, s, t); the score is
// s_theta = -eps_theta / sigma_t. With that substitution the denoising loss
// || sigma_t s_theta + eps ||^2 becomes || eps - eps_theta ||^2, and the
// probability-flow ODE of the VP SDE becomes
//   da/dt = -1/2 beta(t) (a - eps_theta(a, s, t) / sigma_t).

#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "sfbc/diffusion/schedule.hpp"
#include "sfbc/error.hpp"
#include "sfbc/numerics/adam.hpp"
#include "sfbc/numerics/mlp.hpp"
#include "sfbc/numerics/random.hpp"
#include "sfbc/numerics/standardize.hpp"

namespace sfbc::diffusion {

using numerics::Matrix;
using numerics::Vector;

inline constexpr double kDefaultTMin = 1e-3;
inline constexpr double kActionBound = 1.0;

/// Sinusoidal features [sin(w_k t), cos(w_k t)] with w_k geometric in [1, 100].
inline Matrix time_embedding(const Vector& t, int dim) {
  require(dim >= 2 && dim % 2 == 0, ErrorKind::InvalidArgument,
          "time embedding dimension must be even and >= 2");
  const int half = dim / 2;
  Matrix emb(dim, t.size());
  for (int k = 0; k < half; ++k) {
    const double w = half == 1 ? 1.0 : std::pow(100.0, static_cast<double>(k) / (half - 1));
    for (Eigen::Index j = 0; j < t.size(); ++j) {
      emb(k, j) = std::sin(w * t(j));
      emb(half + k, j) = std::cos(w * t(j));
    }
  }
  return emb;
}

struct ScoreModel {
  numerics::MlpSpec spec;
  numerics::MlpParams params;
  NoiseSchedule schedule;
  int state_dim = 0;
  int action_dim = 0;
  int embed_dim = 16;
  numerics::Standardizer state_norm;  // applied to states before the network

  void validate() const {
    spec.validate();
    schedule.validate();
    numerics::check_shapes(spec, params);
    require(spec.input_width() == action_dim + state_dim + embed_dim, ErrorKind::ShapeMismatch,
            "score network input width must be action_dim + state_dim + embed_dim");
    require(spec.output_width() == action_dim, ErrorKind::ShapeMismatch,
            "score network output width must be action_dim");
  }

  Matrix network_input(const Matrix& noisy_actions, const Matrix& states, const Vector& t) const {
    require(noisy_actions.rows() == action_dim && states.rows() == state_dim &&
                noisy_actions.cols() == states.cols() && t.size() == states.cols(),
            ErrorKind::ShapeMismatch, "score model input shapes disagree");
    Matrix in(action_dim + state_dim + embed_dim, states.cols());
    in.topRows(action_dim) = noisy_actions;
    in.middleRows(action_dim, state_dim) = state_norm.apply(states);
    in.bottomRows(embed_dim) = time_embedding(t, embed_dim);
    return in;
  }

  /// eps_theta for a batch (one column per example).
  Matrix operator()(const Matrix& noisy_actions, const Matrix& states, const Vector& t) const {
    return numerics::forward(spec, params, network_input(noisy_actions, states, t));
  }
};

struct ScoreNetConfig {
  int hidden = 128;
  int depth = 3;
  int embed_dim = 16;
};

template <class RngT>
ScoreModel make_score_model(int state_dim, int action_dim, const ScoreNetConfig& net,
                            const NoiseSchedule& schedule, RngT& rng) {
  ScoreModel m;
  m.state_dim = state_dim;
  m.action_dim = action_dim;
  m.embed_dim = net.embed_dim;
  m.schedule = schedule;
  m.spec = numerics::MlpSpec::uniform(action_dim + state_dim + net.embed_dim, net.hidden,
                                      net.depth, action_dim, numerics::Activation::SiLU);
  m.params = numerics::init_params(m.spec, rng);
  m.validate();
  return m;
}

/// a_t = alpha_t a + sigma_t eps
inline Vector perturb_action(const NoiseSchedule& schedule, const Vector& action, const Vector& eps,
                             double t) {
  require(action.size() == eps.size(), ErrorKind::ShapeMismatch,
          "perturb_action: action and noise dimensions differ");
  const auto c = schedule.coeffs(t);
  return c.alpha * action + c.sigma * eps;
}

/// Squared residual || sigma_t s_theta + eps ||^2 for one example at fixed (t, eps).
template <class NoisePredictor>
double denoising_residual(const NoisePredictor& predict_noise, const NoiseSchedule& schedule,
                          const Vector& state, const Vector& action, double t, const Vector& eps) {
  const Vector noisy = perturb_action(schedule, action, eps, t);
  Vector tv(1);
  tv(0) = t;
  const Vector eps_hat = predict_noise(Matrix(noisy), Matrix(state), tv).col(0);
  return (eps - eps_hat).squaredNorm();
}

/// Monte Carlo denoising loss over a batch: t ~ U(t_min, 1), eps ~ N(0, I) per example.
template <class NoisePredictor>
double denoising_loss(const NoisePredictor& predict_noise, const NoiseSchedule& schedule,
                      const Matrix& states, const Matrix& actions, Rng& rng,
                      double t_min = kDefaultTMin) {
  require(states.cols() > 0, ErrorKind::InvalidArgument, "denoising_loss: empty batch");
  require(states.cols() == actions.cols(), ErrorKind::ShapeMismatch,
          "denoising_loss: states and actions disagree on batch size");
  const Eigen::Index n = states.cols();
  std::uniform_real_distribution<double> ut(t_min, 1.0);
  Vector t(n);
  for (Eigen::Index j = 0; j < n; ++j) t(j) = ut(rng);
  const Matrix eps = numerics::standard_normal(actions.rows(), n, rng);
  Matrix noisy(actions.rows(), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto c = schedule.coeffs(t(j));
    noisy.col(j) = c.alpha * actions.col(j) + c.sigma * eps.col(j);
  }
  const Matrix eps_hat = predict_noise(noisy, states, t);
  return (eps_hat - eps).colwise().squaredNorm().mean();
}

struct BehaviorTrainConfig {
  ScoreNetConfig net;
  NoiseSchedule schedule;
  int epochs = 200;
  int batch_size = 512;
  double lr = 1e-4;
  double t_min = kDefaultTMin;
  bool standardize_states = true;
  std::uint64_t seed = 0;
};

using EpochLogger = std::function<void(int epoch, double mean_loss)>;

/// Continue training `model` in place with Adam on the denoising loss.
inline void train_score_model(ScoreModel& model, const Matrix& states, const Matrix& actions,
                              const BehaviorTrainConfig& cfg, Rng& rng,
                              const EpochLogger& log = {}) {
  require(states.cols() > 0, ErrorKind::InvalidArgument, "train_behavior: empty dataset");
  require(states.cols() == actions.cols() && states.rows() == model.state_dim &&
              actions.rows() == model.action_dim,
          ErrorKind::ShapeMismatch, "train_behavior: dataset shape does not match model");
  require(cfg.batch_size >= 1 && cfg.lr > 0.0, ErrorKind::InvalidArgument,
          "train_behavior: batch size and learning rate must be positive");

  auto adam = numerics::AdamState::for_params(model.params);
  const Eigen::Index n = states.cols();
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  std::uniform_real_distribution<double> ut(cfg.t_min, 1.0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = numerics::permutation(n, rng);
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += batch) {
      const std::size_t end = std::min(order.size(), begin + batch);
      const Matrix s = numerics::gather_columns(states, order, begin, end);
      const Matrix a = numerics::gather_columns(actions, order, begin, end);
      const Eigen::Index b = s.cols();
      Vector t(b);
      for (Eigen::Index j = 0; j < b; ++j) t(j) = ut(rng);
      const Matrix eps = numerics::standard_normal(a.rows(), b, rng);
      Matrix noisy(a.rows(), b);
      for (Eigen::Index j = 0; j < b; ++j) {
        const auto c = model.schedule.coeffs(t(j));
        noisy.col(j) = c.alpha * a.col(j) + c.sigma * eps.col(j);
      }
      auto [loss, grads] = numerics::mlp_gradients(
          model.spec, model.params, model.network_input(noisy, s, t),
          [&](const Matrix& out) { return numerics::mean_squared_error(out, eps); });
      if (!std::isfinite(loss))
        throw Error(ErrorKind::NonFinite, "behavior loss became non-finite at epoch " +
                                              std::to_string(epoch));
      numerics::adam_update(adam, model.params, grads, cfg.lr);
      loss_sum += loss;
      ++batches;
    }
    if (log) log(epoch, loss_sum / batches);
  }
}

/// Fresh model trained on (states, actions). Seeded entirely by cfg.seed.
inline ScoreModel train_behavior(const Matrix& states, const Matrix& actions,
                                 const BehaviorTrainConfig& cfg, const EpochLogger& log = {}) {
  require(states.cols() > 0, ErrorKind::InvalidArgument, "train_behavior: empty dataset");
  Rng rng(cfg.seed);
  ScoreModel model = make_score_model(static_cast<int>(states.rows()),
                                      static_cast<int>(actions.rows()), cfg.net, cfg.schedule, rng);
  if (cfg.standardize_states) model.state_norm = numerics::Standardizer::fit(states);
  train_score_model(model, states, actions, cfg, rng, log);
  return model;
}

enum class OdeSolver { Euler, Heun };

inline std::string to_string(OdeSolver s) { return s == OdeSolver::Euler ? "euler" : "heun"; }

inline OdeSolver ode_solver_from_string(const std::string& name) {
  if (name == "euler") return OdeSolver::Euler;
  if (name == "heun") return OdeSolver::Heun;
  throw Error(ErrorKind::InvalidArgument, "unknown ODE solver '" + name + "'");
}

/// Integrates the probability-flow ODE from t = 1 down to t_min in `steps`
/// uniform steps, starting from `initial` (one column per sample). No clipping.
template <class NoisePredictor>
Matrix integrate_probability_flow(const NoisePredictor& predict_noise,
                                  const NoiseSchedule& schedule, const Matrix& states,
                                  const Matrix& initial, int steps,
                                  OdeSolver solver = OdeSolver::Heun,
                                  double t_min = kDefaultTMin) {
  require(steps >= 1, ErrorKind::InvalidArgument, "diffusion steps must be >= 1");
  require(states.cols() == initial.cols(), ErrorKind::ShapeMismatch,
          "one initial noise column per state is required");
  const Eigen::Index n = initial.cols();

  auto drift = [&](const Matrix& a, double t) {
    const auto c = schedule.coeffs(t);
    const Vector tv = Vector::Constant(n, t);
    const Matrix eps = predict_noise(a, states, tv);
    return Matrix(-0.5 * c.beta * (a - eps / c.sigma));
  };

  Matrix a = initial;
  const double h = (t_min - 1.0) / steps;
  for (int i = 0; i < steps; ++i) {
    const double t0 = 1.0 + i * h;
    const double t1 = i + 1 == steps ? t_min : 1.0 + (i + 1) * h;
    const Matrix k1 = drift(a, t0);
    if (solver == OdeSolver::Euler) {
      a += (t1 - t0) * k1;
    } else {
      const Matrix pred = a + (t1 - t0) * k1;
      const Matrix k2 = drift(pred, t1);
      a += 0.5 * (t1 - t0) * (k1 + k2);
    }
    if (!a.allFinite())
      throw Error(ErrorKind::NonFinite,
                  "probability-flow ODE produced non-finite values at t=" + std::to_string(t1));
  }
  return a;
}

inline Matrix clip_actions(Matrix a, double bound = kActionBound) {
  return a.cwiseMax(-bound).cwiseMin(bound);
}

struct SamplerSettings {
  int steps = 30;
  OdeSolver solver = OdeSolver::Heun;
  double t_min = kDefaultTMin;
};

/// One action per state column, each from its own N(0, I) start, clipped to bounds.
inline Matrix sample_actions(const ScoreModel& model, const Matrix& states,
                             const SamplerSettings& settings, Rng& rng) {
  const Matrix init = numerics::standard_normal(model.action_dim, states.cols(), rng);
  return clip_actions(integrate_probability_flow(model, model.schedule, states, init,
                                                 settings.steps, settings.solver, settings.t_min));
}

/// n behavior actions for a single state (columns of the result).
inline Matrix sample_behavior(const ScoreModel& model, const Vector& state, int n,
                              const SamplerSettings& settings, Rng& rng) {
  require(n >= 1, ErrorKind::InvalidArgument, "sample_behavior: n must be >= 1");
  require(state.size() == model.state_dim, ErrorKind::ShapeMismatch,
          "sample_behavior: state dimension mismatch");
  const Matrix states = state.replicate(1, n);
  return sample_actions(model, states, settings, rng);
}

/// Behavior sampler bound to solver settings; models the ActionSampler concept.
struct DiffusionSampler {
  const ScoreModel* model = nullptr;
  SamplerSettings settings;

  int action_dim() const { return model->action_dim; }
  Matrix sample(const Matrix& states, Rng& rng) const {
    return sample_actions(*model, states, settings, rng);
  }
};

}  // namespace sfbc::diffusion
