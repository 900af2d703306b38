#pragma once

#include <cmath>
#include <cstdint>

#include "sfbc/numerics/mlp.hpp"

namespace sfbc::numerics {

struct AdamState {
  MlpParams first_moment;
  MlpParams second_moment;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_params(const MlpParams& params, double beta1 = 0.9, double beta2 = 0.999,
                              double eps = 1e-8) {
    return AdamState{params.zeros_like(), params.zeros_like(), 0, beta1, beta2, eps};
  }
};

inline bool all_finite(const MlpParams& p) {
  for (const auto& l : p.layers)
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  return true;
}

/// One bias-corrected Adam step, in place. Non-finite gradients are rejected
/// before anything is touched.
inline void adam_update(AdamState& state, MlpParams& params, const Gradients& grads, double lr) {
  require(params.same_shape(grads) && params.same_shape(state.first_moment) &&
              params.same_shape(state.second_moment),
          ErrorKind::ShapeMismatch, "adam: gradient/moment shapes do not match parameters");
  require(all_finite(grads), ErrorKind::NonFinite, "adam: gradients contain NaN or Inf");

  state.step += 1;
  const double b1 = state.beta1;
  const double b2 = state.beta2;
  const double t = static_cast<double>(state.step);
  // beta = 0 degenerates to no correction
  const double c1 = b1 > 0.0 ? 1.0 - std::pow(b1, t) : 1.0;
  const double c2 = b2 > 0.0 ? 1.0 - std::pow(b2, t) : 1.0;

  auto step_block = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.eps);
  };
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    step_block(params.layers[i].weight, state.first_moment.layers[i].weight,
               state.second_moment.layers[i].weight, grads.layers[i].weight);
    step_block(params.layers[i].bias, state.first_moment.layers[i].bias,
               state.second_moment.layers[i].bias, grads.layers[i].bias);
  }
}

}  // namespace sfbc::numerics
