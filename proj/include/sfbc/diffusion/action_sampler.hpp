#pragma once

#include <concepts>

#include "sfbc/numerics/mlp.hpp"
#include "sfbc/numerics/random.hpp"

namespace sfbc::diffusion {

/// Anything that draws one behavior action per state column.
template <class S>
concept ActionSampler = requires(const S& s, const numerics::Matrix& states, Rng& rng) {
  { s.sample(states, rng) } -> std::convertible_to<numerics::Matrix>;
};

}  // namespace sfbc::diffusion
