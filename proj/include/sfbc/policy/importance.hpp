#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "sfbc/error.hpp"

namespace sfbc::policy {

/// softmax(alpha * q), stabilized by subtracting max(alpha * q).
inline std::vector<double> importance_weights(std::span<const double> q, double alpha) {
  require(!q.empty(), ErrorKind::InvalidArgument, "importance_weights: no candidates");
  require(alpha >= 0.0, ErrorKind::InvalidArgument, "importance_weights: alpha must be >= 0");
  for (double v : q)
    require(std::isfinite(v), ErrorKind::NonFinite, "importance_weights: non-finite Q value");
  double top = -INFINITY;
  for (double v : q) top = std::max(top, alpha * v);
  std::vector<double> w(q.size());
  double total = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    w[i] = std::exp(alpha * q[i] - top);
    total += w[i];
  }
  for (double& x : w) x /= total;
  return w;
}

/// Self-normalized importance estimate of E_pi[Q]: sum_m w_m q_m.
inline double softmax_weighted_mean(std::span<const double> q, double alpha) {
  const auto w = importance_weights(q, alpha);
  double v = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) v += w[i] * q[i];
  return v;
}

}  // namespace sfbc::policy
