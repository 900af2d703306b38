#pragma once

// Per-feature affine input scaling, (x - mean) / scale, fit on training data.
// An empty standardizer is the identity.

#include <cmath>

#include "sfbc/error.hpp"
#include "sfbc/numerics/mlp.hpp"

namespace sfbc::numerics {

struct Standardizer {
  Vector mean;
  Vector scale;

  bool empty() const { return mean.size() == 0; }

  /// Population mean and std per row; near-constant rows keep scale 1.
  static Standardizer fit(const Matrix& x) {
    require(x.cols() > 0, ErrorKind::InvalidArgument, "Standardizer::fit: empty data");
    Standardizer s;
    s.mean = x.rowwise().mean();
    s.scale = (x.colwise() - s.mean).array().square().rowwise().mean().sqrt().matrix();
    for (Eigen::Index i = 0; i < s.scale.size(); ++i)
      if (!(s.scale(i) > 1e-12)) s.scale(i) = 1.0;
    return s;
  }

  Matrix apply(const Matrix& x) const {
    if (empty()) return x;
    require(x.rows() == mean.size(), ErrorKind::ShapeMismatch,
            "standardizer width does not match input rows");
    return ((x.colwise() - mean).array().colwise() / scale.array()).matrix();
  }
};

}  // namespace sfbc::numerics
