#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "sfbc/numerics/mlp.hpp"

namespace sfbc {

/// The one RNG type used across the library; every stream is explicitly seeded.
using Rng = std::mt19937_64;

/// Child seed derived from a parent seed and a stream index (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace numerics {

inline Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n01(rng);
  return m;
}

inline std::vector<Eigen::Index> permutation(Eigen::Index n, Rng& rng) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

/// Columns of `src` picked by `idx[begin, end)`.
inline Matrix gather_columns(const Matrix& src, const std::vector<Eigen::Index>& idx,
                             std::size_t begin, std::size_t end) {
  Matrix out(src.rows(), static_cast<Eigen::Index>(end - begin));
  for (std::size_t j = begin; j < end; ++j)
    out.col(static_cast<Eigen::Index>(j - begin)) = src.col(idx[j]);
  return out;
}

}  // namespace numerics
}  // namespace sfbc
