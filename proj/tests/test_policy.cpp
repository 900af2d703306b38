#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>

#include <cmath>
#include <vector>

#include "sfbc/policy/importance.hpp"
#include "sfbc/policy/sfbc_policy.hpp"

using namespace sfbc;
using namespace sfbc::policy;

namespace {

// Cycles through a fixed list of actions, one per column.
struct ListSampler {
  std::vector<double> actions;
  Matrix sample(const Matrix& states, Rng&) const {
    Matrix a(1, states.cols());
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      a(0, j) = actions[static_cast<std::size_t>(j) % actions.size()];
    return a;
  }
};

// Q(s, a) = scale * a + shift, via a single linear layer.
critic::Critic linear_critic(double scale = 1.0, double shift = 0.0) {
  critic::Critic c;
  c.state_dim = 1;
  c.action_dim = 1;
  c.spec = numerics::MlpSpec{{2, 1}, {}, numerics::Activation::Identity};
  Matrix w(1, 2);
  w << 0.0, scale;
  c.params.layers.push_back({w, Vector::Constant(1, shift)});
  return c;
}

Vector state0() { return Vector::Zero(1); }

}  // namespace

TEST(ImportanceWeights, SumToOneAndFollowSoftmax) {
  const std::vector<double> q = {1.0, 0.0};
  const auto w = importance_weights(q, std::log(3.0));
  EXPECT_NEAR(w[0], 0.75, 1e-15);
  EXPECT_NEAR(w[1], 0.25, 1e-15);
  const auto u = importance_weights(std::vector<double>{3, -2, 8, 0}, 0.0);
  for (double x : u) EXPECT_DOUBLE_EQ(x, 0.25);
}

TEST(ImportanceWeights, StableForLargeProducts) {
  const auto w = importance_weights(std::vector<double>{1000.0, 999.0}, 50.0);
  EXPECT_TRUE(std::isfinite(w[0]) && std::isfinite(w[1]));
  EXPECT_NEAR(w[0] + w[1], 1.0, 1e-15);
  EXPECT_GT(w[0], 0.999);
}

TEST(ImportanceWeights, RejectInvalidInput) {
  EXPECT_THROW(importance_weights(std::vector<double>{}, 1.0), Error);
  EXPECT_THROW(importance_weights(std::vector<double>{1.0}, -1.0), Error);
  EXPECT_THROW(importance_weights(std::vector<double>{1.0, NAN}, 1.0), Error);
}

TEST(Selection, SingleCandidateIsReturnedAsIs) {
  const ListSampler s{{0.37}};
  const auto q = linear_critic();
  PolicyConfig cfg;
  cfg.candidates = 1;
  Rng rng(1);
  EXPECT_EQ(select_action_stochastic(state0(), s, q, cfg, rng)(0), 0.37);
  EXPECT_EQ(select_action_eval(state0(), s, q, cfg, rng)(0), 0.37);
}

TEST(Selection, ZeroAlphaResamplesUniformly) {
  const ListSampler s{{-0.9, -0.3, 0.3, 0.9}};
  const auto q = linear_critic();
  PolicyConfig cfg;
  cfg.candidates = 4;
  cfg.alpha = 0.0;
  Rng rng(2);
  const int draws = 40000;
  std::vector<int> counts(4, 0);
  for (int i = 0; i < draws; ++i) {
    const double a = select_action_stochastic(state0(), s, q, cfg, rng)(0);
    for (std::size_t k = 0; k < 4; ++k)
      if (a == s.actions[k]) ++counts[k];
  }
  double chi2 = 0.0;
  const double expected = draws / 4.0;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  const boost::math::chi_squared dist(3);
  EXPECT_GT(boost::math::cdf(boost::math::complement(dist, chi2)), 1e-3) << "chi2=" << chi2;
}

TEST(Selection, HugeAlphaIsGreedy) {
  const ListSampler s{{-0.9, 0.8, 0.1, 0.79}};
  const auto q = linear_critic();
  PolicyConfig cfg;
  cfg.candidates = 4;
  cfg.alpha = 1e6;
  Rng rng(3);
  for (int i = 0; i < 200; ++i) EXPECT_EQ(select_action_stochastic(state0(), s, q, cfg, rng)(0), 0.8);
}

TEST(Selection, ResamplingFrequenciesFollowSoftmax) {
  const ListSampler s{{0.0, 1.0}};
  const auto q = linear_critic();
  PolicyConfig cfg;
  cfg.candidates = 2;
  cfg.alpha = std::log(3.0);
  Rng rng(4);
  const int draws = 20000;
  int ones = 0;
  for (int i = 0; i < draws; ++i) ones += select_action_stochastic(state0(), s, q, cfg, rng)(0) == 1.0;
  const double se = std::sqrt(0.75 * 0.25 / draws);
  EXPECT_NEAR(static_cast<double>(ones) / draws, 0.75, 4 * se);
}

TEST(TopK, PicksLargestAndBreaksTiesByIndex) {
  EXPECT_EQ(top_k_indices(Vector{{0.1, 0.9, 0.5}}, 2), (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(top_k_indices(Vector{{0.5, 0.5, 0.5}}, 2), (std::vector<std::size_t>{0, 1}));
  EXPECT_THROW(top_k_indices(Vector{{0.1}}, 2), Error);
  EXPECT_THROW(top_k_indices(Vector{{0.1}}, 0), Error);
}

TEST(TopK, AveragesTheBestCandidates) {
  Candidates c{Matrix{{-1.0, 0.6, 0.2, 0.4}}, Vector{{0.0, 3.0, 1.0, 2.0}}};
  EXPECT_DOUBLE_EQ(pick_top_k(c, 1)(0), 0.6);
  EXPECT_DOUBLE_EQ(pick_top_k(c, 2)(0), 0.5);
  EXPECT_DOUBLE_EQ(pick_top_k(c, 4)(0), 0.05);
}

TEST(TopK, StaysInsideTheCandidateHull) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const int m = 1 + trial % 12;
    Candidates c{numerics::standard_normal(2, m, rng), numerics::standard_normal(m, 1, rng)};
    const int k = 1 + trial % m;
    const Vector a = pick_top_k(c, k);
    for (int d = 0; d < 2; ++d) {
      EXPECT_GE(a(d), c.actions.row(d).minCoeff() - 1e-15);
      EXPECT_LE(a(d), c.actions.row(d).maxCoeff() + 1e-15);
    }
  }
}

TEST(Selection, EvalPickIsInvariantToPositiveAffineCritic) {
  const ListSampler s{{-0.5, 0.2, 0.7, -0.1}};
  PolicyConfig cfg;
  cfg.candidates = 4;
  Rng r1(6), r2(6);
  const double a = select_action_eval(state0(), s, linear_critic(), cfg, r1)(0);
  const double b = select_action_eval(state0(), s, linear_critic(17.0, -4.0), cfg, r2)(0);
  EXPECT_EQ(a, 0.7);
  EXPECT_EQ(a, b);
}

TEST(Selection, BatchEvalMatchesPerState) {
  const ListSampler s{{-0.5, 0.2, 0.7, -0.1}};
  PolicyConfig cfg;
  cfg.candidates = 4;
  cfg.top_k = 2;
  const auto q = linear_critic();
  const Matrix states{{0.0, 0.3, -0.2}};
  Rng rng(7);
  const Matrix batch = select_actions_eval_batch(states, s, q, cfg, rng);
  for (Eigen::Index j = 0; j < states.cols(); ++j)
    EXPECT_DOUBLE_EQ(batch(0, j), select_action_eval(states.col(j), s, q, cfg, rng)(0));
}

TEST(PolicyConfig, RejectsInvalidSettings) {
  PolicyConfig cfg;
  cfg.candidates = 0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.top_k = cfg.candidates + 1;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.alpha = -1;
  EXPECT_THROW(cfg.validate(), Error);
}
