#include <gtest/gtest.h>

#include "sfbc/lab/propositions.hpp"
#include "sfbc/lab/tabular.hpp"

using namespace sfbc;
using namespace sfbc::lab;

namespace {

// s0 -> s1 with reward 0, s1 -> terminal with reward 1; one action, gamma 0.5.
TabularMDP chain() {
  TabularMDP m;
  m.n_states = 2;
  m.n_actions = 1;
  m.gamma = 0.5;
  m.transitions = Matrix{{0.0, 1.0}, {0.0, 1.0}};
  m.rewards = Matrix{{0.0}, {1.0}};
  m.done = Matrix{{0.0}, {1.0}};
  return m;
}

TabularPolicy uniform(int s, int a) { return TabularPolicy::Constant(s, a, 1.0 / a); }

double max_excess(const QTable& lo, const QTable& hi) { return (lo - hi).maxCoeff(); }

}  // namespace

TEST(Chain, TwoBackupsReachTheExactValues) {
  const auto m = chain();
  const auto pi = uniform(2, 1);
  QTable q = QTable::Zero(2, 1);
  for (int i = 0; i < 2; ++i) q = bellman_expectation(m, q, pi);
  EXPECT_EQ(q, (QTable{{0.5}, {1.0}}));
  EXPECT_TRUE(exact_values(m, pi).isApprox(q, 1e-15));
  const auto fp = fixed_point([&](const QTable& x) { return planning_operator(m, x, pi, pi, 8); },
                              QTable(QTable::Zero(2, 1)));
  EXPECT_LT((fp.table - q).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(PlanningOperator, ZeroHorizonIsTheExpectationBackup) {
  Rng rng(1);
  for (int t = 0; t < 50; ++t) {
    const auto m = random_mdp(rng);
    const auto pi = random_policy(m.n_states, m.n_actions, rng);
    const auto mu = random_policy(m.n_states, m.n_actions, rng);
    const QTable q = random_table(m.n_states, m.n_actions, -5, 5, rng);
    EXPECT_EQ(planning_operator(m, q, pi, mu, 0), bellman_expectation(m, q, pi));
  }
}

TEST(PlanningOperator, DominatesExpectationBackupAndGrowsWithHorizon) {
  Rng rng(2);
  for (int t = 0; t < 50; ++t) {
    const auto m = random_mdp(rng);
    const auto pi = random_policy(m.n_states, m.n_actions, rng);
    const auto mu = random_policy(m.n_states, m.n_actions, rng);
    const QTable q = random_table(m.n_states, m.n_actions, -5, 5, rng);
    const QTable t0 = bellman_expectation(m, q, pi);
    QTable prev = t0;
    for (int n : {1, 2, 4, 8, 16}) {
      const QTable cur = planning_operator(m, q, pi, mu, n);
      EXPECT_LE(max_excess(prev, cur), 0.0);
      prev = cur;
    }
  }
}

TEST(PlanningOperator, ArgmaxHorizonReproducesTheValue) {
  Rng rng(3);
  const auto m = random_mdp(rng);
  const auto pi = random_policy(m.n_states, m.n_actions, rng);
  const auto mu = random_policy(m.n_states, m.n_actions, rng);
  const QTable q = random_table(m.n_states, m.n_actions, 0, 10, rng);
  const auto d = planning_operator_detailed(m, q, pi, mu, 6);
  for (int s = 0; s < m.n_states; ++s)
    for (int a = 0; a < m.n_actions; ++a)
      EXPECT_DOUBLE_EQ(d.value(s, a), n_step_operator(m, q, pi, mu, d.argmax_n(s, a))(s, a));
  EXPECT_THROW(planning_operator(m, q, pi, mu, -1), Error);
}

TEST(PlanningOperator, GreedyPolicyFixedPointIsOptimal) {
  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    const auto m = random_mdp(rng);
    const QTable q_star = exact_optimal(m);
    const auto pi = greedy_policy(q_star);
    const auto mu = random_policy(m.n_states, m.n_actions, rng);
    const auto fp = fixed_point(
        [&](const QTable& x) { return planning_operator(m, x, pi, mu, default_planning_horizon(m)); },
        QTable(QTable::Zero(m.n_states, m.n_actions)), 1e-12, kLabMaxIters);
    EXPECT_LT((fp.table - q_star).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(ExactValues, AgreesWithIteratedBackups) {
  Rng rng(5);
  for (int t = 0; t < 30; ++t) {
    const auto m = random_mdp(rng);
    const auto pi = random_policy(m.n_states, m.n_actions, rng);
    const auto fp = fixed_point([&](const QTable& x) { return bellman_expectation(m, x, pi); },
                                QTable(QTable::Zero(m.n_states, m.n_actions)), 1e-13);
    EXPECT_LT((fp.table - exact_values(m, pi)).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(ExactValues, ZeroDiscountGivesImmediateRewards) {
  Rng rng(6);
  auto m = random_mdp(rng);
  m.gamma = 0.0;
  const auto pi = random_policy(m.n_states, m.n_actions, rng);
  EXPECT_TRUE(exact_values(m, pi).isApprox(m.rewards, 1e-15));
}

TEST(ExactOptimal, DominatesEveryPolicy) {
  Rng rng(7);
  for (int t = 0; t < 30; ++t) {
    const auto m = random_mdp(rng);
    const QTable q_star = exact_optimal(m);
    const auto pi = random_policy(m.n_states, m.n_actions, rng);
    EXPECT_LE(max_excess(exact_values(m, pi), q_star), 1e-10);
    // Q* is a fixed point of the optimality backup
    EXPECT_LT((bellman_optimality(m, q_star) - q_star).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Expectile, HalfRecoversBehaviorValue) {
  Rng rng(8);
  for (int t = 0; t < 20; ++t) {
    const auto m = random_mdp(rng, {6, 3, true});
    const auto mu = random_policy(m.n_states, m.n_actions, rng);
    const VTable v_mu = policy_value(exact_values(m, mu), mu);
    const auto fp = fixed_point([&](const VTable& v) { return vem_operator(m, v, mu, 0.5); },
                                VTable(VTable::Zero(m.n_states)), 1e-13);
    EXPECT_LT((fp.table - v_mu).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Expectile, FixedPointGrowsWithTau) {
  Rng rng(9);
  const auto m = random_mdp(rng, {6, 3, true});
  const auto mu = random_policy(m.n_states, m.n_actions, rng);
  VTable prev;
  for (double tau : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    const auto fp = fixed_point([&](const VTable& v) { return vem_operator(m, v, mu, tau); },
                                VTable(VTable::Zero(m.n_states)), 1e-12);
    if (prev.size()) EXPECT_TRUE(((fp.table - prev).array() >= -1e-9).all()) << tau;
    prev = fp.table;
  }
}

TEST(Expectile, RejectsStochasticTransitionsAndBadTau) {
  Rng rng(10);
  const auto m = random_mdp(rng, {4, 2, false});
  const auto mu = random_policy(m.n_states, m.n_actions, rng);
  try {
    vem_operator(m, VTable::Zero(m.n_states), mu, 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Unsupported);
  }
  const auto d = random_mdp(rng, {4, 2, true});
  EXPECT_THROW(vem_operator(d, VTable::Zero(d.n_states), random_policy(d.n_states, d.n_actions, rng), 1.0),
               Error);
}

TEST(ExpectedMax, SingleDrawIsTheBehaviorAverage) {
  Rng rng(11);
  const QTable q = random_table(5, 4, -1, 1, rng);
  const auto mu = random_policy(5, 4, rng);
  EXPECT_LT((expected_max_value(q, mu, 1) - policy_value(q, mu)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(ExpectedMax, ManyDrawsApproachTheMaxOverSupport) {
  Rng rng(12);
  const QTable q = random_table(5, 4, -1, 1, rng);
  const auto mu = random_policy(5, 4, rng);
  EXPECT_LT((expected_max_value(q, mu, 100000) - q.rowwise().maxCoeff()).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_THROW(expected_max_value(q, mu, 0), Error);
}

TEST(ExpectedMax, OneActionIsThatAction) {
  const QTable q{{0.3}, {-2.0}};
  const TabularPolicy mu{{1.0}, {1.0}};
  for (long n : {1L, 5L, 1000L}) EXPECT_EQ(expected_max_value(q, mu, n), (VTable{{0.3, -2.0}}));
}

TEST(ExpectedMax, HandComputedTwoActions) {
  // mu = (1/2, 1/2) over q = (0, 1): E[max of 2] = 1 - 1/4
  const QTable q{{0.0, 1.0}};
  const TabularPolicy mu{{0.5, 0.5}};
  EXPECT_DOUBLE_EQ(expected_max_value(q, mu, 2)(0), 0.75);
}

TEST(TabularMdp, ValidateRejectsBadRows) {
  auto m = chain();
  m.transitions(0, 1) = 0.9;
  EXPECT_THROW(m.validate(), Error);
  m = chain();
  m.gamma = 1.0;
  EXPECT_THROW(m.validate(), Error);
}

TEST(FixedPoint, ReportsNonConvergence) {
  auto op = [](const VTable& v) { return VTable(v.array() + 1.0); };
  try {
    fixed_point(op, VTable(VTable::Zero(1)), 1e-10, 5);
    FAIL();
  } catch (const NotConvergedError& e) {
    EXPECT_DOUBLE_EQ(e.residual(), 1.0);
  }
}

TEST(Propositions, CleanOperatorHasNoViolations) {
  const auto rep = check_propositions(20, 123, default_planning_op(), 1);
  EXPECT_EQ(rep.trials, 20);
  EXPECT_EQ(rep.violations, 0);
  EXPECT_EQ(rep.rows.size(), 20u * 4);
  EXPECT_LE(rep.max_contraction_ratio, 1.0 + 1e-9);
}

TEST(Propositions, ResultsDoNotDependOnWorkerCount) {
  const auto a = check_propositions(8, 5, default_planning_op(), 1);
  const auto b = check_propositions(8, 5, default_planning_op(), 3);
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].check, b.rows[i].check);
    EXPECT_EQ(a.rows[i].max_violation, b.rows[i].max_violation);
  }
  EXPECT_EQ(a.fast_contraction_hits, b.fast_contraction_hits);
}

TEST(Propositions, InflatedOperatorIsCaught) {
  auto faulty = [](const TabularMDP& m, const QTable& q, const TabularPolicy& pi,
                   const TabularPolicy& mu, int n) {
    return QTable(planning_operator(m, q, pi, mu, n) + 0.5 * q);
  };
  const auto rep = check_propositions(5, 9, faulty, 1);
  EXPECT_GT(rep.violations, 0);
  bool has_json = false;
  for (const auto& r : rep.rows) has_json = has_json || !r.mdp_json.empty();
  EXPECT_TRUE(has_json);
}

TEST(Propositions, RejectsZeroTrials) {
  EXPECT_THROW(check_propositions(0, 1), Error);
}
