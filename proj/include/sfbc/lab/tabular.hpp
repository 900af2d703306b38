#pragma once

// Finite MDPs and the exact Bellman-family operators on Q/V tables.
//
// Indexing: P has one row per (s, a) pair at row s * n_actions + a and one
// column per next state. A set `done(s, a)` flag ends the episode after that
// transition, so nothing is bootstrapped from it.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sfbc/error.hpp"
#include "sfbc/numerics/random.hpp"

namespace sfbc::lab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using QTable = Matrix;         // n_states x n_actions
using VTable = Vector;         // n_states
using TabularPolicy = Matrix;  // n_states x n_actions, rows sum to 1

struct TabularMDP {
  int n_states = 0;
  int n_actions = 0;
  Matrix transitions;  // (n_states * n_actions) x n_states
  Matrix rewards;      // n_states x n_actions
  Matrix done;         // n_states x n_actions, 0 or 1
  double gamma = 0.9;

  Eigen::Index row(int s, int a) const { return static_cast<Eigen::Index>(s) * n_actions + a; }

  void validate() const {
    require(n_states >= 1 && n_actions >= 1, ErrorKind::InvalidArgument, "empty MDP");
    require(transitions.rows() == n_states * n_actions && transitions.cols() == n_states &&
                rewards.rows() == n_states && rewards.cols() == n_actions &&
                done.rows() == n_states && done.cols() == n_actions,
            ErrorKind::ShapeMismatch, "MDP arrays have inconsistent shapes");
    require(gamma >= 0.0 && gamma < 1.0, ErrorKind::InvalidArgument, "gamma must be in [0, 1)");
    require(rewards.allFinite(), ErrorKind::NonFinite, "MDP rewards must be finite");
    for (Eigen::Index i = 0; i < transitions.rows(); ++i) {
      require((transitions.row(i).array() >= 0.0).all() &&
                  std::abs(transitions.row(i).sum() - 1.0) <= 1e-12,
              ErrorKind::InvalidArgument, "transition row " + std::to_string(i) +
                                              " is not a probability distribution");
    }
  }

  bool is_deterministic() const {
    for (Eigen::Index i = 0; i < transitions.rows(); ++i)
      if (std::abs(transitions.row(i).maxCoeff() - 1.0) > 1e-12) return false;
    return true;
  }

  int next_state(int s, int a) const {
    Eigen::Index j;
    transitions.row(row(s, a)).maxCoeff(&j);
    return static_cast<int>(j);
  }
};

inline nlohmann::json to_json(const TabularMDP& m) {
  auto mat = [](const Matrix& x) {
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (Eigen::Index j = 0; j < x.cols(); ++j) rows[static_cast<std::size_t>(i)].push_back(x(i, j));
    return rows;
  };
  return {{"n_states", m.n_states}, {"n_actions", m.n_actions}, {"gamma", m.gamma},
          {"transitions", mat(m.transitions)}, {"rewards", mat(m.rewards)}, {"done", mat(m.done)}};
}

inline void check_table(const TabularMDP& m, const QTable& q) {
  require(q.rows() == m.n_states && q.cols() == m.n_actions, ErrorKind::ShapeMismatch,
          "Q table shape does not match MDP");
}

inline void check_policy(const TabularMDP& m, const TabularPolicy& pi) {
  require(pi.rows() == m.n_states && pi.cols() == m.n_actions, ErrorKind::ShapeMismatch,
          "policy shape does not match MDP");
}

/// Q'(s, a) = r(s, a) + gamma (1 - done) sum_s' P(s'|s, a) next_value(s').
inline QTable backup(const TabularMDP& m, const VTable& next_value) {
  require(next_value.size() == m.n_states, ErrorKind::ShapeMismatch, "V table size mismatch");
  const Vector expected = m.transitions * next_value;
  QTable out(m.n_states, m.n_actions);
  for (int s = 0; s < m.n_states; ++s)
    for (int a = 0; a < m.n_actions; ++a)
      out(s, a) = m.rewards(s, a) + m.gamma * (1.0 - m.done(s, a)) * expected(m.row(s, a));
  return out;
}

inline VTable policy_value(const QTable& q, const TabularPolicy& pi) {
  return q.cwiseProduct(pi).rowwise().sum();
}

/// T^pi Q
inline QTable bellman_expectation(const TabularMDP& m, const QTable& q, const TabularPolicy& pi) {
  check_table(m, q);
  check_policy(m, pi);
  return backup(m, policy_value(q, pi));
}

/// T* Q
inline QTable bellman_optimality(const TabularMDP& m, const QTable& q) {
  check_table(m, q);
  return backup(m, q.rowwise().maxCoeff());
}

struct PlanningApplication {
  QTable value;
  Eigen::MatrixXi argmax_n;  // n* per entry; ties resolve to the smallest n
};

/// max over 0 <= n <= horizon of (T^mu)^n T^pi Q, with the maximizing n.
inline PlanningApplication planning_operator_detailed(const TabularMDP& m, const QTable& q,
                                                      const TabularPolicy& pi,
                                                      const TabularPolicy& mu, int horizon) {
  require(horizon >= 0, ErrorKind::InvalidArgument, "planning horizon N must be >= 0");
  check_policy(m, mu);
  QTable x = bellman_expectation(m, q, pi);
  PlanningApplication out{x, Eigen::MatrixXi::Zero(m.n_states, m.n_actions)};
  for (int n = 1; n <= horizon; ++n) {
    x = bellman_expectation(m, x, mu);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (x.data()[i] > out.value.data()[i]) {
        out.value.data()[i] = x.data()[i];
        out.argmax_n.data()[i] = n;
      }
    }
  }
  return out;
}

inline QTable planning_operator(const TabularMDP& m, const QTable& q, const TabularPolicy& pi,
                                const TabularPolicy& mu, int horizon) {
  return planning_operator_detailed(m, q, pi, mu, horizon).value;
}

/// Horizon used in place of the unbounded max.
inline int default_planning_horizon(const TabularMDP& m) { return 4 * m.n_states; }

/// (T^mu)^n T^pi Q
inline QTable n_step_operator(const TabularMDP& m, const QTable& q, const TabularPolicy& pi,
                              const TabularPolicy& mu, int n) {
  QTable x = bellman_expectation(m, q, pi);
  for (int i = 0; i < n; ++i) x = bellman_expectation(m, x, mu);
  return x;
}

/// Expectile V-operator; defined only for deterministic transitions.
inline VTable vem_operator(const TabularMDP& m, const VTable& v, const TabularPolicy& mu,
                           double tau) {
  require(tau >= 0.0 && tau < 1.0, ErrorKind::InvalidArgument, "tau must be in [0, 1)");
  require(m.is_deterministic(), ErrorKind::Unsupported,
          "expectile operator requires deterministic transitions");
  check_policy(m, mu);
  require(v.size() == m.n_states, ErrorKind::ShapeMismatch, "V table size mismatch");
  VTable out = VTable::Zero(m.n_states);
  for (int s = 0; s < m.n_states; ++s) {
    for (int a = 0; a < m.n_actions; ++a) {
      const double target =
          m.rewards(s, a) + m.gamma * (1.0 - m.done(s, a)) * v(m.next_state(s, a));
      const double blended = target >= v(s) ? tau * target + (1.0 - tau) * v(s)
                                            : (1.0 - tau) * target + tau * v(s);
      out(s) += mu(s, a) * blended;
    }
  }
  return out;
}

/// E[max of n i.i.d. draws a ~ mu(.|s) of q(s, a)] for every state, exact via
/// order statistics: P(max <= q_(j)) = F_j^n.
inline VTable expected_max_value(const QTable& q, const TabularPolicy& mu, long n) {
  require(n >= 1, ErrorKind::InvalidArgument, "EMaQ sample count N must be >= 1");
  VTable out(q.rows());
  std::vector<Eigen::Index> order(static_cast<std::size_t>(q.cols()));
  for (Eigen::Index s = 0; s < q.rows(); ++s) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return q(s, a) < q(s, b); });
    double cdf = 0.0;
    double prev = 0.0;
    double value = 0.0;
    for (auto a : order) {
      cdf += mu(s, a);
      const double cur = std::pow(std::min(cdf, 1.0), static_cast<double>(n));
      value += q(s, a) * (cur - prev);
      prev = cur;
    }
    out(s) = value;
  }
  return out;
}

inline QTable emaq_target(const TabularMDP& m, const QTable& q, const TabularPolicy& mu, long n) {
  check_table(m, q);
  check_policy(m, mu);
  return backup(m, expected_max_value(q, mu, n));
}

template <class Table>
struct FixedPoint {
  Table table;
  int iterations = 0;
};

/// Iterates `op` from `init` until the sup-norm change drops below `tol`.
template <class Table, class Op>
FixedPoint<Table> fixed_point(Op&& op, Table init, double tol = 1e-10, int max_iters = 100000) {
  Table x = std::move(init);
  double residual = INFINITY;
  for (int it = 1; it <= max_iters; ++it) {
    Table next = op(x);
    residual = (next - x).cwiseAbs().maxCoeff();
    x = std::move(next);
    if (residual < tol) return {std::move(x), it};
  }
  throw NotConvergedError(static_cast<std::size_t>(max_iters), residual);
}

/// Q^pi from the linear system (I - gamma D P Pi) q = r.
inline QTable exact_values(const TabularMDP& m, const TabularPolicy& pi) {
  m.validate();
  check_policy(m, pi);
  const Eigen::Index sa = static_cast<Eigen::Index>(m.n_states) * m.n_actions;
  Matrix next_pi = Matrix::Zero(m.n_states, sa);  // Pi: V(s') = sum_a' pi(s', a') Q(s', a')
  for (int s = 0; s < m.n_states; ++s)
    for (int a = 0; a < m.n_actions; ++a) next_pi(s, m.row(s, a)) = pi(s, a);
  Vector r(sa);
  Vector keep(sa);
  for (int s = 0; s < m.n_states; ++s)
    for (int a = 0; a < m.n_actions; ++a) {
      r(m.row(s, a)) = m.rewards(s, a);
      keep(m.row(s, a)) = 1.0 - m.done(s, a);
    }
  const Matrix system =
      Matrix::Identity(sa, sa) - m.gamma * keep.asDiagonal() * m.transitions * next_pi;
  const Vector q = system.partialPivLu().solve(r);
  QTable out(m.n_states, m.n_actions);
  for (int s = 0; s < m.n_states; ++s)
    for (int a = 0; a < m.n_actions; ++a) out(s, a) = q(m.row(s, a));
  return out;
}

inline TabularPolicy greedy_policy(const QTable& q) {
  TabularPolicy pi = TabularPolicy::Zero(q.rows(), q.cols());
  for (Eigen::Index s = 0; s < q.rows(); ++s) {
    Eigen::Index a;
    q.row(s).maxCoeff(&a);
    pi(s, a) = 1.0;
  }
  return pi;
}

/// Q* by policy iteration with exact evaluation.
inline QTable exact_optimal(const TabularMDP& m) {
  TabularPolicy pi = greedy_policy(m.rewards);
  QTable q = exact_values(m, pi);
  for (int it = 0; it < 10000; ++it) {
    // switch only on strict improvement, so ties cannot cycle
    TabularPolicy next = pi;
    bool changed = false;
    for (int s = 0; s < m.n_states; ++s) {
      Eigen::Index best;
      const double top = q.row(s).maxCoeff(&best);
      const double cur = policy_value(q, pi)(s);
      if (top > cur + 1e-12 * std::max(1.0, std::abs(cur))) {
        next.row(s).setZero();
        next(s, best) = 1.0;
        changed = true;
      }
    }
    if (!changed) return q;
    pi = next;
    q = exact_values(m, pi);
  }
  throw Error(ErrorKind::NotConverged, "policy iteration did not stabilize");
}

// ---- random instances ----

inline Vector dirichlet_ones(int k, Rng& rng) {
  std::exponential_distribution<double> e(1.0);
  Vector x(k);
  for (int i = 0; i < k; ++i) x(i) = e(rng);
  return x / x.sum();
}

inline TabularPolicy random_policy(int n_states, int n_actions, Rng& rng) {
  TabularPolicy pi(n_states, n_actions);
  for (int s = 0; s < n_states; ++s) pi.row(s) = dirichlet_ones(n_actions, rng).transpose();
  return pi;
}

struct RandomMdpOptions {
  int max_states = 8;
  int max_actions = 4;
  bool deterministic = false;
};

/// Dirichlet(1) transitions, U(0, 1) rewards, gamma in {0.9, 0.99}, no terminals.
inline TabularMDP random_mdp(Rng& rng, const RandomMdpOptions& opt = {}) {
  std::uniform_int_distribution<int> ns(2, opt.max_states);
  std::uniform_int_distribution<int> na(1, opt.max_actions);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  TabularMDP m;
  m.n_states = ns(rng);
  m.n_actions = na(rng);
  m.gamma = coin(rng) ? 0.9 : 0.99;
  m.transitions = Matrix::Zero(m.n_states * m.n_actions, m.n_states);
  std::uniform_int_distribution<int> pick(0, m.n_states - 1);
  for (Eigen::Index i = 0; i < m.transitions.rows(); ++i) {
    if (opt.deterministic)
      m.transitions(i, pick(rng)) = 1.0;
    else
      m.transitions.row(i) = dirichlet_ones(m.n_states, rng).transpose();
  }
  m.rewards = Matrix(m.n_states, m.n_actions);
  for (Eigen::Index i = 0; i < m.rewards.size(); ++i) m.rewards.data()[i] = u01(rng);
  m.done = Matrix::Zero(m.n_states, m.n_actions);
  return m;
}

}  // namespace sfbc::lab
