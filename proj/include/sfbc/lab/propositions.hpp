#pragma once

// Randomized verification of the planning operator's properties on small MDPs.
//
// Per trial (random MDP, random pi and mu, horizon N = 4 |S|):
//   monotonicity   Q1 <= Q2  =>  T Q1 <= T Q2
//   contraction    ||T Q1 - T Q2|| <= gamma ||Q1 - Q2|| + 1e-12
//   sandwich       Q^pi - 1e-8 <= fixed point of T <= Q* + 1e-8
//   error_bound    |T Q - Q*| <= gamma^{n*} ||Q - Qn*|| + ||Qn* - Q*||, per entry,
//                  where Qn* is the fixed point of (T^mu)^{n*} T^pi
// Violations are report rows, never exceptions.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "sfbc/lab/tabular.hpp"
#include "sfbc/numerics/random.hpp"

namespace sfbc::lab {

inline constexpr double kMonotoneSlack = 1e-12;
inline constexpr double kContractionSlack = 1e-12;
inline constexpr double kSandwichSlack = 1e-8;
inline constexpr double kErrorBoundSlack = 1e-8;
inline constexpr double kLabFixedPointTol = 1e-12;
inline constexpr int kLabMaxIters = 20000;

/// The operator under test: (mdp, Q, pi, mu, N) -> Q'.
using PlanningOp = std::function<QTable(const TabularMDP&, const QTable&, const TabularPolicy&,
                                        const TabularPolicy&, int)>;

inline PlanningOp default_planning_op() {
  return [](const TabularMDP& m, const QTable& q, const TabularPolicy& pi, const TabularPolicy& mu,
            int n) { return planning_operator(m, q, pi, mu, n); };
}

struct CheckRow {
  int trial = 0;
  std::uint64_t seed = 0;
  std::string check;
  double max_violation = 0.0;  // > 0 means the check failed
  std::string mdp_json;        // filled only for violations
};

struct TrialResult {
  std::vector<CheckRow> rows;
  double contraction_ratio = 0.0;  // ||TQ1-TQ2|| / ||Q1-Q2||, relative to gamma
  int planning_iterations = 0;
  int bellman_iterations = 0;
};

struct PropositionReport {
  std::vector<CheckRow> rows;
  int trials = 0;
  int violations = 0;
  double max_contraction_ratio = 0.0;  // empirical modulus / gamma, worst trial
  int fast_contraction_hits = 0;        // trials where planning needed <= Bellman iterations

  double fast_contraction_fraction() const {
    return trials > 0 ? static_cast<double>(fast_contraction_hits) / trials : 0.0;
  }
};

struct PropositionCase {
  TabularMDP mdp;
  TabularPolicy pi;
  TabularPolicy mu;
};

inline PropositionCase random_case(std::uint64_t seed) {
  Rng rng(seed);
  PropositionCase c;
  c.mdp = random_mdp(rng);
  c.pi = random_policy(c.mdp.n_states, c.mdp.n_actions, rng);
  c.mu = random_policy(c.mdp.n_states, c.mdp.n_actions, rng);
  return c;
}

inline QTable random_table(int rows, int cols, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  QTable q(rows, cols);
  for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = u(rng);
  return q;
}

/// Iteration counts from the pessimistic start Q = min r / (1 - gamma).
struct ContractionRace {
  int planning_iterations = 0;
  int bellman_iterations = 0;
};

inline ContractionRace contraction_race(const PropositionCase& c, double tol = 1e-10) {
  const auto& m = c.mdp;
  const int horizon = default_planning_horizon(m);
  const QTable start =
      QTable::Constant(m.n_states, m.n_actions, m.rewards.minCoeff() / (1.0 - m.gamma));
  const auto planned = fixed_point(
      [&](const QTable& q) { return planning_operator(m, q, c.pi, c.mu, horizon); }, start, tol);
  const auto plain =
      fixed_point([&](const QTable& q) { return bellman_expectation(m, q, c.pi); }, start, tol);
  return {planned.iterations, plain.iterations};
}

inline TrialResult run_trial(int trial, std::uint64_t seed, const PlanningOp& op) {
  TrialResult out;
  const PropositionCase c = random_case(seed);
  const auto& m = c.mdp;
  const int horizon = default_planning_horizon(m);
  const double scale = 1.0 / (1.0 - m.gamma);
  Rng rng(derive_seed(seed, 1));
  auto apply = [&](const QTable& q) { return op(m, q, c.pi, c.mu, horizon); };
  auto row = [&](const std::string& name, double violation) {
    CheckRow r{trial, seed, name, violation, {}};
    if (violation > 0.0) r.mdp_json = to_json(m).dump();
    out.rows.push_back(std::move(r));
  };

  // monotonicity
  {
    const QTable q1 = random_table(m.n_states, m.n_actions, 0.0, scale, rng);
    QTable q2 = q1 + random_table(m.n_states, m.n_actions, 0.0, 1.0, rng);
    q2(0, 0) = q1(0, 0);  // include an equal entry
    const double worst = (apply(q1) - apply(q2)).maxCoeff();
    row("monotonicity", worst > kMonotoneSlack ? worst : 0.0);
  }

  // contraction
  {
    const QTable q1 = random_table(m.n_states, m.n_actions, -scale, scale, rng);
    const QTable q2 = random_table(m.n_states, m.n_actions, -scale, scale, rng);
    const double lhs = (apply(q1) - apply(q2)).cwiseAbs().maxCoeff();
    const double dist = (q1 - q2).cwiseAbs().maxCoeff();
    const double excess = lhs - (m.gamma * dist + kContractionSlack);
    out.contraction_ratio = dist > 0.0 ? lhs / (m.gamma * dist) : 0.0;
    row("contraction", excess > 0.0 ? excess : 0.0);
  }

  const QTable q_pi = exact_values(m, c.pi);
  const QTable q_star = exact_optimal(m);

  // fixed-point sandwich
  {
    double violation = 0.0;
    try {
      const auto fp = fixed_point(apply, QTable(QTable::Zero(m.n_states, m.n_actions)),
                                  kLabFixedPointTol, kLabMaxIters);
      const double below = (q_pi - fp.table).maxCoeff() - kSandwichSlack;
      const double above = (fp.table - q_star).maxCoeff() - kSandwichSlack;
      violation = std::max({0.0, below, above});
    } catch (const NotConvergedError& e) {
      violation = std::isfinite(e.residual()) ? std::max(e.residual(), 1.0) : 1e300;
    }
    row("sandwich", violation);
  }

  // per-entry error bound, from a pessimistic and from a random estimate
  {
    double worst = 0.0;
    const QTable starts[] = {QTable::Zero(m.n_states, m.n_actions),
                             random_table(m.n_states, m.n_actions, 0.0, scale, rng)};
    for (const QTable& q : starts) {
      const auto detailed = planning_operator_detailed(m, q, c.pi, c.mu, horizon);
      const QTable tq = apply(q);
      std::map<int, QTable> fixed_by_n;
      for (int s = 0; s < m.n_states; ++s) {
        for (int a = 0; a < m.n_actions; ++a) {
          const int n_star = detailed.argmax_n(s, a);
          auto it = fixed_by_n.find(n_star);
          if (it == fixed_by_n.end()) {
            auto fp = fixed_point(
                [&](const QTable& x) { return n_step_operator(m, x, c.pi, c.mu, n_star); },
                QTable(QTable::Zero(m.n_states, m.n_actions)), kLabFixedPointTol);
            it = fixed_by_n.emplace(n_star, std::move(fp.table)).first;
          }
          const QTable& q_n = it->second;
          const double bound = std::pow(m.gamma, n_star) * (q - q_n).cwiseAbs().maxCoeff() +
                               (q_n - q_star).cwiseAbs().maxCoeff();
          const double lhs = std::abs(tq(s, a) - q_star(s, a));
          worst = std::max(worst, lhs - bound - kErrorBoundSlack);
        }
      }
    }
    row("error_bound", worst > 0.0 ? worst : 0.0);
  }

  const auto race = contraction_race(c);
  out.planning_iterations = race.planning_iterations;
  out.bellman_iterations = race.bellman_iterations;
  return out;
}

/// Runs `n_trials` seeded trials across worker threads; results are ordered by trial.
inline PropositionReport check_propositions(int n_trials, std::uint64_t seed,
                                            const PlanningOp& op = default_planning_op(),
                                            unsigned workers = 0) {
  require(n_trials >= 1, ErrorKind::InvalidArgument, "check_propositions: n_trials must be >= 1");
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(n_trials));
  std::vector<TrialResult> results(static_cast<std::size_t>(n_trials));
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (int t = static_cast<int>(w); t < n_trials; t += static_cast<int>(workers))
        results[static_cast<std::size_t>(t)] =
            run_trial(t, derive_seed(seed, static_cast<std::uint64_t>(t)), op);
    });
  }
  for (auto& th : pool) th.join();

  PropositionReport rep;
  rep.trials = n_trials;
  for (auto& r : results) {
    for (auto& row : r.rows) {
      if (row.max_violation > 0.0) ++rep.violations;
      rep.rows.push_back(std::move(row));
    }
    rep.max_contraction_ratio = std::max(rep.max_contraction_ratio, r.contraction_ratio);
    if (r.planning_iterations <= r.bellman_iterations) ++rep.fast_contraction_hits;
  }
  return rep;
}

inline void write_report_csv(const PropositionReport& rep, std::ostream& out) {
  out << "trial_seed,check,max_violation\n";
  for (const auto& r : rep.rows) out << r.seed << ',' << r.check << ',' << r.max_violation << '\n';
}

inline void write_report_summary(const PropositionReport& rep, std::ostream& out) {
  std::map<std::string, int> failed;
  for (const auto& r : rep.rows)
    if (r.max_violation > 0.0) ++failed[r.check];
  out << "trials: " << rep.trials << "\n";
  for (const char* name : {"monotonicity", "contraction", "sandwich", "error_bound"})
    out << "  " << name << ": " << (failed[name] == 0 ? "ok" : "VIOLATED") << " ("
        << failed[name] << " failing trials)\n";
  out << "empirical contraction modulus / gamma (worst): " << rep.max_contraction_ratio << "\n";
  out << "planning converged no slower than Bellman: " << rep.fast_contraction_hits << "/"
      << rep.trials << "\n";
  out << "violations: " << rep.violations << "\n";
  for (const auto& r : rep.rows)
    if (r.max_violation > 0.0)
      out << "  trial " << r.trial << " seed " << r.seed << " " << r.check << " by "
          << r.max_violation << "\n    mdp: " << r.mdp_json << "\n";
}

}  // namespace sfbc::lab
