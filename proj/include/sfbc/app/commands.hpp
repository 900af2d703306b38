#pragma once

// Command-line front end. Exit codes: 0 success, 1 usage error, 2 runtime
// failure, 3 acceptance-check violation.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "sfbc/app/config.hpp"
#include "sfbc/app/pipeline.hpp"
#include "sfbc/app/plot.hpp"
#include "sfbc/envs/car.hpp"
#include "sfbc/envs/dataset_io.hpp"
#include "sfbc/lab/propositions.hpp"

namespace sfbc::app {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;
inline constexpr int kExitViolation = 3;

// ---- gen-data -----------------------------------------------------------

struct GenDataArgs {
  std::string mode = "both";
  std::size_t n_traj = 1000;
  std::uint64_t seed = 0;
  std::string out;
};

inline int cmd_gen_data(const GenDataArgs& a, std::ostream& log) {
  const auto ds = envs::generate_dataset(envs::dataset_mode_from_string(a.mode), a.n_traj, a.seed);
  envs::write_dataset(ds, a.out);
  int left = 0, right = 0;
  for (const auto& t : ds.trajectories)
    if (t.terminals.back()) (t.observations.back()[0] > 0 ? right : left) += 1;
  log << "wrote " << ds.trajectories.size() << " trajectories (" << ds.num_records()
      << " records) to " << a.out << "; arrivals left " << left << ", right " << right << "\n";
  return kExitOk;
}

// ---- train --------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> k_iters;
  std::optional<double> alpha;
  std::optional<int> candidates;
  std::optional<int> diffusion_steps;
  std::optional<std::string> ablation;
  std::optional<int> behavior_epochs;
  std::optional<int> critic_epochs;
  bool behavior_only = false;
};

/// File values first, then flags.
inline RunConfig resolve_train_config(const TrainArgs& a) {
  RunConfig c = a.config.empty() ? RunConfig{} : load_config(a.config);
  if (!a.data.empty()) c.dataset = a.data;
  if (!a.out.empty()) c.out_dir = a.out;
  if (a.seed) c.seed = *a.seed;
  if (a.k_iters) c.planning.k_iters = *a.k_iters;
  if (a.alpha) c.planning.alpha = c.policy.alpha = *a.alpha;
  if (a.candidates) c.policy.candidates = *a.candidates;
  if (a.diffusion_steps) c.policy.diffusion_steps = *a.diffusion_steps;
  if (a.ablation) c.ablation = ablation_from_string(*a.ablation);
  if (a.behavior_epochs) c.behavior.epochs = *a.behavior_epochs;
  if (a.critic_epochs) c.critic.epochs = *a.critic_epochs;
  if (a.behavior_only) c.behavior_only = true;
  require(!c.dataset.empty(), ErrorKind::InvalidArgument, "train: no dataset given (--data)");
  c.validate();
  return c;
}

inline int cmd_train(const TrainArgs& a, std::ostream& log) {
  const RunConfig cfg = resolve_train_config(a);
  const auto ds = envs::read_dataset(cfg.dataset);
  const auto t0 = std::chrono::steady_clock::now();
  const auto summary = train_run(cfg, ds, [&](const std::string& msg) { log << msg << "\n"; });
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  log << "trained on " << summary.records << " records in " << secs << " s; artifacts in "
      << cfg.out_dir << "\n";
  return kExitOk;
}

// ---- eval ---------------------------------------------------------------

struct EvalArgs {
  std::string run;
  std::string config;  // defaults to <run>/config.json
  std::optional<int> episodes;
  std::optional<std::uint64_t> seed;
  std::optional<int> candidates;
  std::optional<int> diffusion_steps;
  std::optional<int> top_k;
  std::string out;  // optional JSON report path
  std::optional<double> min_score;
};

inline int cmd_eval(const EvalArgs& a, std::ostream& log) {
  const fs::path run = a.run;
  const fs::path cfg_path = a.config.empty() ? run / "config.json" : fs::path(a.config);
  RunConfig cfg = fs::exists(cfg_path) ? load_config(cfg_path) : RunConfig{};
  if (a.episodes) cfg.eval.episodes = *a.episodes;
  if (a.seed) cfg.eval.seed = *a.seed;
  if (a.candidates) cfg.policy.candidates = *a.candidates;
  if (a.diffusion_steps) cfg.policy.diffusion_steps = *a.diffusion_steps;
  if (a.top_k) cfg.policy.top_k = *a.top_k;
  cfg.validate();
  const auto rep = evaluate_run(run, eval_options(cfg));
  const nlohmann::json j = {{"episodes", rep.episodes},   {"successes", rep.successes},
                            {"score", rep.score},         {"left_arrivals", rep.left_arrivals},
                            {"right_arrivals", rep.right_arrivals},
                            {"behavior", load_behavior(run).kind()}};
  log << j.dump(2) << "\n";
  if (!a.out.empty()) write_json(a.out, j);
  if (a.min_score && rep.score < *a.min_score) {
    log << "score " << rep.score << " is below the required " << *a.min_score << "\n";
    return kExitViolation;
  }
  return kExitOk;
}

// ---- operator-lab -------------------------------------------------------

struct LabArgs {
  int trials = 200;
  std::uint64_t seed = 0;
  std::string out;
  unsigned workers = 0;
  bool inject_fault = false;
};

/// Deliberately broken operator for exercising the failure path: adds half of
/// Q back, so the result is no longer a gamma-contraction.
inline lab::PlanningOp faulty_planning_op() {
  return [](const lab::TabularMDP& m, const lab::QTable& q, const lab::TabularPolicy& pi,
            const lab::TabularPolicy& mu, int n) {
    return lab::QTable(lab::planning_operator(m, q, pi, mu, n) + 0.5 * q);
  };
}

inline int cmd_operator_lab(const LabArgs& a, std::ostream& log) {
  require(a.trials >= 1, ErrorKind::InvalidArgument, "operator-lab: --trials must be >= 1");
  const auto op = a.inject_fault ? faulty_planning_op() : lab::default_planning_op();
  const auto rep = lab::check_propositions(a.trials, a.seed, op, a.workers);
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    std::ofstream csv(fs::path(a.out) / "propositions.csv");
    require(static_cast<bool>(csv), ErrorKind::Io, "cannot write report CSV");
    lab::write_report_csv(rep, csv);
    std::ofstream summary(fs::path(a.out) / "summary.txt");
    lab::write_report_summary(rep, summary);
  }
  lab::write_report_summary(rep, log);
  return rep.violations == 0 ? kExitOk : kExitViolation;
}

// ---- plot ---------------------------------------------------------------

struct PlotArgs {
  std::string run;           // compute the action map from a trained run
  std::string action_csv;    // or re-render an existing action-map CSV
  std::string targets_csv;   // target-evolution input (defaults to <run>/targets.csv)
  std::string out;
  std::string grid = "21x11";
  std::optional<std::uint64_t> seed;
};

inline Grid parse_grid(const std::string& spec) {
  Grid g;
  const auto x = spec.find('x');
  require(x != std::string::npos, ErrorKind::InvalidArgument, "grid must look like NXxNV");
  try {
    g.nx = std::stoi(spec.substr(0, x));
    g.nv = std::stoi(spec.substr(x + 1));
  } catch (const std::exception&) {
    throw Error(ErrorKind::InvalidArgument, "grid must look like NXxNV, got '" + spec + "'");
  }
  g.validate();
  return g;
}

inline int cmd_plot(const PlotArgs& a, std::ostream& log) {
  require(!a.run.empty() || !a.action_csv.empty() || !a.targets_csv.empty(),
          ErrorKind::InvalidArgument, "plot: give --run, --action-csv or --targets");
  const fs::path out = a.out;
  fs::create_directories(out);
  std::string title = "SfBC actions";
  fs::path action_csv = a.action_csv;
  if (!a.run.empty()) {
    const fs::path run = a.run;
    RunConfig cfg = fs::exists(run / "config.json") ? load_config(run / "config.json") : RunConfig{};
    EvalOptions opt = eval_options(cfg);
    if (a.seed) opt.seed = *a.seed;
    const ActionMap map = compute_action_map(run, parse_grid(a.grid), opt);
    action_csv = out / "action_map.csv";
    write_action_map_csv(map, action_csv);
    title += " (" + load_behavior(run).kind() + " behavior)";
  }
  if (!action_csv.empty()) {
    const ActionMap map = read_action_map_csv(action_csv);
    detail::write_file(out / "action_map.svg", action_map_svg(map, title));
    log << "action map: " << map.grid.nx << "x" << map.grid.nv << " cells, |a| > 0.8 on "
        << 100.0 * map.fraction_above(0.8) << "% of cells\n";
  }
  fs::path targets = a.targets_csv;
  if (targets.empty() && !a.run.empty() && fs::exists(fs::path(a.run) / "targets.csv"))
    targets = fs::path(a.run) / "targets.csv";
  if (!targets.empty()) {
    const auto h = read_targets_csv(targets);
    detail::write_file(out / "targets.svg", target_evolution_svg(h));
    log << "target evolution: " << h.by_iteration.size() << " iterations\n";
  }
  return kExitOk;
}

// ---- dispatch -----------------------------------------------------------

inline int run_cli(int argc, const char* const* argv, std::ostream& log = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Selecting-from-behavior-candidates offline RL laboratory"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* g = app.add_subcommand("gen-data", "generate a Bidirectional-Car dataset (JSONL)");
  g->add_option("--mode", gen.mode, "both|single")->check(CLI::IsMember({"both", "single"}));
  g->add_option("--n-traj", gen.n_traj, "trajectories to roll out")->check(CLI::Range(2, 100000000));
  g->add_option("--seed", gen.seed, "generator seed");
  g->add_option("--out", gen.out, "output path")->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train behavior model and critic");
  t->add_option("--config", tr.config, "JSON run configuration");
  t->add_option("--data", tr.data, "dataset path (overrides config)");
  t->add_option("--out", tr.out, "run directory (overrides config)");
  t->add_option("--seed", tr.seed, "run seed");
  t->add_option("--k-iters", tr.k_iters, "planning iterations K");
  t->add_option("--alpha", tr.alpha, "inverse temperature");
  t->add_option("--candidates", tr.candidates, "behavior candidates M");
  t->add_option("--diffusion-steps", tr.diffusion_steps, "ODE steps D for action selection");
  t->add_option("--ablation", tr.ablation, "gaussian|no-planning")
      ->check(CLI::IsMember({"none", "gaussian", "no-planning"}));
  t->add_option("--behavior-epochs", tr.behavior_epochs, "behavior training epochs");
  t->add_option("--critic-epochs", tr.critic_epochs, "critic epochs per iteration");
  t->add_flag("--behavior-only", tr.behavior_only, "stop after the behavior phase");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "evaluate a trained run");
  e->add_option("--run", ev.run, "run directory")->required();
  e->add_option("--config", ev.config, "configuration (default: <run>/config.json)");
  e->add_option("--episodes", ev.episodes, "evaluation episodes");
  e->add_option("--seed", ev.seed, "evaluation seed");
  e->add_option("--candidates", ev.candidates, "behavior candidates M");
  e->add_option("--diffusion-steps", ev.diffusion_steps, "ODE steps D");
  e->add_option("--top-k", ev.top_k, "average the k best candidates");
  e->add_option("--out", ev.out, "write the report as JSON");
  e->add_option("--min-score", ev.min_score, "exit 3 when the score is lower");

  LabArgs lb;
  auto* l = app.add_subcommand("operator-lab", "check the planning operator on random MDPs");
  l->add_option("--trials", lb.trials, "random MDPs to test");
  l->add_option("--seed", lb.seed, "lab seed");
  l->add_option("--out", lb.out, "directory for propositions.csv and summary.txt");
  l->add_option("--workers", lb.workers, "threads (0: all cores)");
  l->add_flag("--inject-fault", lb.inject_fault, "test hook: use a broken operator");

  PlotArgs pl;
  auto* p = app.add_subcommand("plot", "action map and target-evolution figures");
  p->add_option("--run", pl.run, "trained run directory");
  p->add_option("--action-csv", pl.action_csv, "re-render an action-map CSV");
  p->add_option("--targets", pl.targets_csv, "targets.csv to render");
  p->add_option("--out", pl.out, "output directory")->required();
  p->add_option("--grid", pl.grid, "NXxNV grid cells");
  p->add_option("--seed", pl.seed, "candidate seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, log, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*g) return cmd_gen_data(gen, log);
    if (*t) return cmd_train(tr, log);
    if (*e) return cmd_eval(ev, log);
    if (*l) return cmd_operator_lab(lb, log);
    if (*p) return cmd_plot(pl, log);
  } catch (const Error& ex) {
    err << "error: " << ex.what() << "\n";
    return ex.kind() == ErrorKind::InvalidArgument ? kExitUsage : kExitRuntime;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace sfbc::app
