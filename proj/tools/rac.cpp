#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "rac/common/log.hpp"
#include "rac/env/game.hpp"
#include "rac/harness/gradcheck_suite.hpp"
#include "rac/harness/sweep.hpp"
#include "rac/harness/tournament.hpp"
#include "rac/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace rac;

namespace {

// Nonzero exit with a message, for failures detected after a command ran.
struct CommandFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainArgs {
  std::string config;
  std::optional<std::string> variant;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> episodes;
  std::string out;
  std::string resume;
};

void run_train(const TrainArgs& a) {
  std::optional<train::Trainer> trainer;
  if (!a.resume.empty()) {
    trainer.emplace(train::Trainer::resume(a.resume, a.episodes));
  } else {
    train::ExperimentConfig cfg = train::ExperimentConfig::load(a.config);
    if (a.variant) cfg.train.variant = train::VariantSpec::parse(*a.variant);
    if (a.seed) cfg.train.seed = *a.seed;
    if (a.episodes) cfg.train.max_episodes = *a.episodes;
    cfg.validate();
    trainer.emplace(std::move(cfg));
  }
  const auto& cfg = trainer->config();
  const fs::path out = a.out.empty()
                           ? fs::path("runs") / fmt::format("{}-seed{}", cfg.train.variant.name(), cfg.train.seed)
                           : fs::path(a.out);
  trainer->run(out);
  std::cout << fmt::format("trained {} for {} episodes ({} updates); checkpoint at {}\n", cfg.train.variant.name(),
                           trainer->episodes(), trainer->update_calls(), (out / "checkpoint").string());
}

void run_tournament(const harness::TournamentSpec& spec) {
  const auto r = harness::tournament(spec);
  const auto& s = r.summary;
  std::cout << fmt::format("episodes {}\nreward_a {:.6g} +- {:.3g}\nreward_b {:.6g} +- {:.3g}\n", s.episodes,
                           s.reward_a.mean, s.reward_a.se, s.reward_b.mean, s.reward_b.se);
  std::cout << fmt::format("touch_a {:.4g}\ntouch_b {:.4g}\ndrops_a {:.4g}\ndrops_b {:.4g}\n", s.touch_a.mean,
                           s.touch_b.mean, s.drops_a.mean, s.drops_b.mean);
  if (r.cross_reads != 0) throw CommandFailed(fmt::format("decentralization audit failed: {} cross reads", r.cross_reads));
}

struct SweepArgs {
  std::string config;
  std::vector<std::string> axes;
  std::optional<std::size_t> seeds, pool_size, eval_episodes, role_episodes, checkpoint_interval, threads;
  std::string out = "sweep";
  std::string pool;
};

void run_sweep(const SweepArgs& a) {
  harness::SweepSpec spec = harness::load_sweep_spec(a.config);
  if (!a.axes.empty()) {
    spec.axes.clear();
    for (const auto& axis : a.axes) spec.axes.push_back(harness::SweepAxis::parse(axis));
  }
  if (a.seeds) spec.seeds = *a.seeds;
  if (a.pool_size) spec.pool_size = *a.pool_size;
  if (a.eval_episodes) spec.eval_episodes = *a.eval_episodes;
  if (a.role_episodes) spec.role_episodes = *a.role_episodes;
  if (a.checkpoint_interval) spec.checkpoint_interval = *a.checkpoint_interval;
  if (a.threads) spec.threads = *a.threads;
  if (!a.pool.empty()) spec.pool_dir = a.pool;
  spec.out_dir = a.out;
  const auto result = harness::run_sweep(spec);
  std::cout << fmt::format("sweep wrote {} runs to {}\n", result.cells.size(), spec.out_dir.string());
  if (result.failures > 0) throw CommandFailed(fmt::format("{} sweep runs failed; see summary.csv", result.failures));
}

void run_gradcheck(std::uint64_t seed, double tolerance) {
  diff::GradcheckOptions opts;
  opts.tolerance = tolerance;
  std::size_t failed = 0;
  for (const auto& c : harness::run_gradcheck_suite(seed, opts)) {
    std::cout << fmt::format("{:<36} {} max_rel_err {:.3e} ({} elements, worst {})\n", c.name,
                             c.report.passed ? "ok  " : "FAIL", c.report.max_relative_error, c.report.checked,
                             c.report.worst_parameter);
    if (!c.report.passed) ++failed;
  }
  if (failed > 0) throw CommandFailed(fmt::format("{} gradient checks failed", failed));
}

struct DemoArgs {
  std::string game = "touchmark";
  std::size_t steps = 100;
  std::string events;
  std::uint64_t seed = 0;
  std::size_t agents_per_team = 2;
};

void run_env_demo(const DemoArgs& a) {
  const env::GameKind kind = env::parse_game_kind(a.game);
  env::GameSpec spec = kind == env::GameKind::kMarket ? env::GameSpec::market() : env::GameSpec::touch_mark();
  spec.agents_per_team = a.agents_per_team;
  spec.seed = a.seed;
  spec.validate();
  std::ofstream out;
  if (!a.events.empty()) {
    out.open(a.events, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + a.events);
  }
  env::Environment environment(spec);
  Rng rng(mix_seed(a.seed, 0, 2));
  std::size_t episode = 0, touches = 0, collisions = 0, drops = 0;
  environment.reset(mix_seed(a.seed, episode));
  for (std::size_t s = 0; s < a.steps; ++s) {
    if (environment.done()) environment.reset(mix_seed(a.seed, ++episode));
    env::JointAction actions(spec.agent_count());
    for (int& act : actions) act = static_cast<int>(rng.uniform_index(spec.action_count()));
    const auto& r = environment.step(actions);
    touches += r.events.landmark_touch ? 1 : 0;
    collisions += r.events.collisions.size();
    drops += r.events.drops.size();
    if (out.is_open()) out << env::to_json_line(r.events) << '\n';
  }
  std::cout << fmt::format("{} steps over {} episodes: {} touches, {} collisions, {} drops\n", a.steps, episode + 1,
                           touches, collisions, drops);
}

}  // namespace

int main(int argc, char** argv) {
  init_logging();
  CLI::App app{"Role-aware actor-critic training and evaluation"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train one configuration");
  train_cmd->add_option("--config", train_args.config, "JSON config file");
  train_cmd->add_option("--variant", train_args.variant, "RAC, MAAC, RAC_Team, L_D, L_MI, L_D+L_MI or RAC-<loss>");
  train_cmd->add_option("--seed", train_args.seed, "Run seed");
  train_cmd->add_option("--episodes", train_args.episodes, "Override max_episodes");
  train_cmd->add_option("--out", train_args.out, "Run directory (default runs/<variant>-seed<seed>)");
  train_cmd->add_option("--resume", train_args.resume, "Continue from a checkpoint directory");

  harness::TournamentSpec tour;
  std::string tour_out;
  auto* tour_cmd = app.add_subcommand("tournament", "Play two checkpoints against each other");
  tour_cmd->add_option("--a", tour.a, "Checkpoint for environment team 0")->required();
  tour_cmd->add_option("--b", tour.b, "Checkpoint for environment team 1")->required();
  tour_cmd->add_option("--episodes", tour.episodes, "Episodes to play")->required();
  tour_cmd->add_option("--out", tour_out, "Per-episode metrics (.csv or .jsonl)")->required();
  tour_cmd->add_option("--seed", tour.seed, "Tournament seed");
  tour_cmd->add_option("--a-side", tour.a_side, "Which of checkpoint a's teams plays")->check(CLI::Range(0, 1));
  tour_cmd->add_option("--b-side", tour.b_side, "Which of checkpoint b's teams plays")->check(CLI::Range(0, 1));
  tour_cmd->add_option("--threads", tour.threads, "Worker threads");

  SweepArgs sweep_args;
  auto* sweep_cmd = app.add_subcommand("sweep", "Train and evaluate a lambda or variant sweep");
  sweep_cmd->add_option("--config", sweep_args.config, "JSON config file, optionally with a sweep section")->required();
  sweep_cmd->add_option("--axis", sweep_args.axes, "lambda=v1,v2,... or variant=A,B,...; repeatable");
  sweep_cmd->add_option("--seeds", sweep_args.seeds, "Seeds per cell");
  sweep_cmd->add_option("--out", sweep_args.out, "Output directory");
  sweep_cmd->add_option("--pool", sweep_args.pool, "Directory of frozen MAAC opponents");
  sweep_cmd->add_option("--pool-size", sweep_args.pool_size, "MAAC opponents to train when the pool is empty");
  sweep_cmd->add_option("--eval-episodes", sweep_args.eval_episodes, "Episodes per opponent");
  sweep_cmd->add_option("--role-episodes", sweep_args.role_episodes, "Self-play episodes for role separation");
  sweep_cmd->add_option("--checkpoint-interval", sweep_args.checkpoint_interval,
                        "Episodes between head-to-head checkpoints (0: final only)");
  sweep_cmd->add_option("--threads", sweep_args.threads, "Evaluation worker threads");

  std::uint64_t gc_seed = 0;
  double gc_tolerance = 1e-5;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every network and loss");
  gc_cmd->add_option("--seed", gc_seed, "Initialization seed");
  gc_cmd->add_option("--tolerance", gc_tolerance, "Maximum relative error");

  DemoArgs demo;
  auto* demo_cmd = app.add_subcommand("env-demo", "Run random actions and log environment events");
  demo_cmd->add_option("--game", demo.game, "touchmark or market");
  demo_cmd->add_option("--steps", demo.steps, "Environment steps")->required();
  demo_cmd->add_option("--events", demo.events, "JSON-lines event log");
  demo_cmd->add_option("--seed", demo.seed, "Seed");
  demo_cmd->add_option("--agents-per-team", demo.agents_per_team, "Agents per team");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "rac: error: " << e.what() << "\nRun with --help for usage.\n";
    return e.get_exit_code();
  }

  try {
    if (*train_cmd) {
      if (train_args.config.empty() && train_args.resume.empty()) throw CLI::RequiredError("--config");
      run_train(train_args);
    } else if (*tour_cmd) {
      tour.out = tour_out;
      run_tournament(tour);
    } else if (*sweep_cmd) {
      run_sweep(sweep_args);
    } else if (*gc_cmd) {
      run_gradcheck(gc_seed, gc_tolerance);
    } else if (*demo_cmd) {
      run_env_demo(demo);
    }
  } catch (const CLI::Error& e) {
    std::cerr << "rac: error: " << e.what() << '\n';
    return e.get_exit_code();
  } catch (const std::exception& e) {
    std::cerr << "rac: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
