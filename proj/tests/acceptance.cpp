// Acceptance run: one PASS/FAIL line per criterion. Exit status is nonzero
// when any criterion fails.

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "rac/common/log.hpp"
#include "rac/diff/ops.hpp"
#include "rac/harness/gradcheck_suite.hpp"
#include "rac/harness/metrics.hpp"
#include "rac/harness/sweep.hpp"
#include "rac/harness/tournament.hpp"
#include "rac/losses/losses.hpp"
#include "rac/train/rollout.hpp"
#include "rac/train/trainer.hpp"
#include "support/env_properties.hpp"
#include "support/loss_checks.hpp"

using namespace rac;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets.
constexpr double kGradTolerance = 1e-5;
constexpr double kGradBudgetSeconds = 120.0;
constexpr std::size_t kOracleCases = 20;
constexpr std::size_t kOracleSamples = 1'000'000;
constexpr double kOracleZ = 3.0;
constexpr double kKnownValueTolerance = 1e-4;
constexpr std::size_t kBaselineCases = 100;
constexpr double kBaselineTolerance = 1e-6;
constexpr double kZeroAdvantageGradNorm = 1e-6;
constexpr std::size_t kDecayEpisodes = 10'000;
constexpr std::size_t kEnvEpisodes = 10'000;
constexpr double kEnvBudgetSeconds = 300.0;
constexpr std::size_t kSmokeEpisodes = 5'000;
constexpr std::size_t kSmokeEvalEpisodes = 1'000;
constexpr double kSmokeSds = 3.0;
constexpr std::size_t kRoleEpisodes = 10'000;
constexpr std::size_t kRoleEvalEpisodes = 100;
constexpr std::size_t kSeeds = 3;
constexpr std::size_t kSelfPlayEpisodes = 1'000;
constexpr double kSelfPlaySes = 2.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Context {
  fs::path work;
  fs::path configs;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome gradients(const Context&) {
  const auto t0 = std::chrono::steady_clock::now();
  diff::GradcheckOptions opts;
  opts.tolerance = kGradTolerance;
  const auto cases = harness::run_gradcheck_suite(0, opts);
  const double secs = seconds_since(t0);
  double worst = 0.0;
  std::string worst_name;
  bool ok = true;
  for (const auto& c : cases) {
    ok = ok && c.report.passed && c.report.checked > 0;
    if (c.report.max_relative_error >= worst) {
      worst = c.report.max_relative_error;
      worst_name = c.name;
    }
  }
  const std::set<std::string> required{"critic loss L_Q",      "policy surrogate",      "mutual information L_MI",
                                       "diversity L_D",        "opponent modelling L_Opp", "total L_tot"};
  std::size_t found = 0;
  for (const auto& c : cases) found += required.count(c.name);
  ok = ok && found == required.size() && worst < kGradTolerance && secs < kGradBudgetSeconds;
  return {ok, fmt::format("{} cases, max rel err {:.3e} ({}), {:.1f} s", cases.size(), worst, worst_name, secs)};
}

Outcome oracles(const Context&) {
  double worst_z = 0.0;
  for (const auto& c : checks::kl_oracles(kOracleCases, kOracleSamples, 101)) worst_z = std::max(worst_z, c.z());
  for (const auto& c : checks::entropy_oracles(kOracleCases, kOracleSamples, 202)) worst_z = std::max(worst_z, c.z());
  diff::PrecisionScope high(diff::Precision::kHigh);
  auto g = [](double m, double s) {
    return losses::DiagGaussian{diff::Tensor::from_data({1, 1}, {m}), diff::Tensor::from_data({1, 1}, {s})};
  };
  const double kl = losses::gaussian_kl(g(1, 1), g(0, 1)).item();
  const double h = losses::gaussian_entropy(g(0, 1)).item();
  const bool ok = worst_z < kOracleZ && std::abs(kl - 0.5) < kKnownValueTolerance &&
                  std::abs(h - 1.41894) < kKnownValueTolerance;
  return {ok, fmt::format("worst z {:.2f} over {} KL + {} entropy cases; KL {:.6f}, H {:.6f}", worst_z, kOracleCases,
                          kOracleCases, kl, h)};
}

Outcome baseline(const Context&) {
  const double err = checks::baseline_max_error(kBaselineCases, 303);
  const double norm = checks::zero_advantage_grad_norm(304);
  return {err < kBaselineTolerance && norm < kZeroAdvantageGradNorm,
          fmt::format("max |b - sum pi Q| {:.2e}, zero-advantage grad norm {:.2e}", err, norm)};
}

Outcome structure(const Context&) {
  const auto a = checks::audit_loss_structure(405);
  const bool ok = a.diversity_terms == 4 && a.opponent_terms == 8 && a.opponent_loss_at_equality == 0.0 &&
                  a.opponent_loss_touches_only_h_o && a.advantage_skips_critic && a.mi_loss_skips_h_o &&
                  a.role_sum_holds;
  return {ok, fmt::format("L_D terms {}, L_Opp terms {}, L_Opp at equality {}, h_O-only {}, advantage critic-free {}",
                          a.diversity_terms, a.opponent_terms, a.opponent_loss_at_equality,
                          a.opponent_loss_touches_only_h_o, a.advantage_skips_critic)};
}

Outcome decay(const Context&) {
  const double c = losses::LossConfig{}.decay_episodes;
  const auto t = checks::decay_trace(0.5, c, kDecayEpisodes);
  return {t.at_zero == 1.0 && std::abs(t.at_c - 0.5) < 1e-12 && t.non_increasing,
          fmt::format("w(0) {}, w(C={}) {}, non-increasing over {} episodes {}", t.at_zero, c, t.at_c, kDecayEpisodes,
                      t.non_increasing)};
}

bool replay_is_bit_exact(const env::GameSpec& spec, std::uint64_t seed) {
  auto trace = [&] {
    std::vector<env::WorldState> states;
    Rng rng(seed);
    auto s = env::reset(spec, seed).state;
    states.push_back(s);
    while (!s.done) {
      env::JointAction a(spec.agent_count());
      for (int& x : a) x = static_cast<int>(rng.uniform_index(spec.action_count()));
      s = env::step(spec, s, a).state;
      states.push_back(s);
    }
    return states;
  };
  return trace() == trace();
}

Outcome environment(const Context&) {
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t violations = 0, collisions = 0, frozen = 0, touches = 0, market_eps = 0, max_drops = 0;
  std::string first;
  bool deterministic = true;
  env::GameSpec touch = env::GameSpec::touch_mark();
  env::GameSpec market = env::GameSpec::market();
  for (std::size_t e = 0; e < kEnvEpisodes; ++e) {
    // Alternate games and board sizes so collisions and touches are frequent.
    env::GameSpec spec = e % 2 == 0 ? touch : market;
    if (e % 4 < 2) spec.board_half_width = 0.5;
    const auto a = checks::audit_random_episode(spec, 1000 + e);
    violations += a.violations.size();
    if (first.empty() && !a.violations.empty()) first = a.violations.front();
    collisions += a.collisions;
    frozen += a.frozen_steps_checked;
    touches += a.touches;
    if (spec.game == env::GameKind::kMarket) {
      ++market_eps;
      max_drops = std::max(max_drops, a.drops);
      if (a.length != 50) ++violations;
    }
    if (e < 200) deterministic = deterministic && replay_is_bit_exact(spec, 7000 + e);
  }
  const double secs = seconds_since(t0);
  const bool exercised = collisions > 0 && frozen > 0 && touches > 0 && market_eps > 0;
  const bool ok = violations == 0 && deterministic && exercised && max_drops <= 2 && secs < kEnvBudgetSeconds;
  return {ok, fmt::format("{} episodes, {} violations{}, deterministic {}, {} collisions, {} frozen steps, {} touches, "
                          "max drops {}, {:.1f} s",
                          kEnvEpisodes, violations, first.empty() ? "" : " (" + first + ")", deterministic,
                          collisions, frozen, touches, max_drops, secs)};
}

// Mean team-0 reward per episode with team 0 driven by `model` (uniform
// random when null) and team 1 uniformly random.
double reward_against_random(const env::GameSpec& spec, const nets::Model* model, std::size_t episodes,
                             std::uint64_t seed) {
  double total = 0.0;
  const std::size_t n = spec.agent_count();
  for (std::size_t e = 0; e < episodes; ++e) {
    env::Environment environment(spec);
    auto obs = environment.reset(train::episode_env_seed(seed, e));
    Rng rng(train::episode_action_seed(seed, e));
    std::vector<train::AgentActor> actors;
    if (model) {
      for (std::size_t i = 0; i < spec.agents_per_team; ++i) actors.emplace_back(*model, i, i);
    }
    double ep = 0.0;
    while (!environment.done()) {
      env::JointAction a(n);
      for (std::size_t i = 0; i < n; ++i) {
        a[i] = model && spec.team_of(i) == 0 ? actors[i].act(i, obs[i], rng)
                                             : static_cast<int>(rng.uniform_index(spec.action_count()));
      }
      const auto& r = environment.step(a);
      for (std::size_t i = 0; i < spec.agents_per_team; ++i) ep += r.rewards[i];
      obs = r.observations;
    }
    total += ep / static_cast<double>(spec.agents_per_team);
  }
  return total / static_cast<double>(episodes);
}

double sample_variance(const std::vector<double>& v) {
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return ss / static_cast<double>(v.size() - 1);
}

Outcome learning(const Context& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  auto cfg = train::ExperimentConfig::load(ctx.configs / "smoke_1v1.json");
  cfg.train.variant = train::VariantSpec::parse("MAAC");
  cfg.train.max_episodes = kSmokeEpisodes;
  std::vector<double> trained, random;
  for (std::size_t s = 0; s < kSeeds; ++s) {
    cfg.train.seed = s;
    train::Trainer t(cfg);
    t.run(ctx.work / fmt::format("smoke/seed-{}", s));
    // Same environment seeds for both; fresh ones, unseen in training.
    const std::uint64_t eval_seed = mix_seed(s, 0xe7a1);
    trained.push_back(reward_against_random(cfg.game, &t.model(), kSmokeEvalEpisodes, eval_seed));
    random.push_back(reward_against_random(cfg.game, nullptr, kSmokeEvalEpisodes, eval_seed));
  }
  const double mt = std::accumulate(trained.begin(), trained.end(), 0.0) / kSeeds;
  const double mr = std::accumulate(random.begin(), random.end(), 0.0) / kSeeds;
  const double pooled = std::sqrt((sample_variance(trained) + sample_variance(random)) / 2.0);
  const double sds = (mt - mr) / pooled;
  return {sds >= kSmokeSds,
          fmt::format("MAAC {:.3f} [{:.3f} {:.3f} {:.3f}] vs random {:.3f} [{:.3f} {:.3f} {:.3f}]: {:.1f} pooled SD, "
                      "{:.0f} s",
                      mt, trained[0], trained[1], trained[2], mr, random[0], random[1], random[2], sds,
                      seconds_since(t0))};
}

Outcome roles(const Context& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  auto cfg = train::ExperimentConfig::load(ctx.configs / "roles_2v2.json");
  cfg.train.max_episodes = kRoleEpisodes;
  bool all = true;
  std::string per_seed;
  for (std::size_t s = 0; s < kSeeds; ++s) {
    double kl[2];
    for (int with_d = 0; with_d < 2; ++with_d) {
      cfg.train.variant = train::VariantSpec::parse(with_d ? "RAC" : "RAC-L_D");
      cfg.train.seed = s;
      train::Trainer t(cfg);
      t.run(ctx.work / fmt::format("roles/{}-seed-{}", cfg.train.variant.name(), s));
      kl[with_d] = harness::role_separation(t.model(), cfg.game, kRoleEvalEpisodes, mix_seed(s, 0x501e)).value();
    }
    all = all && kl[1] > kl[0];
    per_seed += fmt::format("{}seed {}: {:.4f} with L_D vs {:.4f} without", s ? "; " : "", s, kl[1], kl[0]);
  }
  return {all, fmt::format("{}; {:.0f} s", per_seed, seconds_since(t0))};
}

Outcome pipeline(const Context& ctx) {
  auto spec = harness::load_sweep_spec(ctx.configs / "micro.json");
  spec.out_dir = ctx.work / "sweep";
  fs::remove_all(spec.out_dir);
  const auto result = harness::run_sweep(spec);
  std::set<std::string> variants, lambdas;
  for (const auto& c : result.cells) {
    variants.insert(c.cell.variant.name());
    if (c.cell.on_lambda_axis) lambdas.insert(fmt::format("{}", c.cell.lambda));
  }
  bool headers = true;
  std::string bad;
  const std::vector<std::pair<const char*, const char*>> files{{"summary.csv", harness::kSummaryColumns},
                                                               {"tournament.csv", harness::kTournamentColumns},
                                                               {"role.csv", harness::kRoleColumns},
                                                               {"cooperative.csv", harness::kCooperativeColumns},
                                                               {"vary_decay.csv", harness::kVaryDecayColumns},
                                                               {"ablations.csv", harness::kAblationColumns}};
  std::size_t data_rows = 0;
  for (const auto& [file, columns] : files) {
    const fs::path p = spec.out_dir / file;
    std::ifstream in(p);
    std::string header;
    if (!in || !std::getline(in, header) || header != columns) {
      headers = false;
      bad += std::string(" ") + file;
      continue;
    }
    std::string line;
    std::size_t rows = 0;
    while (std::getline(in, line)) rows += line.empty() ? 0 : 1;
    if (rows == 0) {
      headers = false;
      bad += std::string(" ") + file + "(empty)";
    }
    data_rows += rows;
  }
  const bool ok = result.failures == 0 && headers && variants.size() == 6 && lambdas.size() == 3;
  return {ok, fmt::format("{} cells, {} failures, {} variants, lambdas {{{}}}, {} CSV rows{}", result.cells.size(),
                          result.failures, variants.size(), fmt::join(lambdas, ","), data_rows,
                          bad.empty() ? "" : ", bad:" + bad)};
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome checkpoints(const Context& ctx) {
  auto cfg = train::ExperimentConfig::load(ctx.configs / "roles_2v2.json");
  cfg.train.max_episodes = 400;
  cfg.train.seed = 10;
  const fs::path run = ctx.work / "checkpoint";
  fs::remove_all(run);
  train::Trainer(cfg).run(run / "run");
  const fs::path first = run / "run" / "checkpoint";
  const fs::path second = run / "resaved";
  train::Trainer::resume(first).save_checkpoint(second);
  std::size_t files = 0, differing = 0;
  for (const auto& entry : fs::recursive_directory_iterator(first)) {
    if (!entry.is_regular_file()) continue;
    ++files;
    const fs::path other = second / fs::relative(entry.path(), first);
    if (!fs::exists(other) || read_bytes(entry.path()) != read_bytes(other)) ++differing;
  }
  for (const auto& entry : fs::recursive_directory_iterator(second)) {
    if (entry.is_regular_file() && !fs::exists(first / fs::relative(entry.path(), second))) ++differing;
  }
  harness::TournamentSpec t;
  t.a = first;
  t.b = second;
  t.episodes = kSelfPlayEpisodes;
  t.seed = 11;
  t.out = run / "self_tournament.csv";
  const auto r = harness::tournament(t);
  const auto& d = r.summary.reward_diff;
  const bool ok = files > 0 && differing == 0 && std::abs(d.mean) <= kSelfPlaySes * d.se && r.cross_reads == 0;
  return {ok, fmt::format("{} files, {} differ; self-play reward diff {:.4f} +- {:.4f} (SE) over {} episodes", files,
                          differing, d.mean, d.se, d.n)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  Context ctx;
  ctx.work = "acceptance_work";
  ctx.configs = RAC_CONFIG_DIR;
  std::vector<int> only;
  app.add_option("--work-dir", ctx.work, "Scratch directory for runs");
  app.add_option("--config-dir", ctx.configs, "Directory with micro.json, smoke_1v1.json and roles_2v2.json");
  app.add_option("--only", only, "Criteria to run (default all)")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);
  init_logging();
  fs::create_directories(ctx.work);

  const std::vector<std::pair<const char*, std::function<Outcome(const Context&)>>> criteria{
      {"gradient correctness", gradients},  {"closed-form oracles", oracles},
      {"baseline exactness", baseline},     {"loss structure", structure},
      {"decay schedule", decay},            {"environment suite", environment},
      {"learning smoke test", learning},    {"role separation with L_D", roles},
      {"sweep pipeline", pipeline},         {"checkpoint roundtrip", checkpoints}};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    fmt::print("{} {:2d} {}: {}\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
