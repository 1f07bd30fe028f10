#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>

#include "rac/harness/emit.hpp"
#include "rac/harness/metrics.hpp"
#include "rac/harness/sweep.hpp"
#include "rac/harness/tournament.hpp"
#include "rac/train/trainer.hpp"

using namespace rac;
using namespace rac::harness;
namespace fs = std::filesystem;

namespace {

constexpr const char* kMicro = R"({
  "game": {"game": "touchmark", "agents_per_team": 2, "board_half_width": 0.5, "episode_limit": 12},
  "nets": {"role_dim": 2, "gru_hidden": 6, "mlp_hidden": 8, "critic_hidden": 8, "attention_dim": 4,
           "attention_heads": 2},
  "loss": {"decay_episodes": 10},
  "train": {"max_episodes": 4, "episodes_per_update": 2, "batch_episodes": 2, "window": 4, "buffer_capacity": 20}
})";

train::ExperimentConfig micro(std::string_view variant = "RAC", std::uint64_t seed = 1) {
  auto cfg = train::ExperimentConfig::from_json(kMicro);
  cfg.train.variant = train::VariantSpec::parse(variant);
  cfg.train.seed = seed;
  return cfg;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("rac_harness_test_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

fs::path train_checkpoint(const train::ExperimentConfig& cfg, const fs::path& dir) {
  train::Trainer t(cfg);
  t.run(dir);
  return dir / "checkpoint";
}

std::string read_first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

env::StepEvents touch(std::size_t step, std::size_t agent) {
  env::StepEvents e;
  e.step = step;
  e.landmark_touch = agent;
  return e;
}

}  // namespace

TEST(Flags, TouchMarkNonToucherCollision) {
  const env::GameSpec spec = env::GameSpec::touch_mark();
  env::StepEvents hit;
  hit.collisions = {{1, 2}};
  std::vector<env::StepEvents> ev{hit, touch(1, 0)};
  auto f = compute_strategy_flags(spec, ev);
  EXPECT_EQ(f.winner, std::optional<std::size_t>(0));
  EXPECT_EQ(f.non_toucher_collided, std::optional<bool>(true));
  // Only the toucher collided.
  ev[0].collisions = {{0, 3}};
  f = compute_strategy_flags(spec, ev);
  EXPECT_EQ(f.non_toucher_collided, std::optional<bool>(false));
  // Team 1 wins; agent 2's collision is the toucher's own.
  ev = {hit, touch(1, 3)};
  f = compute_strategy_flags(spec, ev);
  EXPECT_EQ(f.winner, std::optional<std::size_t>(1));
  EXPECT_EQ(f.non_toucher_collided, std::optional<bool>(true));
  // No winner, no flag.
  ev = {hit};
  f = compute_strategy_flags(spec, ev);
  EXPECT_FALSE(f.winner);
  EXPECT_FALSE(f.non_toucher_collided);
}

TEST(Flags, MarketDiverseDrop) {
  const env::GameSpec spec = env::GameSpec::market();
  env::StepEvents a, b;
  a.drops = {{0, 0}};
  b.drops = {{1, 1}, {2, 0}};
  const std::vector<env::StepEvents> ev{a, b};
  const auto f = compute_strategy_flags(spec, ev);
  ASSERT_EQ(f.diverse_drop.size(), 2u);
  EXPECT_EQ(f.diverse_drop[0], std::optional<bool>(true));
  EXPECT_EQ(f.diverse_drop[1], std::optional<bool>(false));
  EXPECT_FALSE(f.winner);
}

TEST(Stats, UnbiasedStandardError) {
  const std::vector<double> v{1, 2, 3, 4};
  const Stat s = mean_se(v);
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_NEAR(s.se, std::sqrt((5.0 / 3.0) / 4.0), 1e-12);
  EXPECT_EQ(s.n, 4u);
  const std::vector<double> one{7.0};
  EXPECT_EQ(mean_se(one).se, 0.0);
  EXPECT_EQ(mean_se({}).n, 0u);
}

TEST(Stats, SummaryMatchesHandComputation) {
  std::vector<MetricRow> rows(3);
  rows[0].reward = {1.0, -1.0};
  rows[0].touched = {true, false};
  rows[0].non_toucher_collided = true;
  rows[1].reward = {0.5, 2.0};
  rows[1].touched = {false, true};
  rows[1].non_toucher_collided = false;
  rows[2].reward = {-0.25, 0.0};
  const Summary s = summarize(rows);
  EXPECT_EQ(s.episodes, 3u);
  EXPECT_NEAR(s.reward_a.mean, 1.25 / 3, 1e-9);
  EXPECT_NEAR(s.reward_b.mean, 1.0 / 3, 1e-9);
  EXPECT_NEAR(s.reward_diff.mean, 0.25 / 3, 1e-9);
  EXPECT_NEAR(s.touch_a.mean, 1.0 / 3, 1e-9);
  EXPECT_EQ(s.non_toucher_collided.n, 2u);
  EXPECT_NEAR(s.non_toucher_collided.mean, 0.5, 1e-9);
  EXPECT_EQ(s.diverse_drop_a.n, 0u);
  const std::vector<double> diffs{2.0, -1.5, -0.25};
  EXPECT_NEAR(s.reward_diff.se, mean_se(diffs).se, 1e-12);
}

TEST(Emit, MetricRowsRoundTripThroughCsvAndJsonl) {
  TempDir dir("emit");
  std::vector<MetricRow> rows(3);
  rows[0] = {0, 0xfedcba9876543210ULL, 12, {1.0, -3.5}, {true, false}, {0, 0}, true, {}};
  rows[1] = {1, 7, 50, {0.1, 1e-7}, {false, false}, {1, 2}, std::nullopt, {true, false}};
  rows[2] = {2, 0, 1, {-0.0, 123456.789}, {false, true}, {0, 0}, false, {std::nullopt, true}};
  for (const char* name : {"rows.csv", "rows.jsonl"}) {
    const fs::path p = dir.path / name;
    emit(metric_table(rows), p);
    EXPECT_EQ(metric_rows(read_table(p)), rows) << name;
  }
  EXPECT_EQ(read_first_line(dir.path / "rows.csv"), kMetricColumns);
}

TEST(Emit, EmptyTablesKeepTheirHeader) {
  TempDir dir("empty");
  emit(metric_table({}), dir.path / "empty.csv");
  std::ifstream in(dir.path / "empty.csv");
  const std::string text((std::istreambuf_iterator<char>(in)), {});
  EXPECT_EQ(text, std::string(kMetricColumns) + "\n");
  EXPECT_TRUE(read_table(dir.path / "empty.csv").rows.empty());
}

TEST(Emit, CellTypesAndQuoting) {
  TempDir dir("cells");
  Table t{{"s", "i", "d", "none"}, {}};
  t.add({std::string("a,b \"q\""), std::int64_t{-4}, 1.0, std::monostate{}});
  t.add({std::string(""), std::int64_t{0}, 2.5e-12, std::string("x12")});
  EXPECT_THROW(t.add({std::int64_t{1}}), std::invalid_argument);
  for (const char* name : {"t.csv", "t.jsonl"}) {
    emit(t, dir.path / name);
    const Table back = read_table(dir.path / name);
    EXPECT_EQ(back.header, t.header);
    EXPECT_EQ(back.rows, t.rows) << name;
  }
  EXPECT_EQ(t.column("d"), 2u);
  EXPECT_THROW(t.column("zzz"), std::out_of_range);
}

TEST(Tournament, SelfPlayIsReproducibleAndThreadIndependent) {
  TempDir dir("tour");
  const fs::path ckpt = train_checkpoint(micro(), dir.path / "run");
  TournamentSpec spec;
  spec.a = spec.b = ckpt;
  spec.episodes = 30;
  spec.seed = 4;
  spec.out = dir.path / "tour.csv";
  const auto one = tournament(spec);
  spec.threads = 3;
  spec.out.clear();
  const auto three = tournament(spec);
  EXPECT_EQ(one.rows, three.rows);
  EXPECT_EQ(one.cross_reads, 0u);
  EXPECT_EQ(three.cross_reads, 0u);
  ASSERT_EQ(one.rows.size(), 30u);
  for (std::size_t e = 0; e < 30; ++e) {
    EXPECT_EQ(one.rows[e].episode, e);
    EXPECT_EQ(one.rows[e].seed, train::episode_env_seed(4, e));
  }
  EXPECT_EQ(metric_rows(read_table(dir.path / "tour.csv")), one.rows);
  EXPECT_TRUE(fs::exists(summary_path(dir.path / "tour.csv")));
  EXPECT_EQ(read_first_line(summary_path(dir.path / "tour.csv")), "metric,mean,se,n");
  spec.seed = 5;
  EXPECT_NE(tournament(spec).rows, one.rows);
}

TEST(Tournament, MirroredSelfPlayIsSymmetric) {
  TempDir dir("mirror");
  const auto cfg = micro("MAAC", 2);
  train::Trainer t(cfg);
  t.run();
  // Both teams run the same networks, so the reward gap is zero in expectation.
  const train::TeamController side{&t.model(), 0};
  const auto rows = play_matches(cfg.game, side, side, 400, 9);
  const Summary s = summarize(rows);
  EXPECT_LT(std::abs(s.reward_diff.mean), 3.0 * s.reward_diff.se + 1e-12);
}

TEST(Tournament, RejectsIncompatibleCheckpoints) {
  TempDir dir("incompat");
  auto other = micro("RAC", 2);
  other.game.board_half_width = 0.7;
  TournamentSpec spec;
  spec.a = train_checkpoint(micro(), dir.path / "a");
  spec.b = train_checkpoint(other, dir.path / "b");
  spec.episodes = 2;
  EXPECT_THROW(tournament(spec), IncompatibleCheckpoints);
  spec.b = dir.path / "missing";
  EXPECT_THROW(tournament(spec), std::exception);
}

TEST(Tournament, MaacAgainstRacPlays) {
  TempDir dir("mixed");
  TournamentSpec spec;
  spec.a = train_checkpoint(micro("RAC"), dir.path / "rac");
  spec.b = train_checkpoint(micro("MAAC"), dir.path / "maac");
  spec.episodes = 5;
  const auto r = tournament(spec);
  EXPECT_EQ(r.rows.size(), 5u);
  EXPECT_EQ(r.cross_reads, 0u);
}

TEST(RoleSeparation, PresentOnlyWithRolesAndTeammates) {
  const auto cfg = micro("RAC");
  const nets::Model rac(train::model_shape(cfg.game), cfg.nets, cfg.train.variant.architecture(), 1);
  const auto kl = role_separation(rac, cfg.game, 3, 1);
  ASSERT_TRUE(kl);
  EXPECT_GE(*kl, 0.0);
  EXPECT_EQ(role_separation(rac, cfg.game, 3, 1), kl);
  const nets::Model maac(train::model_shape(cfg.game), cfg.nets, nets::Architecture{false, false, true}, 1);
  EXPECT_FALSE(role_separation(maac, cfg.game, 3, 1));
  env::GameSpec solo = cfg.game;
  solo.agents_per_team = 1;
  const nets::Model one(train::model_shape(solo), cfg.nets, cfg.train.variant.architecture(), 1);
  EXPECT_FALSE(role_separation(one, solo, 3, 1));
}

TEST(Sweep, AxisParsing) {
  const auto a = SweepAxis::parse("lambda=0.1,0.5,0.9");
  EXPECT_EQ(a.kind, SweepAxis::Kind::kLambda);
  EXPECT_EQ(a.values.size(), 3u);
  EXPECT_THROW(SweepAxis::parse("lambda="), std::invalid_argument);
  EXPECT_THROW(SweepAxis::parse("lambda=0.1,,0.2"), std::invalid_argument);
  EXPECT_THROW(SweepAxis::parse("gamma=0.1"), std::invalid_argument);
  EXPECT_THROW(SweepAxis::parse("lambda"), std::invalid_argument);
}

TEST(Sweep, CellExpansionDeduplicates) {
  SweepSpec spec;
  spec.base = micro();
  spec.axes = {SweepAxis::parse("lambda=0.1,0.5,0.9")};
  EXPECT_EQ(expand_cells(spec).size(), 3u);
  spec.axes.push_back(SweepAxis::parse("variant=RAC,MAAC,RAC_Team,L_D,L_MI,L_D+L_MI"));
  const auto cells = expand_cells(spec);
  // RAC at the base lambda sits on both axes.
  EXPECT_EQ(cells.size(), 8u);
  std::size_t on_lambda = 0;
  for (const auto& c : cells) on_lambda += c.on_lambda_axis ? 1 : 0;
  EXPECT_EQ(on_lambda, 3u);
  spec.axes = {SweepAxis::parse("lambda=abc")};
  EXPECT_THROW(expand_cells(spec), std::invalid_argument);
  spec.axes.clear();
  EXPECT_THROW(expand_cells(spec), std::invalid_argument);
}

TEST(Sweep, FailingCellIsIsolated) {
  TempDir dir("sweep");
  SweepSpec spec;
  spec.base = micro();
  spec.axes = {SweepAxis::parse("lambda=0.5,1.5"), SweepAxis::parse("variant=MAAC")};
  spec.out_dir = dir.path / "out";
  spec.pool_size = 1;
  spec.eval_episodes = 3;
  spec.role_episodes = 1;
  const auto result = run_sweep(spec);
  EXPECT_EQ(result.failures, 1u);
  ASSERT_EQ(result.cells.size(), 3u);
  std::size_t ok = 0;
  for (const auto& c : result.cells) {
    if (c.ok) {
      ++ok;
      EXPECT_EQ(c.rows.size(), 3u);
    } else {
      EXPECT_DOUBLE_EQ(c.cell.lambda, 1.5);
      EXPECT_NE(c.error.find("lambda"), std::string::npos) << c.error;
    }
  }
  EXPECT_EQ(ok, 2u);
  EXPECT_EQ(result.pool.size(), 1u);
  const Table summary = read_table(spec.out_dir / "summary.csv");
  EXPECT_EQ(summary.header, split_header(kSummaryColumns));
  EXPECT_EQ(summary.rows.size(), 3u);
  std::size_t failed_rows = 0;
  for (const auto& row : summary.rows) {
    if (std::get<std::string>(row[summary.column("status")]) == "failed") ++failed_rows;
  }
  EXPECT_EQ(failed_rows, 1u);
  for (const auto& [file, columns] :
       std::vector<std::pair<const char*, const char*>>{{"tournament.csv", kTournamentColumns},
                                                        {"role.csv", kRoleColumns},
                                                        {"cooperative.csv", kCooperativeColumns},
                                                        {"vary_decay.csv", kVaryDecayColumns},
                                                        {"ablations.csv", kAblationColumns}}) {
    EXPECT_EQ(read_first_line(spec.out_dir / file), columns) << file;
  }
  std::ifstream manifest(spec.out_dir / "sweep_manifest.json");
  const auto m = nlohmann::json::parse(manifest);
  EXPECT_EQ(m.at("failures").get<std::size_t>(), 1u);
}

TEST(Sweep, ReusesAnExistingPool) {
  TempDir dir("pool");
  train_checkpoint(micro("MAAC", 11), dir.path / "pool" / "m0");
  SweepSpec spec;
  spec.base = micro();
  spec.axes = {SweepAxis::parse("lambda=0.5")};
  spec.out_dir = dir.path / "out";
  spec.pool_dir = dir.path / "pool";
  spec.eval_episodes = 2;
  spec.role_episodes = 1;
  const auto result = run_sweep(spec);
  EXPECT_EQ(result.failures, 0u);
  ASSERT_EQ(result.pool.size(), 1u);
  EXPECT_EQ(result.pool[0], dir.path / "pool" / "m0" / "checkpoint");
}
