#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rac/harness/metrics.hpp"
#include "rac/train/config.hpp"

namespace rac::harness {

struct SweepAxis {
  enum class Kind { kLambda, kVariant };
  Kind kind = Kind::kLambda;
  std::vector<std::string> values;

  // "lambda=0.1,0.5,0.9" or "variant=RAC,MAAC". An empty list is an error.
  static SweepAxis parse(std::string_view text);
};

struct SweepSpec {
  train::ExperimentConfig base;
  // Each axis varies one setting around the base config; cells shared by
  // several axes run once.
  std::vector<SweepAxis> axes;
  std::size_t seeds = 1;
  std::filesystem::path out_dir;
  // Frozen MAAC opponents. Empty means out_dir/pool. A directory without
  // checkpoints is filled by training pool_size MAAC runs of the base config.
  std::filesystem::path pool_dir;
  std::size_t pool_size = 2;
  std::size_t eval_episodes = 100;
  std::size_t role_episodes = 20;
  // Episodes between the checkpoints played head to head for tournament.csv;
  // 0 plays only the final ones.
  std::size_t checkpoint_interval = 0;
  std::size_t threads = 1;
};

struct SweepCell {
  std::string name;
  train::VariantSpec variant;
  double lambda = 0.0;
  bool on_lambda_axis = false;
};

struct CellResult {
  SweepCell cell;
  std::size_t seed = 0;
  bool ok = false;
  std::string error;
  std::filesystem::path run_dir;
  // Cell team against the pool, pooled over members.
  std::vector<MetricRow> rows;
  Summary summary;
  std::optional<double> role_kl;
};

struct SweepResult {
  std::vector<CellResult> cells;
  std::vector<std::filesystem::path> pool;
  std::size_t failures = 0;
};

// Base config plus the optional "sweep" section of a config file: seeds,
// eval_episodes, role_episodes, pool_dir, pool_size, checkpoint_interval,
// threads and axes (strings in SweepAxis::parse form).
SweepSpec load_sweep_spec(const std::filesystem::path& config_path);

std::vector<SweepCell> expand_cells(const SweepSpec& spec);

// Trains every cell for every seed, evaluates it against the pool, and
// writes summary.csv, one CSV per figure (tournament, role, cooperative,
// vary_decay, ablations) and sweep_manifest.json into out_dir. A failing cell
// is recorded and the sweep carries on.
SweepResult run_sweep(const SweepSpec& spec);

inline constexpr const char* kSummaryColumns =
    "cell,variant,lambda,seed,status,error,episodes,reward,reward_se,opponent_reward,opponent_reward_se,reward_diff,"
    "reward_diff_se,touch,touch_se,drops,drops_se,role_kl";
inline constexpr const char* kTournamentColumns =
    "seed,checkpoint_episode,variant_a,variant_b,episodes,reward_a,reward_a_se,reward_b,reward_b_se,touch_a,touch_a_se,"
    "touch_b,touch_b_se";
inline constexpr const char* kRoleColumns =
    "cell,variant,lambda,seed,role_kl,winning_episodes,non_toucher_collided,non_toucher_collided_se,diverse_drop,"
    "diverse_drop_se";
inline constexpr const char* kCooperativeColumns =
    "variant,seed,reward,reward_se,reward_diff,reward_diff_se,touch,touch_se,drops,drops_se";
inline constexpr const char* kVaryDecayColumns = "lambda,seed,variant,reward,reward_se,reward_diff,reward_diff_se";
inline constexpr const char* kAblationColumns = "variant,seed,reward,reward_se,reward_diff,reward_diff_se";

}  // namespace rac::harness
