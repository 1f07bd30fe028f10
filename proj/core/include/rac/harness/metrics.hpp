#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rac/env/game.hpp"
#include "rac/nets/nets.hpp"
#include "rac/train/replay.hpp"

namespace rac::harness {

struct StrategyFlags {
  // Touch-Mark: team whose agent touched the landmark.
  std::optional<std::size_t> winner;
  // Touch-Mark, winning episodes only: a winner other than the toucher collided.
  std::optional<bool> non_toucher_collided;
  // Market, per team: the team's drops cover every resource type.
  std::vector<std::optional<bool>> diverse_drop;
};

StrategyFlags compute_strategy_flags(const env::GameSpec& spec, std::span<const env::StepEvents> events);

// One played episode. Team a is environment team 0, team b team 1.
struct MetricRow {
  std::size_t episode = 0;
  std::uint64_t seed = 0;
  std::size_t length = 0;
  // Cumulative reward averaged over the team's agents.
  std::array<double, 2> reward{};
  std::array<bool, 2> touched{};
  std::array<int, 2> drops{};
  std::optional<bool> non_toucher_collided;
  std::array<std::optional<bool>, 2> diverse_drop{};

  bool operator==(const MetricRow&) const = default;
};

MetricRow metric_row(const env::GameSpec& spec, std::size_t episode, const train::EpisodeRecord& record);

struct Stat {
  double mean = 0.0;
  // Standard error from the unbiased sample variance; 0 for n < 2.
  double se = 0.0;
  std::size_t n = 0;
};

Stat mean_se(std::span<const double> values);

// Per-metric statistics over rows. Optional fields average over the rows
// where they are present.
struct Summary {
  std::size_t episodes = 0;
  Stat reward_a, reward_b, reward_diff;
  Stat touch_a, touch_b;
  Stat drops_a, drops_b;
  Stat non_toucher_collided;
  Stat diverse_drop_a, diverse_drop_b;
};

Summary summarize(std::span<const MetricRow> rows);

// Mean over steps, teams and teammate pairs of KL(P_i || P_j) + KL(P_j || P_i)
// between self-role distributions, measured in self-play. Absent for models
// without roles or teams of one.
std::optional<double> role_separation(const nets::Model& model, const env::GameSpec& spec, std::size_t episodes,
                                      std::uint64_t seed);

}  // namespace rac::harness
