#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "rac/env/game.hpp"
#include "rac/losses/losses.hpp"
#include "rac/nets/nets.hpp"

namespace rac::train {

enum class Variant { kRac, kMaac, kRacTeam, kAblation };

// Which role objectives enter L_Role.
struct RoleLossMask {
  bool mi = true;
  bool d = true;
  bool opp = true;

  bool any() const { return mi || d || opp; }
  bool operator==(const RoleLossMask&) const = default;
};

struct VariantSpec {
  Variant kind = Variant::kRac;
  RoleLossMask losses;

  // Accepts RAC, MAAC, RAC_Team, the ablations L_D, L_MI, L_D+L_MI, and RAC
  // with objectives removed, written RAC-L_D, RAC-L_MI-L_Opp and so on.
  static VariantSpec parse(std::string_view name);
  std::string name() const;
  nets::Architecture architecture() const;
  bool operator==(const VariantSpec&) const = default;
};

struct TrainConfig {
  std::size_t max_episodes = 1000;
  // Episodes collected between update rounds (T_update threshold).
  std::size_t episodes_per_update = 1;
  std::size_t updates_per_round = 1;
  std::size_t batch_episodes = 32;
  // Window length in steps; 0 means the full episode.
  std::size_t window = 0;
  std::size_t buffer_capacity = 1000;
  double lr_policy = 3e-4;
  double lr_critic = 1e-3;
  double lr_roles = 1e-3;
  double target_rate = 0.005;
  // Global gradient-norm clip per parameter group; 0 disables.
  double grad_clip = 10.0;
  std::size_t envs = 1;
  VariantSpec variant;
  std::uint64_t seed = 0;
  // Episodes between checkpoints; 0 writes only the final one.
  std::size_t checkpoint_every = 0;

  void validate() const;
};

struct ExperimentConfig {
  env::GameSpec game;
  nets::NetConfig nets;
  losses::LossConfig loss;
  TrainConfig train;

  void validate() const;
  std::string to_json() const;
  static ExperimentConfig from_json(std::string_view text);
  static ExperimentConfig load(const std::filesystem::path& path);
  // FNV-1a of the canonical JSON, as 16 hex digits.
  std::string hash() const;
  std::string game_hash() const;
};

std::string fnv1a_hex(std::string_view bytes);

}  // namespace rac::train
