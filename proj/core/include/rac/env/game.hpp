#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rac/common/rng.hpp"

namespace rac::env {

enum class GameKind { kTouchMark, kMarket };

std::string_view to_string(GameKind kind);
GameKind parse_game_kind(std::string_view name);

// Movement actions shared by both games; Market appends pick and drop.
enum Action : int { kNoop = 0, kPosX = 1, kNegX = 2, kPosY = 3, kNegY = 4, kPick = 5, kDrop = 6 };

struct GameSpec {
  GameKind game = GameKind::kTouchMark;
  std::size_t teams = 2;
  std::size_t agents_per_team = 2;
  double board_half_width = 1.0;
  double dt = 0.1;
  double damping = 0.25;
  // Bound on velocity magnitude.
  double max_speed = 0.5;
  std::size_t episode_limit = 50;
  double landmark_reward = 10.0;
  double distance_penalty_coeff = 0.1;
  double collision_penalty = -1.0;
  std::size_t collision_freeze_steps = 3;
  double touch_radius = 0.1;
  double pick_radius = 0.1;
  double pick_reward = 5.0;
  double drop_reward = 5.0;
  std::size_t landmarks = 2;
  std::size_t resource_types = 2;
  std::size_t resources_per_type = 2;
  std::uint64_t seed = 0;

  static GameSpec touch_mark();
  static GameSpec market();

  // Throws std::invalid_argument describing the first violated constraint.
  void validate() const;

  std::size_t agent_count() const { return teams * agents_per_team; }
  std::size_t action_count() const { return game == GameKind::kMarket ? 7 : 5; }
  std::size_t resource_count() const { return resource_types * resources_per_type; }
  std::size_t team_of(std::size_t agent) const { return agent / agents_per_team; }

  // Observation layout, in order:
  //   own position (2), own velocity (2),
  //   Touch-Mark: landmark offsets (2 per landmark);
  //   Market: per resource offset + free flag (3), per consumer offset + alive flag (3);
  //   every other agent, teammates first, then opponents, each in id order:
  //   relative position (2) and relative velocity (2);
  //   Market only: carried-type one-hot (resource_types).
  // Offsets are entity position minus own position.
  std::size_t observation_size() const;
};

using Vec2 = std::array<double, 2>;

enum class ResourceState { kFree, kCarried, kDelivered };

struct Resource {
  Vec2 position{};
  std::size_t type = 0;
  ResourceState state = ResourceState::kFree;
  std::size_t carrier = 0;  // meaningful when carried

  bool operator==(const Resource&) const = default;
};

struct Consumer {
  Vec2 position{};
  std::size_t type = 0;
  bool alive = true;

  bool operator==(const Consumer&) const = default;
};

struct WorldState {
  std::vector<Vec2> agent_positions;
  std::vector<Vec2> agent_velocities;
  std::vector<std::size_t> frozen_until;
  // Opposing-team pairs currently within touch radius, row-major N x N.
  std::vector<char> in_contact;
  std::vector<Vec2> landmarks;
  std::vector<Resource> resources;
  std::vector<Consumer> consumers;
  std::size_t step_index = 0;
  bool done = false;
  Rng rng;

  bool operator==(const WorldState& other) const;
};

using Observation = std::vector<double>;
using JointAction = std::vector<int>;

struct StepEvents {
  std::size_t step = 0;
  std::optional<std::size_t> landmark_touch;
  std::vector<std::pair<std::size_t, std::size_t>> collisions;
  std::vector<std::pair<std::size_t, std::size_t>> picks;   // (agent, resource)
  std::vector<std::pair<std::size_t, std::size_t>> drops;   // (agent, consumer)
  bool timeout = false;

  bool operator==(const StepEvents&) const = default;
};

// One JSON object on a single line, without trailing newline.
std::string to_json_line(const StepEvents& events);
StepEvents parse_events_line(std::string_view line);

// Per-agent reward split by source; total() is what the learner sees.
struct RewardParts {
  double landmark = 0.0;
  double distance = 0.0;
  double collision = 0.0;
  double pick = 0.0;
  double drop = 0.0;

  double total() const { return landmark + distance + collision + pick + drop; }
};

struct ResetResult {
  WorldState state;
  std::vector<Observation> observations;
};

struct StepResult {
  WorldState state;
  std::vector<Observation> observations;
  std::vector<double> rewards;
  std::vector<RewardParts> reward_parts;
  bool done = false;
  StepEvents events;
};

// Places every entity uniformly on the board with the seeded generator.
ResetResult reset(const GameSpec& spec, std::uint64_t seed);

// Dynamics per step: v' = clamp(v (1 - damping) + F dt, max_speed) with a unit
// force along the chosen axis, p' = p + v' dt clamped to the board (the outward
// velocity component is zeroed at a wall). Frozen agents keep v = 0.
StepResult step(const GameSpec& spec, const WorldState& state, const JointAction& actions);

Observation observe(const GameSpec& spec, const WorldState& state, std::size_t agent);

// Stateful wrapper owning one world; one caller at a time.
class Environment {
 public:
  explicit Environment(GameSpec spec);

  const std::vector<Observation>& reset(std::uint64_t seed);
  const StepResult& step(const JointAction& actions);

  const GameSpec& spec() const { return spec_; }
  const WorldState& state() const { return state_; }
  const std::vector<Observation>& observations() const { return observations_; }
  bool done() const { return state_.done; }

 private:
  GameSpec spec_;
  WorldState state_;
  std::vector<Observation> observations_;
  StepResult last_;
  bool started_ = false;
};

}  // namespace rac::env
