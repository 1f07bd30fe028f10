#pragma once

// Random-action property checks shared by env_test and the acceptance binary.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "rac/common/rng.hpp"
#include "rac/env/game.hpp"

namespace rac::checks {

struct EpisodeAudit {
  std::vector<std::string> violations;
  std::size_t length = 0;
  std::size_t touches = 0;
  std::size_t drops = 0;
  std::size_t collisions = 0;
  std::size_t frozen_steps_checked = 0;
  double landmark_sum = 0.0;
  bool timeout = false;
};

// Plays one episode with uniformly random actions and checks every state,
// observation and event invariant along the way.
inline EpisodeAudit audit_random_episode(const env::GameSpec& spec, std::uint64_t seed) {
  EpisodeAudit audit;
  auto fail = [&](std::size_t step, const std::string& what) {
    audit.violations.push_back("step " + std::to_string(step) + ": " + what);
  };
  const std::size_t n = spec.agent_count();
  const double w = spec.board_half_width;
  const double tol = 1e-12;
  auto check_state = [&](const env::WorldState& s, const std::vector<env::Observation>& obs) {
    for (std::size_t i = 0; i < n; ++i) {
      for (int k = 0; k < 2; ++k) {
        if (std::abs(s.agent_positions[i][k]) > w + tol) fail(s.step_index, "agent off the board");
      }
      if (std::hypot(s.agent_velocities[i][0], s.agent_velocities[i][1]) > spec.max_speed + tol) {
        fail(s.step_index, "speed above max_speed");
      }
    }
    for (const auto& r : s.resources) {
      if (r.state == env::ResourceState::kCarried && r.carrier >= n) fail(s.step_index, "bad carrier");
    }
    if (s.step_index > spec.episode_limit) fail(s.step_index, "step_index past episode_limit");
    if (obs.size() != n) fail(s.step_index, "observation count");
    for (const auto& o : obs) {
      if (o.size() != spec.observation_size()) fail(s.step_index, "observation length");
      for (double x : o) {
        if (!std::isfinite(x)) fail(s.step_index, "non-finite observation");
      }
    }
  };

  Rng rng(mix_seed(seed, 17));
  const auto start = env::reset(spec, seed);
  env::WorldState state = start.state;
  check_state(state, start.observations);
  std::vector<bool> delivered(spec.resource_count(), false);
  while (!state.done) {
    env::JointAction actions(n);
    for (int& a : actions) a = static_cast<int>(rng.uniform_index(spec.action_count()));
    const auto r = env::step(spec, state, actions);
    const std::size_t t = state.step_index;
    check_state(r.state, r.observations);
    if (r.events.step != t) fail(t, "event step index");
    if (r.state.step_index != t + 1) fail(t, "step index did not advance by one");
    for (std::size_t i = 0; i < n; ++i) {
      if (t < state.frozen_until[i]) {
        ++audit.frozen_steps_checked;
        if (r.state.agent_positions[i] != state.agent_positions[i]) fail(t, "frozen agent moved");
      }
      if (std::abs(r.rewards[i] - r.reward_parts[i].total()) > 0.0) fail(t, "reward parts do not add up");
    }
    for (const auto& [a, b] : r.events.collisions) {
      ++audit.collisions;
      if (spec.team_of(a) == spec.team_of(b)) fail(t, "teammates collided");
      for (std::size_t x : {a, b}) {
        if (r.state.frozen_until[x] != t + 1 + spec.collision_freeze_steps) fail(t, "freeze window length");
      }
    }
    for (std::size_t i = 0; i < spec.resource_count() && i < r.state.resources.size(); ++i) {
      const auto st = r.state.resources[i].state;
      if (delivered[i] && st != env::ResourceState::kDelivered) fail(t, "delivered resource changed state");
      delivered[i] = st == env::ResourceState::kDelivered;
    }
    if (r.events.landmark_touch) {
      ++audit.touches;
      if (!r.done) fail(t, "landmark touch did not end the episode");
    }
    for (const auto& part : r.reward_parts) audit.landmark_sum += part.landmark;
    audit.drops += r.events.drops.size();
    if (r.events.timeout) {
      audit.timeout = true;
      if (r.state.step_index != spec.episode_limit) fail(t, "timeout before episode_limit");
    }
    if (r.done != r.state.done) fail(t, "done flag mismatch");
    state = r.state;
  }
  audit.length = state.step_index;
  if (audit.touches > 1) fail(audit.length, "more than one landmark touch");
  if (audit.landmark_sum != 0.0) fail(audit.length, "landmark component not zero-sum");
  if (spec.game == env::GameKind::kMarket) {
    if (audit.length != spec.episode_limit) fail(audit.length, "market episode did not run to the limit");
    if (audit.drops > spec.resource_types) fail(audit.length, "more drops than consumers");
  }
  return audit;
}

}  // namespace rac::checks
