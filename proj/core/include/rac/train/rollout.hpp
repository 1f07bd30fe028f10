#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "rac/common/rng.hpp"
#include "rac/env/game.hpp"
#include "rac/nets/nets.hpp"
#include "rac/train/replay.hpp"

namespace rac::train {

// Counts action computations that were handed another agent's observation.
// Decentralized play keeps it at zero.
std::atomic<std::size_t>& decentralized_cross_reads();

// Acting state of one agent: its own trajectory embedding and last action.
// Only the agent's own observation and its own team's networks are read.
class AgentActor {
 public:
  // model_agent is the agent slot in `model` whose networks this actor uses.
  AgentActor(const nets::Model& model, std::size_t env_agent, std::size_t model_agent);

  void reset();
  int act(std::size_t env_agent, const env::Observation& own_obs, Rng& rng);
  const std::vector<double>& last_probabilities() const { return probs_; }
  const diff::Tensor& trajectory() const { return tau_; }
  // Self-role distribution used for the last action; empty without roles.
  const std::optional<nets::DiagGaussian>& last_role() const { return role_; }

 private:
  const nets::Model* model_;
  std::size_t env_agent_;
  std::size_t model_agent_;
  diff::Tensor tau_;
  int prev_action_ = -1;
  std::vector<double> probs_;
  std::optional<nets::DiagGaussian> role_;
};

// Which model controls a team and which of that model's teams it plays as.
struct TeamController {
  const nets::Model* model = nullptr;
  std::size_t model_team = 0;
};

// Called after every joint action with the actors in environment order.
using ActObserver = std::function<void(const std::vector<AgentActor>&)>;

// Plays one episode. controllers[k] drives environment team k.
EpisodeRecord play_episode(const env::GameSpec& spec, const std::vector<TeamController>& controllers,
                           std::uint64_t env_seed, Rng& action_rng, const ActObserver& observer = {});

// Seeds for the e-th episode of a run.
std::uint64_t episode_env_seed(std::uint64_t run_seed, std::uint64_t episode);
std::uint64_t episode_action_seed(std::uint64_t run_seed, std::uint64_t episode);

}  // namespace rac::train
