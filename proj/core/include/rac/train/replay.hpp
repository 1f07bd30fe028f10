#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "rac/common/rng.hpp"
#include "rac/env/game.hpp"

namespace rac::train {

// One environment step for every agent. Trajectory embeddings and role
// samples are deliberately absent: updates recompute them from the raw
// (o, a) history with the current networks.
struct Transition {
  std::vector<env::Observation> obs;
  std::vector<int> actions;
  std::vector<int> prev_actions;  // -1 at the first step
  std::vector<double> rewards;
  std::vector<env::Observation> next_obs;
  bool done = false;
  std::size_t step = 0;

  bool operator==(const Transition&) const = default;
};

struct EpisodeRecord {
  std::vector<Transition> steps;
  std::vector<env::StepEvents> events;
  std::uint64_t seed = 0;

  std::size_t length() const { return steps.size(); }
  // Cumulative reward per agent.
  std::vector<double> returns() const;
  bool operator==(const EpisodeRecord&) const = default;
};

struct Batch {
  std::vector<std::shared_ptr<const EpisodeRecord>> episodes;
  std::vector<std::size_t> starts;
  std::size_t length = 0;

  std::size_t size() const { return episodes.size(); }
  bool valid(std::size_t k, std::size_t j) const { return starts[k] + j < episodes[k]->length(); }
  // The transition at window step j, clamped to the episode's last step for
  // rows that have run past their end (those rows are masked out).
  const Transition& at(std::size_t k, std::size_t j) const;
};

class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::size_t episode_limit);

  // FIFO: the oldest episode is evicted once capacity is exceeded.
  void push(EpisodeRecord episode);
  std::size_t size() const { return episodes_.size(); }
  std::size_t capacity() const { return capacity_; }
  const EpisodeRecord& operator[](std::size_t i) const { return *episodes_[i]; }

  // B distinct episodes chosen uniformly; per episode a uniform start so the
  // window fits. window = 0 uses the longest sampled episode. Episodes
  // shorter than the window start at 0 and are masked past their end.
  Batch sample(std::size_t batch, std::size_t window, Rng& rng) const;

  std::string serialize() const;
  void deserialize(std::string_view bytes);

 private:
  std::size_t capacity_;
  std::size_t episode_limit_;
  std::deque<std::shared_ptr<const EpisodeRecord>> episodes_;
};

}  // namespace rac::train
