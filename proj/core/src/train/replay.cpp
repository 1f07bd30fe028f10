#include "rac/train/replay.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "../common/binary_io.hpp"

namespace rac::train {

namespace {
constexpr std::uint64_t kBufferMagic = 0x3146554252434152ULL;  // "RACRBUF1"
}

std::vector<double> EpisodeRecord::returns() const {
  std::vector<double> out(steps.empty() ? 0 : steps.front().rewards.size(), 0.0);
  for (const Transition& t : steps) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += t.rewards[i];
  }
  return out;
}

const Transition& Batch::at(std::size_t k, std::size_t j) const {
  const auto& steps = episodes[k]->steps;
  return steps[std::min(starts[k] + j, steps.size() - 1)];
}

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::size_t episode_limit)
    : capacity_(capacity), episode_limit_(episode_limit) {
  if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
}

void ReplayBuffer::push(EpisodeRecord episode) {
  if (episode.steps.empty()) throw std::invalid_argument("cannot store an empty episode");
  if (episode.steps.size() > episode_limit_) {
    throw std::invalid_argument("episode of " + std::to_string(episode.steps.size()) +
                                " steps exceeds the episode limit " + std::to_string(episode_limit_));
  }
  for (std::size_t t = 0; t < episode.steps.size(); ++t) {
    const bool last = t + 1 == episode.steps.size();
    if (episode.steps[t].done && !last) throw std::invalid_argument("done flag before the final step");
  }
  episodes_.push_back(std::make_shared<const EpisodeRecord>(std::move(episode)));
  while (episodes_.size() > capacity_) episodes_.pop_front();
}

Batch ReplayBuffer::sample(std::size_t batch, std::size_t window, Rng& rng) const {
  if (batch == 0) throw std::invalid_argument("batch size must be positive");
  if (episodes_.size() < batch) {
    throw std::invalid_argument("replay holds " + std::to_string(episodes_.size()) + " episodes, batch needs " +
                                std::to_string(batch));
  }
  std::vector<std::size_t> idx(episodes_.size());
  std::iota(idx.begin(), idx.end(), 0);
  // Partial Fisher-Yates: the first `batch` slots become the sample.
  for (std::size_t i = 0; i < batch; ++i) std::swap(idx[i], idx[i + rng.uniform_index(idx.size() - i)]);

  Batch out;
  for (std::size_t i = 0; i < batch; ++i) out.episodes.push_back(episodes_[idx[i]]);
  if (window == 0) {
    for (const auto& e : out.episodes) out.length = std::max(out.length, e->length());
  } else {
    out.length = window;
  }
  for (const auto& e : out.episodes) {
    const std::size_t len = e->length();
    out.starts.push_back(len > out.length ? rng.uniform_index(len - out.length + 1) : 0);
  }
  return out;
}

std::string ReplayBuffer::serialize() const {
  detail::Writer w;
  w.u64(kBufferMagic);
  w.u64(episodes_.size());
  for (const auto& e : episodes_) {
    w.u64(e->seed);
    w.u64(e->steps.size());
    for (const Transition& t : e->steps) {
      w.u64(t.obs.size());
      for (const auto& o : t.obs) w.f64s(o);
      for (const auto& o : t.next_obs) w.f64s(o);
      w.i32s(t.actions);
      w.i32s(t.prev_actions);
      w.f64s(t.rewards);
      w.u64(t.done ? 1 : 0);
      w.u64(t.step);
    }
    w.u64(e->events.size());
    for (const auto& ev : e->events) w.str(env::to_json_line(ev));
  }
  return w.take();
}

void ReplayBuffer::deserialize(std::string_view bytes) {
  detail::Reader r(bytes);
  if (r.u64() != kBufferMagic) throw std::runtime_error("not a replay buffer file");
  std::deque<std::shared_ptr<const EpisodeRecord>> loaded;
  const std::uint64_t count = r.u64();
  for (std::uint64_t e = 0; e < count; ++e) {
    EpisodeRecord rec;
    rec.seed = r.u64();
    const std::uint64_t steps = r.u64();
    for (std::uint64_t s = 0; s < steps; ++s) {
      Transition t;
      const std::uint64_t agents = r.u64();
      for (std::uint64_t i = 0; i < agents; ++i) t.obs.push_back(r.f64s());
      for (std::uint64_t i = 0; i < agents; ++i) t.next_obs.push_back(r.f64s());
      t.actions = r.i32s();
      t.prev_actions = r.i32s();
      t.rewards = r.f64s();
      t.done = r.u64() != 0;
      t.step = r.u64();
      rec.steps.push_back(std::move(t));
    }
    const std::uint64_t events = r.u64();
    for (std::uint64_t i = 0; i < events; ++i) rec.events.push_back(env::parse_events_line(r.str()));
    loaded.push_back(std::make_shared<const EpisodeRecord>(std::move(rec)));
  }
  if (!r.done()) throw std::runtime_error("trailing bytes in replay buffer file");
  episodes_ = std::move(loaded);
  while (episodes_.size() > capacity_) episodes_.pop_front();
}

}  // namespace rac::train
