#include "rac/harness/metrics.hpp"

#include <cmath>
#include <stdexcept>

#include "rac/losses/losses.hpp"
#include "rac/train/rollout.hpp"

namespace rac::harness {

StrategyFlags compute_strategy_flags(const env::GameSpec& spec, std::span<const env::StepEvents> events) {
  StrategyFlags flags;
  if (spec.game == env::GameKind::kTouchMark) {
    std::optional<std::size_t> toucher;
    for (const auto& e : events) {
      if (e.landmark_touch) toucher = e.landmark_touch;
    }
    if (!toucher) return flags;
    flags.winner = spec.team_of(*toucher);
    bool collided = false;
    for (const auto& e : events) {
      for (const auto& [a, b] : e.collisions) {
        for (std::size_t agent : {a, b}) {
          if (agent != *toucher && spec.team_of(agent) == *flags.winner) collided = true;
        }
      }
    }
    flags.non_toucher_collided = collided;
    return flags;
  }
  // Consumer c accepts resource type c.
  std::vector<std::vector<bool>> covered(spec.teams, std::vector<bool>(spec.resource_types, false));
  for (const auto& e : events) {
    for (const auto& [agent, consumer] : e.drops) {
      covered.at(spec.team_of(agent)).at(consumer) = true;
    }
  }
  for (std::size_t t = 0; t < spec.teams; ++t) {
    bool all = true;
    for (bool c : covered[t]) all = all && c;
    flags.diverse_drop.push_back(all);
  }
  return flags;
}

MetricRow metric_row(const env::GameSpec& spec, std::size_t episode, const train::EpisodeRecord& record) {
  if (spec.teams != 2) throw std::invalid_argument("metric rows describe two-team games");
  MetricRow row;
  row.episode = episode;
  row.seed = record.seed;
  row.length = record.steps.size();
  const std::vector<double> returns = record.returns();
  for (std::size_t i = 0; i < returns.size(); ++i) {
    row.reward[spec.team_of(i)] += returns[i] / static_cast<double>(spec.agents_per_team);
  }
  for (const auto& e : record.events) {
    if (e.landmark_touch) row.touched[spec.team_of(*e.landmark_touch)] = true;
    for (const auto& d : e.drops) ++row.drops[spec.team_of(d.first)];
  }
  const StrategyFlags flags = compute_strategy_flags(spec, record.events);
  row.non_toucher_collided = flags.non_toucher_collided;
  for (std::size_t t = 0; t < flags.diverse_drop.size(); ++t) row.diverse_drop[t] = flags.diverse_drop[t];
  return row;
}

Stat mean_se(std::span<const double> values) {
  Stat s;
  s.n = values.size();
  if (s.n == 0) return s;
  double total = 0.0;
  for (double v : values) total += v;
  s.mean = total / static_cast<double>(s.n);
  if (s.n < 2) return s;
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.se = std::sqrt(ss / static_cast<double>(s.n - 1) / static_cast<double>(s.n));
  return s;
}

Summary summarize(std::span<const MetricRow> rows) {
  std::vector<double> ra, rb, diff, ta, tb, da, db, ntc, dda, ddb;
  for (const auto& r : rows) {
    ra.push_back(r.reward[0]);
    rb.push_back(r.reward[1]);
    diff.push_back(r.reward[0] - r.reward[1]);
    ta.push_back(r.touched[0] ? 1.0 : 0.0);
    tb.push_back(r.touched[1] ? 1.0 : 0.0);
    da.push_back(r.drops[0]);
    db.push_back(r.drops[1]);
    if (r.non_toucher_collided) ntc.push_back(*r.non_toucher_collided ? 1.0 : 0.0);
    if (r.diverse_drop[0]) dda.push_back(*r.diverse_drop[0] ? 1.0 : 0.0);
    if (r.diverse_drop[1]) ddb.push_back(*r.diverse_drop[1] ? 1.0 : 0.0);
  }
  Summary s;
  s.episodes = rows.size();
  s.reward_a = mean_se(ra);
  s.reward_b = mean_se(rb);
  s.reward_diff = mean_se(diff);
  s.touch_a = mean_se(ta);
  s.touch_b = mean_se(tb);
  s.drops_a = mean_se(da);
  s.drops_b = mean_se(db);
  s.non_toucher_collided = mean_se(ntc);
  s.diverse_drop_a = mean_se(dda);
  s.diverse_drop_b = mean_se(ddb);
  return s;
}

std::optional<double> role_separation(const nets::Model& model, const env::GameSpec& spec, std::size_t episodes,
                                      std::uint64_t seed) {
  if (!model.has_roles() || spec.agents_per_team < 2) return std::nullopt;
  double total = 0.0;
  std::size_t count = 0;
  const std::vector<train::TeamController> controllers{{&model, 0}, {&model, 1}};
  auto observe = [&](const std::vector<train::AgentActor>& actors) {
    diff::NoGradScope no_grad;
    for (std::size_t i = 0; i < actors.size(); ++i) {
      for (std::size_t j = i + 1; j < actors.size(); ++j) {
        if (spec.team_of(i) != spec.team_of(j)) continue;
        const auto& p = *actors[i].last_role();
        const auto& q = *actors[j].last_role();
        total += losses::gaussian_kl(p, q).item() + losses::gaussian_kl(q, p).item();
        ++count;
      }
    }
  };
  for (std::size_t e = 0; e < episodes; ++e) {
    Rng action_rng(train::episode_action_seed(seed, e));
    train::play_episode(spec, controllers, train::episode_env_seed(seed, e), action_rng, observe);
  }
  if (count == 0) return std::nullopt;
  return total / static_cast<double>(count);
}

}  // namespace rac::harness
