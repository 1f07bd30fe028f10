#include "rac/harness/tournament.hpp"

#include <spdlog/spdlog.h>

#include <thread>

#include "rac/train/trainer.hpp"

namespace rac::harness {

std::vector<MetricRow> play_matches(const env::GameSpec& spec, const train::TeamController& a,
                                    const train::TeamController& b, std::size_t episodes, std::uint64_t seed,
                                    std::size_t threads) {
  std::vector<MetricRow> rows(episodes);
  const std::vector<train::TeamController> controllers{a, b};
  auto work = [&](std::size_t first, std::size_t stride) {
    for (std::size_t e = first; e < episodes; e += stride) {
      Rng action_rng(train::episode_action_seed(seed, e));
      const auto rec = train::play_episode(spec, controllers, train::episode_env_seed(seed, e), action_rng);
      rows[e] = metric_row(spec, e, rec);
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, episodes));
  if (threads == 1) {
    work(0, 1);
    return rows;
  }
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          work(t, threads);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return rows;
}

TournamentResult tournament(const TournamentSpec& spec) {
  if (spec.episodes == 0) throw std::invalid_argument("tournament needs at least one episode");
  const auto a = train::load_checkpoint_model(spec.a);
  const auto b = train::load_checkpoint_model(spec.b);
  if (a.config.game_hash() != b.config.game_hash()) {
    throw IncompatibleCheckpoints("checkpoints were trained on different games (" + a.config.game_hash() + " vs " +
                                  b.config.game_hash() + ")");
  }
  const auto& game = a.config.game;
  if (game.teams != 2) throw IncompatibleCheckpoints("tournaments need a two-team game");
  if (spec.a_side >= game.teams || spec.b_side >= game.teams) throw std::invalid_argument("side must be 0 or 1");
  const std::size_t before = train::decentralized_cross_reads().load();
  TournamentResult result;
  result.rows = play_matches(game, {&a.model, spec.a_side}, {&b.model, spec.b_side}, spec.episodes, spec.seed,
                             spec.threads);
  result.cross_reads = train::decentralized_cross_reads().load() - before;
  result.summary = summarize(result.rows);
  spdlog::info("tournament {} ({}) vs {} ({}): reward {:.3f} +- {:.3f} vs {:.3f} +- {:.3f} over {} episodes",
               spec.a.string(), a.config.train.variant.name(), spec.b.string(), b.config.train.variant.name(),
               result.summary.reward_a.mean, result.summary.reward_a.se, result.summary.reward_b.mean,
               result.summary.reward_b.se, spec.episodes);
  if (!spec.out.empty()) {
    emit(metric_table(result.rows), spec.out);
    emit(summary_table(result.summary), summary_path(spec.out));
  }
  return result;
}

Table summary_table(const Summary& s) {
  Table t;
  t.header = {"metric", "mean", "se", "n"};
  auto row = [&](const char* name, const Stat& st) {
    t.add({std::string(name), st.mean, st.se, static_cast<std::int64_t>(st.n)});
  };
  row("reward_a", s.reward_a);
  row("reward_b", s.reward_b);
  row("reward_diff", s.reward_diff);
  row("touch_a", s.touch_a);
  row("touch_b", s.touch_b);
  row("drops_a", s.drops_a);
  row("drops_b", s.drops_b);
  row("non_toucher_collided", s.non_toucher_collided);
  row("diverse_drop_a", s.diverse_drop_a);
  row("diverse_drop_b", s.diverse_drop_b);
  return t;
}

std::filesystem::path summary_path(const std::filesystem::path& rows_path) {
  std::filesystem::path p = rows_path;
  p.replace_extension();
  p += ".summary.csv";
  return p;
}

}  // namespace rac::harness
