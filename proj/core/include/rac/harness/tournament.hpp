#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "rac/harness/emit.hpp"
#include "rac/harness/metrics.hpp"
#include "rac/train/rollout.hpp"

namespace rac::harness {

struct IncompatibleCheckpoints : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct TournamentSpec {
  std::filesystem::path a, b;
  std::size_t episodes = 100;
  std::uint64_t seed = 0;
  // Which of its own teams each checkpoint fields. Using the same side for
  // both makes self-play symmetric.
  std::size_t a_side = 0;
  std::size_t b_side = 0;
  std::size_t threads = 1;
  // Metric rows go here and the summary next to it; empty writes nothing.
  std::filesystem::path out;
};

struct TournamentResult {
  std::vector<MetricRow> rows;
  Summary summary;
  // Decentralized-execution audit; zero when every actor read only its own
  // observation.
  std::size_t cross_reads = 0;
};

// Plays episodes with a controlling environment team 0 and b team 1. Episode
// e uses the run seed's e-th environment and action seeds, so results do not
// depend on the thread count.
std::vector<MetricRow> play_matches(const env::GameSpec& spec, const train::TeamController& a,
                                    const train::TeamController& b, std::size_t episodes, std::uint64_t seed,
                                    std::size_t threads = 1);

TournamentResult tournament(const TournamentSpec& spec);

// metric,mean,se,n with one row per Summary field.
Table summary_table(const Summary& summary);
std::filesystem::path summary_path(const std::filesystem::path& rows_path);

}  // namespace rac::harness
