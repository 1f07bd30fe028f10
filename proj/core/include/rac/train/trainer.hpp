#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rac/common/rng.hpp"
#include "rac/nets/nets.hpp"
#include "rac/train/adam.hpp"
#include "rac/train/config.hpp"
#include "rac/train/replay.hpp"

namespace rac::train {

struct UpdateReport {
  // Mean over window steps of the per-step critic loss.
  double l_q = 0.0;
  // Sums over window steps and batch episodes.
  double l_mi = 0.0;
  double l_d = 0.0;
  double l_opp = 0.0;
  double l_role = 0.0;
  double l_total = 0.0;
  double role_weight = 1.0;
  std::size_t mi_terms = 0;
  std::size_t d_terms = 0;
  std::size_t opp_terms = 0;
  std::size_t steps = 0;
  double critic_grad_norm = 0.0;
  double policy_grad_norm = 0.0;
  double role_grad_norm = 0.0;
};

// One row of the training metrics CSV.
struct TrainMetricsRow {
  std::size_t episode = 0;
  std::size_t team = 0;
  double mean_reward = 0.0;
  std::optional<UpdateReport> last_update;

  bool operator==(const TrainMetricsRow& other) const;
};

inline constexpr const char* kTrainMetricsHeader = "episode,team,mean_reward,L_Q,L_MI,L_D,L_Opp,role_weight";
std::string to_csv_line(const TrainMetricsRow& row);

class Trainer {
 public:
  explicit Trainer(ExperimentConfig cfg);
  // Restores model, targets, optimizer moments, replay buffer, counters and
  // generator state written by save_checkpoint. max_episodes, when given,
  // replaces the saved training horizon.
  static Trainer resume(const std::filesystem::path& checkpoint_dir,
                        std::optional<std::size_t> max_episodes = std::nullopt);

  const ExperimentConfig& config() const { return cfg_; }
  nets::Model& model() { return model_; }
  const nets::Model& model() const { return model_; }
  nets::Model& target() { return target_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  std::size_t episodes() const { return episodes_; }
  std::size_t update_calls() const { return update_calls_; }
  const std::optional<UpdateReport>& last_report() const { return last_report_; }
  const std::vector<TrainMetricsRow>& metrics() const { return metrics_; }

  // Collects E episodes with the current policies, stores them, and runs an
  // update round once enough episodes have accumulated.
  void train_round();

  // Trains until max_episodes. With a non-empty out_dir, appends metrics.csv
  // and writes checkpoints there; a non-finite training state leaves
  // diagnostic.json behind before rethrowing.
  void run(const std::filesystem::path& out_dir = {});

  UpdateReport update(const Batch& batch);

  void save_checkpoint(const std::filesystem::path& dir) const;

  // Called after every collected episode.
  std::function<void(const EpisodeRecord&)> on_episode;

 private:
  void soft_update_targets();
  std::vector<diff::Tensor> burn_in(const Batch& batch) const;

  ExperimentConfig cfg_;
  nets::Model model_;
  nets::Model target_;
  ReplayBuffer buffer_;
  Adam policy_opt_;
  Adam critic_opt_;
  std::optional<Adam> role_opt_;
  diff::ParamSet live_ac_, target_ac_;
  Rng rng_;
  std::size_t episodes_ = 0;
  std::size_t since_update_ = 0;
  std::size_t update_calls_ = 0;
  std::optional<UpdateReport> last_report_;
  std::vector<TrainMetricsRow> metrics_;
};

// Model and config stored in a checkpoint directory.
struct LoadedCheckpoint {
  ExperimentConfig config;
  nets::Model model;
};

LoadedCheckpoint load_checkpoint_model(const std::filesystem::path& checkpoint_dir);

nets::ModelShape model_shape(const env::GameSpec& game);

}  // namespace rac::train
