#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "rac/train/rollout.hpp"
#include "rac/train/trainer.hpp"

using namespace rac;
using namespace rac::train;
namespace fs = std::filesystem;

namespace {

constexpr const char* kMicro = R"({
  "game": {"game": "touchmark", "agents_per_team": 2, "board_half_width": 0.5, "episode_limit": 12},
  "nets": {"role_dim": 2, "gru_hidden": 6, "mlp_hidden": 8, "critic_hidden": 8, "attention_dim": 4,
           "attention_heads": 2},
  "loss": {"decay_episodes": 10},
  "train": {"max_episodes": 8, "episodes_per_update": 2, "batch_episodes": 2, "window": 4, "buffer_capacity": 20}
})";

ExperimentConfig micro(std::string_view variant = "RAC", std::uint64_t seed = 1) {
  ExperimentConfig cfg = ExperimentConfig::from_json(kMicro);
  cfg.train.variant = VariantSpec::parse(variant);
  cfg.train.seed = seed;
  return cfg;
}

EpisodeRecord fake_episode(std::size_t length, std::uint64_t seed, std::size_t agents = 2) {
  EpisodeRecord e;
  e.seed = seed;
  for (std::size_t t = 0; t < length; ++t) {
    Transition tr;
    tr.obs.assign(agents, env::Observation{static_cast<double>(t)});
    tr.next_obs.assign(agents, env::Observation{static_cast<double>(t + 1)});
    tr.actions.assign(agents, 1);
    tr.prev_actions.assign(agents, t == 0 ? -1 : 1);
    tr.rewards.assign(agents, 0.5);
    tr.done = t + 1 == length;
    tr.step = t;
    e.steps.push_back(tr);
  }
  return e;
}

std::string params_bytes(const nets::Model& m) { return diff::serialize_params(m.params()); }

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("rac_train_test_" + name)) {
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST(Replay, FifoEviction) {
  ReplayBuffer buf(3, 50);
  for (std::uint64_t s = 0; s < 5; ++s) buf.push(fake_episode(4, s));
  ASSERT_EQ(buf.size(), 3u);
  EXPECT_EQ(buf[0].seed, 2u);
  EXPECT_EQ(buf[2].seed, 4u);
}

TEST(Replay, RejectsMalformedEpisodes) {
  ReplayBuffer buf(3, 5);
  EXPECT_THROW(buf.push(fake_episode(6, 0)), std::invalid_argument);
  EXPECT_THROW(buf.push(EpisodeRecord{}), std::invalid_argument);
  EpisodeRecord early = fake_episode(3, 0);
  early.steps[0].done = true;
  EXPECT_THROW(buf.push(early), std::invalid_argument);
  EXPECT_THROW(ReplayBuffer(0, 5), std::invalid_argument);
}

TEST(Replay, SamplesDistinctEpisodesWithFittingWindows) {
  ReplayBuffer buf(10, 50);
  for (std::uint64_t s = 0; s < 6; ++s) buf.push(fake_episode(3 + s, s));
  Rng rng(4);
  EXPECT_THROW(buf.sample(7, 2, rng), std::invalid_argument);
  for (int trial = 0; trial < 50; ++trial) {
    const Batch b = buf.sample(6, 4, rng);
    ASSERT_EQ(b.size(), 6u);
    EXPECT_EQ(b.length, 4u);
    std::set<const EpisodeRecord*> seen;
    for (std::size_t k = 0; k < b.size(); ++k) {
      seen.insert(b.episodes[k].get());
      const std::size_t len = b.episodes[k]->length();
      if (len >= 4) {
        EXPECT_LE(b.starts[k] + 4, len);
      } else {
        EXPECT_EQ(b.starts[k], 0u);
        EXPECT_FALSE(b.valid(k, len));
        EXPECT_EQ(&b.at(k, 3), &b.episodes[k]->steps.back());
      }
    }
    EXPECT_EQ(seen.size(), 6u);
  }
  const Batch full = buf.sample(2, 0, rng);
  EXPECT_EQ(full.length, std::max(full.episodes[0]->length(), full.episodes[1]->length()));
}

TEST(Replay, SerializeRoundTrip) {
  ReplayBuffer buf(4, 50);
  for (std::uint64_t s = 0; s < 3; ++s) buf.push(fake_episode(2 + s, s));
  ReplayBuffer copy(4, 50);
  copy.deserialize(buf.serialize());
  ASSERT_EQ(copy.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(copy[i], buf[i]);
  EXPECT_EQ(copy.serialize(), buf.serialize());
  EXPECT_THROW(copy.deserialize("garbage"), std::runtime_error);
}

TEST(Adam, ZeroLearningRateIsANoOp) {
  diff::ParamSet p;
  p.add("w", diff::Tensor::parameter({3}, {1.0, -2.0, 0.5}));
  Adam opt(p, {0.0});
  diff::backward(diff::sum(diff::square(p.at("w"))));
  opt.step();
  EXPECT_EQ(p.at("w").data()[1], -2.0);
  EXPECT_TRUE(p.at("w").grad().empty() || p.at("w").grad()[1] == 0.0);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  diff::ParamSet p;
  p.add("w", diff::Tensor::parameter({2}, {1.0, -1.0}));
  Adam opt(p, {0.125});
  diff::backward(diff::sum(diff::square(p.at("w"))));
  const double norm = opt.step();
  EXPECT_NEAR(norm, std::sqrt(8.0), 1e-9);
  EXPECT_NEAR(p.at("w").data()[0], 0.875, 1e-6);
  EXPECT_NEAR(p.at("w").data()[1], -0.875, 1e-6);
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(Adam, ClipsGlobalNorm) {
  diff::ParamSet a, b;
  a.add("w", diff::Tensor::parameter({1}, {0.0}));
  b.add("w", diff::Tensor::parameter({1}, {0.0}));
  Adam clipped(a, {0.1, 0.9, 0.999, 1e-8, 1.0});
  Adam free(b, {0.1, 0.9, 0.999, 1e-8, 0.0});
  diff::backward(diff::sum(a.at("w") * 100.0));
  diff::backward(diff::sum(b.at("w") * 100.0));
  clipped.step();
  free.step();
  // Adam's first step is scale-free, so clipping shows up in the moments.
  EXPECT_NEAR(clipped.first_moment().at("w").data()[0], 0.1, 1e-6);
  EXPECT_NEAR(free.first_moment().at("w").data()[0], 10.0, 1e-5);
}

TEST(Config, JsonRoundTripAndValidation) {
  const ExperimentConfig cfg = micro("RAC-L_D", 7);
  const ExperimentConfig back = ExperimentConfig::from_json(cfg.to_json());
  EXPECT_EQ(back.to_json(), cfg.to_json());
  EXPECT_EQ(back.hash(), cfg.hash());
  EXPECT_EQ(back.train.variant, cfg.train.variant);
  ExperimentConfig bad = micro();
  bad.loss.lambda = 1.5;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  EXPECT_THROW(ExperimentConfig::from_json(R"({"train": {"nope": 1}})"), std::invalid_argument);
  EXPECT_THROW(ExperimentConfig::from_json(R"({"bogus": {}})"), std::invalid_argument);
  EXPECT_THROW(ExperimentConfig::from_json("{"), std::invalid_argument);
  ExperimentConfig other = micro();
  other.train.seed = 99;
  EXPECT_EQ(other.game_hash(), micro().game_hash());
  other.game.board_half_width = 0.6;
  EXPECT_NE(other.game_hash(), micro().game_hash());
}

TEST(Config, VariantNames) {
  for (const char* name : {"RAC", "MAAC", "RAC_Team", "L_D", "L_MI", "L_D+L_MI", "RAC-L_D", "RAC-L_MI", "RAC-L_D-L_MI"}) {
    EXPECT_EQ(VariantSpec::parse(name).name(), name);
  }
  // Removing L_Opp from RAC leaves one of the named ablations.
  EXPECT_EQ(VariantSpec::parse("RAC-L_MI-L_Opp"), VariantSpec::parse("L_D"));
  EXPECT_EQ(VariantSpec::parse("RAC-L_Opp").name(), "L_D+L_MI");
  EXPECT_FALSE(VariantSpec::parse("MAAC").architecture().self_roles);
  EXPECT_FALSE(VariantSpec::parse("RAC_Team").architecture().critic_sees_opponents);
  const VariantSpec no_d = VariantSpec::parse("RAC-L_D");
  EXPECT_FALSE(no_d.losses.d);
  EXPECT_TRUE(no_d.losses.mi && no_d.losses.opp);
  EXPECT_TRUE(no_d.architecture().opponent_roles);
  EXPECT_THROW(VariantSpec::parse("NOPE"), std::invalid_argument);
  EXPECT_THROW(VariantSpec::parse("RAC-L_X"), std::invalid_argument);
}

TEST(Rollout, DecentralizedAndSeeded) {
  const ExperimentConfig cfg = micro();
  const nets::Model model(model_shape(cfg.game), cfg.nets, cfg.train.variant.architecture(), 3);
  const std::size_t before = decentralized_cross_reads().load();
  Rng r1(5), r2(5);
  const std::vector<TeamController> ctl{{&model, 0}, {&model, 1}};
  const EpisodeRecord a = play_episode(cfg.game, ctl, 11, r1);
  const EpisodeRecord b = play_episode(cfg.game, ctl, 11, r2);
  EXPECT_EQ(a, b);
  EXPECT_EQ(decentralized_cross_reads().load(), before);
  EXPECT_LE(a.length(), cfg.game.episode_limit);
  EXPECT_TRUE(a.steps.back().done);
  EXPECT_EQ(a.steps[0].prev_actions, std::vector<int>(4, -1));
  for (std::size_t t = 1; t < a.length(); ++t) EXPECT_EQ(a.steps[t].prev_actions, a.steps[t - 1].actions);
  EXPECT_NE(episode_env_seed(1, 0), episode_env_seed(1, 1));
  EXPECT_NE(episode_env_seed(1, 0), episode_action_seed(1, 0));
}

TEST(Trainer, UpdateCountArithmetic) {
  ExperimentConfig cfg = micro();
  cfg.train.episodes_per_update = 4;
  cfg.train.updates_per_round = 2;
  cfg.train.batch_episodes = 2;
  cfg.train.max_episodes = 4;
  Trainer t(cfg);
  t.run();
  EXPECT_EQ(t.episodes(), 4u);
  EXPECT_EQ(t.update_calls(), 2u);
  cfg.train.max_episodes = 10;
  Trainer t2(cfg);
  t2.run();
  EXPECT_EQ(t2.update_calls(), 4u);
  // No update until the buffer can fill a batch.
  cfg.train.episodes_per_update = 1;
  cfg.train.batch_episodes = 3;
  cfg.train.max_episodes = 3;
  Trainer t3(cfg);
  t3.run();
  EXPECT_EQ(t3.update_calls(), 2u);
}

TEST(Trainer, ParallelEnvsUseDistinctSeeds) {
  ExperimentConfig cfg = micro();
  cfg.train.envs = 4;
  cfg.train.max_episodes = 8;
  Trainer t(cfg);
  std::vector<std::uint64_t> seeds;
  t.on_episode = [&](const EpisodeRecord& e) { seeds.push_back(e.seed); };
  t.run();
  ASSERT_EQ(seeds.size(), 8u);
  EXPECT_EQ(std::set<std::uint64_t>(seeds.begin(), seeds.end()).size(), 8u);
  for (std::size_t i = 0; i < seeds.size(); ++i) EXPECT_EQ(seeds[i], episode_env_seed(cfg.train.seed, i));
}

TEST(Trainer, BitReproducible) {
  for (const char* v : {"RAC", "MAAC"}) {
    Trainer a(micro(v, 3)), b(micro(v, 3)), c(micro(v, 4));
    a.run();
    b.run();
    c.run();
    EXPECT_EQ(params_bytes(a.model()), params_bytes(b.model()));
    EXPECT_EQ(a.metrics(), b.metrics());
    EXPECT_NE(params_bytes(a.model()), params_bytes(c.model()));
  }
}

TEST(Trainer, TargetRateControlsLag) {
  ExperimentConfig cfg = micro();
  cfg.train.max_episodes = 2;
  cfg.train.target_rate = 1.0;
  Trainer hard(cfg);
  hard.run();
  ASSERT_GT(hard.update_calls(), 0u);
  for (const char* group : {"policy.", "critic."}) {
    EXPECT_EQ(diff::serialize_params(hard.model().group(group)), diff::serialize_params(hard.target().group(group)));
  }
  cfg.train.target_rate = 0.0;
  Trainer frozen(cfg);
  const std::string initial = diff::serialize_params(frozen.target().params());
  frozen.run();
  EXPECT_EQ(diff::serialize_params(frozen.target().params()), initial);
  EXPECT_NE(diff::serialize_params(frozen.model().group("critic.")),
            diff::serialize_params(frozen.target().group("critic.")));
  cfg.train.target_rate = 0.01;
  Trainer soft(cfg);
  soft.run();
  EXPECT_NE(diff::serialize_params(soft.model().group("critic.")), diff::serialize_params(soft.target().group("critic.")));
}

TEST(Trainer, RoleLossesAddAcrossBatchEpisodes) {
  ExperimentConfig cfg = micro();
  cfg.train.max_episodes = 2;
  Trainer collect(cfg);
  collect.run();
  ASSERT_EQ(collect.buffer().size(), 2u);
  auto ep = [&](std::size_t i) { return std::make_shared<const EpisodeRecord>(collect.buffer()[i]); };
  const std::size_t len = std::min(collect.buffer()[0].length(), collect.buffer()[1].length());
  auto run = [&](std::vector<std::shared_ptr<const EpisodeRecord>> eps) {
    Trainer t(cfg);
    Batch b;
    b.episodes = eps;
    b.starts.assign(eps.size(), 0);
    b.length = len;
    return t.update(b);
  };
  const UpdateReport a = run({ep(0)}), b = run({ep(1)}), ab = run({ep(0), ep(1)});
  EXPECT_NEAR(ab.l_mi, a.l_mi + b.l_mi, 1e-4 * (1.0 + std::abs(ab.l_mi)));
  EXPECT_NEAR(ab.l_opp, a.l_opp + b.l_opp, 1e-4 * (1.0 + std::abs(ab.l_opp)));
  EXPECT_EQ(ab.mi_terms, a.mi_terms);
  EXPECT_EQ(ab.opp_terms, 8 * len);
  EXPECT_EQ(ab.d_terms, 4 * len);
  EXPECT_EQ(ab.steps, len);
  EXPECT_NEAR(ab.l_role, ab.l_mi + ab.l_d + ab.l_opp, 1e-9);
  EXPECT_NEAR(ab.l_total, ab.l_q + ab.role_weight * ab.l_role, 1e-9);
}

TEST(Trainer, RolesComeFromCurrentNetworks) {
  ExperimentConfig cfg = micro();
  cfg.train.max_episodes = 2;
  Trainer collect(cfg);
  collect.run();
  Batch b;
  b.episodes = {std::make_shared<const EpisodeRecord>(collect.buffer()[0])};
  b.starts = {0};
  b.length = 2;
  Trainer same(cfg), shifted(cfg);
  for (auto& [name, t] : shifted.model().params()) {
    if (name.starts_with("roles.") && name.find(".self.") != std::string::npos) {
      for (double& v : t.mutable_data()) v += 0.25;
    }
  }
  EXPECT_NE(same.update(b).l_mi, shifted.update(b).l_mi);
}

TEST(Trainer, RoleWeightDecays) {
  ExperimentConfig cfg = micro();
  cfg.train.max_episodes = 20;
  Trainer t(cfg);
  std::vector<double> weights;
  t.on_episode = [&](const EpisodeRecord&) {
    if (t.last_report()) weights.push_back(t.last_report()->role_weight);
  };
  t.run();
  ASSERT_GT(weights.size(), 3u);
  for (std::size_t i = 1; i < weights.size(); ++i) EXPECT_LE(weights[i], weights[i - 1]);
  EXPECT_LT(weights.back(), weights.front());
}

TEST(Checkpoint, MaacStoresNoRoleParameters) {
  TempDir dir("maac");
  ExperimentConfig cfg = micro("MAAC");
  cfg.train.max_episodes = 2;
  Trainer t(cfg);
  t.run(dir.path);
  const auto params = diff::load_params(dir.path / "checkpoint" / "model.params");
  for (const auto& name : params.names()) EXPECT_FALSE(name.starts_with("roles.")) << name;
  EXPECT_FALSE(fs::exists(dir.path / "checkpoint" / "opt.roles.m.params"));
  EXPECT_TRUE(fs::exists(dir.path / "metrics.csv"));
  const auto loaded = load_checkpoint_model(dir.path / "checkpoint");
  EXPECT_FALSE(loaded.model.has_roles());
  EXPECT_EQ(params_bytes(loaded.model), params_bytes(t.model()));
}

TEST(Checkpoint, ResumeMatchesUninterruptedRun) {
  TempDir dir("resume");
  ExperimentConfig cfg = micro("RAC", 5);
  cfg.train.max_episodes = 8;
  Trainer straight(cfg);
  straight.run();

  ExperimentConfig half = cfg;
  half.train.max_episodes = 4;
  Trainer first(half);
  first.run(dir.path);
  Trainer resumed = Trainer::resume(dir.path / "checkpoint");
  EXPECT_EQ(resumed.episodes(), 4u);
  EXPECT_EQ(resumed.update_calls(), first.update_calls());
  EXPECT_EQ(resumed.config().train.max_episodes, 4u);
  Trainer continued = Trainer::resume(dir.path / "checkpoint", 8);
  continued.run();
  EXPECT_EQ(continued.episodes(), 8u);
  EXPECT_EQ(continued.update_calls(), straight.update_calls());
  EXPECT_EQ(params_bytes(continued.model()), params_bytes(straight.model()));
  EXPECT_EQ(params_bytes(continued.target()), params_bytes(straight.target()));
  EXPECT_EQ(continued.buffer().serialize(), straight.buffer().serialize());
  EXPECT_EQ(continued.metrics().back(), straight.metrics().back());
}

TEST(Checkpoint, SaveLoadSaveIsBitIdentical) {
  TempDir dir("roundtrip");
  ExperimentConfig cfg = micro();
  cfg.train.max_episodes = 4;
  Trainer t(cfg);
  t.run(dir.path);
  Trainer back = Trainer::resume(dir.path / "checkpoint");
  back.save_checkpoint(dir.path / "again");
  for (const char* f : {"model.params", "target.params", "opt.policy.m.params", "opt.critic.v.params",
                        "opt.roles.m.params", "replay.bin", "manifest.json"}) {
    std::ifstream a(dir.path / "checkpoint" / f, std::ios::binary), b(dir.path / "again" / f, std::ios::binary);
    const std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
    EXPECT_FALSE(sa.empty()) << f;
    EXPECT_EQ(sa, sb) << f;
  }
}
