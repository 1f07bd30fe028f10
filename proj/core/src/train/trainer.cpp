#include "rac/train/trainer.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "rac/losses/losses.hpp"
#include "rac/train/rollout.hpp"

namespace rac::train {

using namespace rac::diff;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kCheckpointFormat = 1;

std::uint64_t model_seed(std::uint64_t seed) { return mix_seed(seed, ~0ULL, 4); }
std::uint64_t trainer_rng_seed(std::uint64_t seed) { return mix_seed(seed, ~0ULL, 3); }

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

json report_json(const UpdateReport& r) {
  return {{"l_q", r.l_q},           {"l_mi", r.l_mi},          {"l_d", r.l_d},
          {"l_opp", r.l_opp},       {"l_role", r.l_role},      {"l_total", r.l_total},
          {"role_weight", r.role_weight}, {"mi_terms", r.mi_terms}, {"d_terms", r.d_terms},
          {"opp_terms", r.opp_terms}, {"steps", r.steps},      {"critic_grad_norm", r.critic_grad_norm},
          {"policy_grad_norm", r.policy_grad_norm}, {"role_grad_norm", r.role_grad_norm}};
}

UpdateReport report_from_json(const json& j) {
  UpdateReport r;
  r.l_q = j.at("l_q");
  r.l_mi = j.at("l_mi");
  r.l_d = j.at("l_d");
  r.l_opp = j.at("l_opp");
  r.l_role = j.at("l_role");
  r.l_total = j.at("l_total");
  r.role_weight = j.at("role_weight");
  r.mi_terms = j.at("mi_terms");
  r.d_terms = j.at("d_terms");
  r.opp_terms = j.at("opp_terms");
  r.steps = j.at("steps");
  r.critic_grad_norm = j.at("critic_grad_norm");
  r.policy_grad_norm = j.at("policy_grad_norm");
  r.role_grad_norm = j.at("role_grad_norm");
  return r;
}

ParamSet join(const ParamSet& a, const ParamSet& b) {
  ParamSet out = a;
  out.extend(b);
  return out;
}

Tensor column(const std::vector<double>& v) { return Tensor::from_data({v.size(), 1}, v); }

Tensor rows_of(const std::vector<const env::Observation*>& rows) {
  const std::size_t cols = rows.front()->size();
  std::vector<double> data;
  data.reserve(rows.size() * cols);
  for (const auto* r : rows) data.insert(data.end(), r->begin(), r->end());
  return Tensor::from_data({rows.size(), cols}, std::move(data));
}

std::vector<int> sample_rows(const Tensor& probs, Rng& rng) {
  std::vector<int> out(probs.rows());
  const std::size_t a = probs.cols();
  for (std::size_t r = 0; r < out.size(); ++r) {
    out[r] = static_cast<int>(rng.categorical(probs.data().subspan(r * a, a)));
  }
  return out;
}

}  // namespace

bool TrainMetricsRow::operator==(const TrainMetricsRow& other) const {
  return to_csv_line(*this) == to_csv_line(other);
}

std::string to_csv_line(const TrainMetricsRow& row) {
  if (!row.last_update) return fmt::format("{},{},{},,,,,", row.episode, row.team, row.mean_reward);
  const UpdateReport& r = *row.last_update;
  return fmt::format("{},{},{},{},{},{},{},{}", row.episode, row.team, row.mean_reward, r.l_q, r.l_mi, r.l_d, r.l_opp,
                     r.role_weight);
}

nets::ModelShape model_shape(const env::GameSpec& game) {
  return {game.observation_size(), game.action_count(), game.teams, game.agents_per_team};
}

Trainer::Trainer(ExperimentConfig cfg)
    : cfg_((cfg.validate(), std::move(cfg))),
      model_(model_shape(cfg_.game), cfg_.nets, cfg_.train.variant.architecture(), model_seed(cfg_.train.seed)),
      target_(model_.clone()),
      buffer_(cfg_.train.buffer_capacity, cfg_.game.episode_limit),
      policy_opt_(model_.group("policy."), {cfg_.train.lr_policy, 0.9, 0.999, 1e-8, cfg_.train.grad_clip}),
      critic_opt_(model_.group("critic."), {cfg_.train.lr_critic, 0.9, 0.999, 1e-8, cfg_.train.grad_clip}),
      live_ac_(join(model_.group("policy."), model_.group("critic."))),
      target_ac_(join(target_.group("policy."), target_.group("critic."))),
      rng_(trainer_rng_seed(cfg_.train.seed)) {
  if (model_.has_roles()) {
    role_opt_.emplace(model_.group("roles."), AdamOptions{cfg_.train.lr_roles, 0.9, 0.999, 1e-8, cfg_.train.grad_clip});
  }
}

void Trainer::soft_update_targets() {
  const double rate = cfg_.train.target_rate;
  auto live = live_ac_.begin();
  for (auto& [name, t] : target_ac_) {
    auto src = live++->second.data();
    auto dst = t.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = round_to_precision((1.0 - rate) * dst[i] + rate * src[i]);
  }
}

std::vector<Tensor> Trainer::burn_in(const Batch& batch) const {
  const std::size_t n = model_.shape().agents();
  const std::size_t actions = model_.shape().actions;
  const std::size_t b = batch.size();
  std::size_t longest = 0;
  for (std::size_t s : batch.starts) longest = std::max(longest, s);
  std::vector<Tensor> taus;
  NoGradScope no_grad;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& enc = model_.roles_for(i).trajectory;
    const std::size_t h = enc.gru.hidden();
    std::vector<double> state(b * h, 0.0);
    for (std::size_t t = 0; t < longest; ++t) {
      std::vector<const env::Observation*> obs;
      std::vector<int> act;
      for (std::size_t k = 0; k < b; ++k) {
        const auto& steps = batch.episodes[k]->steps;
        const Transition& tr = steps[std::min(t, steps.size() - 1)];
        obs.push_back(&tr.obs[i]);
        act.push_back(tr.actions[i]);
      }
      const Tensor next = enc(Tensor::from_data({b, h}, state), rows_of(obs), one_hot(act, actions));
      for (std::size_t k = 0; k < b; ++k) {
        if (t < batch.starts[k]) std::copy_n(next.data().begin() + k * h, h, state.begin() + k * h);
      }
    }
    taus.push_back(Tensor::from_data({b, h}, std::move(state)));
  }
  return taus;
}

UpdateReport Trainer::update(const Batch& batch) {
  ++update_calls_;
  const nets::ModelShape& shape = model_.shape();
  const std::size_t n = shape.agents();
  const std::size_t actions = shape.actions;
  const std::size_t b = batch.size();
  const bool roles = model_.has_roles();
  const bool opp_roles = model_.has_opponent_roles();
  RoleLossMask mask = cfg_.train.variant.losses;
  if (!roles) mask = {false, false, false};
  if (!opp_roles) mask.opp = false;
  const double alpha = cfg_.loss.alpha;

  UpdateReport report;
  report.role_weight = losses::role_weight(static_cast<double>(episodes_), cfg_.loss.lambda, cfg_.loss.decay_episodes);
  std::vector<Tensor> tau_chain = roles ? burn_in(batch) : std::vector<Tensor>(n);
  Tensor role_sum = Tensor::scalar(0.0);
  // Each step reads tau through a fresh leaf so per-step critic backward
  // passes stop there; the chain is backpropagated once at the end.
  std::vector<std::vector<Tensor>> chain_steps, leaf_steps;

  for (std::size_t j = 0; j < batch.length; ++j) {
    std::vector<double> valid(b);
    for (std::size_t k = 0; k < b; ++k) valid[k] = batch.valid(k, j) ? 1.0 : 0.0;
    if (std::all_of(valid.begin(), valid.end(), [](double v) { return v == 0.0; })) break;
    const Tensor mask_t = column(valid);
    std::vector<Tensor> tau(n);
    if (roles) {
      for (std::size_t i = 0; i < n; ++i) {
        const auto d = tau_chain[i].data();
        tau[i] = Tensor::parameter(tau_chain[i].shape(), {d.begin(), d.end()});
      }
      chain_steps.push_back(tau_chain);
      leaf_steps.push_back(tau);
    }

    std::vector<Tensor> obs(n), next_obs(n), act_oh(n), prev_oh(n), reward(n);
    std::vector<std::vector<int>> act(n), prev(n);
    std::vector<double> done(b);
    for (std::size_t k = 0; k < b; ++k) done[k] = batch.at(k, j).done ? 1.0 : 0.0;
    const Tensor done_t = column(done);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<const env::Observation*> o, o2;
      std::vector<double> r;
      for (std::size_t k = 0; k < b; ++k) {
        const Transition& tr = batch.at(k, j);
        o.push_back(&tr.obs[i]);
        o2.push_back(&tr.next_obs[i]);
        act[i].push_back(tr.actions[i]);
        prev[i].push_back(tr.prev_actions[i]);
        r.push_back(tr.rewards[i]);
      }
      obs[i] = rows_of(o);
      next_obs[i] = rows_of(o2);
      act_oh[i] = one_hot(act[i], actions);
      prev_oh[i] = one_hot(prev[i], actions);
      reward[i] = column(r);
    }

    // Roles recomputed from stored inputs with the current networks.
    std::vector<nets::DiagGaussian> self(n), posterior(n);
    std::vector<std::optional<nets::RoleSample>> rho(n);
    std::vector<std::vector<nets::DiagGaussian>> predicted(n);
    std::vector<std::vector<nets::RoleSample>> rho_hat(n);
    std::vector<Tensor> tau_next(n), role_in(n);
    if (roles) {
      std::vector<Tensor> rho_values(n);
      for (std::size_t i = 0; i < n; ++i) {
        const nets::RoleNets& net = model_.roles_for(i);
        self[i] = net.self_role(obs[i], prev_oh[i]);
        rho[i] = nets::sample_role(self[i], rng_);
        rho_values[i] = rho[i]->value;
        if (opp_roles) {
          predicted[i] = net.opponent_roles(obs[i], tau[i]);
          for (const auto& d : predicted[i]) rho_hat[i].push_back(nets::sample_role(d, rng_));
        }
        if (mask.mi) posterior[i] = net.variational(obs[i], prev_oh[i], tau[i]);
        tau_next[i] = net.trajectory(tau[i], obs[i], act_oh[i]);
        role_in[i] = model_.role_input(rho[i], rho_hat[i]);
      }
      if (mask.mi) {
        const auto t = losses::mi_loss(self, posterior, mask_t);
        report.l_mi += t.value.item();
        report.mi_terms += t.terms;
        role_sum = role_sum + t.value;
      }
      if (mask.d) {
        const auto t = losses::diversity_loss(
            shape, rho_values,
            [&](std::size_t i, std::size_t jj) { return model_.roles_for(jj).variational(obs[jj], prev_oh[i], tau[jj]); },
            mask_t);
        report.l_d += t.value.item();
        report.d_terms += t.terms;
        role_sum = role_sum + t.value;
      }
      if (mask.opp) {
        const auto t = losses::opponent_loss(shape, predicted, self, mask_t);
        report.l_opp += t.value.item();
        report.opp_terms += t.terms;
        role_sum = role_sum + t.value;
      }
    }

    const nets::CriticOutput critic = model_.critic().forward({obs, act_oh, role_in});

    // Bootstrap target from target policies and critics; next roles come from
    // the current role networks.
    std::vector<Tensor> next_q(n), next_logp(n);
    {
      NoGradScope no_grad;
      std::vector<Tensor> next_role_in(n), next_act_oh(n);
      std::vector<std::vector<int>> next_act(n);
      std::vector<Tensor> next_log_probs(n);
      for (std::size_t i = 0; i < n; ++i) {
        if (roles) {
          const nets::RoleNets& net = model_.roles_for(i);
          auto s = nets::sample_role(net.self_role(next_obs[i], act_oh[i]), rng_);
          std::vector<nets::RoleSample> o;
          if (opp_roles) {
            for (const auto& d : net.opponent_roles(next_obs[i], tau_next[i].detach())) o.push_back(nets::sample_role(d, rng_));
          }
          next_role_in[i] = model_.role_input(s, o);
        }
        next_log_probs[i] = log_softmax(target_.policy_logits(i, next_obs[i], next_role_in[i]));
        next_act[i] = sample_rows(exp(next_log_probs[i]), rng_);
        next_act_oh[i] = one_hot(next_act[i], actions);
      }
      const nets::CriticOutput tq = target_.critic().forward({next_obs, next_act_oh, next_role_in});
      for (std::size_t i = 0; i < n; ++i) {
        next_q[i] = gather(tq.q[i], next_act[i]);
        next_logp[i] = gather(next_log_probs[i], next_act[i]);
      }
    }

    Tensor l_q = Tensor::scalar(0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const Tensor y = losses::td_target(reward[i], done_t, next_q[i], next_logp[i], cfg_.loss);
      l_q = l_q + losses::critic_loss(gather(critic.q[i], act[i]), y, mask_t);
    }

    Tensor l_pi = Tensor::scalar(0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const Tensor logits = model_.policy_logits(i, obs[i], role_in[i].defined() ? role_in[i].detach() : Tensor());
      std::vector<int> sampled;
      {
        NoGradScope no_grad;
        sampled = sample_rows(softmax(logits.detach()), rng_);
      }
      l_pi = l_pi + losses::policy_loss(logits, sampled, critic.q[i].detach(), alpha, mask_t);
    }

    report.l_q += l_q.item();
    ++report.steps;
    backward(l_q, /*retain_graph=*/roles);
    report.critic_grad_norm = critic_opt_.step();
    backward(l_pi);
    report.policy_grad_norm = policy_opt_.step();
    soft_update_targets();
    tau_chain = std::move(tau_next);
  }

  if (report.steps > 0) report.l_q /= static_cast<double>(report.steps);
  report.l_role = report.l_mi + report.l_d + report.l_opp;
  report.l_total = report.l_q + report.role_weight * report.l_role;
  if (role_opt_) {
    if (role_sum.requires_grad()) backward(role_sum * report.role_weight);
    for (std::size_t j = chain_steps.size(); j-- > 0;) {
      Tensor surrogate = Tensor::scalar(0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const Tensor& real = chain_steps[j][i];
        const auto g = leaf_steps[j][i].grad();
        if (!real.requires_grad() || g.empty()) continue;
        surrogate = surrogate + sum(real * Tensor::from_data(real.shape(), {g.begin(), g.end()}));
      }
      if (surrogate.requires_grad()) backward(surrogate);
    }
    report.role_grad_norm = role_opt_->step();
  }
  last_report_ = report;
  return report;
}

void Trainer::train_round() {
  const std::size_t envs = cfg_.train.envs;
  std::vector<EpisodeRecord> records(envs);
  const std::vector<TeamController> controllers{{&model_, 0}, {&model_, 1}};
  auto play = [&](std::size_t e) {
    const std::uint64_t index = episodes_ + e;
    Rng action_rng(episode_action_seed(cfg_.train.seed, index));
    records[e] = play_episode(cfg_.game, controllers, episode_env_seed(cfg_.train.seed, index), action_rng);
  };
  if (envs == 1) {
    play(0);
  } else {
    std::vector<std::jthread> workers;
    for (std::size_t e = 0; e < envs; ++e) workers.emplace_back(play, e);
  }

  for (EpisodeRecord& rec : records) {
    const std::vector<double> returns = rec.returns();
    for (std::size_t team = 0; team < cfg_.game.teams; ++team) {
      double total = 0.0;
      for (std::size_t i = 0; i < returns.size(); ++i) {
        if (cfg_.game.team_of(i) == team) total += returns[i];
      }
      metrics_.push_back({episodes_, team, total / static_cast<double>(cfg_.game.agents_per_team), last_report_});
    }
    if (on_episode) on_episode(rec);
    buffer_.push(std::move(rec));
    ++episodes_;
    ++since_update_;
  }

  if (since_update_ >= cfg_.train.episodes_per_update && buffer_.size() >= cfg_.train.batch_episodes) {
    for (std::size_t u = 0; u < cfg_.train.updates_per_round; ++u) {
      update(buffer_.sample(cfg_.train.batch_episodes, cfg_.train.window, rng_));
    }
    since_update_ = 0;
  }
}

void Trainer::run(const fs::path& out_dir) {
  std::ofstream csv;
  std::size_t written = metrics_.size();
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    const fs::path path = out_dir / "metrics.csv";
    const bool fresh = !fs::exists(path) || episodes_ == 0;
    csv.open(path, fresh ? std::ios::trunc : std::ios::app);
    if (!csv) throw std::runtime_error("cannot write " + path.string());
    if (fresh) csv << kTrainMetricsHeader << '\n';
  }
  spdlog::info("training {} on {} from episode {} to {}", cfg_.train.variant.name(), env::to_string(cfg_.game.game),
               episodes_, cfg_.train.max_episodes);
  while (episodes_ < cfg_.train.max_episodes) {
    try {
      train_round();
    } catch (const NonFiniteError& e) {
      if (!out_dir.empty()) {
        json diag{{"error", e.what()},
                  {"episode", episodes_},
                  {"updates", update_calls_},
                  {"config_hash", cfg_.hash()},
                  {"last_report", last_report_ ? report_json(*last_report_) : json(nullptr)}};
        write_file(out_dir / "diagnostic.json", diag.dump(2) + "\n");
      }
      throw;
    }
    if (csv.is_open()) {
      for (; written < metrics_.size(); ++written) csv << to_csv_line(metrics_[written]) << '\n';
      csv.flush();
    }
    const std::size_t every = cfg_.train.checkpoint_every;
    if (!out_dir.empty() && every > 0 && episodes_ % every < cfg_.train.envs && episodes_ < cfg_.train.max_episodes) {
      save_checkpoint(out_dir / fmt::format("checkpoint-{}", episodes_));
    }
    if (episodes_ % 1000 < cfg_.train.envs && last_report_) {
      spdlog::info("episode {} L_Q {:.4g} L_Role {:.4g} weight {:.4g}", episodes_, last_report_->l_q,
                   last_report_->l_role, last_report_->role_weight);
    }
  }
  if (!out_dir.empty()) save_checkpoint(out_dir / "checkpoint");
}

void Trainer::save_checkpoint(const fs::path& dir) const {
  fs::create_directories(dir);
  save_params(model_.params(), dir / "model.params");
  save_params(target_.params(), dir / "target.params");
  auto save_opt = [&](const Adam& opt, const std::string& name) {
    save_params(opt.first_moment(), dir / ("opt." + name + ".m.params"));
    save_params(opt.second_moment(), dir / ("opt." + name + ".v.params"));
  };
  save_opt(policy_opt_, "policy");
  save_opt(critic_opt_, "critic");
  if (role_opt_) save_opt(*role_opt_, "roles");
  write_file(dir / "replay.bin", buffer_.serialize());

  json manifest{{"format", kCheckpointFormat},
                {"variant", cfg_.train.variant.name()},
                {"episodes", episodes_},
                {"since_update", since_update_},
                {"update_calls", update_calls_},
                {"config", json::parse(cfg_.to_json())},
                {"config_hash", cfg_.hash()},
                {"game_hash", cfg_.game_hash()},
                {"rng", rng_.state()},
                {"adam_steps",
                 {{"policy", policy_opt_.steps()},
                  {"critic", critic_opt_.steps()},
                  {"roles", role_opt_ ? role_opt_->steps() : 0}}},
                {"last_report", last_report_ ? report_json(*last_report_) : json(nullptr)}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

namespace {

json read_manifest(const fs::path& dir) {
  const json m = json::parse(read_file(dir / "manifest.json"));
  if (m.at("format").get<int>() != kCheckpointFormat) {
    throw std::runtime_error("unsupported checkpoint format in " + dir.string());
  }
  return m;
}

}  // namespace

Trainer Trainer::resume(const fs::path& dir, std::optional<std::size_t> max_episodes) {
  const json m = read_manifest(dir);
  ExperimentConfig cfg = ExperimentConfig::from_json(m.at("config").dump());
  if (cfg.hash() != m.at("config_hash").get<std::string>()) {
    throw std::runtime_error("checkpoint config hash mismatch in " + dir.string());
  }
  if (max_episodes) cfg.train.max_episodes = *max_episodes;
  Trainer t(std::move(cfg));
  t.model_.params().copy_values_from(load_params(dir / "model.params"));
  t.target_.params().copy_values_from(load_params(dir / "target.params"));
  auto load_opt = [&](Adam& opt, const std::string& name) {
    opt.load_state(load_params(dir / ("opt." + name + ".m.params")), load_params(dir / ("opt." + name + ".v.params")),
                   m.at("adam_steps").at(name).get<std::uint64_t>());
  };
  load_opt(t.policy_opt_, "policy");
  load_opt(t.critic_opt_, "critic");
  if (t.role_opt_) load_opt(*t.role_opt_, "roles");
  t.buffer_.deserialize(read_file(dir / "replay.bin"));
  t.episodes_ = m.at("episodes");
  t.since_update_ = m.at("since_update");
  t.update_calls_ = m.at("update_calls");
  t.rng_.set_state(m.at("rng").get<std::string>());
  if (!m.at("last_report").is_null()) t.last_report_ = report_from_json(m.at("last_report"));
  return t;
}

LoadedCheckpoint load_checkpoint_model(const fs::path& dir) {
  const json m = read_manifest(dir);
  ExperimentConfig cfg = ExperimentConfig::from_json(m.at("config").dump());
  nets::Model model(model_shape(cfg.game), cfg.nets, cfg.train.variant.architecture(), model_seed(cfg.train.seed));
  model.params().copy_values_from(load_params(dir / "model.params"));
  return {std::move(cfg), std::move(model)};
}

}  // namespace rac::train
