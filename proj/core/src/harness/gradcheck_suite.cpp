#include "rac/harness/gradcheck_suite.hpp"

#include <optional>

#include "rac/diff/ops.hpp"
#include "rac/losses/losses.hpp"
#include "rac/nets/nets.hpp"
#include "rac/train/trainer.hpp"

namespace rac::harness {

using namespace rac::diff;
using nets::DiagGaussian;
using nets::Model;

namespace {

constexpr std::size_t kBatch = 3;

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<double> v(element_count(shape));
  for (double& x : v) x = static_cast<float>(scale * rng.normal());
  return Tensor::from_data(std::move(shape), std::move(v));
}

std::vector<int> random_actions(std::size_t n, Rng& rng) {
  std::vector<int> a(kBatch);
  for (int& x : a) x = static_cast<int>(rng.uniform_index(n));
  return a;
}

ParamSet pick(const Model& m, std::initializer_list<const char*> fragments) {
  ParamSet out;
  for (const auto& [name, t] : m.params()) {
    for (const char* f : fragments) {
      if (name.find(f) != std::string::npos) {
        out.add(name, t);
        break;
      }
    }
  }
  return out;
}

// Batched inputs for every agent plus fixed noise and targets.
struct Fixture {
  env::GameSpec game;
  nets::ModelShape shape;
  Model model;
  std::vector<std::vector<Tensor>> obs;  // [step][agent], two steps of history then the current one
  std::vector<std::vector<std::vector<int>>> act;
  std::vector<Tensor> self_noise;
  std::vector<std::vector<Tensor>> opp_noise;
  std::vector<Tensor> targets;
  Tensor mask;

  Fixture(const nets::NetConfig& cfg, const nets::Architecture& arch, std::uint64_t seed)
      : game(micro_game()), shape(train::model_shape(game)), model(shape, cfg, arch, seed) {
    Rng rng(mix_seed(seed, 11));
    const std::size_t n = shape.agents();
    for (std::size_t t = 0; t < 3; ++t) {
      obs.emplace_back();
      act.emplace_back();
      for (std::size_t i = 0; i < n; ++i) {
        obs[t].push_back(random_tensor({kBatch, shape.obs_dim}, rng, 0.5));
        act[t].push_back(random_actions(shape.actions, rng));
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      self_noise.push_back(random_tensor({kBatch, cfg.role_dim}, rng));
      opp_noise.emplace_back();
      for (std::size_t s = 0; s < shape.opponents(); ++s) opp_noise[i].push_back(random_tensor({kBatch, cfg.role_dim}, rng));
      targets.push_back(random_tensor({kBatch, 1}, rng));
    }
    mask = Tensor::from_data({kBatch, 1}, {1.0, 1.0, 0.0});
  }

  static env::GameSpec micro_game() {
    env::GameSpec g = env::GameSpec::touch_mark();
    g.agents_per_team = 2;
    return g;
  }

  std::size_t agents() const { return shape.agents(); }
  const Tensor& o(std::size_t i) const { return obs[2][i]; }
  Tensor prev_oh(std::size_t i) const { return one_hot(act[1][i], shape.actions); }
  Tensor act_oh(std::size_t i) const { return one_hot(act[2][i], shape.actions); }
  const std::vector<int>& a(std::size_t i) const { return act[2][i]; }

  // Trajectory embedding after the two history steps.
  Tensor tau(std::size_t i) const {
    const auto& enc = model.roles_for(i).trajectory;
    Tensor h = enc.initial(kBatch);
    for (std::size_t t = 0; t < 2; ++t) h = enc(h, obs[t][i], one_hot(act[t][i], shape.actions));
    return h;
  }

  DiagGaussian self_role(std::size_t i) const { return model.roles_for(i).self_role(o(i), prev_oh(i)); }

  struct Roles {
    std::vector<DiagGaussian> self;
    std::vector<Tensor> values;
    std::vector<std::vector<DiagGaussian>> predicted;
    std::vector<Tensor> role_in;
    std::vector<Tensor> tau;
  };

  Roles roles() const {
    Roles r;
    for (std::size_t i = 0; i < agents(); ++i) {
      r.tau.push_back(tau(i));
      r.self.push_back(self_role(i));
      const auto sample = nets::reparameterize(r.self.back(), self_noise[i]);
      r.values.push_back(sample.value);
      std::vector<nets::RoleSample> opp;
      if (model.has_opponent_roles()) {
        r.predicted.push_back(model.roles_for(i).opponent_roles(o(i), r.tau.back()));
        for (std::size_t s = 0; s < r.predicted.back().size(); ++s) {
          opp.push_back(nets::reparameterize(r.predicted.back()[s], opp_noise[i][s]));
        }
      } else {
        r.predicted.emplace_back();
      }
      r.role_in.push_back(model.role_input(sample, opp));
    }
    return r;
  }

  Tensor critic_loss(const Roles& r) const {
    std::vector<Tensor> o_all, a_all;
    for (std::size_t i = 0; i < agents(); ++i) {
      o_all.push_back(o(i));
      a_all.push_back(act_oh(i));
    }
    const auto out = model.critic().forward({o_all, a_all, r.role_in});
    Tensor l = Tensor::scalar(0.0);
    for (std::size_t i = 0; i < agents(); ++i) {
      l = l + losses::critic_loss(gather(out.q[i], a(i)), targets[i], mask);
    }
    return l;
  }

  Tensor mi(const Roles& r) const {
    std::vector<DiagGaussian> post;
    for (std::size_t i = 0; i < agents(); ++i) post.push_back(model.roles_for(i).variational(o(i), prev_oh(i), r.tau[i]));
    return losses::mi_loss(r.self, post, mask).value;
  }

  Tensor diversity(const Roles& r) const {
    return losses::diversity_loss(
               shape, r.values,
               [&](std::size_t i, std::size_t j) { return model.roles_for(j).variational(o(j), prev_oh(i), r.tau[j]); },
               mask)
        .value;
  }

  // The L_Opp targets are detached, so they enter as fixed distributions.
  Tensor opponent(const Roles& r, const std::vector<DiagGaussian>& fixed_targets) const {
    return losses::opponent_loss(shape, r.predicted, fixed_targets, mask).value;
  }

  std::vector<DiagGaussian> frozen_self_roles() const {
    NoGradScope no_grad;
    std::vector<DiagGaussian> out;
    for (std::size_t i = 0; i < agents(); ++i) out.push_back(self_role(i).detach());
    return out;
  }
};

}  // namespace

std::vector<GradcheckCase> run_gradcheck_suite(std::uint64_t seed, const GradcheckOptions& options) {
  PrecisionScope high(Precision::kHigh);
  nets::NetConfig cfg;
  cfg.role_dim = 2;
  cfg.gru_hidden = 3;
  cfg.mlp_hidden = 4;
  cfg.critic_hidden = 4;
  cfg.attention_dim = 4;
  cfg.attention_heads = 2;
  const Fixture rac(cfg, {true, true, true}, seed);
  const Fixture team(cfg, {true, false, false}, seed);
  const std::size_t n = rac.agents();
  std::vector<GradcheckCase> out;
  auto check = [&](std::string name, const std::function<Tensor()>& f, ParamSet params) {
    out.push_back({std::move(name), gradcheck(f, std::move(params), options)});
  };

  Rng w(mix_seed(seed, 12));
  std::vector<Tensor> tau_w, mean_w, std_w, opp_w, post_w, logit_w;
  for (std::size_t i = 0; i < n; ++i) {
    tau_w.push_back(random_tensor({kBatch, cfg.gru_hidden}, w));
    mean_w.push_back(random_tensor({kBatch, cfg.role_dim}, w));
    std_w.push_back(random_tensor({kBatch, cfg.role_dim}, w));
    opp_w.push_back(random_tensor({kBatch, cfg.role_dim}, w));
    post_w.push_back(random_tensor({kBatch, cfg.role_dim}, w));
    logit_w.push_back(random_tensor({kBatch, rac.shape.actions}, w));
  }

  check(
      "trajectory encoder",
      [&] {
        Tensor f = Tensor::scalar(0.0);
        for (std::size_t i = 0; i < n; ++i) f = f + sum(rac.tau(i) * tau_w[i]);
        return f;
      },
      pick(rac.model, {".traj."}));
  check(
      "self role h_S",
      [&] {
        Tensor f = Tensor::scalar(0.0);
        for (std::size_t i = 0; i < n; ++i) {
          const auto d = rac.self_role(i);
          f = f + sum(d.mean * mean_w[i]) + sum(d.std * std_w[i]);
        }
        return f;
      },
      pick(rac.model, {".self."}));
  check(
      "opponent roles h_O",
      [&] {
        Tensor f = Tensor::scalar(0.0);
        for (std::size_t i = 0; i < n; ++i) {
          for (const auto& d : rac.model.roles_for(i).opponent_roles(rac.o(i), rac.tau(i))) {
            f = f + sum(d.mean * opp_w[i]) + sum(d.std * mean_w[i]);
          }
        }
        return f;
      },
      pick(rac.model, {".opponent.", ".traj."}));
  check(
      "variational posterior q_xi",
      [&] {
        Tensor f = Tensor::scalar(0.0);
        for (std::size_t i = 0; i < n; ++i) {
          const auto d = rac.model.roles_for(i).variational(rac.o(i), rac.prev_oh(i), rac.tau(i));
          f = f + sum(d.mean * post_w[i]) + sum(d.std * std_w[i]);
        }
        return f;
      },
      pick(rac.model, {".posterior.", ".traj."}));
  check(
      "policies",
      [&] {
        const auto r = rac.roles();
        Tensor f = Tensor::scalar(0.0);
        for (std::size_t i = 0; i < n; ++i) {
          f = f + sum(log_softmax(rac.model.policy_logits(i, rac.o(i), r.role_in[i].detach())) * logit_w[i]);
        }
        return f;
      },
      rac.model.group("policy."));
  for (const Fixture* fx : {&rac, &team}) {
    check(
        fx == &rac ? "attention critic" : "attention critic (own team only)",
        [fx, &logit_w, n] {
          const auto r = fx->roles();
          std::vector<Tensor> o_all, a_all;
          for (std::size_t i = 0; i < n; ++i) {
            o_all.push_back(fx->o(i));
            a_all.push_back(fx->act_oh(i));
          }
          const auto q = fx->model.critic().forward({o_all, a_all, r.role_in});
          Tensor f = Tensor::scalar(0.0);
          for (std::size_t i = 0; i < n; ++i) f = f + sum(q.q[i] * logit_w[i]);
          return f;
        },
        fx->model.params());
  }
  check("critic loss L_Q", [&] { return rac.critic_loss(rac.roles()); },
        pick(rac.model, {"critic.", "roles."}));

  std::vector<Tensor> advantages;
  std::vector<Tensor> fixed_q;
  {
    const auto r = rac.roles();
    for (std::size_t i = 0; i < n; ++i) {
      fixed_q.push_back(random_tensor({kBatch, rac.shape.actions}, w));
      advantages.push_back(
          losses::policy_advantage(rac.model.policy_logits(i, rac.o(i), r.role_in[i]), rac.a(i), fixed_q[i], 0.05));
    }
  }
  check(
      "policy surrogate",
      [&] {
        const auto r = rac.roles();
        Tensor f = Tensor::scalar(0.0);
        for (std::size_t i = 0; i < n; ++i) {
          f = f + losses::policy_surrogate(rac.model.policy_logits(i, rac.o(i), r.role_in[i].detach()), rac.a(i),
                                           advantages[i], rac.mask);
        }
        return f;
      },
      rac.model.group("policy."));
  check("mutual information L_MI", [&] { return rac.mi(rac.roles()); }, rac.model.group("roles."));
  check("diversity L_D", [&] { return rac.diversity(rac.roles()); }, rac.model.group("roles."));
  const auto frozen = rac.frozen_self_roles();
  check("opponent modelling L_Opp", [&] { return rac.opponent(rac.roles(), frozen); }, rac.model.group("roles."));
  check(
      "total L_tot",
      [&] {
        const auto r = rac.roles();
        const auto b = losses::total_loss(rac.critic_loss(r), rac.mi(r), rac.diversity(r), rac.opponent(r, frozen),
                                          2500.0, losses::LossConfig{});
        return b.total;
      },
      pick(rac.model, {"critic.", "roles."}));
  return out;
}

}  // namespace rac::harness
