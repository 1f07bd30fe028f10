#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rac/common/rng.hpp"
#include "rac/diff/ops.hpp"
#include "rac/diff/param_set.hpp"

namespace rac::nets {

using diff::ParamSet;
using diff::Tensor;

struct NetConfig {
  std::size_t role_dim = 8;
  std::size_t gru_hidden = 64;
  std::size_t mlp_hidden = 128;
  std::size_t critic_hidden = 128;
  std::size_t attention_dim = 128;
  std::size_t attention_heads = 4;
  double std_floor = 1e-3;
  // Role networks (trajectory encoder, h_S, h_O, q_xi) per team, else per agent.
  bool roles_per_team = true;
  // Policies and critic heads per agent, else shared within a team.
  bool actor_critic_per_agent = true;

  void validate() const;
};

// Which role pathways a model carries. MAAC has none; the team-only variant
// keeps self roles but drops opponent prediction and cross-team critic input.
struct Architecture {
  bool self_roles = true;
  bool opponent_roles = true;
  bool critic_sees_opponents = true;
};

struct ModelShape {
  std::size_t obs_dim = 0;
  std::size_t actions = 0;
  std::size_t teams = 2;
  std::size_t agents_per_team = 2;

  std::size_t agents() const { return teams * agents_per_team; }
  std::size_t team_of(std::size_t agent) const { return agent / agents_per_team; }
  std::size_t opponents() const { return agents_per_team * (teams - 1); }
  // Opponents of agent i sorted by global id.
  std::vector<std::size_t> opponents_of(std::size_t agent) const;
  std::vector<std::size_t> teammates_of(std::size_t agent) const;
};

struct Linear {
  Tensor w;  // [in, out]
  Tensor b;  // [out]

  static Linear create(ParamSet& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                       bool bias = true);
  Tensor operator()(const Tensor& x) const;
};

// Linear layers with relu between them, none after the last.
struct Mlp {
  std::vector<Linear> layers;

  static Mlp create(ParamSet& params, const std::string& name, const std::vector<std::size_t>& sizes, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  std::size_t out_dim() const { return layers.back().w.cols(); }
};

struct GruCell {
  Tensor w_ih, w_hh, b_ih, b_hh;

  static GruCell create(ParamSet& params, const std::string& name, std::size_t in, std::size_t hidden, Rng& rng);
  Tensor operator()(const Tensor& x, const Tensor& h) const;
  std::size_t hidden() const { return w_hh.rows(); }
};

// Batched diagonal Gaussian, one distribution per row: mean and std are [B, d].
struct DiagGaussian {
  Tensor mean;
  Tensor std;

  std::size_t dim() const { return mean.cols(); }
  std::size_t batch() const { return mean.rows(); }
  DiagGaussian detach() const { return {mean.detach(), std.detach()}; }
};

// Splits [B, 2d] into mean and std = softplus(pre) + floor.
DiagGaussian gaussian_head(const Tensor& out, double std_floor);

struct RoleSample {
  DiagGaussian dist;
  Tensor noise;  // constant
  Tensor value;  // mean + std * noise
};

RoleSample reparameterize(const DiagGaussian& dist, Tensor noise);
RoleSample sample_role(const DiagGaussian& dist, Rng& rng);

// Feed-forward layer on (o, one-hot a) followed by a GRU; the embedding at
// episode start is zero.
struct TrajectoryEncoder {
  Linear embed;
  GruCell gru;

  Tensor initial(std::size_t batch) const { return Tensor::zeros({batch, gru.hidden()}); }
  Tensor operator()(const Tensor& tau_prev, const Tensor& obs, const Tensor& action_onehot) const;
};

struct RoleNets {
  TrajectoryEncoder trajectory;
  Mlp self;                     // h_S(o, a_prev)
  std::optional<Mlp> opponent;  // h_O(o, tau_prev), one head per opponent slot
  Mlp posterior;                // q_xi(o, a_prev, tau_prev)
  std::size_t role_dim = 0;
  std::size_t opponent_slots = 0;
  double std_floor = 1e-3;

  DiagGaussian self_role(const Tensor& obs, const Tensor& prev_action_onehot) const;
  std::vector<DiagGaussian> opponent_roles(const Tensor& obs, const Tensor& tau_prev) const;
  DiagGaussian variational(const Tensor& obs, const Tensor& prev_action_onehot, const Tensor& tau_prev) const;
};

// Counts reads of another team's observation inside critic construction.
// Stays at zero when the critic is restricted to the agent's own team.
std::atomic<std::size_t>& critic_opponent_reads();

struct CriticInputs {
  std::vector<Tensor> obs;          // per agent [B, obs_dim]
  std::vector<Tensor> actions;      // per agent one-hot [B, |A|]
  std::vector<Tensor> role_inputs;  // per agent [B, role_input_dim]; undefined without roles
};

struct CriticOutput {
  std::vector<Tensor> q;                       // per requested agent [B, |A|]
  std::vector<std::vector<Tensor>> attention;  // per agent, per head [B, others]
  std::vector<std::vector<std::size_t>> attended;
};

// Attention critic. Each agent j contributes a state-action embedding
// g_j(o_j, a_j); agent i's own embedding uses (o_i, roles) only, so one pass
// yields Q_i for every candidate a_i.
class AttentionCritic {
 public:
  AttentionCritic() = default;
  AttentionCritic(ParamSet& params, const std::string& prefix, const ModelShape& shape, const NetConfig& cfg,
                  std::size_t role_input_dim, bool sees_opponents, Rng& rng);

  // Agents attended by agent i's critic.
  std::vector<std::size_t> visible_to(std::size_t agent) const;
  CriticOutput forward(const CriticInputs& in, const std::vector<std::size_t>& agents) const;
  CriticOutput forward(const CriticInputs& in) const;

 private:
  ModelShape shape_;
  bool sees_opponents_ = true;
  std::size_t head_dim_ = 0;
  std::vector<std::size_t> slot_;  // agent -> module slot
  std::vector<Linear> sa_encoders_;
  std::vector<Linear> state_encoders_;
  std::vector<Tensor> queries_, keys_;
  std::vector<Linear> values_;
  std::vector<Mlp> heads_;
};

class Model {
 public:
  Model(const ModelShape& shape, const NetConfig& cfg, const Architecture& arch, std::uint64_t init_seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  // Independent copy with identical values.
  Model clone() const;

  const ModelShape& shape() const { return shape_; }
  const NetConfig& config() const { return cfg_; }
  const Architecture& architecture() const { return arch_; }
  std::uint64_t init_seed() const { return init_seed_; }

  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  // Parameter groups: "policy.", "critic.", "roles.".
  ParamSet group(const std::string& prefix) const { return params_.with_prefix(prefix); }

  bool has_roles() const { return arch_.self_roles; }
  bool has_opponent_roles() const { return arch_.self_roles && arch_.opponent_roles; }
  std::size_t role_input_dim() const;
  const RoleNets& roles_for(std::size_t agent) const;
  std::size_t role_slot(std::size_t agent) const;
  std::size_t policy_slot(std::size_t agent) const;

  // Concatenates the role values an agent's policy and critic see; undefined
  // when the model has no roles.
  Tensor role_input(const std::optional<RoleSample>& self, const std::vector<RoleSample>& opponents) const;
  Tensor policy_logits(std::size_t agent, const Tensor& obs, const Tensor& role_input) const;

  const AttentionCritic& critic() const { return critic_; }

 private:
  ModelShape shape_;
  NetConfig cfg_;
  Architecture arch_;
  std::uint64_t init_seed_;
  ParamSet params_;
  std::vector<RoleNets> roles_;
  std::vector<Mlp> policies_;
  AttentionCritic critic_;
};

}  // namespace rac::nets
