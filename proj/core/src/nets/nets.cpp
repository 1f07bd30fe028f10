#include "rac/nets/nets.hpp"

#include <cmath>
#include <stdexcept>

namespace rac::nets {

using namespace rac::diff;

void NetConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("invalid NetConfig: ") + what);
  };
  require(role_dim > 0, "role_dim must be positive");
  require(gru_hidden > 0 && mlp_hidden > 0 && critic_hidden > 0, "hidden sizes must be positive");
  require(attention_heads > 0 && attention_dim > 0, "attention sizes must be positive");
  require(attention_dim % attention_heads == 0, "attention_dim must be divisible by attention_heads");
  require(std_floor > 0, "std_floor must be positive");
}

std::vector<std::size_t> ModelShape::opponents_of(std::size_t agent) const {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < agents(); ++j) {
    if (team_of(j) != team_of(agent)) out.push_back(j);
  }
  return out;
}

std::vector<std::size_t> ModelShape::teammates_of(std::size_t agent) const {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < agents(); ++j) {
    if (j != agent && team_of(j) == team_of(agent)) out.push_back(j);
  }
  return out;
}

namespace {

Tensor uniform_param(Shape shape, double bound, Rng& rng) {
  std::vector<double> data(element_count(shape));
  for (double& v : data) v = rng.uniform(-bound, bound);
  return Tensor::parameter(std::move(shape), std::move(data));
}

}  // namespace

Linear Linear::create(ParamSet& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                      bool bias) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Linear l;
  l.w = uniform_param({in, out}, bound, rng);
  params.add(name + ".w", l.w);
  if (bias) {
    l.b = uniform_param({out}, bound, rng);
    params.add(name + ".b", l.b);
  }
  return l;
}

Tensor Linear::operator()(const Tensor& x) const { return linear(x, w, b); }

Mlp Mlp::create(ParamSet& params, const std::string& name, const std::vector<std::size_t>& sizes, Rng& rng) {
  if (sizes.size() < 2) throw std::invalid_argument("Mlp needs at least input and output sizes");
  Mlp m;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    m.layers.push_back(Linear::create(params, name + ".l" + std::to_string(i), sizes[i], sizes[i + 1], rng));
  }
  return m;
}

Tensor Mlp::operator()(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i](h);
    if (i + 1 < layers.size()) h = relu(h);
  }
  return h;
}

GruCell GruCell::create(ParamSet& params, const std::string& name, std::size_t in, std::size_t hidden, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  GruCell g;
  g.w_ih = uniform_param({in, 3 * hidden}, bound, rng);
  g.w_hh = uniform_param({hidden, 3 * hidden}, bound, rng);
  g.b_ih = uniform_param({3 * hidden}, bound, rng);
  g.b_hh = uniform_param({3 * hidden}, bound, rng);
  params.add(name + ".w_ih", g.w_ih);
  params.add(name + ".w_hh", g.w_hh);
  params.add(name + ".b_ih", g.b_ih);
  params.add(name + ".b_hh", g.b_hh);
  return g;
}

Tensor GruCell::operator()(const Tensor& x, const Tensor& h) const { return gru_cell(x, h, w_ih, w_hh, b_ih, b_hh); }

DiagGaussian gaussian_head(const Tensor& out, double std_floor) {
  if (out.cols() % 2 != 0) throw ShapeError("gaussian_head expects an even width");
  const std::size_t d = out.cols() / 2;
  return {slice(out, 0, d), softplus(slice(out, d, 2 * d)) + std_floor};
}

RoleSample reparameterize(const DiagGaussian& dist, Tensor noise) {
  if (noise.rows() != dist.batch() || noise.cols() != dist.dim()) {
    throw ShapeError("reparameterize: noise shape " + to_string(noise.shape()) + " does not match distribution");
  }
  Tensor value = dist.mean + dist.std * noise;
  return {dist, std::move(noise), std::move(value)};
}

RoleSample sample_role(const DiagGaussian& dist, Rng& rng) {
  std::vector<double> eps(dist.batch() * dist.dim());
  for (double& e : eps) e = rng.normal();
  return reparameterize(dist, Tensor::from_data({dist.batch(), dist.dim()}, std::move(eps)));
}

Tensor TrajectoryEncoder::operator()(const Tensor& tau_prev, const Tensor& obs, const Tensor& action_onehot) const {
  return gru(relu(embed(concat({obs, action_onehot}))), tau_prev);
}

DiagGaussian RoleNets::self_role(const Tensor& obs, const Tensor& prev_action_onehot) const {
  return gaussian_head(self(concat({obs, prev_action_onehot})), std_floor);
}

std::vector<DiagGaussian> RoleNets::opponent_roles(const Tensor& obs, const Tensor& tau_prev) const {
  if (!opponent) throw std::logic_error("model has no opponent role predictor");
  const Tensor out = (*opponent)(concat({obs, tau_prev}));
  std::vector<DiagGaussian> roles;
  for (std::size_t s = 0; s < opponent_slots; ++s) {
    roles.push_back(gaussian_head(slice(out, 2 * role_dim * s, 2 * role_dim * (s + 1)), std_floor));
  }
  return roles;
}

DiagGaussian RoleNets::variational(const Tensor& obs, const Tensor& prev_action_onehot, const Tensor& tau_prev) const {
  return gaussian_head(posterior(concat({obs, prev_action_onehot, tau_prev})), std_floor);
}

std::atomic<std::size_t>& critic_opponent_reads() {
  static std::atomic<std::size_t> counter{0};
  return counter;
}

AttentionCritic::AttentionCritic(ParamSet& params, const std::string& prefix, const ModelShape& shape,
                                 const NetConfig& cfg, std::size_t role_input_dim, bool sees_opponents, Rng& rng)
    : shape_(shape), sees_opponents_(sees_opponents), head_dim_(cfg.attention_dim / cfg.attention_heads) {
  const std::size_t n = shape.agents();
  const std::size_t h = cfg.critic_hidden;
  std::size_t slots = cfg.actor_critic_per_agent ? n : shape.teams;
  for (std::size_t i = 0; i < n; ++i) slot_.push_back(cfg.actor_critic_per_agent ? i : shape.team_of(i));
  for (std::size_t s = 0; s < slots; ++s) {
    const std::string p = prefix + ".s" + std::to_string(s);
    sa_encoders_.push_back(Linear::create(params, p + ".sa_enc", shape.obs_dim + shape.actions, h, rng));
    state_encoders_.push_back(Linear::create(params, p + ".state_enc", shape.obs_dim + role_input_dim, h, rng));
    heads_.push_back(Mlp::create(params, p + ".head", {h + cfg.attention_dim, h, shape.actions}, rng));
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(h));
  for (std::size_t k = 0; k < cfg.attention_heads; ++k) {
    const std::string p = prefix + ".attn" + std::to_string(k);
    queries_.push_back(uniform_param({h, head_dim_}, bound, rng));
    params.add(p + ".query", queries_.back());
    keys_.push_back(uniform_param({h, head_dim_}, bound, rng));
    params.add(p + ".key", keys_.back());
    values_.push_back(Linear::create(params, p + ".value", h, head_dim_, rng));
  }
}

std::vector<std::size_t> AttentionCritic::visible_to(std::size_t agent) const {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < shape_.agents(); ++j) {
    if (j == agent) continue;
    if (sees_opponents_ || shape_.team_of(j) == shape_.team_of(agent)) out.push_back(j);
  }
  return out;
}

CriticOutput AttentionCritic::forward(const CriticInputs& in) const {
  std::vector<std::size_t> all(shape_.agents());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return forward(in, all);
}

CriticOutput AttentionCritic::forward(const CriticInputs& in, const std::vector<std::size_t>& agents) const {
  const std::size_t n = shape_.agents();
  if (in.obs.size() != n || in.actions.size() != n) {
    throw std::invalid_argument("critic expects observations and actions for all " + std::to_string(n) + " agents");
  }
  const std::size_t heads = queries_.size();
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim_));

  // Embeddings, keys and values of every agent some requested critic attends.
  std::vector<char> needed(n, 0);
  CriticOutput out;
  for (std::size_t i : agents) {
    out.attended.push_back(visible_to(i));
    for (std::size_t j : out.attended.back()) needed[j] = 1;
  }
  std::vector<std::vector<Tensor>> keys(n), values(n);
  for (std::size_t j = 0; j < n; ++j) {
    if (!needed[j]) continue;
    const Tensor e = relu(sa_encoders_[slot_[j]](concat({in.obs[j], in.actions[j]})));
    for (std::size_t k = 0; k < heads; ++k) {
      keys[j].push_back(matmul(e, keys_[k]));
      values[j].push_back(relu(values_[k](e)));
    }
  }

  for (std::size_t a = 0; a < agents.size(); ++a) {
    const std::size_t i = agents[a];
    const auto& others = out.attended[a];
    for (std::size_t j : others) {
      if (shape_.team_of(j) != shape_.team_of(i)) critic_opponent_reads().fetch_add(1, std::memory_order_relaxed);
    }
    const Tensor role = i < in.role_inputs.size() ? in.role_inputs[i] : Tensor();
    const Tensor s = relu(state_encoders_[slot_[i]](role.defined() ? concat({in.obs[i], role}) : in.obs[i]));
    std::vector<Tensor> context;
    std::vector<Tensor> weights;
    for (std::size_t k = 0; k < heads; ++k) {
      if (others.empty()) {
        context.push_back(Tensor::zeros({s.rows(), head_dim_}));
        continue;
      }
      const Tensor q = matmul(s, queries_[k]);
      std::vector<Tensor> scores;
      for (std::size_t j : others) scores.push_back(sum_rows(q * keys[j][k]));
      const Tensor w = softmax(concat(scores) * scale);
      Tensor x;
      for (std::size_t m = 0; m < others.size(); ++m) {
        Tensor term = slice(w, m, m + 1) * values[others[m]][k];
        x = x.defined() ? x + term : term;
      }
      context.push_back(x);
      weights.push_back(w);
    }
    std::vector<Tensor> parts{s};
    parts.insert(parts.end(), context.begin(), context.end());
    out.q.push_back(heads_[slot_[i]](concat(parts)));
    out.attention.push_back(std::move(weights));
  }
  return out;
}

Model::Model(const ModelShape& shape, const NetConfig& cfg, const Architecture& arch, std::uint64_t init_seed)
    : shape_(shape), cfg_(cfg), arch_(arch), init_seed_(init_seed) {
  cfg_.validate();
  if (shape.obs_dim == 0 || shape.actions == 0) throw std::invalid_argument("model needs observation and action sizes");
  if (!arch_.self_roles) arch_.opponent_roles = false;
  Rng rng(init_seed);
  const std::size_t n = shape.agents();
  const std::size_t d = cfg.role_dim;
  const std::size_t obs = shape.obs_dim;
  const std::size_t act = shape.actions;

  if (arch_.self_roles) {
    const std::size_t slots = cfg.roles_per_team ? shape.teams : n;
    for (std::size_t s = 0; s < slots; ++s) {
      const std::string p = std::string("roles.") + (cfg.roles_per_team ? "t" : "a") + std::to_string(s);
      RoleNets r;
      r.role_dim = d;
      r.std_floor = cfg.std_floor;
      r.trajectory.embed = Linear::create(params_, p + ".traj.embed", obs + act, cfg.gru_hidden, rng);
      r.trajectory.gru = GruCell::create(params_, p + ".traj.gru", cfg.gru_hidden, cfg.gru_hidden, rng);
      r.self = Mlp::create(params_, p + ".self", {obs + act, cfg.mlp_hidden, 2 * d}, rng);
      if (arch_.opponent_roles) {
        r.opponent_slots = shape.opponents();
        r.opponent = Mlp::create(params_, p + ".opponent", {obs + cfg.gru_hidden, cfg.mlp_hidden, 2 * d * r.opponent_slots}, rng);
      }
      r.posterior = Mlp::create(params_, p + ".posterior", {obs + act + cfg.gru_hidden, cfg.mlp_hidden, 2 * d}, rng);
      roles_.push_back(std::move(r));
    }
  }

  const std::size_t policy_slots = cfg.actor_critic_per_agent ? n : shape.teams;
  for (std::size_t s = 0; s < policy_slots; ++s) {
    const std::string p = std::string("policy.") + (cfg.actor_critic_per_agent ? "a" : "t") + std::to_string(s);
    policies_.push_back(Mlp::create(params_, p, {obs + role_input_dim(), cfg.mlp_hidden, cfg.mlp_hidden, act}, rng));
  }
  critic_ = AttentionCritic(params_, "critic", shape, cfg, role_input_dim(), arch_.critic_sees_opponents, rng);
}

Model Model::clone() const {
  Model copy(shape_, cfg_, arch_, init_seed_);
  copy.params_.copy_values_from(params_);
  return copy;
}

std::size_t Model::role_input_dim() const {
  if (!arch_.self_roles) return 0;
  return cfg_.role_dim * (1 + (arch_.opponent_roles ? shape_.opponents() : 0));
}

std::size_t Model::role_slot(std::size_t agent) const {
  return cfg_.roles_per_team ? shape_.team_of(agent) : agent;
}

std::size_t Model::policy_slot(std::size_t agent) const {
  return cfg_.actor_critic_per_agent ? agent : shape_.team_of(agent);
}

const RoleNets& Model::roles_for(std::size_t agent) const {
  if (!arch_.self_roles) throw std::logic_error("model has no role networks");
  return roles_.at(role_slot(agent));
}

Tensor Model::role_input(const std::optional<RoleSample>& self, const std::vector<RoleSample>& opponents) const {
  if (!arch_.self_roles) return {};
  if (!self) throw std::invalid_argument("role_input: missing self role");
  std::vector<Tensor> parts{self->value};
  if (arch_.opponent_roles) {
    if (opponents.size() != shape_.opponents()) throw std::invalid_argument("role_input: wrong opponent role count");
    for (const RoleSample& r : opponents) parts.push_back(r.value);
  }
  return concat(parts);
}

Tensor Model::policy_logits(std::size_t agent, const Tensor& obs, const Tensor& role_input) const {
  const Mlp& pi = policies_.at(policy_slot(agent));
  return pi(role_input.defined() ? concat({obs, role_input}) : obs);
}

}  // namespace rac::nets
