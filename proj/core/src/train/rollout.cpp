#include "rac/train/rollout.hpp"

#include <stdexcept>

namespace rac::train {

using namespace rac::diff;

std::atomic<std::size_t>& decentralized_cross_reads() {
  static std::atomic<std::size_t> counter{0};
  return counter;
}

AgentActor::AgentActor(const nets::Model& model, std::size_t env_agent, std::size_t model_agent)
    : model_(&model), env_agent_(env_agent), model_agent_(model_agent) {
  if (model_agent >= model.shape().agents()) throw std::out_of_range("model agent slot out of range");
  reset();
}

void AgentActor::reset() {
  prev_action_ = -1;
  role_.reset();
  if (model_->has_roles()) tau_ = model_->roles_for(model_agent_).trajectory.initial(1);
}

int AgentActor::act(std::size_t env_agent, const env::Observation& own_obs, Rng& rng) {
  if (env_agent != env_agent_) decentralized_cross_reads().fetch_add(1, std::memory_order_relaxed);
  NoGradScope no_grad;
  const std::size_t actions = model_->shape().actions;
  const Tensor o = Tensor::from_data({1, own_obs.size()}, own_obs);
  std::optional<nets::RoleSample> self;
  std::vector<nets::RoleSample> opponents;
  const nets::RoleNets* roles = model_->has_roles() ? &model_->roles_for(model_agent_) : nullptr;
  if (roles) {
    const int prev[1] = {prev_action_};
    role_ = roles->self_role(o, one_hot(prev, actions));
    self = nets::sample_role(*role_, rng);
    if (model_->has_opponent_roles()) {
      for (const auto& dist : roles->opponent_roles(o, tau_)) opponents.push_back(nets::sample_role(dist, rng));
    }
  }
  const Tensor probs = softmax(model_->policy_logits(model_agent_, o, model_->role_input(self, opponents)));
  probs_.assign(probs.data().begin(), probs.data().end());
  const int a = static_cast<int>(rng.categorical(probs_));
  if (roles) {
    const int act[1] = {a};
    tau_ = roles->trajectory(tau_, o, one_hot(act, actions));
  }
  prev_action_ = a;
  return a;
}

std::uint64_t episode_env_seed(std::uint64_t run_seed, std::uint64_t episode) { return mix_seed(run_seed, episode, 0); }
std::uint64_t episode_action_seed(std::uint64_t run_seed, std::uint64_t episode) {
  return mix_seed(run_seed, episode, 1);
}

EpisodeRecord play_episode(const env::GameSpec& spec, const std::vector<TeamController>& controllers,
                           std::uint64_t env_seed, Rng& action_rng, const ActObserver& observer) {
  if (controllers.size() != spec.teams) throw std::invalid_argument("one controller per team required");
  const std::size_t n = spec.agent_count();
  std::vector<AgentActor> actors;
  for (std::size_t i = 0; i < n; ++i) {
    const TeamController& c = controllers[spec.team_of(i)];
    if (!c.model) throw std::invalid_argument("team controller without a model");
    const auto& shape = c.model->shape();
    if (shape.obs_dim != spec.observation_size() || shape.actions != spec.action_count() ||
        shape.agents_per_team != spec.agents_per_team || shape.teams != spec.teams) {
      throw std::invalid_argument("model was built for a different game layout");
    }
    actors.emplace_back(*c.model, i, c.model_team * spec.agents_per_team + i % spec.agents_per_team);
  }

  env::Environment environment(spec);
  std::vector<env::Observation> obs = environment.reset(env_seed);
  EpisodeRecord rec;
  rec.seed = env_seed;
  std::vector<int> prev(n, -1);
  while (!environment.done()) {
    Transition t;
    t.step = environment.state().step_index;
    t.obs = obs;
    t.prev_actions = prev;
    t.actions.resize(n);
    for (std::size_t i = 0; i < n; ++i) t.actions[i] = actors[i].act(i, obs[i], action_rng);
    if (observer) observer(actors);
    const env::StepResult& r = environment.step(t.actions);
    t.rewards = r.rewards;
    t.next_obs = r.observations;
    t.done = r.done;
    rec.events.push_back(r.events);
    prev = t.actions;
    obs = r.observations;
    rec.steps.push_back(std::move(t));
  }
  return rec;
}

}  // namespace rac::train
