#include "rac/env/game.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <stdexcept>

namespace rac::env {
namespace {

double distance(const Vec2& a, const Vec2& b) { return std::hypot(a[0] - b[0], a[1] - b[1]); }

Vec2 random_point(Rng& rng, double half_width) {
  return {rng.uniform(-half_width, half_width), rng.uniform(-half_width, half_width)};
}

Vec2 action_force(int action) {
  switch (action) {
    case kPosX: return {1.0, 0.0};
    case kNegX: return {-1.0, 0.0};
    case kPosY: return {0.0, 1.0};
    case kNegY: return {0.0, -1.0};
    default: return {0.0, 0.0};
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("invalid GameSpec: ") + what);
}

}  // namespace

std::string_view to_string(GameKind kind) {
  return kind == GameKind::kMarket ? "market" : "touchmark";
}

GameKind parse_game_kind(std::string_view name) {
  if (name == "touchmark" || name == "touch-mark" || name == "TouchMark") return GameKind::kTouchMark;
  if (name == "market" || name == "Market") return GameKind::kMarket;
  throw std::invalid_argument("unknown game '" + std::string(name) + "'");
}

GameSpec GameSpec::touch_mark() { return GameSpec{}; }

GameSpec GameSpec::market() {
  GameSpec spec;
  spec.game = GameKind::kMarket;
  return spec;
}

void GameSpec::validate() const {
  require(teams == 2, "exactly two teams are supported");
  require(agents_per_team >= 1, "agents_per_team must be >= 1");
  require(board_half_width > 0, "board_half_width must be positive");
  require(dt > 0, "dt must be positive");
  require(damping >= 0 && damping < 1, "damping must be in [0, 1)");
  require(max_speed > 0, "max_speed must be positive");
  require(episode_limit >= 1, "episode_limit must be >= 1");
  require(landmark_reward > 0, "landmark reward r_l must be positive");
  require(distance_penalty_coeff >= 0, "distance_penalty_coeff must be non-negative");
  require(collision_penalty <= 0, "collision_penalty must be <= 0");
  require(touch_radius > 0, "touch_radius must be positive");
  require(pick_radius > 0, "pick_radius must be positive");
  if (game == GameKind::kTouchMark) {
    require(landmarks >= 1, "Touch-Mark needs at least one landmark");
  } else {
    require(resource_types >= 1 && resources_per_type >= 1, "Market needs resources");
  }
}

std::size_t GameSpec::observation_size() const {
  std::size_t size = 4 + 4 * (agent_count() - 1);
  if (game == GameKind::kTouchMark) return size + 2 * landmarks;
  return size + 3 * resource_count() + 3 * resource_types + resource_types;
}

bool WorldState::operator==(const WorldState& other) const {
  return agent_positions == other.agent_positions && agent_velocities == other.agent_velocities &&
         frozen_until == other.frozen_until && in_contact == other.in_contact && landmarks == other.landmarks &&
         resources == other.resources && consumers == other.consumers && step_index == other.step_index &&
         done == other.done && rng == other.rng;
}

std::string to_json_line(const StepEvents& events) {
  nlohmann::json j;
  j["step"] = events.step;
  j["landmark_touch"] = events.landmark_touch ? nlohmann::json(*events.landmark_touch) : nlohmann::json(nullptr);
  j["collisions"] = events.collisions;
  j["picks"] = events.picks;
  j["drops"] = events.drops;
  j["timeout"] = events.timeout;
  return j.dump();
}

StepEvents parse_events_line(std::string_view line) {
  const auto j = nlohmann::json::parse(line);
  StepEvents events;
  events.step = j.at("step").get<std::size_t>();
  if (!j.at("landmark_touch").is_null()) events.landmark_touch = j.at("landmark_touch").get<std::size_t>();
  events.collisions = j.at("collisions").get<decltype(events.collisions)>();
  events.picks = j.at("picks").get<decltype(events.picks)>();
  events.drops = j.at("drops").get<decltype(events.drops)>();
  events.timeout = j.at("timeout").get<bool>();
  return events;
}

ResetResult reset(const GameSpec& spec, std::uint64_t seed) {
  spec.validate();
  ResetResult out;
  WorldState& s = out.state;
  s.rng = Rng(seed);
  const std::size_t n = spec.agent_count();
  const double w = spec.board_half_width;
  for (std::size_t i = 0; i < n; ++i) s.agent_positions.push_back(random_point(s.rng, w));
  s.agent_velocities.assign(n, Vec2{0.0, 0.0});
  s.frozen_until.assign(n, 0);
  s.in_contact.assign(n * n, 0);
  if (spec.game == GameKind::kTouchMark) {
    for (std::size_t l = 0; l < spec.landmarks; ++l) s.landmarks.push_back(random_point(s.rng, w));
  } else {
    for (std::size_t r = 0; r < spec.resource_count(); ++r) {
      s.resources.push_back(Resource{random_point(s.rng, w), r / spec.resources_per_type, ResourceState::kFree, 0});
    }
    for (std::size_t t = 0; t < spec.resource_types; ++t) {
      s.consumers.push_back(Consumer{random_point(s.rng, w), t, true});
    }
  }
  for (std::size_t i = 0; i < n; ++i) out.observations.push_back(observe(spec, s, i));
  return out;
}

StepResult step(const GameSpec& spec, const WorldState& state, const JointAction& actions) {
  if (state.done) throw std::logic_error("step called on a finished episode");
  const std::size_t n = spec.agent_count();
  if (actions.size() != n) {
    throw std::invalid_argument("expected " + std::to_string(n) + " actions, got " + std::to_string(actions.size()));
  }
  for (int a : actions) {
    if (a < 0 || static_cast<std::size_t>(a) >= spec.action_count()) {
      throw std::invalid_argument("action id " + std::to_string(a) + " out of range");
    }
  }

  StepResult out;
  out.state = state;
  WorldState& s = out.state;
  StepEvents& events = out.events;
  events.step = s.step_index;
  out.reward_parts.assign(n, RewardParts{});
  const std::size_t now = s.step_index;
  const double w = spec.board_half_width;

  std::vector<bool> frozen(n);
  for (std::size_t i = 0; i < n; ++i) {
    frozen[i] = now < s.frozen_until[i];
    Vec2& v = s.agent_velocities[i];
    Vec2& p = s.agent_positions[i];
    if (frozen[i]) {
      v = {0.0, 0.0};
      continue;
    }
    const Vec2 force = action_force(actions[i]);
    for (int k = 0; k < 2; ++k) v[k] = v[k] * (1.0 - spec.damping) + force[k] * spec.dt;
    const double speed = std::hypot(v[0], v[1]);
    if (speed > spec.max_speed) {
      v[0] *= spec.max_speed / speed;
      v[1] *= spec.max_speed / speed;
    }
    for (int k = 0; k < 2; ++k) {
      p[k] += v[k] * spec.dt;
      if (p[k] > w || p[k] < -w) {
        p[k] = std::clamp(p[k], -w, w);
        v[k] = 0.0;
      }
    }
  }

  auto team_reward = [&](std::size_t team, double amount, double RewardParts::*part) {
    for (std::size_t j = 0; j < n; ++j) {
      if (spec.team_of(j) == team) out.reward_parts[j].*part += amount;
    }
  };

  if (spec.game == GameKind::kTouchMark) {
    // Contact is edge-triggered: a pair collides when it comes into contact
    // while both agents are free to move.
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (spec.team_of(i) == spec.team_of(j)) continue;
        const bool contact = distance(s.agent_positions[i], s.agent_positions[j]) <= spec.touch_radius;
        char& was = s.in_contact[i * n + j];
        if (contact && !was && !frozen[i] && !frozen[j]) {
          events.collisions.emplace_back(i, j);
          for (std::size_t a : {i, j}) {
            s.frozen_until[a] = now + 1 + spec.collision_freeze_steps;
            s.agent_velocities[a] = {0.0, 0.0};
            out.reward_parts[a].collision += spec.collision_penalty;
          }
        }
        was = contact ? 1 : 0;
        s.in_contact[j * n + i] = was;
      }
    }
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < n; ++i) {
      for (const Vec2& lm : s.landmarks) nearest[i] = std::min(nearest[i], distance(s.agent_positions[i], lm));
    }
    for (std::size_t i = 0; i < n && !events.landmark_touch; ++i) {
      if (nearest[i] <= spec.touch_radius) events.landmark_touch = i;
    }
    if (events.landmark_touch) {
      const std::size_t winner = spec.team_of(*events.landmark_touch);
      for (std::size_t j = 0; j < n; ++j) {
        out.reward_parts[j].landmark += spec.team_of(j) == winner ? spec.landmark_reward : -spec.landmark_reward;
      }
      s.done = true;
    }
    for (std::size_t i = 0; i < n; ++i) out.reward_parts[i].distance -= spec.distance_penalty_coeff * nearest[i];
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2& p = s.agent_positions[i];
      auto carried = std::find_if(s.resources.begin(), s.resources.end(), [&](const Resource& r) {
        return r.state == ResourceState::kCarried && r.carrier == i;
      });
      if (actions[i] == kPick && carried == s.resources.end()) {
        for (std::size_t r = 0; r < s.resources.size(); ++r) {
          Resource& res = s.resources[r];
          if (res.state == ResourceState::kFree && distance(res.position, p) <= spec.pick_radius) {
            res.state = ResourceState::kCarried;
            res.carrier = i;
            events.picks.emplace_back(i, r);
            team_reward(spec.team_of(i), spec.pick_reward, &RewardParts::pick);
            break;
          }
        }
      } else if (actions[i] == kDrop && carried != s.resources.end()) {
        for (std::size_t c = 0; c < s.consumers.size(); ++c) {
          Consumer& con = s.consumers[c];
          if (con.alive && con.type == carried->type && distance(con.position, p) <= spec.pick_radius) {
            carried->state = ResourceState::kDelivered;
            carried->position = con.position;
            con.alive = false;
            events.drops.emplace_back(i, c);
            team_reward(spec.team_of(i), spec.drop_reward, &RewardParts::drop);
            break;
          }
        }
      }
    }
    for (Resource& res : s.resources) {
      if (res.state != ResourceState::kCarried) continue;
      res.position = s.agent_positions[res.carrier];
      for (const Consumer& con : s.consumers) {
        if (con.alive && con.type == res.type) {
          out.reward_parts[res.carrier].distance -= spec.distance_penalty_coeff * distance(res.position, con.position);
        }
      }
    }
  }

  ++s.step_index;
  if (!s.done && s.step_index >= spec.episode_limit) {
    s.done = true;
    events.timeout = true;
  }
  out.done = s.done;
  out.rewards.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.rewards[i] = out.reward_parts[i].total();
  out.observations.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.observations.push_back(observe(spec, s, i));
  return out;
}

Observation observe(const GameSpec& spec, const WorldState& state, std::size_t agent) {
  const std::size_t n = spec.agent_count();
  if (agent >= n) throw std::out_of_range("unknown agent id " + std::to_string(agent));
  Observation o;
  o.reserve(spec.observation_size());
  const Vec2& p = state.agent_positions[agent];
  const Vec2& v = state.agent_velocities[agent];
  auto offset = [&](const Vec2& x) {
    o.push_back(x[0] - p[0]);
    o.push_back(x[1] - p[1]);
  };
  o.insert(o.end(), {p[0], p[1], v[0], v[1]});
  if (spec.game == GameKind::kTouchMark) {
    for (const Vec2& lm : state.landmarks) offset(lm);
  } else {
    for (const Resource& r : state.resources) {
      offset(r.position);
      o.push_back(r.state == ResourceState::kFree ? 1.0 : 0.0);
    }
    for (const Consumer& c : state.consumers) {
      offset(c.position);
      o.push_back(c.alive ? 1.0 : 0.0);
    }
  }
  const std::size_t team = spec.team_of(agent);
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t j = 0; j < n; ++j) {
      if (j == agent || (spec.team_of(j) == team) != (pass == 0)) continue;
      offset(state.agent_positions[j]);
      o.push_back(state.agent_velocities[j][0] - v[0]);
      o.push_back(state.agent_velocities[j][1] - v[1]);
    }
  }
  if (spec.game == GameKind::kMarket) {
    std::vector<double> carry(spec.resource_types, 0.0);
    for (const Resource& r : state.resources) {
      if (r.state == ResourceState::kCarried && r.carrier == agent) carry[r.type] = 1.0;
    }
    o.insert(o.end(), carry.begin(), carry.end());
  }
  return o;
}

Environment::Environment(GameSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

const std::vector<Observation>& Environment::reset(std::uint64_t seed) {
  ResetResult r = env::reset(spec_, seed);
  state_ = std::move(r.state);
  observations_ = std::move(r.observations);
  started_ = true;
  return observations_;
}

const StepResult& Environment::step(const JointAction& actions) {
  if (!started_) throw std::logic_error("Environment::step before reset");
  last_ = env::step(spec_, state_, actions);
  state_ = last_.state;
  observations_ = last_.observations;
  return last_;
}

}  // namespace rac::env
