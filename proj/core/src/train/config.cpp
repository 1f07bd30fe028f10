#include "rac/train/config.hpp"

#include <fmt/format.h>

#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>
#include <stdexcept>

namespace rac::train {

using nlohmann::json;

VariantSpec VariantSpec::parse(std::string_view name) {
  VariantSpec v;
  if (name == "RAC" || name == "rac") return v;
  if (name == "MAAC" || name == "maac") {
    v.kind = Variant::kMaac;
    v.losses = {false, false, false};
    return v;
  }
  if (name == "RAC_Team" || name == "rac_team" || name == "RAC-Team") {
    v.kind = Variant::kRacTeam;
    v.losses.opp = false;
    return v;
  }
  v.kind = Variant::kAblation;
  if (name == "L_D") {
    v.losses = {false, true, false};
  } else if (name == "L_MI") {
    v.losses = {true, false, false};
  } else if (name == "L_D+L_MI" || name == "L_MI+L_D") {
    v.losses = {true, true, false};
  } else if (name.starts_with("RAC-")) {
    // RAC with the listed objectives removed, e.g. RAC-L_D or RAC-L_D-L_Opp.
    std::string_view rest = name.substr(4);
    while (true) {
      const std::size_t cut = rest.find("-L_", 1);
      const std::string_view term = rest.substr(0, cut);
      if (term == "L_D") {
        v.losses.d = false;
      } else if (term == "L_MI") {
        v.losses.mi = false;
      } else if (term == "L_Opp") {
        v.losses.opp = false;
      } else {
        throw std::invalid_argument("unknown objective '" + std::string(term) + "' in variant '" + std::string(name) +
                                    "' (expected L_D, L_MI or L_Opp)");
      }
      if (cut == std::string_view::npos) break;
      rest = rest.substr(cut + 1);
    }
  } else {
    throw std::invalid_argument("unknown variant '" + std::string(name) +
                                "' (expected RAC, MAAC, RAC_Team, L_D, L_MI, L_D+L_MI or RAC-<objective>...)");
  }
  return v;
}

std::string VariantSpec::name() const {
  switch (kind) {
    case Variant::kRac: return "RAC";
    case Variant::kMaac: return "MAAC";
    case Variant::kRacTeam: return "RAC_Team";
    case Variant::kAblation: break;
  }
  if (!losses.opp && losses.mi != losses.d) return losses.d ? "L_D" : "L_MI";
  if (!losses.opp && losses.mi && losses.d) return "L_D+L_MI";
  std::string out = "RAC";
  if (!losses.d) out += "-L_D";
  if (!losses.mi) out += "-L_MI";
  if (!losses.opp) out += "-L_Opp";
  return out;
}

nets::Architecture VariantSpec::architecture() const {
  switch (kind) {
    case Variant::kMaac: return {false, false, true};
    case Variant::kRacTeam: return {true, false, false};
    default: return {true, true, true};
  }
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("invalid TrainConfig: ") + what);
  };
  require(batch_episodes >= 1, "batch_episodes must be >= 1");
  require(buffer_capacity >= batch_episodes, "buffer_capacity must be >= batch_episodes");
  require(episodes_per_update >= 1, "episodes_per_update must be >= 1");
  require(envs >= 1, "envs must be >= 1");
  require(lr_policy >= 0 && lr_critic >= 0 && lr_roles >= 0, "learning rates must be >= 0");
  require(target_rate >= 0 && target_rate <= 1, "target_rate must be in [0, 1]");
  require(grad_clip >= 0, "grad_clip must be >= 0");
}

void ExperimentConfig::validate() const {
  game.validate();
  nets.validate();
  loss.validate();
  train.validate();
}

namespace {

json game_json(const env::GameSpec& g) {
  return {{"game", std::string(env::to_string(g.game))},
          {"teams", g.teams},
          {"agents_per_team", g.agents_per_team},
          {"board_half_width", g.board_half_width},
          {"dt", g.dt},
          {"damping", g.damping},
          {"max_speed", g.max_speed},
          {"episode_limit", g.episode_limit},
          {"landmark_reward", g.landmark_reward},
          {"distance_penalty_coeff", g.distance_penalty_coeff},
          {"collision_penalty", g.collision_penalty},
          {"collision_freeze_steps", g.collision_freeze_steps},
          {"touch_radius", g.touch_radius},
          {"pick_radius", g.pick_radius},
          {"pick_reward", g.pick_reward},
          {"drop_reward", g.drop_reward},
          {"landmarks", g.landmarks},
          {"resource_types", g.resource_types},
          {"resources_per_type", g.resources_per_type},
          {"seed", g.seed}};
}

json nets_json(const nets::NetConfig& n) {
  return {{"role_dim", n.role_dim},
          {"gru_hidden", n.gru_hidden},
          {"mlp_hidden", n.mlp_hidden},
          {"critic_hidden", n.critic_hidden},
          {"attention_dim", n.attention_dim},
          {"attention_heads", n.attention_heads},
          {"std_floor", n.std_floor},
          {"roles_per_team", n.roles_per_team},
          {"actor_critic_per_agent", n.actor_critic_per_agent}};
}

json loss_json(const losses::LossConfig& l) {
  return {{"gamma", l.gamma}, {"alpha", l.alpha}, {"lambda", l.lambda}, {"decay_episodes", l.decay_episodes}};
}

json train_json(const TrainConfig& t) {
  return {{"max_episodes", t.max_episodes},
          {"episodes_per_update", t.episodes_per_update},
          {"updates_per_round", t.updates_per_round},
          {"batch_episodes", t.batch_episodes},
          {"window", t.window},
          {"buffer_capacity", t.buffer_capacity},
          {"lr_policy", t.lr_policy},
          {"lr_critic", t.lr_critic},
          {"lr_roles", t.lr_roles},
          {"target_rate", t.target_rate},
          {"grad_clip", t.grad_clip},
          {"envs", t.envs},
          {"variant", t.variant.name()},
          {"seed", t.seed},
          {"checkpoint_every", t.checkpoint_every}};
}

// Reads known keys into the target; unknown keys are rejected so typos fail loudly.
template <typename Apply>
void read_section(const json& root, const char* section, const json& defaults, Apply apply) {
  if (!root.contains(section)) return;
  const json& s = root.at(section);
  if (!s.is_object()) throw std::invalid_argument(fmt::format("config section [{}] must be an object", section));
  for (auto it = s.begin(); it != s.end(); ++it) {
    if (!defaults.contains(it.key())) {
      throw std::invalid_argument(fmt::format("unknown key '{}' in config section [{}]", it.key(), section));
    }
  }
  apply(s);
}

template <typename T>
void get_if(const json& s, const char* key, T& out) {
  if (s.contains(key)) {
    try {
      out = s.at(key).get<T>();
    } catch (const json::exception& e) {
      throw std::invalid_argument(fmt::format("config key '{}': {}", key, e.what()));
    }
  }
}

}  // namespace

std::string ExperimentConfig::to_json() const {
  json j{{"game", game_json(game)}, {"nets", nets_json(nets)}, {"loss", loss_json(loss)}, {"train", train_json(train)}};
  return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json(std::string_view text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw std::invalid_argument("config root must be an object");
  static const std::set<std::string> sections{"game", "nets", "loss", "train", "sweep"};
  for (auto it = root.begin(); it != root.end(); ++it) {
    if (!sections.contains(it.key())) throw std::invalid_argument("unknown config section '" + it.key() + "'");
  }

  ExperimentConfig c;
  if (root.contains("game") && root["game"].contains("game")) {
    c.game = env::parse_game_kind(root["game"]["game"].get<std::string>()) == env::GameKind::kMarket
                 ? env::GameSpec::market()
                 : env::GameSpec::touch_mark();
  }
  read_section(root, "game", game_json(c.game), [&](const json& s) {
    auto& g = c.game;
    get_if(s, "teams", g.teams);
    get_if(s, "agents_per_team", g.agents_per_team);
    get_if(s, "board_half_width", g.board_half_width);
    get_if(s, "dt", g.dt);
    get_if(s, "damping", g.damping);
    get_if(s, "max_speed", g.max_speed);
    get_if(s, "episode_limit", g.episode_limit);
    get_if(s, "landmark_reward", g.landmark_reward);
    get_if(s, "distance_penalty_coeff", g.distance_penalty_coeff);
    get_if(s, "collision_penalty", g.collision_penalty);
    get_if(s, "collision_freeze_steps", g.collision_freeze_steps);
    get_if(s, "touch_radius", g.touch_radius);
    get_if(s, "pick_radius", g.pick_radius);
    get_if(s, "pick_reward", g.pick_reward);
    get_if(s, "drop_reward", g.drop_reward);
    get_if(s, "landmarks", g.landmarks);
    get_if(s, "resource_types", g.resource_types);
    get_if(s, "resources_per_type", g.resources_per_type);
    get_if(s, "seed", g.seed);
  });
  read_section(root, "nets", nets_json(c.nets), [&](const json& s) {
    auto& n = c.nets;
    get_if(s, "role_dim", n.role_dim);
    get_if(s, "gru_hidden", n.gru_hidden);
    get_if(s, "mlp_hidden", n.mlp_hidden);
    get_if(s, "critic_hidden", n.critic_hidden);
    get_if(s, "attention_dim", n.attention_dim);
    get_if(s, "attention_heads", n.attention_heads);
    get_if(s, "std_floor", n.std_floor);
    get_if(s, "roles_per_team", n.roles_per_team);
    get_if(s, "actor_critic_per_agent", n.actor_critic_per_agent);
  });
  read_section(root, "loss", loss_json(c.loss), [&](const json& s) {
    get_if(s, "gamma", c.loss.gamma);
    get_if(s, "alpha", c.loss.alpha);
    get_if(s, "lambda", c.loss.lambda);
    get_if(s, "decay_episodes", c.loss.decay_episodes);
  });
  read_section(root, "train", train_json(c.train), [&](const json& s) {
    auto& t = c.train;
    get_if(s, "max_episodes", t.max_episodes);
    get_if(s, "episodes_per_update", t.episodes_per_update);
    get_if(s, "updates_per_round", t.updates_per_round);
    get_if(s, "batch_episodes", t.batch_episodes);
    get_if(s, "window", t.window);
    get_if(s, "buffer_capacity", t.buffer_capacity);
    get_if(s, "lr_policy", t.lr_policy);
    get_if(s, "lr_critic", t.lr_critic);
    get_if(s, "lr_roles", t.lr_roles);
    get_if(s, "target_rate", t.target_rate);
    get_if(s, "grad_clip", t.grad_clip);
    get_if(s, "envs", t.envs);
    if (s.contains("variant")) t.variant = VariantSpec::parse(s.at("variant").get<std::string>());
    get_if(s, "seed", t.seed);
    get_if(s, "checkpoint_every", t.checkpoint_every);
  });
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return from_json(buf.str());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

std::string ExperimentConfig::hash() const { return fnv1a_hex(to_json()); }

std::string ExperimentConfig::game_hash() const {
  json g = game_json(game);
  g.erase("seed");
  return fnv1a_hex(g.dump());
}

}  // namespace rac::train
