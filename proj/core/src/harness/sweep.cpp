#include "rac/harness/sweep.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "rac/harness/emit.hpp"
#include "rac/harness/tournament.hpp"
#include "rac/train/trainer.hpp"

namespace rac::harness {

namespace fs = std::filesystem;
using nlohmann::json;

SweepAxis SweepAxis::parse(std::string_view text) {
  const std::size_t eq = text.find('=');
  if (eq == std::string_view::npos) throw std::invalid_argument("axis must look like name=v1,v2: " + std::string(text));
  const std::string_view name = text.substr(0, eq);
  SweepAxis axis;
  if (name == "lambda") {
    axis.kind = Kind::kLambda;
  } else if (name == "variant") {
    axis.kind = Kind::kVariant;
  } else {
    throw std::invalid_argument("unknown sweep axis '" + std::string(name) + "' (expected lambda or variant)");
  }
  const std::string_view list = text.substr(eq + 1);
  if (!list.empty()) {
    for (auto& v : split_header(list)) {
      if (v.empty()) throw std::invalid_argument("empty value in axis " + std::string(text));
      axis.values.push_back(std::move(v));
    }
  }
  if (axis.values.empty()) throw std::invalid_argument("axis " + std::string(name) + " has no values");
  return axis;
}

SweepSpec load_sweep_spec(const fs::path& config_path) {
  SweepSpec spec;
  spec.base = train::ExperimentConfig::load(config_path);
  std::ifstream in(config_path);
  const json root = json::parse(in);
  if (!root.contains("sweep")) return spec;
  const json& s = root.at("sweep");
  if (!s.is_object()) throw std::invalid_argument(config_path.string() + ": sweep section must be an object");
  for (auto it = s.begin(); it != s.end(); ++it) {
    const std::string& key = it.key();
    const json& v = it.value();
    if (key == "seeds") {
      spec.seeds = v.get<std::size_t>();
    } else if (key == "eval_episodes") {
      spec.eval_episodes = v.get<std::size_t>();
    } else if (key == "role_episodes") {
      spec.role_episodes = v.get<std::size_t>();
    } else if (key == "pool_dir") {
      spec.pool_dir = v.get<std::string>();
    } else if (key == "pool_size") {
      spec.pool_size = v.get<std::size_t>();
    } else if (key == "checkpoint_interval") {
      spec.checkpoint_interval = v.get<std::size_t>();
    } else if (key == "threads") {
      spec.threads = v.get<std::size_t>();
    } else if (key == "axes") {
      for (const auto& a : v) spec.axes.push_back(SweepAxis::parse(a.get<std::string>()));
    } else {
      throw std::invalid_argument(config_path.string() + ": unknown key sweep." + key);
    }
  }
  return spec;
}

namespace {

double parse_lambda(const std::string& s) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw std::invalid_argument("not a lambda value: " + s);
  return v;
}

std::string cell_name(const train::VariantSpec& v, double lambda) {
  return fmt::format("{}_lambda{}", v.name(), lambda);
}

}  // namespace

std::vector<SweepCell> expand_cells(const SweepSpec& spec) {
  if (spec.axes.empty()) throw std::invalid_argument("sweep needs at least one axis");
  std::vector<SweepCell> cells;
  auto add = [&](train::VariantSpec v, double lambda, bool lambda_axis) {
    const std::string name = cell_name(v, lambda);
    for (auto& c : cells) {
      if (c.name == name) {
        c.on_lambda_axis = c.on_lambda_axis || lambda_axis;
        return;
      }
    }
    cells.push_back({name, v, lambda, lambda_axis});
  };
  for (const auto& axis : spec.axes) {
    if (axis.values.empty()) throw std::invalid_argument("sweep axis has no values");
    for (const auto& value : axis.values) {
      if (axis.kind == SweepAxis::Kind::kLambda) {
        add(spec.base.train.variant, parse_lambda(value), true);
      } else {
        add(train::VariantSpec::parse(value), spec.base.loss.lambda, false);
      }
    }
  }
  return cells;
}

namespace {

std::vector<fs::path> find_pool(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_directory()) continue;
    if (fs::exists(entry.path() / "manifest.json")) {
      out.push_back(entry.path());
    } else if (fs::exists(entry.path() / "checkpoint" / "manifest.json")) {
      out.push_back(entry.path() / "checkpoint");
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<fs::path> prepare_pool(const SweepSpec& spec, const fs::path& dir) {
  auto pool = find_pool(dir);
  if (!pool.empty()) return pool;
  if (spec.pool_size == 0) throw std::invalid_argument("opponent pool is empty and pool_size is 0");
  for (std::size_t k = 0; k < spec.pool_size; ++k) {
    train::ExperimentConfig cfg = spec.base;
    cfg.train.variant = train::VariantSpec::parse("MAAC");
    cfg.train.seed = spec.base.train.seed + 1000 + k;
    cfg.train.checkpoint_every = 0;
    spdlog::info("training pool member {} of {}", k + 1, spec.pool_size);
    train::Trainer(cfg).run(dir / fmt::format("maac-{}", k));
  }
  return find_pool(dir);
}

Cell num(double v) { return v; }
Cell count(std::size_t v) { return static_cast<std::int64_t>(v); }
Cell opt(const std::optional<double>& v) {
  if (!v) return std::monostate{};
  return *v;
}

}  // namespace

SweepResult run_sweep(const SweepSpec& spec) {
  spec.base.validate();
  if (spec.seeds == 0) throw std::invalid_argument("sweep needs at least one seed");
  if (spec.eval_episodes == 0) throw std::invalid_argument("sweep needs at least one evaluation episode");
  if (spec.base.game.teams != 2) throw std::invalid_argument("sweeps need a two-team game");
  const std::vector<SweepCell> cells = expand_cells(spec);
  fs::create_directories(spec.out_dir);

  SweepResult result;
  const fs::path pool_dir = spec.pool_dir.empty() ? spec.out_dir / "pool" : spec.pool_dir;
  result.pool = prepare_pool(spec, pool_dir);
  struct {
    std::vector<train::LoadedCheckpoint> members;
  } pool;
  for (const auto& p : result.pool) {
    pool.members.push_back(train::load_checkpoint_model(p));
    if (pool.members.back().config.game_hash() != spec.base.game_hash()) {
      throw IncompatibleCheckpoints("pool member " + p.string() + " was trained on a different game");
    }
  }
  if (pool.members.empty()) throw std::runtime_error("opponent pool at " + pool_dir.string() + " is empty");

  const std::uint64_t base_seed = spec.base.train.seed;
  for (const auto& cell : cells) {
    for (std::size_t s = 0; s < spec.seeds; ++s) {
      CellResult r;
      r.cell = cell;
      r.seed = s;
      r.run_dir = spec.out_dir / "runs" / cell.name / fmt::format("seed-{}", s);
      try {
        train::ExperimentConfig cfg = spec.base;
        cfg.train.variant = cell.variant;
        cfg.loss.lambda = cell.lambda;
        cfg.train.seed = base_seed + s;
        cfg.train.checkpoint_every = spec.checkpoint_interval;
        spdlog::info("sweep cell {} seed {}", cell.name, s);
        train::Trainer trainer(cfg);
        trainer.run(r.run_dir);
        for (std::size_t k = 0; k < pool.members.size(); ++k) {
          auto rows = play_matches(cfg.game, {&trainer.model(), 0}, {&pool.members[k].model, 0}, spec.eval_episodes,
                                   mix_seed(base_seed, k, 5), spec.threads);
          for (auto& row : rows) row.episode += k * spec.eval_episodes;
          r.rows.insert(r.rows.end(), rows.begin(), rows.end());
        }
        r.summary = summarize(r.rows);
        r.role_kl = role_separation(trainer.model(), cfg.game, spec.role_episodes, mix_seed(base_seed, s, 6));
        emit(metric_table(r.rows), r.run_dir / "vs_pool.csv");
        r.ok = true;
      } catch (const std::exception& e) {
        r.error = e.what();
        ++result.failures;
        spdlog::error("sweep cell {} seed {} failed: {}", cell.name, s, e.what());
      }
      result.cells.push_back(std::move(r));
    }
  }

  Table summary{split_header(kSummaryColumns), {}};
  Table role{split_header(kRoleColumns), {}};
  Table cooperative{split_header(kCooperativeColumns), {}};
  Table vary{split_header(kVaryDecayColumns), {}};
  Table ablations{split_header(kAblationColumns), {}};
  const double base_lambda = spec.base.loss.lambda;
  for (const auto& r : result.cells) {
    const std::string variant = r.cell.variant.name();
    const Summary& m = r.summary;
    if (!r.ok) {
      std::vector<Cell> row{r.cell.name, variant, r.cell.lambda, count(r.seed), std::string("failed"), r.error};
      row.resize(summary.header.size());
      summary.add(std::move(row));
      continue;
    }
    summary.add({r.cell.name, variant, r.cell.lambda, count(r.seed), std::string("ok"), std::string(),
                 count(m.episodes), num(m.reward_a.mean), num(m.reward_a.se), num(m.reward_b.mean), num(m.reward_b.se),
                 num(m.reward_diff.mean), num(m.reward_diff.se), num(m.touch_a.mean), num(m.touch_a.se),
                 num(m.drops_a.mean), num(m.drops_a.se), opt(r.role_kl)});
    const bool touch_mark = spec.base.game.game == env::GameKind::kTouchMark;
    role.add({r.cell.name, variant, r.cell.lambda, count(r.seed), opt(r.role_kl), count(m.non_toucher_collided.n),
              touch_mark && m.non_toucher_collided.n ? num(m.non_toucher_collided.mean) : Cell{},
              touch_mark && m.non_toucher_collided.n ? num(m.non_toucher_collided.se) : Cell{},
              touch_mark ? Cell{} : num(m.diverse_drop_a.mean), touch_mark ? Cell{} : num(m.diverse_drop_a.se)});
    const bool at_base = r.cell.lambda == base_lambda;
    if (at_base && (variant == "RAC" || variant == "RAC_Team")) {
      cooperative.add({variant, count(r.seed), num(m.reward_a.mean), num(m.reward_a.se), num(m.reward_diff.mean),
                       num(m.reward_diff.se), num(m.touch_a.mean), num(m.touch_a.se), num(m.drops_a.mean),
                       num(m.drops_a.se)});
    }
    if (r.cell.on_lambda_axis) {
      vary.add({r.cell.lambda, count(r.seed), variant, num(m.reward_a.mean), num(m.reward_a.se),
                num(m.reward_diff.mean), num(m.reward_diff.se)});
    }
    if (at_base && (variant == "RAC" || variant == "L_D" || variant == "L_MI" || variant == "L_D+L_MI")) {
      ablations.add({variant, count(r.seed), num(m.reward_a.mean), num(m.reward_a.se), num(m.reward_diff.mean),
                     num(m.reward_diff.se)});
    }
  }

  // Head to head: RAC against MAAC at matching checkpoints of the same seed.
  Table tournament{split_header(kTournamentColumns), {}};
  auto find = [&](const std::string& variant, std::size_t seed) -> const CellResult* {
    for (const auto& r : result.cells) {
      if (r.ok && r.seed == seed && r.cell.variant.name() == variant && r.cell.lambda == base_lambda) return &r;
    }
    return nullptr;
  };
  for (std::size_t s = 0; s < spec.seeds; ++s) {
    const CellResult* rac = find("RAC", s);
    const CellResult* maac = find("MAAC", s);
    if (!rac || !maac) continue;
    std::vector<std::pair<std::size_t, std::string>> points;
    if (spec.checkpoint_interval > 0) {
      for (std::size_t n = spec.checkpoint_interval; n < spec.base.train.max_episodes; n += spec.checkpoint_interval) {
        const std::string name = fmt::format("checkpoint-{}", n);
        if (fs::exists(rac->run_dir / name) && fs::exists(maac->run_dir / name)) points.emplace_back(n, name);
      }
    }
    points.emplace_back(spec.base.train.max_episodes, "checkpoint");
    for (const auto& [n, name] : points) {
      try {
        TournamentSpec t;
        t.a = rac->run_dir / name;
        t.b = maac->run_dir / name;
        t.episodes = spec.eval_episodes;
        t.seed = mix_seed(base_seed + s, n, 8);
        t.threads = spec.threads;
        const Summary m = harness::tournament(t).summary;
        tournament.add({count(s), count(n), std::string("RAC"), std::string("MAAC"), count(m.episodes),
                        num(m.reward_a.mean), num(m.reward_a.se), num(m.reward_b.mean), num(m.reward_b.se),
                        num(m.touch_a.mean), num(m.touch_a.se), num(m.touch_b.mean), num(m.touch_b.se)});
      } catch (const std::exception& e) {
        ++result.failures;
        spdlog::error("head-to-head at {} for seed {} failed: {}", name, s, e.what());
      }
    }
  }
  if (tournament.rows.empty()) spdlog::warn("no RAC and MAAC cell pair at the base lambda; tournament.csv is empty");

  emit(summary, spec.out_dir / "summary.csv");
  emit(tournament, spec.out_dir / "tournament.csv");
  emit(role, spec.out_dir / "role.csv");
  emit(cooperative, spec.out_dir / "cooperative.csv");
  emit(vary, spec.out_dir / "vary_decay.csv");
  emit(ablations, spec.out_dir / "ablations.csv");

  json manifest;
  manifest["base_config"] = json::parse(spec.base.to_json());
  manifest["base_config_hash"] = spec.base.hash();
  manifest["seeds"] = spec.seeds;
  manifest["eval_episodes"] = spec.eval_episodes;
  manifest["role_episodes"] = spec.role_episodes;
  manifest["checkpoint_interval"] = spec.checkpoint_interval;
  json axes = json::array();
  for (const auto& a : spec.axes) {
    axes.push_back({{"axis", a.kind == SweepAxis::Kind::kLambda ? "lambda" : "variant"}, {"values", a.values}});
  }
  manifest["axes"] = axes;
  json members = json::array();
  for (std::size_t k = 0; k < result.pool.size(); ++k) {
    members.push_back({{"path", result.pool[k].string()},
                       {"variant", pool.members[k].config.train.variant.name()},
                       {"config_hash", pool.members[k].config.hash()}});
  }
  manifest["pool"] = members;
  json runs = json::array();
  for (const auto& r : result.cells) {
    runs.push_back({{"cell", r.cell.name},
                    {"variant", r.cell.variant.name()},
                    {"lambda", r.cell.lambda},
                    {"seed", r.seed},
                    {"status", r.ok ? "ok" : "failed"},
                    {"error", r.error},
                    {"run_dir", r.run_dir.string()}});
  }
  manifest["runs"] = runs;
  manifest["failures"] = result.failures;
  manifest["outputs"] = {"summary.csv", "tournament.csv", "role.csv", "cooperative.csv", "vary_decay.csv",
                         "ablations.csv"};
  std::ofstream(spec.out_dir / "sweep_manifest.json") << manifest.dump(2) << '\n';
  return result;
}

}  // namespace rac::harness
