#pragma once

// One JSON run-config file drives every command. Every field has a default;
// unknown keys are schema errors so typos fail loudly instead of silently
// falling back to defaults.

#include <set>

#include "coplan/control/controller.hpp"
#include "coplan/eval/closed_loop.hpp"
#include "coplan/train/trainer.hpp"

namespace coplan {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct EvalBlock {
  std::string suite = "empty";     // scenario family for the suite
  uint64_t seed_start = 1;
  int seeds = 10;
  int repetitions = 3;
  std::string planner = "model";   // model | route
  double replan_period = 0.5;
  double gnss_ahead = 25.0;
  double max_time = 90.0;
  bool collision_check = true;
};

struct RunConfig {
  uint64_t seed = 1;
  GenConfig data{};
  ModelConfig model{};
  TrainConfig train{};  // train.model mirrors `model` after parsing
  ControllerConfig controller{};
  EvalBlock eval{};
  std::string echo = "{}";  // normalized source text, feeds report hashes
};

namespace detail_cfg {

inline void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                       const std::string& block) {
  if (!j.is_object()) throw ConfigError("config block '" + block + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError("unknown key '" + it.key() + "' in config block '" + block + "'");
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
  }
}

}  // namespace detail_cfg

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  using detail_cfg::check_keys;
  using detail_cfg::read;
  check_keys(j, {"seed", "data", "model", "train", "controller", "eval"}, "<root>");
  RunConfig cfg;
  read(j, "seed", cfg.seed);

  if (j.contains("data")) {
    const auto& d = j.at("data");
    check_keys(d, {"seed", "scenarios", "horizon", "dt_wp", "sample_stride",
                   "max_time", "max_others", "gnss_ahead", "kind",
                   "keep_top_lateral"}, "data");
    read(d, "seed", cfg.data.seed);
    read(d, "scenarios", cfg.data.scenarios);
    read(d, "horizon", cfg.data.horizon);
    read(d, "dt_wp", cfg.data.dt_wp);
    read(d, "sample_stride", cfg.data.sample_stride);
    read(d, "max_time", cfg.data.max_time);
    read(d, "max_others", cfg.data.max_others);
    read(d, "gnss_ahead", cfg.data.gnss_ahead);
    read(d, "kind", cfg.data.kind);
    read(d, "keep_top_lateral", cfg.data.keep_top_lateral);
  } else {
    cfg.data.seed = cfg.seed;
  }

  if (j.contains("model")) {
    const auto& m = j.at("model");
    check_keys(m, {"variant", "local_layers", "local_heads", "d_model",
                   "global_layers", "global_heads", "d_g", "init_seed",
                   "crop_size", "horizon", "gru_hidden", "dt_wp"}, "model");
    if (m.contains("variant")) {
      std::string v = m.at("variant").get<std::string>();
      try {
        cfg.model.variant = variant_from_string(v);
      } catch (const DataError& e) {
        throw ConfigError(e.what());
      }
    }
    read(m, "local_layers", cfg.model.local_layers);
    read(m, "local_heads", cfg.model.local_heads);
    read(m, "d_model", cfg.model.d_model);
    read(m, "global_layers", cfg.model.global_layers);
    read(m, "global_heads", cfg.model.global_heads);
    read(m, "d_g", cfg.model.d_g);
    read(m, "init_seed", cfg.model.init_seed);
    read(m, "crop_size", cfg.model.crop.size);
    read(m, "horizon", cfg.model.wp.horizon);
    read(m, "gru_hidden", cfg.model.wp.gru_hidden);
    read(m, "dt_wp", cfg.model.wp.dt_wp);
    cfg.model.wp.crop_size = cfg.model.crop.size;
    cfg.model.wp.in_channels = cfg.model.grid.channels;
  }

  if (j.contains("train")) {
    const auto& t = j.at("train");
    check_keys(t, {"lambda", "lr", "lr_step", "lr_gamma", "batch",
                   "epochs_stage1", "epochs_stage2", "epochs_stage3",
                   "max_steps_per_stage", "plan_l1_stop", "seed"}, "train");
    read(t, "lambda", cfg.train.lambda);
    read(t, "lr", cfg.train.lr);
    read(t, "lr_step", cfg.train.lr_step);
    read(t, "lr_gamma", cfg.train.lr_gamma);
    read(t, "batch", cfg.train.batch);
    read(t, "epochs_stage1", cfg.train.epochs_stage1);
    read(t, "epochs_stage2", cfg.train.epochs_stage2);
    read(t, "epochs_stage3", cfg.train.epochs_stage3);
    read(t, "max_steps_per_stage", cfg.train.max_steps_per_stage);
    read(t, "plan_l1_stop", cfg.train.plan_l1_stop);
    read(t, "seed", cfg.train.seed);
  } else {
    cfg.train.seed = cfg.seed;
  }
  cfg.train.model = cfg.model;

  if (j.contains("controller")) {
    const auto& c = j.at("controller");
    check_keys(c, {"margin", "risk_horizon", "kp_lat", "ki_lat", "kd_lat",
                   "kp_lon", "ki_lon", "kd_lon", "integral_clamp", "max_speed",
                   "dt_wp", "dt", "collision_check_enabled"}, "controller");
    read(c, "margin", cfg.controller.margin);
    read(c, "risk_horizon", cfg.controller.risk_horizon);
    read(c, "kp_lat", cfg.controller.kp_lat);
    read(c, "ki_lat", cfg.controller.ki_lat);
    read(c, "kd_lat", cfg.controller.kd_lat);
    read(c, "kp_lon", cfg.controller.kp_lon);
    read(c, "ki_lon", cfg.controller.ki_lon);
    read(c, "kd_lon", cfg.controller.kd_lon);
    read(c, "integral_clamp", cfg.controller.integral_clamp);
    read(c, "max_speed", cfg.controller.max_speed);
    read(c, "dt_wp", cfg.controller.dt_wp);
    read(c, "dt", cfg.controller.dt);
    read(c, "collision_check_enabled", cfg.controller.collision_check_enabled);
  }

  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    check_keys(e, {"suite", "seed_start", "seeds", "repetitions", "planner",
                   "replan_period", "gnss_ahead", "max_time", "collision_check"},
               "eval");
    read(e, "suite", cfg.eval.suite);
    read(e, "seed_start", cfg.eval.seed_start);
    read(e, "seeds", cfg.eval.seeds);
    read(e, "repetitions", cfg.eval.repetitions);
    read(e, "planner", cfg.eval.planner);
    read(e, "replan_period", cfg.eval.replan_period);
    read(e, "gnss_ahead", cfg.eval.gnss_ahead);
    read(e, "max_time", cfg.eval.max_time);
    read(e, "collision_check", cfg.eval.collision_check);
    if (cfg.eval.planner != "model" && cfg.eval.planner != "route")
      throw ConfigError("eval.planner must be 'model' or 'route'");
  }

  cfg.echo = j.dump();
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return run_config_from_json(j);
}

inline EvalConfig eval_config_from(const RunConfig& cfg) {
  EvalConfig ec;
  ec.replan_period = cfg.eval.replan_period;
  ec.gnss_ahead = cfg.eval.gnss_ahead;
  ec.limits.max_time = cfg.eval.max_time;
  ec.controller = cfg.controller;
  ec.controller.collision_check_enabled =
      cfg.controller.collision_check_enabled && cfg.eval.collision_check;
  return ec;
}

}  // namespace coplan
