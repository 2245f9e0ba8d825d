// Command-line front end: data generation, staged training, closed-loop
// evaluation, ablation sweeps, attention dumps, and SVG plots. Every command
// is reproducible from (config file, seed) alone.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "coplan/config.hpp"
#include "coplan/model/model.hpp"
#include "coplan/viz/svg.hpp"

namespace fs = std::filesystem;
using namespace coplan;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

RunConfig load_config_opt(const std::string& path) {
  return path.empty() ? RunConfig{} : load_run_config(path);
}

JointModel load_model(const RunConfig& cfg, const std::string& ckpt_path) {
  JointModel model(cfg.model);
  if (!ckpt_path.empty()) load_checkpoint(model.params(), ckpt_path);
  return model;
}

Planner planner_for(const RunConfig& cfg, JointModel* model, const EvalConfig& ec) {
  if (cfg.eval.planner == "route")
    return make_route_planner(cfg.model.wp.horizon, cfg.model.wp.dt_wp,
                              cfg.controller.max_speed);
  if (!model) throw DataError("eval.planner is 'model' but no checkpoint was given");
  return make_model_planner(*model, ec);
}

std::vector<uint64_t> suite_seeds(const RunConfig& cfg) {
  std::vector<uint64_t> seeds;
  for (int i = 0; i < cfg.eval.seeds; ++i)
    seeds.push_back(cfg.eval.seed_start + static_cast<uint64_t>(i));
  return seeds;
}

int cmd_gen_data(const std::string& config_path, const std::string& out_dir) {
  RunConfig cfg = load_config_opt(config_path);
  Dataset ds = generate_dataset(cfg.data);
  fs::create_directories(out_dir);
  save_dataset(ds, out_dir, cfg.data.seed);
  std::cout << "wrote " << ds.scenarios.size() << " scenarios, "
            << ds.samples.size() << " samples to " << out_dir << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, int stage, const std::string& resume,
              const std::string& variant) {
  RunConfig cfg = load_config_opt(config_path);
  if (!variant.empty()) {
    cfg.model.variant = variant_from_string(variant);
    cfg.train.model = cfg.model;
  }
  Dataset ds = load_dataset(data_dir);
  Trainer trainer(cfg.train, std::move(ds));
  fs::create_directories(out_dir);
  if (!resume.empty()) trainer.load_state(resume);
  if (stage == 0) {
    trainer.train_all(out_dir, cfg.echo);
  } else {
    bool stopped = trainer.run_stage(stage);
    trainer.save_state(out_dir + "/stage" + std::to_string(stage) + ".ckpt",
                       stage, cfg.echo);
    if (stopped) std::cout << "early stop: plan L1 target reached\n";
  }
  save_metrics_csv(trainer.metrics(), out_dir + "/metrics.csv");
  if (!trainer.metrics().empty()) {
    const auto& last = trainer.metrics().back();
    std::cout << "final step " << last.step << " loss " << last.loss
              << " plan/wp "
              << last.plan / static_cast<double>(cfg.model.wp.horizon) << "\n";
  }
  std::cout << "parameters: " << trainer.model().params().all().size()
            << " tensors\n";
  return 0;
}

int cmd_eval(const std::string& config_path, const std::string& ckpt,
             const std::string& out_dir) {
  RunConfig cfg = load_config_opt(config_path);
  EvalConfig ec = eval_config_from(cfg);
  std::optional<JointModel> model;
  if (!ckpt.empty()) model.emplace(load_model(cfg, ckpt));
  Planner planner = planner_for(cfg, model ? &*model : nullptr, ec);
  SuiteReport rep = run_suite(cfg.eval.suite, suite_seeds(cfg),
                              cfg.eval.repetitions, planner, ec, cfg.echo);
  fs::create_directories(out_dir);
  save_report(rep, out_dir + "/report.json", out_dir + "/report.csv");
  std::cout << "suite " << rep.suite << ": RC " << rep.rc_mean << " +- "
            << rep.rc_std << ", IS " << rep.is_mean << " +- " << rep.is_std
            << ", DS " << rep.ds_mean << " +- " << rep.ds_std << ", collisions "
            << rep.collisions << "\n";
  return 0;
}

int cmd_rollout(const std::string& config_path, const std::string& ckpt,
                uint64_t seed, const std::string& trace_path) {
  RunConfig cfg = load_config_opt(config_path);
  EvalConfig ec = eval_config_from(cfg);
  std::optional<JointModel> model;
  if (!ckpt.empty()) model.emplace(load_model(cfg, ckpt));
  Planner planner = planner_for(cfg, model ? &*model : nullptr, ec);
  Scenario sc = scenario_for_kind(cfg.eval.suite, seed);
  EpisodeLog log = run_closed_loop(sc, planner, ec);
  Metrics m = compute_metrics(log);
  std::cout << "seed " << seed << " kind " << sc.kind << ": RC " << m.rc
            << " IS " << m.is << " DS " << m.ds << " collisions "
            << m.collisions << " ticks " << log.ticks.size() << "\n";
  if (!trace_path.empty()) {
    std::ofstream f(trace_path);
    if (!f) throw DataError("cannot write trace: " + trace_path);
    f << "time,x,y,heading,speed,steer,throttle,brake,progress\n";
    for (const auto& t : log.ticks) {
      const VehicleState& ego = t.states[0];
      char buf[200];
      std::snprintf(buf, sizeof(buf),
                    "%.2f,%.4f,%.4f,%.4f,%.4f,%.3f,%.3f,%.3f,%.4f\n", t.time,
                    ego.x, ego.y, ego.heading, ego.speed, t.ego_controls.steer,
                    t.ego_controls.throttle, t.ego_controls.brake, t.progress);
      f << buf;
    }
  }
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& data_dir,
               const std::string& out_dir) {
  RunConfig cfg = load_config_opt(config_path);
  Dataset train_ds = load_dataset(data_dir);
  GenConfig held_cfg = cfg.data;
  held_cfg.seed = cfg.data.seed + 1000;  // disjoint held-out scenarios
  Dataset held = generate_dataset(held_cfg);
  fs::create_directories(out_dir);
  std::ofstream csv(out_dir + "/ablation.csv");
  if (!csv) throw DataError("cannot write ablation csv");
  csv << "variant,param_tensors,held_out_joint_l1\n";
  for (Variant v : {Variant::kFull, Variant::kNoLocal, Variant::kNoGlobal,
                    Variant::kNoBoth}) {
    TrainConfig tc = cfg.train;
    tc.model.variant = v;
    Trainer trainer(tc, train_ds);
    trainer.train_all();
    double l1 = trainer.eval_joint_l1(held);
    csv << variant_to_string(v) << ","
        << trainer.model().params().all().size() << "," << l1 << "\n";
    std::cout << "variant " << variant_to_string(v) << ": held-out joint L1 "
              << l1 << "\n";
  }
  return 0;
}

int cmd_attn_dump(const std::string& config_path, const std::string& ckpt,
                  uint64_t seed, const std::string& out_path) {
  RunConfig cfg = load_config_opt(config_path);
  if (!cfg.model.has_local())
    throw DataError("attention dump needs a variant with a local transformer");
  JointModel model = load_model(cfg, ckpt);
  Scenario sc = scenario_for_kind(cfg.eval.suite, seed);
  World w = World::from_scenario(sc);
  for (int i = 0; i < 10; ++i) step(w, expert_all(w));
  FrameInput in = frame_from_world(w, w.index_of(0), cfg.model.grid,
                                   cfg.eval.gnss_ahead);
  ModelOutput out = model.forward(in, AssembleMode::kInference, nullptr, true);
  int grid = cfg.model.crop.size / 4;  // patchify stride
  Tensor heat = accumulate_attention(out.ego_attention, grid);
  Tensor ego_crop = crop_rotated_roi(Var::leaf(in.feature, false), RelPose{},
                                     cfg.model.grid, cfg.model.crop).val();
  save_svg(render_attention_svg(heat, ego_crop), out_path);
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int cmd_plot(const std::string& config_path, const std::string& ckpt,
             uint64_t seed, double at_time, const std::string& out_path) {
  RunConfig cfg = load_config_opt(config_path);
  EvalConfig ec = eval_config_from(cfg);
  std::optional<JointModel> model;
  if (!ckpt.empty()) model.emplace(load_model(cfg, ckpt));
  Planner planner = planner_for(cfg, model ? &*model : nullptr, ec);
  Scenario sc = scenario_for_kind(cfg.eval.suite, seed);
  World w = World::from_scenario(sc);
  while (w.time < at_time) step(w, expert_all(w));
  int ego_idx = w.index_of(0);
  PlanResult pr = planner(w, ego_idx);
  const VehicleState& ego = w.vehicles[static_cast<size_t>(ego_idx)];
  std::vector<Vec2> plan_world;
  for (const Vec2& p : pr.plan)
    plan_world.push_back(from_frame(p, ego.pos(), ego.heading));
  std::vector<std::vector<Vec2>> preds_world;
  for (const auto& traj : pr.predictions) {
    std::vector<Vec2> tw;
    for (const Vec2& p : traj) tw.push_back(from_frame(p, ego.pos(), ego.heading));
    preds_world.push_back(std::move(tw));
  }
  save_svg(render_trajectory_svg(w.vehicles, plan_world, preds_world), out_path);
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"joint planning-and-prediction driving stack"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_dir = "out", ckpt, resume, variant;
  std::string trace_path, out_path = "out.svg";
  uint64_t seed = 1;
  double at_time = 1.0;
  int stage = 0;

  auto* gen = app.add_subcommand("gen-data", "generate an imitation dataset");
  gen->add_option("--config", config_path, "run config JSON");
  gen->add_option("--out", out_dir, "output directory")->required();

  auto* train = app.add_subcommand("train", "run the staged training schedule");
  train->add_option("--config", config_path, "run config JSON");
  train->add_option("--data", data_dir, "dataset directory")->required();
  train->add_option("--out", out_dir, "checkpoint/metrics directory")->required();
  train->add_option("--stage", stage, "train a single stage (default: all)");
  train->add_option("--resume", resume, "resume from a checkpoint");
  train->add_option("--variant", variant, "ablation variant: full|I|II|III");

  auto* eval = app.add_subcommand("eval", "closed-loop evaluation suite");
  eval->add_option("--config", config_path, "run config JSON");
  eval->add_option("--checkpoint", ckpt, "model checkpoint");
  eval->add_option("--out", out_dir, "report directory")->required();

  auto* rollout = app.add_subcommand("rollout", "single closed-loop episode");
  rollout->add_option("--config", config_path, "run config JSON");
  rollout->add_option("--checkpoint", ckpt, "model checkpoint");
  rollout->add_option("--seed", seed, "scenario seed");
  rollout->add_option("--trace", trace_path, "per-tick CSV trace");

  auto* ablate = app.add_subcommand("ablate", "train and score all variants");
  ablate->add_option("--config", config_path, "run config JSON");
  ablate->add_option("--data", data_dir, "dataset directory")->required();
  ablate->add_option("--out", out_dir, "output directory")->required();

  auto* attn = app.add_subcommand("attn-dump", "render accumulated attention");
  attn->add_option("--config", config_path, "run config JSON");
  attn->add_option("--checkpoint", ckpt, "model checkpoint");
  attn->add_option("--seed", seed, "scenario seed");
  attn->add_option("--out", out_path, "output SVG path");

  auto* plot = app.add_subcommand("plot", "render a trajectory overlay");
  plot->add_option("--config", config_path, "run config JSON");
  plot->add_option("--checkpoint", ckpt, "model checkpoint");
  plot->add_option("--seed", seed, "scenario seed");
  plot->add_option("--time", at_time, "sim seconds before the snapshot");
  plot->add_option("--out", out_path, "output SVG path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(config_path, out_dir);
    if (train->parsed())
      return cmd_train(config_path, data_dir, out_dir, stage, resume, variant);
    if (eval->parsed()) return cmd_eval(config_path, ckpt, out_dir);
    if (rollout->parsed()) return cmd_rollout(config_path, ckpt, seed, trace_path);
    if (ablate->parsed()) return cmd_ablate(config_path, data_dir, out_dir);
    if (attn->parsed()) return cmd_attn_dump(config_path, ckpt, seed, out_path);
    if (plot->parsed()) return cmd_plot(config_path, ckpt, seed, at_time, out_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const SimError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const ShapeError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  }
  return 1;
}
