#pragma once

// Closed-loop evaluation: drive the ego with a planner (learned model or a
// scripted route follower) through the collision-aware tracker while the
// expert drives everyone else; aggregate RC/IS/DS over seeded suites.

#include <functional>
#include <numeric>

#include "coplan/control/controller.hpp"
#include "coplan/model/model.hpp"
#include "coplan/sim/episode.hpp"
#include "coplan/train/dataset.hpp"

namespace coplan {

// Everything the tracker needs, expressed in the ego frame at plan time.
struct PlanResult {
  std::vector<Vec2> plan;
  std::vector<std::vector<Vec2>> predictions;
  std::vector<double> radii;  // disc radius per predicted vehicle
};

using Planner = std::function<PlanResult(const World&, int ego_idx)>;

struct EvalConfig {
  double replan_period = 0.5;  // seconds between planner calls
  double gnss_ahead = 25.0;    // route-arc meters to the goal point
  EpisodeLimits limits{};
  ControllerConfig controller{};
};

// Build a live model input the same way the dataset harvester does.
inline FrameInput frame_from_world(const World& w, int ego_idx,
                                   const GridSpec& grid, double gnss_ahead) {
  const VehicleState& ego = w.vehicles[static_cast<size_t>(ego_idx)];
  FrameInput in;
  in.feature = rasterize(w, ego.id, grid);
  in.behavior = behavior_label(w, ego_idx);
  Polyline line(w.routes[static_cast<size_t>(ego_idx)].points);
  double s_now = line.project(ego.pos());
  Vec2 goal = line.point_at(std::min(s_now + gnss_ahead, line.length()));
  in.gnss_target = to_frame(goal, ego.pos(), ego.heading);
  for (const auto& v : w.vehicles) {
    if (v.id == ego.id) continue;
    in.others.push_back(rel_pose(v, ego));
    in.other_ids.push_back(v.id);
  }
  return in;
}

inline std::vector<Vec2> waypoints_from_var(const Var& traj) {
  const Tensor& t = traj.val();
  if (t.shape.size() != 2 || t.shape[1] != 2)
    throw ShapeError("waypoints_from_var: expected [T,2]");
  std::vector<Vec2> out;
  for (int64_t i = 0; i < t.shape[0]; ++i)
    out.push_back({t.v[2 * i], t.v[2 * i + 1]});
  return out;
}

// Plans with the joint model: the ego plan arrives in the ego frame already;
// predictions arrive in each subject vehicle's own frame and are mapped into
// the ego frame through that vehicle's detected relative pose.
inline Planner make_model_planner(JointModel& model, const EvalConfig& cfg) {
  return [&model, cfg](const World& w, int ego_idx) {
    FrameInput in = frame_from_world(w, ego_idx, model.config().grid, cfg.gnss_ahead);
    ModelOutput mo = model.forward(in, AssembleMode::kInference);
    PlanResult out;
    out.plan = waypoints_from_var(mo.plan);
    for (size_t k = 0; k < mo.selected.size(); ++k) {
      const RelPose& rp = in.others[static_cast<size_t>(mo.selected[k])];
      std::vector<Vec2> traj = waypoints_from_var(mo.predictions[k]);
      for (Vec2& p : traj) p = from_frame(p, {rp.x, rp.y}, rp.heading);
      out.predictions.push_back(std::move(traj));
      int oid = in.other_ids[static_cast<size_t>(mo.selected[k])];
      out.radii.push_back(
          w.vehicles[static_cast<size_t>(w.index_of(oid))].disc_radius());
    }
    return out;
  };
}

// Scripted planner: follow the ego route at the cruise speed and extrapolate
// every other vehicle at constant velocity. Blind to interactions on purpose
// so the tracker's collision gate carries the whole safety burden.
inline Planner make_route_planner(int horizon = 10, double dt_wp = 0.5,
                                  double cruise = 8.0) {
  return [horizon, dt_wp, cruise](const World& w, int ego_idx) {
    const VehicleState& ego = w.vehicles[static_cast<size_t>(ego_idx)];
    Polyline line(w.routes[static_cast<size_t>(ego_idx)].points);
    double s0 = line.project(ego.pos());
    PlanResult out;
    for (int t = 1; t <= horizon; ++t) {
      double s = std::min(s0 + cruise * dt_wp * t, line.length());
      out.plan.push_back(to_frame(line.point_at(s), ego.pos(), ego.heading));
    }
    for (const auto& v : w.vehicles) {
      if (v.id == ego.id) continue;
      std::vector<Vec2> traj;
      Vec2 vel{v.speed * std::cos(v.heading), v.speed * std::sin(v.heading)};
      for (int t = 1; t <= horizon; ++t)
        traj.push_back(to_frame(v.pos() + vel * (dt_wp * t), ego.pos(), ego.heading));
      out.predictions.push_back(std::move(traj));
      out.radii.push_back(v.disc_radius());
    }
    return out;
  };
}

// One closed-loop episode: the planner replans on a fixed period, the cached
// world-frame plan is re-expressed in the live ego frame every tick, and the
// expert drives all other vehicles.
inline EpisodeLog run_closed_loop(const Scenario& sc, const Planner& planner,
                                  const EvalConfig& cfg) {
  World w = World::from_scenario(sc);
  int ego_idx = w.index_of(0);
  if (ego_idx < 0) throw SimError("scenario has no ego (id 0)");
  Polyline ego_line(w.routes[static_cast<size_t>(ego_idx)].points);

  Pid lateral(cfg.controller.kp_lat, cfg.controller.ki_lat, cfg.controller.kd_lat,
              cfg.controller.integral_clamp);
  Pid longitudinal(cfg.controller.kp_lon, cfg.controller.ki_lon,
                   cfg.controller.kd_lon, cfg.controller.integral_clamp);

  int replan_ticks = std::max(1, static_cast<int>(std::round(cfg.replan_period / kDt)));
  std::vector<Vec2> plan_world;
  std::vector<std::vector<Vec2>> preds_world;
  std::vector<double> radii;

  EpisodeLog log;
  InfractionTracker tracker;
  double progress = 0.0;
  int tick = 0;
  while (w.time < cfg.limits.max_time) {
    const VehicleState& ego = w.vehicles[static_cast<size_t>(ego_idx)];
    if (tick % replan_ticks == 0) {
      PlanResult pr = planner(w, ego_idx);
      plan_world.clear();
      for (const Vec2& p : pr.plan)
        plan_world.push_back(from_frame(p, ego.pos(), ego.heading));
      preds_world.clear();
      for (const auto& traj : pr.predictions) {
        std::vector<Vec2> tw;
        for (const Vec2& p : traj) tw.push_back(from_frame(p, ego.pos(), ego.heading));
        preds_world.push_back(std::move(tw));
      }
      radii = pr.radii;
    }

    std::vector<Vec2> plan_ego;
    for (const Vec2& p : plan_world)
      plan_ego.push_back(to_frame(p, ego.pos(), ego.heading));
    std::vector<std::vector<Vec2>> preds_ego;
    for (const auto& traj : preds_world) {
      std::vector<Vec2> te;
      for (const Vec2& p : traj) te.push_back(to_frame(p, ego.pos(), ego.heading));
      preds_ego.push_back(std::move(te));
    }

    bool stop = stop_flag_for(w, ego_idx);
    Controls cmd = control_step(plan_ego, preds_ego, ego.disc_radius(), radii,
                                ego.speed, stop, lateral, longitudinal,
                                cfg.controller);

    auto controls = expert_all(w);
    controls[0] = cmd;
    step(w, controls);
    ++tick;

    TickRecord rec;
    rec.time = w.time;
    rec.states = w.vehicles;
    rec.ego_controls = cmd;
    rec.events = tracker.update(w, ego_idx);
    progress = std::max(progress, route_progress(w, ego_idx, ego_line));
    rec.progress = progress;
    if (ego_line.distance_to(w.vehicles[static_cast<size_t>(ego_idx)].pos()) >
        cfg.limits.off_route_dist) {
      rec.events.push_back({"off_route", w.time, -1});
      log.ticks.push_back(rec);
      log.off_route = true;
      break;
    }
    log.ticks.push_back(rec);
    if (progress >= cfg.limits.done_progress) {
      log.route_done = true;
      break;
    }
  }
  return log;
}

struct EpisodeResult {
  uint64_t seed = 0;
  int repetition = 0;
  Metrics metrics;
};

struct SuiteReport {
  std::string suite;
  std::vector<EpisodeResult> episodes;
  double rc_mean = 0.0, rc_std = 0.0;
  double is_mean = 0.0, is_std = 0.0;
  double ds_mean = 0.0, ds_std = 0.0;
  int collisions = 0;
  int stop_violations = 0;
  std::string config_hash;
};

inline std::string fnv1a_hex(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline SuiteReport run_suite(const std::string& suite_kind,
                             const std::vector<uint64_t>& seeds, int repetitions,
                             const Planner& planner, const EvalConfig& cfg,
                             const std::string& config_echo = "{}") {
  SuiteReport rep;
  rep.suite = suite_kind;
  rep.config_hash = fnv1a_hex(config_echo);
  std::vector<double> rcs, iss, dss;
  for (uint64_t seed : seeds) {
    Scenario sc = scenario_for_kind(suite_kind, seed);
    for (int r = 0; r < repetitions; ++r) {
      EpisodeLog log = run_closed_loop(sc, planner, cfg);
      EpisodeResult er;
      er.seed = seed;
      er.repetition = r;
      er.metrics = compute_metrics(log);
      rcs.push_back(er.metrics.rc);
      iss.push_back(er.metrics.is);
      dss.push_back(er.metrics.ds);
      rep.collisions += er.metrics.collisions;
      rep.stop_violations += er.metrics.stop_violations;
      rep.episodes.push_back(er);
    }
  }
  auto mean = [](const std::vector<double>& v) {
    return v.empty() ? 0.0
                     : std::accumulate(v.begin(), v.end(), 0.0) /
                           static_cast<double>(v.size());
  };
  auto stddev = [&](const std::vector<double>& v, double m) {
    if (v.size() < 2) return 0.0;
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(v.size()));
  };
  rep.rc_mean = mean(rcs);
  rep.is_mean = mean(iss);
  rep.ds_mean = mean(dss);
  rep.rc_std = stddev(rcs, rep.rc_mean);
  rep.is_std = stddev(iss, rep.is_mean);
  rep.ds_std = stddev(dss, rep.ds_mean);
  return rep;
}

inline nlohmann::json report_to_json(const SuiteReport& r) {
  nlohmann::json j;
  j["suite"] = r.suite;
  j["config_hash"] = r.config_hash;
  j["rc"] = {{"mean", r.rc_mean}, {"std", r.rc_std}};
  j["is"] = {{"mean", r.is_mean}, {"std", r.is_std}};
  j["ds"] = {{"mean", r.ds_mean}, {"std", r.ds_std}};
  j["collisions"] = r.collisions;
  j["stop_violations"] = r.stop_violations;
  nlohmann::json eps = nlohmann::json::array();
  for (const auto& e : r.episodes)
    eps.push_back({{"seed", e.seed},
                   {"repetition", e.repetition},
                   {"rc", e.metrics.rc},
                   {"is", e.metrics.is},
                   {"ds", e.metrics.ds},
                   {"collisions", e.metrics.collisions},
                   {"stop_violations", e.metrics.stop_violations}});
  j["episodes"] = eps;
  return j;
}

inline void save_report(const SuiteReport& r, const std::string& json_path,
                        const std::string& csv_path) {
  {
    std::ofstream f(json_path);
    if (!f) throw DataError("cannot write report: " + json_path);
    f << report_to_json(r).dump(2) << "\n";
  }
  std::ofstream f(csv_path);
  if (!f) throw DataError("cannot write report: " + csv_path);
  f << "seed,repetition,rc,is,ds,collisions,stop_violations\n";
  char buf[160];
  for (const auto& e : r.episodes) {
    std::snprintf(buf, sizeof(buf), "%llu,%d,%.6f,%.6f,%.6f,%d,%d\n",
                  static_cast<unsigned long long>(e.seed), e.repetition,
                  e.metrics.rc, e.metrics.is, e.metrics.ds,
                  e.metrics.collisions, e.metrics.stop_violations);
    f << buf;
  }
}

}  // namespace coplan
