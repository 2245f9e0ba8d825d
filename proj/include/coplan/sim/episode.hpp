#pragma once

// Closed-loop episode driver for the scripted expert. The learned-model
// counterpart lives in eval/closed_loop.hpp.

#include "coplan/sim/expert.hpp"
#include "coplan/sim/scenario_gen.hpp"

namespace coplan {

struct EpisodeLimits {
  double max_time = 90.0;       // seconds
  double off_route_dist = 5.0;  // lateral leash, m
  double done_progress = 0.995;
};

inline double route_progress(const World& w, int ego_idx, const Polyline& line) {
  double s = line.project(w.vehicles[ego_idx].pos());
  return std::clamp(s / std::max(line.length(), 1e-9), 0.0, 1.0);
}

inline EpisodeLog run_expert_episode(const Scenario& sc, const EpisodeLimits& lim = {}) {
  World w = World::from_scenario(sc);
  int ego_idx = w.index_of(0);
  if (ego_idx < 0) throw SimError("scenario has no ego (id 0)");
  Polyline ego_line(w.routes[ego_idx].points);
  EpisodeLog log;
  InfractionTracker tracker;
  double progress = 0.0;
  while (w.time < lim.max_time) {
    auto controls = expert_all(w);
    step(w, controls);
    TickRecord rec;
    rec.time = w.time;
    rec.states = w.vehicles;
    rec.ego_controls = controls.at(0);
    rec.events = tracker.update(w, ego_idx);
    progress = std::max(progress, route_progress(w, ego_idx, ego_line));
    rec.progress = progress;
    if (ego_line.distance_to(w.vehicles[ego_idx].pos()) > lim.off_route_dist) {
      rec.events.push_back({"off_route", w.time, -1});
      log.ticks.push_back(rec);
      log.off_route = true;
      break;
    }
    log.ticks.push_back(rec);
    if (progress >= lim.done_progress) {
      log.route_done = true;
      break;
    }
  }
  return log;
}

}  // namespace coplan
