#pragma once

// Scripted expert: IDM car-following for the longitudinal axis, pure pursuit
// for the lateral axis, plus route-geometry behavior labeling. This is the
// label source for imitation training.

#include <cmath>
#include <optional>

#include "coplan/sim/world.hpp"

namespace coplan {

struct IdmParams {
  double desired_speed = 8.0;   // m/s
  double time_headway = 1.5;    // s
  double min_gap = 2.0;         // m
  double max_accel = 3.0;       // m/s^2
  double comfort_decel = 4.0;   // m/s^2
};

struct ExpertParams {
  IdmParams idm;
  double lookahead = 5.0;        // pure-pursuit distance, m
  double lane_half_width = 1.8;  // lateral gate for lead detection, m
  double stop_lookahead = 20.0;  // distance at which active stop zones brake us
  double label_horizon = 20.0;   // route window used for behavior labeling, m
  double turn_threshold = M_PI / 4.0;
};

struct ExpertDecision {
  Controls controls;
  int behavior = HighLevelBehavior::kGoStraight;
};

namespace detail_expert {

struct Lead {
  double gap = 0.0;     // bumper-to-bumper, m
  double speed = 0.0;
};

// Nearest conflicting vehicle ahead on this vehicle's route. Other vehicles
// are screened at their current position and at short constant-velocity
// extrapolations, so crossing traffic registers before it blocks the path.
inline std::optional<Lead> find_lead(const World& w, int idx, const Polyline& line,
                                     double s_self, const ExpertParams& ep) {
  const VehicleState& self = w.vehicles[idx];
  std::optional<Lead> best;
  for (size_t j = 0; j < w.vehicles.size(); ++j) {
    if (static_cast<int>(j) == idx) continue;
    const VehicleState& other = w.vehicles[j];
    Vec2 vel{other.speed * std::cos(other.heading), other.speed * std::sin(other.heading)};
    for (double tau : {0.0, 0.5, 1.0, 1.5, 2.0}) {
      Vec2 pos = other.pos() + vel * tau;
      if (line.distance_to(pos) > ep.lane_half_width) continue;
      double s_other = line.project(pos);
      double gap = s_other - s_self - 0.5 * (self.length + other.length);
      if (s_other <= s_self || gap > 80.0) continue;
      // speed component along my route at the conflict point
      double along = other.speed * std::cos(wrap_angle(other.heading - line.heading_at(s_other)));
      double lead_speed = std::max(0.0, along);
      if (!best || gap < best->gap) best = Lead{gap, lead_speed};
    }
  }
  return best;
}

// Distance along the route to the entry of the nearest active stop zone.
inline std::optional<double> stop_zone_ahead(const World& w, const Polyline& line,
                                             double s_self, double max_dist) {
  std::optional<double> best;
  for (const auto& zone : w.stop_zones) {
    if (!zone.active(w.time)) continue;
    for (double ds = 0.0; ds <= max_dist; ds += 0.5) {
      if (s_self + ds > line.length()) break;
      if (point_in_polygon(line.point_at(s_self + ds), zone.polygon)) {
        if (!best || ds < *best) best = ds;
        break;
      }
    }
  }
  return best;
}

inline double idm_accel(const IdmParams& p, double v, double gap, double lead_speed) {
  double free_term = std::pow(v / p.desired_speed, 4.0);
  double interact = 0.0;
  if (gap < 1e9) {
    double dv = v - lead_speed;
    double s_star = p.min_gap +
                    std::max(0.0, v * p.time_headway +
                                      v * dv / (2.0 * std::sqrt(p.max_accel * p.comfort_decel)));
    if (gap < 0.05) return -1e9;  // emergency: essentially touching
    interact = (s_star / gap) * (s_star / gap);
  }
  return p.max_accel * (1.0 - free_term - interact);
}

}  // namespace detail_expert

// Behavior label from route geometry over the next `label_horizon` meters:
// heading change beyond the threshold labels a turn, a lane-id switch labels
// a lane change, an IDM-relevant lead labels following, else go straight.
inline int behavior_label(const World& w, int idx, const ExpertParams& ep = {}) {
  const Route& route = w.routes[idx];
  if (route.points.size() < 2)
    throw SimError("vehicle " + std::to_string(w.vehicles[idx].id) + " has no route");
  Polyline line(route.points);
  const VehicleState& self = w.vehicles[idx];
  double s0 = line.project(self.pos());
  double s1 = std::min(s0 + ep.label_horizon, line.length() - 1e-6);
  double dpsi = wrap_angle(line.heading_at(s1) - line.heading_at(s0));
  if (dpsi > ep.turn_threshold) return HighLevelBehavior::kTurnLeft;
  if (dpsi < -ep.turn_threshold) return HighLevelBehavior::kTurnRight;

  if (!route.lane_ids.empty() && route.lane_ids.size() == route.points.size()) {
    // locate the closest route point and scan one horizon ahead
    size_t i0 = 0;
    double best = 1e300;
    for (size_t i = 0; i < route.points.size(); ++i) {
      double d = (route.points[i] - self.pos()).norm();
      if (d < best) { best = d; i0 = i; }
    }
    double walked = 0.0;
    for (size_t i = i0; i + 1 < route.points.size() && walked < ep.label_horizon; ++i) {
      walked += (route.points[i + 1] - route.points[i]).norm();
      if (route.lane_ids[i + 1] != route.lane_ids[i0]) {
        Vec2 ahead = to_frame(route.points[i + 1], self.pos(), self.heading);
        return ahead.y > 0 ? HighLevelBehavior::kChangeLeftLane
                           : HighLevelBehavior::kChangeRightLane;
      }
    }
  }

  auto lead = detail_expert::find_lead(w, idx, line, s0, ep);
  if (lead && lead->gap < ep.idm.min_gap + self.speed * ep.idm.time_headway + 10.0)
    return HighLevelBehavior::kFollowing;
  return HighLevelBehavior::kGoStraight;
}

inline ExpertDecision expert_policy(const World& w, int vehicle_id,
                                    const ExpertParams& ep = {}) {
  int idx = w.index_of(vehicle_id);
  if (idx < 0) throw SimError("unknown vehicle id " + std::to_string(vehicle_id));
  const Route& route = w.routes[idx];
  if (route.points.size() < 2)
    throw SimError("vehicle " + std::to_string(vehicle_id) + " has no route");
  const VehicleState& self = w.vehicles[idx];
  Polyline line(route.points);
  double s0 = line.project(self.pos());

  // longitudinal: IDM against the nearest lead and any active stop zone
  double accel;
  {
    auto lead = detail_expert::find_lead(w, idx, line, s0, ep);
    double gap = lead ? std::max(lead->gap, 1e-3) : 1e12;
    double lead_speed = lead ? lead->speed : 0.0;
    accel = detail_expert::idm_accel(ep.idm, self.speed, lead ? gap : 1e12, lead_speed);
    auto zone = detail_expert::stop_zone_ahead(w, line, s0, ep.stop_lookahead);
    if (zone) {
      double zone_gap = std::max(*zone - 0.5 * self.length, 1e-3);
      accel = std::min(accel, detail_expert::idm_accel(ep.idm, self.speed, zone_gap, 0.0));
    }
    // end of route: stop at the last waypoint
    double remaining = line.length() - s0;
    if (remaining < 30.0)
      accel = std::min(accel,
                       detail_expert::idm_accel(ep.idm, self.speed,
                                                std::max(remaining, 1e-3), 0.0));
  }

  ExpertDecision out;
  if (accel >= 0.0) {
    out.controls.throttle = std::clamp(accel / kThrottleAccel, 0.0, 1.0);
  } else {
    out.controls.brake = std::clamp(-accel / kBrakeDecel, 0.0, 1.0);
  }

  // lateral: pure pursuit on a fixed lookahead
  Vec2 target = line.point_at(std::min(s0 + ep.lookahead, line.length()));
  Vec2 local = to_frame(target, self.pos(), self.heading);
  double ld = std::max(local.norm(), 1e-3);
  double alpha = std::atan2(local.y, local.x);
  double wheel = std::atan2(2.0 * kWheelbase * std::sin(alpha), ld);
  out.controls.steer = std::clamp(wheel / kMaxWheelAngle, -1.0, 1.0);

  out.behavior = behavior_label(w, idx, ep);
  return out;
}

// Expert controls for every vehicle.
inline std::map<int, Controls> expert_all(const World& w, const ExpertParams& ep = {}) {
  std::map<int, Controls> out;
  for (const auto& v : w.vehicles) out[v.id] = expert_policy(w, v.id, ep).controls;
  return out;
}

// Future positions of `vehicle_id` under the expert, in that vehicle's
// current frame, sampled every `dt_wp` for `horizon` steps. First recorded
// point is one interval ahead.
inline std::vector<Vec2> rollout_labels(const World& world, int vehicle_id,
                                        int horizon, double dt_wp = 0.5,
                                        const ExpertParams& ep = {}) {
  World w = world;  // value copy; the caller's world is untouched
  int idx = w.index_of(vehicle_id);
  if (idx < 0) throw SimError("unknown vehicle id " + std::to_string(vehicle_id));
  Vec2 origin = w.vehicles[idx].pos();
  double heading = w.vehicles[idx].heading;
  int ticks_per_wp = static_cast<int>(std::lround(dt_wp / kDt));
  std::vector<Vec2> out;
  out.reserve(horizon);
  for (int t = 0; t < horizon; ++t) {
    for (int k = 0; k < ticks_per_wp; ++k) step(w, expert_all(w, ep));
    out.push_back(to_frame(w.vehicles[idx].pos(), origin, heading));
  }
  return out;
}

}  // namespace coplan
