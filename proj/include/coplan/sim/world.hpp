#pragma once

// Deterministic 2D multi-vehicle world: kinematic bicycle dynamics, scheduled
// stop zones, infraction tracking, and closed-loop episode logs.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "coplan/sim/geometry.hpp"

namespace coplan {

struct SimError : std::runtime_error {
  explicit SimError(const std::string& msg) : std::runtime_error(msg) {}
};

constexpr double kDt = 0.1;            // simulation tick, seconds
constexpr double kWheelbase = 2.7;     // meters
constexpr double kMaxWheelAngle = 35.0 * M_PI / 180.0;
constexpr double kMaxSpeed = 15.0;     // m/s
constexpr double kThrottleAccel = 3.0; // m/s^2 at full throttle
constexpr double kBrakeDecel = 8.0;    // m/s^2 at full brake

struct VehicleState {
  int id = 0;
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;  // radians, wrapped to (-pi, pi]
  double speed = 0.0;    // m/s, >= 0
  double length = 4.5;
  double width = 2.0;

  Vec2 pos() const { return {x, y}; }
  std::vector<Vec2> footprint() const {
    return rect_corners(pos(), heading, length, width);
  }
  double disc_radius() const { return 0.5 * std::hypot(length, width); }
};

struct Controls {
  double steer = 0.0;     // [-1, 1], maps to +-35 deg wheel angle
  double throttle = 0.0;  // [0, 1]
  double brake = 0.0;     // [0, 1]
};

// Traffic-signal stand-in: a polygon that is periodically "red".
struct StopZone {
  std::vector<Vec2> polygon;
  double period = 20.0;       // seconds
  double red_fraction = 0.5;  // leading fraction of each period is red
  double phase = 0.0;

  bool active(double t) const {
    if (period <= 0.0) return red_fraction > 0.0;
    double u = std::fmod(t + phase, period);
    if (u < 0) u += period;
    return u < red_fraction * period;
  }
};

struct Lane {
  int id = 0;
  std::vector<Vec2> center;
  double width = 3.5;
  std::vector<int> successors;
};

// A vehicle's route: dense polyline plus the lane id each point lies on
// (lane ids drive lane-change behavior labeling).
struct Route {
  std::vector<Vec2> points;
  std::vector<int> lane_ids;
};

// Scripted speed override for a vehicle (used by evaluation suites, e.g. a
// lead vehicle that slams the brakes at a fixed time).
struct SpeedScript {
  int vehicle_id = 0;
  double brake_time = 0.0;   // full brake from this time on
  double decel = 8.0;
};

struct HighLevelBehavior {
  enum Value {
    kGoStraight = 0,
    kTurnLeft = 1,
    kTurnRight = 2,
    kFollowing = 3,
    kChangeLeftLane = 4,
    kChangeRightLane = 5,
  };
  static constexpr int kCount = 6;
  static const char* name(int b) {
    static const char* names[kCount] = {"go_straight",      "turn_left",
                                        "turn_right",       "following",
                                        "change_left_lane", "change_right_lane"};
    return names[b];
  }
};

struct Scenario {
  int schema_version = 1;
  uint64_t seed = 0;
  std::string kind;  // generator tag
  std::vector<Lane> lanes;
  std::vector<Vec2> ego_targets;  // sparse route target points (goal input)
  std::vector<VehicleState> initial_states;  // index 0 = ego
  std::vector<Route> routes;                 // parallel to initial_states
  std::vector<StopZone> stop_zones;
  std::vector<SpeedScript> scripts;
};

struct World {
  double time = 0.0;
  std::vector<VehicleState> vehicles;
  std::vector<Route> routes;  // parallel to vehicles
  std::vector<StopZone> stop_zones;
  std::vector<Lane> lanes;
  std::vector<Vec2> ego_targets;
  std::vector<SpeedScript> scripts;

  static World from_scenario(const Scenario& sc) {
    World w;
    w.vehicles = sc.initial_states;
    w.routes = sc.routes;
    w.stop_zones = sc.stop_zones;
    w.lanes = sc.lanes;
    w.ego_targets = sc.ego_targets;
    w.scripts = sc.scripts;
    return w;
  }

  int index_of(int vehicle_id) const {
    for (size_t i = 0; i < vehicles.size(); ++i)
      if (vehicles[i].id == vehicle_id) return static_cast<int>(i);
    return -1;
  }
};

// Advance every vehicle by one tick under the given controls. Missing
// entries coast (zero controls). Exact-arc integration of the bicycle model.
inline void step(World& w, const std::map<int, Controls>& controls, double dt = kDt) {
  for (auto& veh : w.vehicles) {
    Controls c;
    auto it = controls.find(veh.id);
    if (it != controls.end()) c = it->second;
    if (!std::isfinite(c.steer) || !std::isfinite(c.throttle) || !std::isfinite(c.brake))
      throw SimError("non-finite control for vehicle " + std::to_string(veh.id));
    c.steer = std::clamp(c.steer, -1.0, 1.0);
    c.throttle = std::clamp(c.throttle, 0.0, 1.0);
    c.brake = std::clamp(c.brake, 0.0, 1.0);

    for (const auto& scr : w.scripts)
      if (scr.vehicle_id == veh.id && w.time >= scr.brake_time) {
        c.throttle = 0.0;
        c.brake = std::clamp(scr.decel / kBrakeDecel, 0.0, 1.0);
      }

    double accel = kThrottleAccel * c.throttle - kBrakeDecel * c.brake;
    double v = std::clamp(veh.speed + accel * dt, 0.0, kMaxSpeed);
    double wheel = c.steer * kMaxWheelAngle;
    double dist = v * dt;
    if (std::abs(wheel) < 1e-9) {
      veh.x += dist * std::cos(veh.heading);
      veh.y += dist * std::sin(veh.heading);
    } else {
      double radius = kWheelbase / std::tan(wheel);
      double dpsi = dist / radius;
      double h0 = veh.heading, h1 = h0 + dpsi;
      veh.x += radius * (std::sin(h1) - std::sin(h0));
      veh.y += radius * (-std::cos(h1) + std::cos(h0));
      veh.heading = wrap_angle(h1);
    }
    veh.speed = v;
  }
  w.time += dt;
}

// ---- episode logging and metrics ----

struct InfractionEvent {
  std::string type;  // "collision" | "stop_zone" | "off_route"
  double time = 0.0;
  int other_id = -1;
};

struct TickRecord {
  double time = 0.0;
  std::vector<VehicleState> states;
  Controls ego_controls;
  double progress = 0.0;  // route fraction [0, 1]
  std::vector<InfractionEvent> events;
};

struct EpisodeLog {
  std::vector<TickRecord> ticks;
  bool off_route = false;
  bool route_done = false;
};

struct Metrics {
  double rc = 0.0;  // route completion, [0, 100]
  double is = 1.0;  // infraction score, (0, 1]
  double ds = 0.0;  // driving score, [0, 100]
  int collisions = 0;
  int stop_violations = 0;
};

constexpr double kCollisionPenalty = 0.60;
constexpr double kStopZonePenalty = 0.80;

inline Metrics compute_metrics(const EpisodeLog& log) {
  if (log.ticks.empty()) throw SimError("compute_metrics: empty episode log");
  Metrics m;
  for (const auto& tick : log.ticks)
    for (const auto& ev : tick.events) {
      if (ev.type == "collision") m.collisions += 1;
      else if (ev.type == "stop_zone") m.stop_violations += 1;
    }
  // A route flagged done counts as fully completed even though episodes cut
  // off slightly before the final route point.
  m.rc = log.route_done ? 100.0
                        : 100.0 * std::clamp(log.ticks.back().progress, 0.0, 1.0);
  m.is = std::pow(kCollisionPenalty, m.collisions) *
         std::pow(kStopZonePenalty, m.stop_violations);
  m.ds = m.rc * m.is;
  return m;
}

// Tracks rising edges so a sustained contact counts once.
class InfractionTracker {
 public:
  std::vector<InfractionEvent> update(const World& w, int ego_idx) {
    std::vector<InfractionEvent> events;
    const VehicleState& ego = w.vehicles[ego_idx];
    auto ego_fp = ego.footprint();
    for (size_t j = 0; j < w.vehicles.size(); ++j) {
      if (static_cast<int>(j) == ego_idx) continue;
      bool touch = rects_overlap(ego_fp, w.vehicles[j].footprint());
      int oid = w.vehicles[j].id;
      if (touch && !in_contact_.count(oid))
        events.push_back({"collision", w.time, oid});
      if (touch) in_contact_.insert(oid); else in_contact_.erase(oid);
    }
    for (size_t z = 0; z < w.stop_zones.size(); ++z) {
      const StopZone& zone = w.stop_zones[z];
      bool violating = zone.active(w.time) &&
                       point_in_polygon(ego.pos(), zone.polygon) && ego.speed > 0.5;
      int zid = static_cast<int>(z);
      if (violating && !in_zone_.count(zid))
        events.push_back({"stop_zone", w.time, zid});
      if (violating) in_zone_.insert(zid); else in_zone_.erase(zid);
    }
    return events;
  }

 private:
  std::set<int> in_contact_;
  std::set<int> in_zone_;
};

// Ground-truth stop flag: an active stop zone lies on the ego route within
// `lookahead` meters ahead (or the ego is inside it).
inline bool stop_flag_for(const World& w, int ego_idx, double lookahead = 15.0) {
  const VehicleState& ego = w.vehicles[ego_idx];
  const Route& route = w.routes[ego_idx];
  if (route.points.size() < 2) return false;
  Polyline line(route.points);
  double s0 = line.project(ego.pos());
  for (const auto& zone : w.stop_zones) {
    if (!zone.active(w.time)) continue;
    if (point_in_polygon(ego.pos(), zone.polygon)) return true;
    for (double ds = 0.0; ds <= lookahead; ds += 1.0) {
      if (s0 + ds > line.length()) break;
      if (point_in_polygon(line.point_at(s0 + ds), zone.polygon)) return true;
    }
  }
  return false;
}

}  // namespace coplan
