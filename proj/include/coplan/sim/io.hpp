#pragma once

// JSON (de)serialization for scenario files and JSON-lines episode logs.

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "coplan/sim/world.hpp"

namespace coplan {

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

using json = nlohmann::json;

inline json to_json(const Vec2& v) { return json::array({v.x, v.y}); }
inline Vec2 vec2_from_json(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

inline json to_json(const VehicleState& v) {
  return {{"id", v.id},     {"x", v.x},           {"y", v.y},
          {"heading", v.heading}, {"speed", v.speed}, {"length", v.length},
          {"width", v.width}};
}

inline VehicleState vehicle_from_json(const json& j) {
  VehicleState v;
  v.id = j.at("id");
  v.x = j.at("x");
  v.y = j.at("y");
  v.heading = j.at("heading");
  v.speed = j.at("speed");
  v.length = j.at("length");
  v.width = j.at("width");
  return v;
}

inline json to_json(const Scenario& sc) {
  json j;
  j["schema_version"] = sc.schema_version;
  j["seed"] = sc.seed;
  j["kind"] = sc.kind;
  j["lanes"] = json::array();
  for (const auto& lane : sc.lanes) {
    json jl = {{"id", lane.id}, {"width", lane.width}, {"successors", lane.successors}};
    jl["center"] = json::array();
    for (const auto& p : lane.center) jl["center"].push_back(to_json(p));
    j["lanes"].push_back(jl);
  }
  j["ego_targets"] = json::array();
  for (const auto& p : sc.ego_targets) j["ego_targets"].push_back(to_json(p));
  j["initial_states"] = json::array();
  for (const auto& v : sc.initial_states) j["initial_states"].push_back(to_json(v));
  j["routes"] = json::array();
  for (const auto& r : sc.routes) {
    json jr;
    jr["points"] = json::array();
    for (const auto& p : r.points) jr["points"].push_back(to_json(p));
    jr["lane_ids"] = r.lane_ids;
    j["routes"].push_back(jr);
  }
  j["stop_zones"] = json::array();
  for (const auto& z : sc.stop_zones) {
    json jz = {{"period", z.period}, {"red_fraction", z.red_fraction}, {"phase", z.phase}};
    jz["polygon"] = json::array();
    for (const auto& p : z.polygon) jz["polygon"].push_back(to_json(p));
    j["stop_zones"].push_back(jz);
  }
  j["scripts"] = json::array();
  for (const auto& s : sc.scripts)
    j["scripts"].push_back({{"vehicle_id", s.vehicle_id},
                            {"brake_time", s.brake_time},
                            {"decel", s.decel}});
  return j;
}

inline Scenario scenario_from_json(const json& j) {
  Scenario sc;
  int ver = j.at("schema_version");
  if (ver != 1)
    throw DataError("scenario schema version " + std::to_string(ver) + " unsupported");
  sc.schema_version = ver;
  sc.seed = j.at("seed");
  sc.kind = j.at("kind");
  for (const auto& jl : j.at("lanes")) {
    Lane lane;
    lane.id = jl.at("id");
    lane.width = jl.at("width");
    lane.successors = jl.at("successors").get<std::vector<int>>();
    for (const auto& p : jl.at("center")) lane.center.push_back(vec2_from_json(p));
    sc.lanes.push_back(lane);
  }
  for (const auto& p : j.at("ego_targets")) sc.ego_targets.push_back(vec2_from_json(p));
  for (const auto& v : j.at("initial_states"))
    sc.initial_states.push_back(vehicle_from_json(v));
  for (const auto& jr : j.at("routes")) {
    Route r;
    for (const auto& p : jr.at("points")) r.points.push_back(vec2_from_json(p));
    r.lane_ids = jr.at("lane_ids").get<std::vector<int>>();
    sc.routes.push_back(r);
  }
  for (const auto& jz : j.at("stop_zones")) {
    StopZone z;
    z.period = jz.at("period");
    z.red_fraction = jz.at("red_fraction");
    z.phase = jz.at("phase");
    for (const auto& p : jz.at("polygon")) z.polygon.push_back(vec2_from_json(p));
    sc.stop_zones.push_back(z);
  }
  for (const auto& js : j.at("scripts")) {
    SpeedScript s;
    s.vehicle_id = js.at("vehicle_id");
    s.brake_time = js.at("brake_time");
    s.decel = js.at("decel");
    sc.scripts.push_back(s);
  }
  return sc;
}

inline void save_scenario(const Scenario& sc, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write scenario file: " + path);
  f << to_json(sc).dump(2) << "\n";
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot read scenario file: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw DataError("malformed scenario file " + path + ": " + e.what());
  }
  return scenario_from_json(j);
}

// Episode log export: JSON-lines, one tick per line.
inline void save_episode_log(const EpisodeLog& log, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write episode log: " + path);
  for (const auto& tick : log.ticks) {
    json j;
    j["t"] = tick.time;
    j["progress"] = tick.progress;
    j["ego_controls"] = {{"steer", tick.ego_controls.steer},
                         {"throttle", tick.ego_controls.throttle},
                         {"brake", tick.ego_controls.brake}};
    j["states"] = json::array();
    for (const auto& s : tick.states) j["states"].push_back(to_json(s));
    j["events"] = json::array();
    for (const auto& ev : tick.events)
      j["events"].push_back({{"type", ev.type}, {"time", ev.time}, {"other", ev.other_id}});
    f << j.dump() << "\n";
  }
}

}  // namespace coplan
