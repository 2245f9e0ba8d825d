#pragma once

// Imitation dataset: world snapshots with expert waypoint labels, stored as
// JSON-lines plus an index file.  Features are rasterized on the fly from
// the snapshot, so files stay compact and the raster code is the single
// source of truth.

#include <filesystem>
#include <fstream>

#include "coplan/model/model.hpp"
#include "coplan/sim/episode.hpp"
#include "coplan/sim/io.hpp"

namespace coplan {

constexpr int kDatasetVersion = 1;

struct Sample {
  int scenario_id = 0;    // line index into scenarios.jsonl
  double time = 0.0;
  std::vector<VehicleState> vehicles;
  int ego_id = 0;
  int behavior = 0;
  Vec2 gnss_target{0.0, 0.0};           // ego frame
  std::vector<int> other_ids;           // candidates, nearest-first, <= 9
  std::vector<Vec2> ego_label;          // T points, ego frame
  std::vector<std::vector<Vec2>> other_labels;  // parallel to other_ids

  bool operator==(const Sample& o) const {
    auto veq = [](const std::vector<VehicleState>& a,
                  const std::vector<VehicleState>& b) {
      if (a.size() != b.size()) return false;
      for (size_t i = 0; i < a.size(); ++i)
        if (a[i].id != b[i].id || a[i].x != b[i].x || a[i].y != b[i].y ||
            a[i].heading != b[i].heading || a[i].speed != b[i].speed ||
            a[i].length != b[i].length || a[i].width != b[i].width)
          return false;
      return true;
    };
    auto peq = [](const std::vector<Vec2>& a, const std::vector<Vec2>& b) {
      if (a.size() != b.size()) return false;
      for (size_t i = 0; i < a.size(); ++i)
        if (a[i].x != b[i].x || a[i].y != b[i].y) return false;
      return true;
    };
    if (!(scenario_id == o.scenario_id && time == o.time && ego_id == o.ego_id &&
          behavior == o.behavior && gnss_target.x == o.gnss_target.x &&
          gnss_target.y == o.gnss_target.y && other_ids == o.other_ids &&
          veq(vehicles, o.vehicles) && peq(ego_label, o.ego_label) &&
          other_labels.size() == o.other_labels.size()))
      return false;
    for (size_t i = 0; i < other_labels.size(); ++i)
      if (!peq(other_labels[i], o.other_labels[i])) return false;
    return true;
  }
};

struct Dataset {
  std::vector<Scenario> scenarios;
  std::vector<Sample> samples;
};

inline json sample_to_json(const Sample& s) {
  json j;
  j["scenario_id"] = s.scenario_id;
  j["time"] = s.time;
  j["ego_id"] = s.ego_id;
  j["behavior"] = s.behavior;
  j["gnss"] = to_json(s.gnss_target);
  j["vehicles"] = json::array();
  for (const auto& v : s.vehicles) j["vehicles"].push_back(to_json(v));
  j["other_ids"] = s.other_ids;
  j["ego_label"] = json::array();
  for (const auto& p : s.ego_label) j["ego_label"].push_back(to_json(p));
  j["other_labels"] = json::array();
  for (const auto& traj : s.other_labels) {
    json jt = json::array();
    for (const auto& p : traj) jt.push_back(to_json(p));
    j["other_labels"].push_back(jt);
  }
  return j;
}

inline Sample sample_from_json(const json& j) {
  Sample s;
  s.scenario_id = j.at("scenario_id");
  s.time = j.at("time");
  s.ego_id = j.at("ego_id");
  s.behavior = j.at("behavior");
  s.gnss_target = vec2_from_json(j.at("gnss"));
  for (const auto& v : j.at("vehicles")) s.vehicles.push_back(vehicle_from_json(v));
  s.other_ids = j.at("other_ids").get<std::vector<int>>();
  for (const auto& p : j.at("ego_label")) s.ego_label.push_back(vec2_from_json(p));
  for (const auto& jt : j.at("other_labels")) {
    std::vector<Vec2> traj;
    for (const auto& p : jt) traj.push_back(vec2_from_json(p));
    s.other_labels.push_back(std::move(traj));
  }
  return s;
}

inline void save_dataset(const Dataset& ds, const std::string& dir,
                         uint64_t seed_provenance = 0) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  std::ofstream fs_sc(dir + "/scenarios.jsonl");
  if (!fs_sc) throw DataError("cannot write " + dir + "/scenarios.jsonl");
  for (const auto& sc : ds.scenarios) fs_sc << to_json(sc).dump() << "\n";
  std::ofstream fs_sm(dir + "/samples.jsonl");
  if (!fs_sm) throw DataError("cannot write " + dir + "/samples.jsonl");
  for (const auto& s : ds.samples) fs_sm << sample_to_json(s).dump() << "\n";
  json idx;
  idx["version"] = kDatasetVersion;
  idx["scenario_count"] = ds.scenarios.size();
  idx["sample_count"] = ds.samples.size();
  idx["seed"] = seed_provenance;
  std::ofstream fs_idx(dir + "/index.json");
  if (!fs_idx) throw DataError("cannot write " + dir + "/index.json");
  fs_idx << idx.dump(2) << "\n";
}

inline Dataset load_dataset(const std::string& dir) {
  std::ifstream fidx(dir + "/index.json");
  if (!fidx) throw DataError("cannot read " + dir + "/index.json");
  json idx;
  try {
    fidx >> idx;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed index.json: ") + e.what());
  }
  int ver = idx.at("version");
  if (ver != kDatasetVersion)
    throw DataError("dataset version " + std::to_string(ver) + " unsupported");
  Dataset ds;
  auto read_lines = [](const std::string& path, auto&& consume) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot read " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      if (line.empty()) continue;
      json j;
      try {
        j = json::parse(line);
        consume(j);
      } catch (const json::exception& e) {
        throw DataError(path + ": bad record at line " + std::to_string(lineno) +
                        ": " + e.what());
      }
    }
  };
  read_lines(dir + "/scenarios.jsonl",
             [&](const json& j) { ds.scenarios.push_back(scenario_from_json(j)); });
  read_lines(dir + "/samples.jsonl",
             [&](const json& j) { ds.samples.push_back(sample_from_json(j)); });
  size_t want_sc = idx.at("scenario_count"), want_sm = idx.at("sample_count");
  if (ds.scenarios.size() != want_sc || ds.samples.size() != want_sm)
    throw DataError("dataset truncated: index says " + std::to_string(want_sc) +
                    "/" + std::to_string(want_sm) + " records, found " +
                    std::to_string(ds.scenarios.size()) + "/" +
                    std::to_string(ds.samples.size()));
  return ds;
}

// Rebuild the simulator world a sample was taken from.
inline World world_from_sample(const Scenario& sc, const Sample& s) {
  World w = World::from_scenario(sc);
  if (s.vehicles.size() != w.vehicles.size())
    throw DataError("sample vehicle count does not match its scenario");
  w.vehicles = s.vehicles;
  w.time = s.time;
  return w;
}

// Rasterize a sample into model input.  All stored others are candidates;
// the model's assemble step does the final selection.
inline FrameInput frame_from_sample(const Scenario& sc, const Sample& s,
                                    const GridSpec& grid) {
  World w = world_from_sample(sc, s);
  int ego_idx = w.index_of(s.ego_id);
  if (ego_idx < 0) throw DataError("sample ego id missing from scenario");
  FrameInput in;
  in.feature = rasterize(w, s.ego_id, grid);
  in.behavior = s.behavior;
  in.gnss_target = s.gnss_target;
  for (int oid : s.other_ids) {
    int oi = w.index_of(oid);
    if (oi < 0) throw DataError("sample other id missing from scenario");
    in.others.push_back(rel_pose(w.vehicles[oi], w.vehicles[ego_idx]));
    in.other_ids.push_back(oid);
  }
  return in;
}

inline Tensor label_tensor(const std::vector<Vec2>& pts) {
  Tensor t({static_cast<int>(pts.size()), 2});
  for (size_t i = 0; i < pts.size(); ++i) {
    t.v[2 * i] = pts[i].x;
    t.v[2 * i + 1] = pts[i].y;
  }
  return t;
}

struct GenConfig {
  uint64_t seed = 1;
  int scenarios = 10;
  int horizon = 10;          // label steps T
  double dt_wp = 0.5;
  int sample_stride = 5;     // ticks between samples (0.5 s at 10 Hz)
  double max_time = 20.0;    // sim seconds per scenario
  int max_others = 9;
  double gnss_ahead = 25.0;  // route-arc meters to the goal point
  std::string kind = "mixed";  // scenario family: mixed | empty | quiet | hard_brake
  // When positive, keep only the N samples whose labels swing hardest
  // laterally (mid-turn states). Overfit smokes need visibly distinct
  // inputs; straight-road samples differ only in a handful of speed cells.
  int keep_top_lateral = 0;
};

inline Scenario scenario_for_kind(const std::string& kind, uint64_t seed) {
  if (kind == "mixed") return gen_scenario(seed);
  if (kind == "empty") return gen_empty_road(seed);
  if (kind == "quiet") return gen_quiet(seed);
  if (kind == "hard_brake") return gen_hard_brake(seed);
  throw DataError("unknown scenario kind: " + kind);
}

// Run seeded scenarios under the expert and harvest one sample per stride.
inline Dataset generate_dataset(const GenConfig& cfg) {
  if (cfg.scenarios <= 0) throw DataError("generate_dataset: zero scenarios");
  Dataset ds;
  for (int i = 0; i < cfg.scenarios; ++i) {
    Scenario sc = scenario_for_kind(cfg.kind, cfg.seed + static_cast<uint64_t>(i));
    int scenario_id = static_cast<int>(ds.scenarios.size());
    ds.scenarios.push_back(sc);
    World w = World::from_scenario(sc);
    int ego_idx = w.index_of(0);
    Polyline ego_line(w.routes[ego_idx].points);
    int tick = 0;
    while (w.time < cfg.max_time) {
      if (tick % cfg.sample_stride == 0) {
        const VehicleState& ego = w.vehicles[ego_idx];
        Sample s;
        s.scenario_id = scenario_id;
        s.time = w.time;
        s.vehicles = w.vehicles;
        s.ego_id = 0;
        s.behavior = behavior_label(w, ego_idx);
        double s_now = ego_line.project(ego.pos());
        Vec2 goal = ego_line.point_at(
            std::min(s_now + cfg.gnss_ahead, ego_line.length()));
        s.gnss_target = to_frame(goal, ego.pos(), ego.heading);
        // Candidate others: nearest first, capped.
        std::vector<std::pair<double, int>> order;
        for (const auto& v : w.vehicles)
          if (v.id != 0)
            order.push_back({(v.pos() - ego.pos()).norm(), v.id});
        std::sort(order.begin(), order.end());
        if (static_cast<int>(order.size()) > cfg.max_others)
          order.resize(static_cast<size_t>(cfg.max_others));
        s.ego_label = rollout_labels(w, 0, cfg.horizon, cfg.dt_wp);
        for (const auto& [d, oid] : order) {
          s.other_ids.push_back(oid);
          s.other_labels.push_back(rollout_labels(w, oid, cfg.horizon, cfg.dt_wp));
        }
        ds.samples.push_back(std::move(s));
      }
      step(w, expert_all(w));
      ++tick;
      if (route_progress(w, ego_idx, ego_line) >= 0.995) break;
    }
  }
  if (cfg.keep_top_lateral > 0 &&
      static_cast<int>(ds.samples.size()) > cfg.keep_top_lateral) {
    auto lateral = [](const Sample& s) {
      double m = 0.0;
      for (const Vec2& p : s.ego_label) m = std::max(m, std::abs(p.y));
      return m;
    };
    std::stable_sort(ds.samples.begin(), ds.samples.end(),
                     [&](const Sample& a, const Sample& b) {
                       return lateral(a) > lateral(b);
                     });
    ds.samples.resize(static_cast<size_t>(cfg.keep_top_lateral));
  }
  return ds;
}

}  // namespace coplan
