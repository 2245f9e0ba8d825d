#pragma once

// Parametric scenario generator: straight roads, 4-way intersections, and
// 2-lane segments with 0-9 background vehicles. A seed fully determines the
// layout and traffic.

#include <cmath>

#include "coplan/nn.hpp"
#include "coplan/sim/world.hpp"

namespace coplan {

namespace detail_gen {

inline std::vector<Vec2> sample_line(Vec2 a, Vec2 b, double step = 1.0) {
  std::vector<Vec2> out;
  double len = (b - a).norm();
  int n = std::max(2, static_cast<int>(std::ceil(len / step)) + 1);
  for (int i = 0; i < n; ++i) {
    double t = static_cast<double>(i) / (n - 1);
    out.push_back(a + (b - a) * t);
  }
  return out;
}

// Quarter arc from `from` tangent heading h0 turning by `turn` (+-pi/2).
inline std::vector<Vec2> sample_arc(Vec2 from, double h0, double turn,
                                    double radius, double step = 1.0) {
  std::vector<Vec2> out;
  double sgn = turn > 0 ? 1.0 : -1.0;
  Vec2 center{from.x - sgn * radius * std::sin(h0), from.y + sgn * radius * std::cos(h0)};
  double arc_len = radius * std::abs(turn);
  int n = std::max(2, static_cast<int>(std::ceil(arc_len / step)) + 1);
  double a0 = std::atan2(from.y - center.y, from.x - center.x);
  for (int i = 1; i < n; ++i) {
    double a = a0 + turn * static_cast<double>(i) / (n - 1);
    out.push_back({center.x + radius * std::cos(a), center.y + radius * std::sin(a)});
  }
  return out;
}

inline Route make_route(std::vector<Vec2> pts, int lane_id = 0) {
  Route r;
  r.points = std::move(pts);
  r.lane_ids.assign(r.points.size(), lane_id);
  return r;
}

inline void append(Route& r, const std::vector<Vec2>& pts, int lane_id) {
  for (const Vec2& p : pts) {
    if (!r.points.empty() && (p - r.points.back()).norm() < 1e-9) continue;
    r.points.push_back(p);
    r.lane_ids.push_back(lane_id);
  }
}

// Background vehicles are only placed if their footprint discs stay clear.
inline bool placement_clear(const Scenario& sc, const VehicleState& v) {
  for (const auto& o : sc.initial_states) {
    double min_d = v.disc_radius() + o.disc_radius();
    if ((v.pos() - o.pos()).norm() < min_d) return false;
  }
  return true;
}

}  // namespace detail_gen

// Straight 2-lane road along +x. Ego drives lane 0; traffic on both lanes.
inline Scenario gen_straight(uint64_t seed, int n_traffic) {
  using namespace detail_gen;
  Rng rng(seed * 2654435761ULL + 17);
  Scenario sc;
  sc.kind = "straight";
  sc.seed = seed;
  double road_len = 200.0 + uniform(rng, 0.0, 60.0);
  for (int l = 0; l < 2; ++l) {
    Lane lane;
    lane.id = l;
    lane.width = 3.5;
    lane.center = sample_line({-20.0, l * 3.5}, {road_len, l * 3.5});
    sc.lanes.push_back(lane);
  }
  VehicleState ego;
  ego.id = 0;
  ego.x = 0.0;
  ego.y = 0.0;
  ego.speed = uniform(rng, 0.0, 6.0);
  sc.initial_states.push_back(ego);
  sc.routes.push_back(make_route(sample_line({0.0, 0.0}, {road_len, 0.0}), 0));
  sc.ego_targets = {{road_len * 0.5, 0.0}, {road_len, 0.0}};

  for (int k = 0; k < n_traffic; ++k) {
    VehicleState v;
    v.id = k + 1;
    int lane = uniform_int(rng, 0, 1);
    v.x = uniform(rng, 15.0, road_len - 40.0);
    v.y = lane * 3.5;
    v.speed = uniform(rng, 2.0, 8.0);
    if (!placement_clear(sc, v)) continue;
    sc.initial_states.push_back(v);
    sc.routes.push_back(make_route(sample_line({v.x, v.y}, {road_len + 60.0, v.y}), lane));
  }
  return sc;
}

// 4-way intersection, right-hand traffic; ego approaches from the west and
// goes straight, left, or right. Optional signalized stop zone.
inline Scenario gen_intersection(uint64_t seed, int n_traffic, int ego_turn /* -1,0,1 */,
                                 bool with_signal) {
  using namespace detail_gen;
  Rng rng(seed * 1099511628211ULL + 3);
  Scenario sc;
  sc.kind = "intersection";
  sc.seed = seed;
  double arm = 80.0;
  double off = 1.75;  // lane center offset from road axis
  int lane_id = 0;
  auto lane_between = [&](Vec2 a, Vec2 b) {
    Lane lane;
    lane.id = lane_id++;
    lane.width = 3.5;
    lane.center = sample_line(a, b);
    sc.lanes.push_back(lane);
  };
  lane_between({-arm, -off}, {arm, -off});   // eastbound
  lane_between({arm, off}, {-arm, off});     // westbound
  lane_between({off, -arm}, {off, arm});     // northbound
  lane_between({-off, arm}, {-off, -arm});   // southbound

  VehicleState ego;
  ego.id = 0;
  ego.x = -arm + 20.0;
  ego.y = -off;
  ego.speed = uniform(rng, 0.0, 6.0);
  sc.initial_states.push_back(ego);

  Route ego_route;
  append(ego_route, sample_line({ego.x, -off}, {-8.0, -off}), 0);
  if (ego_turn == 0) {
    append(ego_route, sample_line({-8.0, -off}, {arm, -off}), 0);
    sc.ego_targets = {{arm * 0.5, -off}, {arm, -off}};
  } else if (ego_turn > 0) {  // left onto northbound
    append(ego_route, sample_arc({-8.0, -off}, 0.0, M_PI / 2.0, 9.75), 2);
    append(ego_route, sample_line({off, 8.0}, {off, arm}), 2);
    sc.ego_targets = {{off, arm * 0.5}, {off, arm}};
  } else {  // right onto southbound
    append(ego_route, sample_arc({-8.0, -off}, 0.0, -M_PI / 2.0, 6.25), 3);
    append(ego_route, sample_line({-off, -8.0}, {-off, -arm}), 3);
    sc.ego_targets = {{-off, -arm * 0.5}, {-off, -arm}};
  }
  sc.routes.push_back(ego_route);

  if (with_signal) {
    StopZone zone;
    zone.polygon = {{-10.0, -3.5}, {-5.0, -3.5}, {-5.0, 0.0}, {-10.0, 0.0}};
    zone.period = 16.0;
    zone.red_fraction = 0.5;
    zone.phase = uniform(rng, 0.0, 16.0);
    sc.stop_zones.push_back(zone);
  }

  struct Approach { Vec2 a, b; int lane; };
  std::vector<Approach> approaches = {
      {{-arm, -off}, {arm, -off}, 0},
      {{arm, off}, {-arm, off}, 1},
      {{off, -arm}, {off, arm}, 2},
      {{-off, arm}, {-off, -arm}, 3},
  };
  for (int k = 0; k < n_traffic; ++k) {
    const Approach& ap = approaches[uniform_int(rng, 0, 3)];
    Vec2 dir = ap.b - ap.a;
    dir = dir * (1.0 / dir.norm());
    double s = uniform(rng, 5.0, arm + 30.0);
    VehicleState v;
    v.id = k + 1;
    v.x = ap.a.x + dir.x * s;
    v.y = ap.a.y + dir.y * s;
    v.heading = std::atan2(dir.y, dir.x);
    v.speed = uniform(rng, 2.0, 8.0);
    if (!placement_clear(sc, v)) continue;
    sc.initial_states.push_back(v);
    sc.routes.push_back(make_route(sample_line({v.x, v.y}, ap.b + dir * 60.0), ap.lane));
  }
  return sc;
}

// Straight 2-lane road where the ego changes lane after `change_at` meters.
inline Scenario gen_lane_change(uint64_t seed, int n_traffic, bool to_left) {
  using namespace detail_gen;
  Rng rng(seed * 6364136223846793005ULL + 7);
  Scenario sc;
  sc.kind = to_left ? "lane_change_left" : "lane_change_right";
  sc.seed = seed;
  double road_len = 220.0;
  double y0 = to_left ? 0.0 : 3.5;
  double y1 = to_left ? 3.5 : 0.0;
  for (int l = 0; l < 2; ++l) {
    Lane lane;
    lane.id = l;
    lane.width = 3.5;
    lane.center = sample_line({-20.0, l * 3.5}, {road_len, l * 3.5});
    sc.lanes.push_back(lane);
  }
  VehicleState ego;
  ego.id = 0;
  ego.x = 0.0;
  ego.y = y0;
  ego.speed = uniform(rng, 2.0, 6.0);
  sc.initial_states.push_back(ego);

  double change_at = uniform(rng, 15.0, 35.0);
  double blend_len = 25.0;
  Route ego_route;
  int lane0 = to_left ? 0 : 1;
  int lane1 = to_left ? 1 : 0;
  append(ego_route, sample_line({0.0, y0}, {change_at, y0}), lane0);
  {  // smoothstep lateral blend
    std::vector<Vec2> blend;
    int n = static_cast<int>(blend_len);
    for (int i = 1; i <= n; ++i) {
      double t = static_cast<double>(i) / n;
      double sstep = t * t * (3.0 - 2.0 * t);
      blend.push_back({change_at + blend_len * t, y0 + (y1 - y0) * sstep});
    }
    append(ego_route, blend, lane1);
  }
  append(ego_route, sample_line({change_at + blend_len, y1}, {road_len, y1}), lane1);
  sc.routes.push_back(ego_route);
  sc.ego_targets = {{change_at + blend_len + 20.0, y1}, {road_len, y1}};

  for (int k = 0; k < n_traffic; ++k) {
    VehicleState v;
    v.id = k + 1;
    int lane = uniform_int(rng, 0, 1);
    v.x = uniform(rng, 60.0, road_len - 30.0);
    v.y = lane * 3.5;
    v.speed = uniform(rng, 3.0, 8.0);
    if (!placement_clear(sc, v)) continue;
    sc.initial_states.push_back(v);
    sc.routes.push_back(make_route(sample_line({v.x, v.y}, {road_len + 60.0, v.y}), lane));
  }
  return sc;
}

// Seed-indexed mixed suite covering all scenario kinds.
inline Scenario gen_scenario(uint64_t seed) {
  Rng rng(seed);
  int n_traffic = uniform_int(rng, 0, 9);
  switch (seed % 6) {
    case 0: return gen_straight(seed, n_traffic);
    case 1: return gen_intersection(seed, n_traffic, 0, seed % 2 == 0);
    case 2: return gen_intersection(seed, n_traffic, 1, true);
    case 3: return gen_intersection(seed, n_traffic, -1, false);
    case 4: return gen_lane_change(seed, n_traffic, true);
    default: return gen_lane_change(seed, n_traffic, false);
  }
}

// Mixed-geometry suite with the traffic stripped out: every scenario kind,
// ego alone on the road. Used where per-sample cost must stay minimal.
inline Scenario gen_quiet(uint64_t seed) {
  switch (seed % 6) {
    case 0: return gen_straight(seed, 0);
    case 1: return gen_intersection(seed, 0, 0, seed % 2 == 0);
    case 2: return gen_intersection(seed, 0, 1, true);
    case 3: return gen_intersection(seed, 0, -1, false);
    case 4: return gen_lane_change(seed, 0, true);
    default: return gen_lane_change(seed, 0, false);
  }
}

// Single-lane straight road, no traffic; used by the empty-road eval suite.
inline Scenario gen_empty_road(uint64_t seed) {
  Scenario sc = gen_straight(seed, 0);
  sc.kind = "empty_road";
  double route_len = 60.0 + static_cast<double>(seed % 5) * 15.0;
  sc.routes[0] = detail_gen::make_route(
      detail_gen::sample_line({0.0, 0.0}, {route_len, 0.0}), 0);
  sc.ego_targets = {{route_len * 0.5, 0.0}, {route_len, 0.0}};
  return sc;
}

// Ego behind a lead vehicle that brakes hard at a scripted time.
inline Scenario gen_hard_brake(uint64_t seed) {
  using namespace detail_gen;
  Rng rng(seed * 31 + 11);
  Scenario sc;
  sc.kind = "hard_brake";
  sc.seed = seed;
  double road_len = 260.0;
  Lane lane;
  lane.id = 0;
  lane.width = 3.5;
  lane.center = sample_line({-20.0, 0.0}, {road_len, 0.0});
  sc.lanes.push_back(lane);

  VehicleState ego;
  ego.id = 0;
  ego.speed = 8.0;
  sc.initial_states.push_back(ego);
  sc.routes.push_back(make_route(sample_line({0.0, 0.0}, {road_len, 0.0}), 0));
  sc.ego_targets = {{road_len * 0.5, 0.0}, {road_len, 0.0}};

  VehicleState leadv;
  leadv.id = 1;
  leadv.x = 18.0 + uniform(rng, 0.0, 6.0);
  leadv.speed = 8.0;
  sc.initial_states.push_back(leadv);
  sc.routes.push_back(make_route(sample_line({leadv.x, 0.0}, {road_len + 60.0, 0.0}), 0));

  SpeedScript script;
  script.vehicle_id = 1;
  script.brake_time = 1.0 + uniform(rng, 0.0, 1.5);
  script.decel = 8.0;
  sc.scripts.push_back(script);
  return sc;
}

}  // namespace coplan
