#pragma once

// Ground-truth rasterizer standing in for the perception backbone: renders
// world state into the map-view feature grid, hosts the segmentation head
// that carries the perception loss, and performs the differentiable rotated
// RoI crop per vehicle.

#include "coplan/nn.hpp"
#include "coplan/sim/world.hpp"
#include "coplan/tensor.hpp"

namespace coplan {

// Map-view grid: ego-frame, x forward in [-16, +48], y left in [-32, +32],
// one meter per cell by default.
struct GridSpec {
  int channels = 16;
  int height = 64;  // y axis
  int width = 64;   // x axis
  double res = 1.0;
  double x_min = -16.0;
  double y_min = -32.0;

  // fractional (row, col) grid coordinate of an ego-frame point
  std::array<double, 2> grid_coord(const Vec2& p) const {
    return {(p.y - y_min) / res - 0.5, (p.x - x_min) / res - 0.5};
  }
  Vec2 cell_center(int row, int col) const {
    return {x_min + (col + 0.5) * res, y_min + (row + 0.5) * res};
  }
};

enum FeatureChannel {
  kChRoad = 0,
  kChLaneLine = 1,
  kChUnavailable = 2,
  kChOccupancy = 3,
  kChVelX = 4,
  kChVelY = 5,
  kChHeadingSin = 6,
  kChHeadingCos = 7,
  kChEgo = 8,
  kChRoute = 9,
  kChStopZone = 10,
  // 11..15 reserved, zero
};

// Pose of a vehicle expressed in the ego frame.
struct RelPose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
};

inline RelPose rel_pose(const VehicleState& target, const VehicleState& ego) {
  Vec2 p = to_frame(target.pos(), ego.pos(), ego.heading);
  return {p.x, p.y, wrap_angle(target.heading - ego.heading)};
}

inline Tensor rasterize(const World& w, int ego_id, const GridSpec& spec = {}) {
  int ego_idx = w.index_of(ego_id);
  if (ego_idx < 0) throw SimError("rasterize: unknown ego id " + std::to_string(ego_id));
  const VehicleState& ego = w.vehicles[ego_idx];
  const int C = spec.channels, H = spec.height, W = spec.width;
  if (C < 11) throw ShapeError("rasterize: needs at least 11 channels");
  Tensor f({C, H, W});
  auto at = [&](int c, int r, int col) -> double& {
    return f.v[(static_cast<int64_t>(c) * H + r) * W + col];
  };

  // per-vehicle local frames, precomputed
  struct Footprint {
    Vec2 pos;
    double heading, hl, hw, speed;
    bool is_ego;
  };
  std::vector<Footprint> fps;
  for (const auto& v : w.vehicles)
    fps.push_back({v.pos(), v.heading, v.length / 2.0, v.width / 2.0, v.speed,
                   v.id == ego_id});

  std::optional<Polyline> route;
  if (w.routes.size() > static_cast<size_t>(ego_idx) &&
      w.routes[ego_idx].points.size() >= 2)
    route = Polyline(w.routes[ego_idx].points);

  for (int r = 0; r < H; ++r)
    for (int col = 0; col < W; ++col) {
      Vec2 p_ego = spec.cell_center(r, col);
      Vec2 p = from_frame(p_ego, ego.pos(), ego.heading);

      double min_center_dist = 1e300;
      double min_edge_dist = 1e300;
      for (const auto& lane : w.lanes) {
        double d = 1e300;
        for (size_t i = 0; i + 1 < lane.center.size(); ++i)
          d = std::min(d, point_segment_dist(p, lane.center[i], lane.center[i + 1]));
        min_center_dist = std::min(min_center_dist, d - lane.width / 2.0);
        min_edge_dist = std::min(min_edge_dist, std::abs(d - lane.width / 2.0));
      }
      bool road = min_center_dist <= 0.0;
      at(kChRoad, r, col) = road ? 1.0 : 0.0;
      at(kChLaneLine, r, col) = min_edge_dist < 0.3 ? 1.0 : 0.0;
      at(kChUnavailable, r, col) = road ? 0.0 : 1.0;

      for (const auto& fp : fps) {
        Vec2 local = to_frame(p, fp.pos, fp.heading);
        if (std::abs(local.x) > fp.hl || std::abs(local.y) > fp.hw) continue;
        if (fp.is_ego)
          at(kChEgo, r, col) = 1.0;
        else
          at(kChOccupancy, r, col) = 1.0;
        // Occupant velocity/heading in the ego frame, normalized by vmax.
        // Written for the ego's own footprint as well: without it the ego
        // speed would be unobservable and expert labels ambiguous.
        double rel_h = wrap_angle(fp.heading - ego.heading);
        at(kChVelX, r, col) = fp.speed * std::cos(rel_h) / kMaxSpeed;
        at(kChVelY, r, col) = fp.speed * std::sin(rel_h) / kMaxSpeed;
        at(kChHeadingSin, r, col) = std::sin(rel_h);
        at(kChHeadingCos, r, col) = std::cos(rel_h);
      }

      if (route && route->distance_to(p) < 2.0) at(kChRoute, r, col) = 1.0;
      for (const auto& zone : w.stop_zones)
        if (zone.active(w.time) && point_in_polygon(p, zone.polygon))
          at(kChStopZone, r, col) = 1.0;
    }
  return f;
}

// Ground-truth semantic masks (road, lane line, unavailable) for the seg loss.
inline Tensor seg_ground_truth(const Tensor& feature, const GridSpec& spec = {}) {
  const int H = spec.height, W = spec.width;
  Tensor gt({3, H, W});
  std::copy_n(feature.v.begin(), static_cast<int64_t>(3) * H * W, gt.v.begin());
  return gt;
}

// Simplified segmentation head: two 3x3 convolutions with a ReLU between,
// full-scale logits over the three semantic classes.
class SegHead {
 public:
  SegHead(ParamStore& ps, Rng& rng, int in_channels = 16, int hidden = 32)
      : in_channels_(in_channels) {
    w1_ = ps.uniform_fan_in("seg.conv1.w", {hidden, in_channels, 3, 3},
                            in_channels * 9, rng);
    b1_ = ps.zeros("seg.conv1.b", {hidden});
    w2_ = ps.uniform_fan_in("seg.conv2.w", {3, hidden, 3, 3}, hidden * 9, rng);
    b2_ = ps.zeros("seg.conv2.b", {3});
  }

  Var forward(const Var& f) const {
    return conv2d(relu(conv2d(f, w1_, b1_, 1, 1)), w2_, b2_, 1, 1);
  }

  static bool owns_param(const std::string& name) {
    return name.rfind("seg.", 0) == 0;
  }

 private:
  int in_channels_;
  Var w1_, b1_, w2_, b2_;
};

// Rotated RoI crop: 24x24 cells, forward-shifted so 3/4 of the crop lies
// ahead of the target vehicle.
struct CropSpec {
  int size = 24;
  double res = 1.0;
  double x_min = -6.0;
  double y_min = -12.0;
};

inline Var crop_rotated_roi(const Var& feature, const RelPose& pose,
                            const GridSpec& grid = {}, const CropSpec& crop = {}) {
  if (!std::isfinite(pose.x) || !std::isfinite(pose.y) || !std::isfinite(pose.heading))
    throw NumericError("crop_rotated_roi: non-finite pose");
  const int n = crop.size;
  std::vector<std::array<double, 2>> pts;
  pts.reserve(static_cast<size_t>(n) * n);
  Vec2 origin{pose.x, pose.y};
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      Vec2 local{crop.x_min + (c + 0.5) * crop.res, crop.y_min + (r + 0.5) * crop.res};
      Vec2 in_ego = from_frame(local, origin, pose.heading);
      pts.push_back(grid.grid_coord(in_ego));
    }
  Var flat = grid_sample(feature, pts);  // [C, n*n]
  return reshape(flat, {feature.shape()[0], n, n});
}

}  // namespace coplan
