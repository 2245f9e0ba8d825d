#pragma once

// Collision-aware trajectory tracker: disc-model collision check of the plan
// against predicted trajectories, a max-curvature preview point, and a pair
// of PID loops (lateral on heading error, longitudinal on speed error) with a
// force-stop path for risk or an active stop signal.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "coplan/sim/io.hpp"
#include "coplan/sim/world.hpp"
#include "coplan/tensor.hpp"

namespace coplan {

struct ControllerConfig {
  double margin = 0.5;        // added to the disc radii sum, meters
  int risk_horizon = 6;       // collision gate: first H waypoints only
  double kp_lat = 1.2;
  double ki_lat = 0.0;
  double kd_lat = 0.2;
  double kp_lon = 0.6;
  double ki_lon = 0.05;
  double kd_lon = 0.0;
  double integral_clamp = 5.0;
  double max_speed = 8.0;     // m/s
  double dt_wp = 0.5;         // waypoint spacing, seconds
  double dt = 0.1;            // control period, seconds
  bool collision_check_enabled = true;  // ablation switch
};

class Pid {
 public:
  Pid(double kp, double ki, double kd, double integral_clamp)
      : kp_(kp), ki_(ki), kd_(kd), clamp_(integral_clamp) {}

  double step(double error, double dt) {
    integral_ = std::clamp(integral_ + error * dt, -clamp_, clamp_);
    double deriv = has_prev_ ? (error - prev_) / dt : 0.0;
    prev_ = error;
    has_prev_ = true;
    return kp_ * error + ki_ * integral_ + kd_ * deriv;
  }

  void reset() {
    integral_ = 0.0;
    prev_ = 0.0;
    has_prev_ = false;
  }

  double integral() const { return integral_; }

 private:
  double kp_, ki_, kd_, clamp_;
  double integral_ = 0.0;
  double prev_ = 0.0;
  bool has_prev_ = false;
};

struct CollisionHit {
  bool risk = false;
  int vehicle = -1;  // index into the predictions list
  int step = -1;     // waypoint index of the first overlap
};

// Disc-model sweep over the first `risk_horizon` time-aligned waypoints.
// `plan` and every prediction must share one frame and one length T.
inline CollisionHit collision_check(const std::vector<Vec2>& plan,
                                    const std::vector<std::vector<Vec2>>& predictions,
                                    double r_ego, const std::vector<double>& radii,
                                    double margin, int risk_horizon) {
  if (predictions.size() != radii.size())
    throw DataError("collision_check: predictions/radii count mismatch");
  int horizon = std::min<int>(risk_horizon, static_cast<int>(plan.size()));
  CollisionHit hit;
  for (size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].size() != plan.size())
      throw DataError("collision_check: prediction length mismatch");
    double thresh = r_ego + radii[i] + margin;
    for (int t = 0; t < horizon; ++t) {
      if ((plan[static_cast<size_t>(t)] - predictions[i][static_cast<size_t>(t)])
              .norm() < thresh) {
        hit.risk = true;
        hit.vehicle = static_cast<int>(i);
        hit.step = t;
        return hit;
      }
    }
  }
  return hit;
}

// Menger curvature at the interior point b of the triple (a, b, c):
// kappa = 4 * Area / (|ab| * |bc| * |ca|); degenerate sides give 0.
inline double menger_curvature(Vec2 a, Vec2 b, Vec2 c) {
  double ab = (b - a).norm();
  double bc = (c - b).norm();
  double ca = (a - c).norm();
  if (ab < 1e-6 || bc < 1e-6 || ca < 1e-6) return 0.0;
  double twice_area = std::abs((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x));
  return 2.0 * twice_area / (ab * bc * ca);
}

// Waypoint of maximal curvature; ties go to the earliest index >= 2 so the
// preview never sits on the first waypoint. Fewer than 3 points: last point.
inline int preview_index(const std::vector<Vec2>& trajectory) {
  int n = static_cast<int>(trajectory.size());
  if (n < 3) return n - 1;
  int best = 2;
  double best_kappa = 0.0;
  for (int t = 1; t + 1 < n; ++t) {
    double kappa = menger_curvature(trajectory[static_cast<size_t>(t - 1)],
                                    trajectory[static_cast<size_t>(t)],
                                    trajectory[static_cast<size_t>(t + 1)]);
    int idx = std::max(t, 2);
    if (kappa > best_kappa + 1e-12) {
      best_kappa = kappa;
      best = idx;
    }
  }
  return best;
}

inline Vec2 preview_point(const std::vector<Vec2>& trajectory) {
  if (trajectory.empty()) throw DataError("preview_point: empty trajectory");
  return trajectory[static_cast<size_t>(preview_index(trajectory))];
}

// One control tick. All trajectories live in the current ego frame (ego at
// the origin, heading +x). Risk or stop_flag forces (steer 0, throttle 0,
// brake 1) and bypasses both PIDs.
inline Controls control_step(const std::vector<Vec2>& plan,
                             const std::vector<std::vector<Vec2>>& predictions,
                             double r_ego, const std::vector<double>& radii,
                             double speed, bool stop_flag,
                             Pid& lateral, Pid& longitudinal,
                             const ControllerConfig& cfg) {
  if (!std::isfinite(speed)) throw NumericError("control_step: non-finite speed");
  for (const Vec2& p : plan)
    if (!std::isfinite(p.x) || !std::isfinite(p.y))
      throw NumericError("control_step: non-finite plan waypoint");
  for (const auto& traj : predictions)
    for (const Vec2& p : traj)
      if (!std::isfinite(p.x) || !std::isfinite(p.y))
        throw NumericError("control_step: non-finite predicted waypoint");
  if (plan.empty()) throw DataError("control_step: empty plan");

  bool risk = false;
  if (cfg.collision_check_enabled)
    risk = collision_check(plan, predictions, r_ego, radii, cfg.margin,
                           cfg.risk_horizon).risk;
  if (stop_flag || risk) return Controls{0.0, 0.0, 1.0};

  Vec2 preview = preview_point(plan);
  double heading_err = std::atan2(preview.y, preview.x);
  double steer = std::clamp(lateral.step(heading_err, cfg.dt), -1.0, 1.0);

  double horizon_s = static_cast<double>(plan.size()) * cfg.dt_wp;
  double target = std::min(cfg.max_speed, plan.back().norm() / horizon_s);
  double accel = longitudinal.step(target - speed, cfg.dt);
  Controls cmd;
  cmd.steer = steer;
  if (accel >= 0.0)
    cmd.throttle = std::clamp(accel, 0.0, 1.0);
  else
    cmd.brake = std::clamp(-accel, 0.0, 1.0);
  return cmd;
}

}  // namespace coplan
