#pragma once

// Trajectory decoding from fused crop features: a shared CNN embedder,
// behavior-branched GRU decoders plus a target-conditioned refinement GRU
// for the ego, and one shared GRU decoder for other vehicles.  Decoders
// emit per-step (dx, dy) deltas that are prefix-summed into waypoints.

#include "coplan/nn.hpp"
#include "coplan/sim/world.hpp"

namespace coplan {

constexpr int kNumBehaviors = 6;
constexpr int kFeatureDim = 512;
constexpr double kGnssNorm = 64.0;  // meters, map half-extent

struct WaypointConfig {
  int in_channels = 16;
  int crop_size = 24;
  int gru_hidden = 128;
  int horizon = 10;      // T waypoints
  double dt_wp = 0.5;    // seconds per step
};

namespace detail_wp {

inline GruParams make_gru(ParamStore& ps, Rng& rng, const std::string& p,
                          int in, int hidden) {
  GruParams g;
  g.wz = ps.uniform_fan_in(p + ".wz", {in, hidden}, in, rng);
  g.uz = ps.uniform_fan_in(p + ".uz", {hidden, hidden}, hidden, rng);
  g.bz = ps.zeros(p + ".bz", {hidden});
  g.wr = ps.uniform_fan_in(p + ".wr", {in, hidden}, in, rng);
  g.ur = ps.uniform_fan_in(p + ".ur", {hidden, hidden}, hidden, rng);
  g.br = ps.zeros(p + ".br", {hidden});
  g.wh = ps.uniform_fan_in(p + ".wh", {in, hidden}, in, rng);
  g.uh = ps.uniform_fan_in(p + ".uh", {hidden, hidden}, hidden, rng);
  g.bh = ps.zeros(p + ".bh", {hidden});
  return g;
}

}  // namespace detail_wp

// deltas (each [2]) -> waypoints [T, 2] via prefix sum from the origin.
inline Var accumulate_deltas(const std::vector<Var>& deltas,
                             Vec2 origin = {0.0, 0.0}) {
  if (deltas.empty()) throw ShapeError("accumulate: no deltas");
  Var org = Var::leaf(Tensor({2}, {origin.x, origin.y}), false);
  std::vector<Var> points;
  Var acc = org;
  for (const Var& d : deltas) {
    if (d.shape() != Shape{2})
      throw ShapeError("accumulate: delta shape " + shape_str(d.shape()));
    acc = add(acc, d);
    points.push_back(acc);
  }
  return stack_rows(points);
}

class Embedder {
 public:
  Embedder(ParamStore& ps, Rng& rng, WaypointConfig cfg = {}) : cfg_(cfg) {
    int c = cfg_.in_channels;
    conv1_w_ = ps.uniform_fan_in("embed.conv1.w", {32, c, 3, 3}, c * 9, rng);
    conv1_b_ = ps.zeros("embed.conv1.b", {32});
    conv2_w_ = ps.uniform_fan_in("embed.conv2.w", {64, 32, 3, 3}, 32 * 9, rng);
    conv2_b_ = ps.zeros("embed.conv2.b", {64});
    int side = cfg_.crop_size;          // 24 -> 12 -> 6 with stride-2 pad-1
    side = (side + 2 - 3) / 2 + 1;
    side = (side + 2 - 3) / 2 + 1;
    flat_ = 64 * side * side;
    fc_w_ = ps.uniform_fan_in("embed.fc.w", {flat_, kFeatureDim}, flat_, rng);
    fc_b_ = ps.zeros("embed.fc.b", {kFeatureDim});
  }

  // F̂ [C, S, S] -> [512]
  Var forward(const Var& fhat) const {
    Var h1 = relu(conv2d(fhat, conv1_w_, conv1_b_, 2, 1));
    Var h2 = relu(conv2d(h1, conv2_w_, conv2_b_, 2, 1));
    return linear(reshape(h2, {flat_}), fc_w_, fc_b_);
  }

 private:
  WaypointConfig cfg_;
  int flat_ = 0;
  Var conv1_w_, conv1_b_, conv2_w_, conv2_b_, fc_w_, fc_b_;
};

// One GRU decoder: hidden seeded from the 512 feature, input at each step
// is the previous emitted delta, zero-initialized head so it starts inert.
class GruDecoder {
 public:
  GruDecoder(ParamStore& ps, Rng& rng, const std::string& prefix, int hidden)
      : hidden_(hidden) {
    init_w_ = ps.uniform_fan_in(prefix + ".init.w", {kFeatureDim, hidden},
                                kFeatureDim, rng);
    init_b_ = ps.zeros(prefix + ".init.b", {hidden});
    gru_ = detail_wp::make_gru(ps, rng, prefix + ".gru", 2, hidden);
    head_w_ = ps.zeros(prefix + ".head.w", {hidden, 2});
    head_b_ = ps.zeros(prefix + ".head.b", {2});
  }

  std::vector<Var> decode(const Var& v512, int steps) const {
    Var h = linear(v512, init_w_, init_b_);
    Var prev = Var::leaf(Tensor({2}), false);
    std::vector<Var> deltas;
    deltas.reserve(steps);
    for (int t = 0; t < steps; ++t) {
      h = gru_cell(prev, h, gru_);
      Var d = linear(h, head_w_, head_b_);
      deltas.push_back(d);
      prev = d;
    }
    return deltas;
  }

 private:
  int hidden_;
  Var init_w_, init_b_;
  GruParams gru_;
  Var head_w_, head_b_;
};

// Six behavior branches for the ego plan.
class EgoDecoder {
 public:
  EgoDecoder(ParamStore& ps, Rng& rng, WaypointConfig cfg = {}) : cfg_(cfg) {
    branches_.reserve(kNumBehaviors);
    for (int b = 0; b < kNumBehaviors; ++b)
      branches_.emplace_back(ps, rng, "ego.branch" + std::to_string(b),
                             cfg.gru_hidden);
  }

  std::vector<Var> decode(const Var& v512, int behavior) const {
    if (behavior < 0 || behavior >= kNumBehaviors)
      throw ShapeError("ego decoder: behavior index " +
                       std::to_string(behavior) + " out of range");
    return branches_[static_cast<size_t>(behavior)].decode(v512, cfg_.horizon);
  }

 private:
  WaypointConfig cfg_;
  std::vector<GruDecoder> branches_;
};

// Residual GNSS-conditioned refinement: a GRU walks the coarse deltas, an
// MLP (zero-initialized last layer) emits per-step corrections.
class Refiner {
 public:
  Refiner(ParamStore& ps, Rng& rng, WaypointConfig cfg = {}) : cfg_(cfg) {
    int h = cfg.gru_hidden;
    int in = 2 + 2 * cfg.horizon;  // normalized target + coarse waypoints
    init_w_ = ps.uniform_fan_in("refine.init.w", {in, h}, in, rng);
    init_b_ = ps.zeros("refine.init.b", {h});
    gru_ = detail_wp::make_gru(ps, rng, "refine.gru", 2, h);
    mlp1_w_ = ps.uniform_fan_in("refine.mlp1.w", {h, 64}, h, rng);
    mlp1_b_ = ps.zeros("refine.mlp1.b", {64});
    mlp2_w_ = ps.zeros("refine.mlp2.w", {64, 2});
    mlp2_b_ = ps.zeros("refine.mlp2.b", {2});
  }

  std::vector<Var> refine(const std::vector<Var>& deltas, Vec2 gnss) const {
    if (static_cast<int>(deltas.size()) != cfg_.horizon)
      throw ShapeError("refiner: expected " + std::to_string(cfg_.horizon) +
                       " deltas, got " + std::to_string(deltas.size()));
    if (!std::isfinite(gnss.x) || !std::isfinite(gnss.y))
      throw NumericError("refiner: non-finite gnss target");
    Var target = Var::leaf(
        Tensor({2}, {gnss.x / kGnssNorm, gnss.y / kGnssNorm}), false);
    Var coarse = reshape(accumulate_deltas(deltas), {2 * cfg_.horizon});
    Var h = linear(concat_vec({target, coarse}), init_w_, init_b_);
    std::vector<Var> out;
    out.reserve(deltas.size());
    for (const Var& d : deltas) {
      h = gru_cell(d, h, gru_);
      Var corr = linear(relu(linear(h, mlp1_w_, mlp1_b_)), mlp2_w_, mlp2_b_);
      out.push_back(add(d, corr));
    }
    return out;
  }

 private:
  WaypointConfig cfg_;
  Var init_w_, init_b_;
  GruParams gru_;
  Var mlp1_w_, mlp1_b_, mlp2_w_, mlp2_b_;
};

// Single shared decoder for every other vehicle.
class OtherDecoder {
 public:
  OtherDecoder(ParamStore& ps, Rng& rng, WaypointConfig cfg = {})
      : cfg_(cfg), dec_(ps, rng, "other", cfg.gru_hidden) {}

  std::vector<Var> decode(const Var& v512) const {
    return dec_.decode(v512, cfg_.horizon);
  }

 private:
  WaypointConfig cfg_;
  GruDecoder dec_;
};

}  // namespace coplan
