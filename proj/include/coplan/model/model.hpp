#pragma once

// Full joint planning-and-prediction model: per-vehicle rotated crops from
// the ego map-view feature, shared local transformer, cross-vehicle global
// transformer, and GRU waypoint decoders.  Ablation variants drop the
// local and/or global stages (and their parameters) entirely.

#include <optional>

#include "coplan/model/global_transformer.hpp"
#include "coplan/model/local_transformer.hpp"
#include "coplan/model/waypoint.hpp"
#include "coplan/raster.hpp"
#include "coplan/sim/io.hpp"

namespace coplan {

enum class Variant { kFull = 0, kNoLocal = 1, kNoGlobal = 2, kNoBoth = 3 };

inline Variant variant_from_string(const std::string& s) {
  if (s == "full") return Variant::kFull;
  if (s == "I" || s == "i" || s == "no-local") return Variant::kNoLocal;
  if (s == "II" || s == "ii" || s == "no-global") return Variant::kNoGlobal;
  if (s == "III" || s == "iii" || s == "no-both") return Variant::kNoBoth;
  throw DataError("unknown ablation variant '" + s + "'");
}

inline std::string variant_to_string(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kNoLocal: return "I";
    case Variant::kNoGlobal: return "II";
    case Variant::kNoBoth: return "III";
  }
  throw DataError("bad variant value");
}

struct ModelConfig {
  GridSpec grid{};
  CropSpec crop{};
  int local_layers = 6;
  int local_heads = 8;
  int d_model = 64;
  int global_layers = 6;
  int global_heads = 8;
  int d_g = 256;
  WaypointConfig wp{};
  Variant variant = Variant::kFull;
  uint64_t init_seed = 1;

  bool has_local() const {
    return variant == Variant::kFull || variant == Variant::kNoGlobal;
  }
  bool has_global() const {
    return variant == Variant::kFull || variant == Variant::kNoLocal;
  }
};

// One frame of model input, detached from the simulator.
struct FrameInput {
  Tensor feature;               // ego-frame map-view raster [C, H, W]
  int behavior = 0;
  Vec2 gnss_target{0.0, 0.0};   // ego frame, meters
  std::vector<RelPose> others;  // candidate other vehicles, ego frame
  std::vector<int> other_ids;
};

struct ModelOutput {
  Var plan;                      // [T, 2], ego frame
  std::vector<Var> predictions;  // [T, 2] each, in that vehicle's own frame
  std::vector<int> selected;     // indices into FrameInput::others
  AttentionRecord ego_attention; // ego's local-transformer attention
};

class JointModel {
 public:
  explicit JointModel(ModelConfig cfg = {}) : cfg_(std::move(cfg)) {
    Rng rng(cfg_.init_seed);
    seg_.emplace(params_, rng, cfg_.grid.channels);
    if (cfg_.has_local()) {
      LocalConfig lc;
      lc.in_channels = cfg_.grid.channels;
      lc.crop_size = cfg_.crop.size;
      lc.enc = {cfg_.local_layers, cfg_.local_heads, cfg_.d_model, 4};
      local_.emplace(params_, rng, lc);
    }
    if (cfg_.has_global()) {
      GlobalConfig gc;
      gc.in_channels = cfg_.grid.channels;
      gc.crop_size = cfg_.crop.size;
      gc.enc = {cfg_.global_layers, cfg_.global_heads, cfg_.d_g, 4};
      global_.emplace(params_, rng, gc);
    }
    WaypointConfig wc = cfg_.wp;
    wc.in_channels = cfg_.grid.channels;
    wc.crop_size = cfg_.crop.size;
    embed_.emplace(params_, rng, wc);
    ego_.emplace(params_, rng, wc);
    refine_.emplace(params_, rng, wc);
    other_.emplace(params_, rng, wc);
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const LocalTransformer* local() const { return local_ ? &*local_ : nullptr; }
  const GlobalTransformer* global() const { return global_ ? &*global_ : nullptr; }

  Var seg_logits(const Var& feature) const { return seg_->forward(feature); }

  // Core pass from pre-cut crops (crops[0] = ego).  Exposed so tests can
  // probe plan sensitivity to another vehicle's crop directly.
  ModelOutput forward_from_crops(const std::vector<Var>& crops, int behavior,
                                 Vec2 gnss_target,
                                 bool want_attention = false) const {
    if (crops.empty()) throw ShapeError("model: no crops");
    ModelOutput out;
    std::vector<Var> feats = crops;
    if (local_) {
      for (size_t i = 0; i < feats.size(); ++i)
        feats[i] = local_->forward(
            feats[i], (want_attention && i == 0) ? &out.ego_attention : nullptr);
    }
    if (global_) feats = global_->forward(feats);
    Var ego_v = embed_->forward(feats[0]);
    std::vector<Var> deltas = ego_->decode(ego_v, behavior);
    deltas = refine_->refine(deltas, gnss_target);
    out.plan = accumulate_deltas(deltas);
    for (size_t i = 1; i < feats.size(); ++i) {
      Var v = embed_->forward(feats[i]);
      out.predictions.push_back(accumulate_deltas(other_->decode(v)));
    }
    return out;
  }

  // Full pass from a frame: crop each selected vehicle out of the ego
  // raster, then run the crop pipeline.  In training mode the other-vehicle
  // subset is drawn from `rng` (required); inference keeps the nearest 9.
  ModelOutput forward(const FrameInput& in, AssembleMode mode,
                      Rng* rng = nullptr, bool want_attention = false) const {
    if (in.others.size() != in.other_ids.size())
      throw ShapeError("model: others/ids size mismatch");
    std::vector<double> dists(in.others.size());
    for (size_t i = 0; i < in.others.size(); ++i)
      dists[i] = std::hypot(in.others[i].x, in.others[i].y);
    std::vector<int> sel = select_others(dists, in.other_ids, mode, rng);
    Var feature = Var::leaf(in.feature, false);
    std::vector<Var> crops;
    crops.push_back(crop_rotated_roi(feature, RelPose{}, cfg_.grid, cfg_.crop));
    for (int i : sel)
      crops.push_back(
          crop_rotated_roi(feature, in.others[static_cast<size_t>(i)],
                           cfg_.grid, cfg_.crop));
    ModelOutput out =
        forward_from_crops(crops, in.behavior, in.gnss_target, want_attention);
    out.selected = std::move(sel);
    return out;
  }

 private:
  ModelConfig cfg_;
  ParamStore params_;
  std::optional<SegHead> seg_;
  std::optional<LocalTransformer> local_;
  std::optional<GlobalTransformer> global_;
  std::optional<Embedder> embed_;
  std::optional<EgoDecoder> ego_;
  std::optional<Refiner> refine_;
  std::optional<OtherDecoder> other_;
};

}  // namespace coplan
