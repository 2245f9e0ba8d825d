#pragma once

// Per-vehicle transformer over a 6x6 token grid cut from the rotated
// map-view crop.  Patchify -> pre-norm encoder -> zero-initialized
// residual rebuild back onto the crop.

#include "coplan/model/transformer.hpp"
#include "coplan/raster.hpp"

namespace coplan {

struct LocalConfig {
  int in_channels = 16;
  int crop_size = 24;
  int token_grid = 6;  // tokens per side, 36 total
  EncoderConfig enc{6, 8, 64, 4};
};

class LocalTransformer {
 public:
  LocalTransformer(ParamStore& ps, Rng& rng, LocalConfig cfg = {})
      : cfg_(cfg), enc_(ps, rng, "local.enc", cfg.enc) {
    if (cfg_.crop_size % cfg_.token_grid != 0)
      throw ShapeError("local transformer: crop size not divisible by token grid");
    int p = patch();
    int d = cfg_.enc.d_model;
    int c = cfg_.in_channels;
    patch_w_ = ps.uniform_fan_in("local.patch.w", {d, c, p, p}, c * p * p, rng);
    patch_b_ = ps.zeros("local.patch.b", {d});
    pos_ = ps.uniform_fan_in("local.pos", {tokens(), d}, d, rng);
    // Rebuild path starts as the identity map on the crop.
    rebuild_w_ = ps.zeros("local.rebuild.w", {c, d, 1, 1});
    rebuild_b_ = ps.zeros("local.rebuild.b", {c});
  }

  const LocalConfig& config() const { return cfg_; }
  int tokens() const { return cfg_.token_grid * cfg_.token_grid; }
  int patch() const { return cfg_.crop_size / cfg_.token_grid; }

  // crop [C, S, S] -> tokens [36, d_model] with learned positions added.
  Var patchify(const Var& crop) const {
    check_crop(crop);
    Var z = conv2d(crop, patch_w_, patch_b_, patch());  // [d, 6, 6]
    int d = cfg_.enc.d_model;
    Var flat = reshape(z, {d, tokens()});
    return add(transpose(flat), pos_);
  }

  Var encode(const Var& tokens_in, AttentionRecord* record = nullptr) const {
    return enc_.forward(tokens_in, nullptr, record);
  }

  // tokens [36, d] -> residual correction added back onto the crop.
  Var rebuild(const Var& tokens_out, const Var& crop) const {
    check_crop(crop);
    int d = cfg_.enc.d_model;
    int g = cfg_.token_grid;
    Var grid = reshape(transpose(tokens_out), {d, g, g});
    Var corr = conv2d(grid, rebuild_w_, rebuild_b_);           // [C, 6, 6]
    Var up = upsample_bilinear(corr, cfg_.crop_size, cfg_.crop_size);
    return add(crop, up);
  }

  // Full pass: crop [C, S, S] -> refined crop, same shape.
  Var forward(const Var& crop, AttentionRecord* record = nullptr) const {
    return rebuild(encode(patchify(crop), record), crop);
  }

 private:
  void check_crop(const Var& crop) const {
    const Shape& s = crop.shape();
    if (s.size() != 3 || s[0] != cfg_.in_channels || s[1] != cfg_.crop_size ||
        s[2] != cfg_.crop_size)
      throw ShapeError("local transformer: expected crop [" +
                       std::to_string(cfg_.in_channels) + "," +
                       std::to_string(cfg_.crop_size) + "," +
                       std::to_string(cfg_.crop_size) + "], got " +
                       shape_str(s));
  }

  LocalConfig cfg_;
  TransformerEncoder enc_;
  Var patch_w_, patch_b_, pos_, rebuild_w_, rebuild_b_;
};

// First-layer attention folded to a spatial heat-map: sum heads and
// queries per key, reshape to the token grid, scale so the peak is 1.
inline Tensor accumulate_attention(const AttentionRecord& record, int token_grid) {
  int n = token_grid * token_grid;
  Tensor heat({token_grid, token_grid});
  if (record.scores.empty())
    throw ShapeError("attention accumulation: empty record");
  for (const Tensor& head : record.scores[0]) {
    if (head.shape != Shape{n, n})
      throw ShapeError("attention accumulation: head shape " +
                       shape_str(head.shape));
    for (int q = 0; q < n; ++q)
      for (int k = 0; k < n; ++k) heat.v[k] += head.v[q * n + k];
  }
  double mx = 0.0;
  for (double x : heat.v) mx = std::max(mx, x);
  if (mx > 0.0)
    for (double& x : heat.v) x /= mx;
  return heat;
}

}  // namespace coplan
