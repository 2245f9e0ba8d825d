#pragma once

// Cross-vehicle attention: pool each vehicle's refined crop into one token,
// run an encoder over the padded 10-slot scene sequence (slot 0 = ego,
// others by ascending distance), and rebuild each vehicle's fused feature
// as a zero-initialized broadcast residual.

#include "coplan/model/transformer.hpp"

namespace coplan {

struct GlobalConfig {
  int in_channels = 16;
  int crop_size = 24;
  int pool = 4;
  int max_slots = 10;  // ego + up to 9 others
  EncoderConfig enc{6, 8, 256, 4};
};

enum class AssembleMode { kInference, kTraining };

// Pick which other vehicles join the scene sequence.  Returns indices into
// the input arrays, ordered by ascending distance (ties by lower id).
// Inference keeps the nearest (max_slots - 1); training draws a uniformly
// random subset size first, then a uniform subset.
inline std::vector<int> select_others(const std::vector<double>& dists,
                                      const std::vector<int>& ids,
                                      AssembleMode mode, Rng* rng,
                                      int max_others = 9) {
  if (dists.size() != ids.size())
    throw ShapeError("select_others: distance/id count mismatch");
  int n = static_cast<int>(dists.size());
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  if (mode == AssembleMode::kTraining) {
    if (!rng) throw ShapeError("select_others: training mode needs an rng");
    int k = uniform_int(*rng, 0, std::min(max_others, n));
    for (int i = 0; i < k; ++i)
      std::swap(idx[i], idx[uniform_int(*rng, i, n - 1)]);
    idx.resize(k);
  }
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (dists[a] != dists[b]) return dists[a] < dists[b];
    return ids[a] < ids[b];
  });
  if (static_cast<int>(idx.size()) > max_others) idx.resize(max_others);
  return idx;
}

class GlobalTransformer {
 public:
  GlobalTransformer(ParamStore& ps, Rng& rng, GlobalConfig cfg = {})
      : cfg_(cfg), enc_(ps, rng, "global.enc", cfg.enc) {
    if (cfg_.crop_size % cfg_.pool != 0)
      throw ShapeError("global transformer: crop size not divisible by pool");
    int side = cfg_.crop_size / cfg_.pool;
    int flat = cfg_.in_channels * side * side;
    int dg = cfg_.enc.d_model;
    pool_w_ = ps.uniform_fan_in("global.pool.w", {flat, dg}, flat, rng);
    pool_b_ = ps.zeros("global.pool.b", {dg});
    ego_flag_ = ps.uniform_fan_in("global.egoflag", {dg}, dg, rng);
    rebuild_w_ = ps.zeros("global.rebuild.w", {dg, cfg_.in_channels});
    rebuild_b_ = ps.zeros("global.rebuild.b", {cfg_.in_channels});
  }

  const GlobalConfig& config() const { return cfg_; }
  const TransformerEncoder& encoder() const { return enc_; }

  // F* [C, S, S] -> scene token [d_g].
  Var pool_flatten(const Var& fstar) const {
    Var pooled = avg_pool2d(fstar, cfg_.pool);
    return linear(reshape(pooled, {static_cast<int>(pooled.numel())}),
                  pool_w_, pool_b_);
  }

  // fstars: slot 0 is the ego, the rest already selected and ordered.
  // Returns one fused feature per input, each shaped like its F*.
  std::vector<Var> forward(const std::vector<Var>& fstars,
                           AttentionRecord* record = nullptr) const {
    int k = static_cast<int>(fstars.size());
    if (k < 1 || k > cfg_.max_slots)
      throw ShapeError("global transformer: vehicle count " +
                       std::to_string(k) + " outside [1," +
                       std::to_string(cfg_.max_slots) + "]");
    int dg = cfg_.enc.d_model;
    std::vector<Var> rows;
    rows.reserve(cfg_.max_slots);
    for (int i = 0; i < k; ++i) {
      Var tok = pool_flatten(fstars[i]);
      rows.push_back(i == 0 ? add(tok, ego_flag_) : tok);
    }
    Var pad_zero = Var::leaf(Tensor({dg}), false);
    for (int i = k; i < cfg_.max_slots; ++i) rows.push_back(pad_zero);
    Var seq = stack_rows(rows);
    Tensor mask({cfg_.max_slots});
    for (int i = k; i < cfg_.max_slots; ++i) mask.v[i] = -1e9;
    Var out = enc_.forward(seq, &mask, record);
    std::vector<Var> fused;
    fused.reserve(k);
    Var ones = Var::leaf(
        Tensor::full({1, cfg_.crop_size * cfg_.crop_size}, 1.0), false);
    for (int i = 0; i < k; ++i) {
      Var corr = linear(row(out, i), rebuild_w_, rebuild_b_);  // [C]
      Var tiled = reshape(matmul(reshape(corr, {cfg_.in_channels, 1}), ones),
                          {cfg_.in_channels, cfg_.crop_size, cfg_.crop_size});
      fused.push_back(add(fstars[i], tiled));
    }
    return fused;
  }

 private:
  GlobalConfig cfg_;
  TransformerEncoder enc_;
  Var pool_w_, pool_b_, ego_flag_, rebuild_w_, rebuild_b_;
};

}  // namespace coplan
