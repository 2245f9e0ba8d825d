#pragma once

// Pre-norm transformer encoder stack with multi-head self-attention,
// optional additive key-padding mask, and per-layer attention capture.

#include "coplan/nn.hpp"

namespace coplan {

struct EncoderConfig {
  int layers = 6;
  int heads = 8;
  int d_model = 64;
  int ffn_mult = 4;
};

// Raw attention matrices from one forward pass: [layer][head], each [Q, K].
struct AttentionRecord {
  std::vector<std::vector<Tensor>> scores;
};

class TransformerEncoder {
 public:
  TransformerEncoder(ParamStore& ps, Rng& rng, std::string prefix, EncoderConfig cfg)
      : cfg_(cfg), prefix_(std::move(prefix)) {
    if (cfg_.d_model % cfg_.heads != 0)
      throw ShapeError("encoder: d_model must divide evenly into heads");
    int d = cfg_.d_model;
    for (int l = 0; l < cfg_.layers; ++l) {
      Layer layer;
      std::string p = prefix_ + ".l" + std::to_string(l) + ".";
      layer.wq = ps.uniform_fan_in(p + "wq", {d, d}, d, rng);
      layer.bq = ps.zeros(p + "bq", {d});
      // No key bias: a shared shift of every key is invisible to softmax,
      // so the parameter would sit at exactly zero gradient forever.
      layer.wk = ps.uniform_fan_in(p + "wk", {d, d}, d, rng);
      layer.wv = ps.uniform_fan_in(p + "wv", {d, d}, d, rng);
      layer.bv = ps.zeros(p + "bv", {d});
      layer.wo = ps.uniform_fan_in(p + "wo", {d, d}, d, rng);
      layer.bo = ps.zeros(p + "bo", {d});
      layer.w1 = ps.uniform_fan_in(p + "ffn.w1", {d, d * cfg_.ffn_mult}, d, rng);
      layer.b1 = ps.zeros(p + "ffn.b1", {d * cfg_.ffn_mult});
      layer.w2 = ps.uniform_fan_in(p + "ffn.w2", {d * cfg_.ffn_mult, d},
                                   d * cfg_.ffn_mult, rng);
      layer.b2 = ps.zeros(p + "ffn.b2", {d});
      layer.ln1_g = ps.constant(p + "ln1.g", {d}, 1.0);
      layer.ln1_b = ps.zeros(p + "ln1.b", {d});
      layer.ln2_g = ps.constant(p + "ln2.g", {d}, 1.0);
      layer.ln2_b = ps.zeros(p + "ln2.b", {d});
      layers_.push_back(layer);
    }
  }

  const EncoderConfig& config() const { return cfg_; }

  // tokens [n, d_model]; key_mask, when given, is an additive [n] row
  // (0 for valid keys, -1e9 for padding).
  Var forward(Var tokens, const Tensor* key_mask = nullptr,
              AttentionRecord* record = nullptr) const {
    if (tokens.shape().size() != 2 || tokens.shape()[1] != cfg_.d_model)
      throw ShapeError("encoder: tokens must be [n," + std::to_string(cfg_.d_model) +
                       "], got " + shape_str(tokens.shape()));
    if (record) record->scores.clear();
    int dh = cfg_.d_model / cfg_.heads;
    double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    for (const Layer& L : layers_) {
      Var x = layer_norm(tokens, L.ln1_g, L.ln1_b);
      Var q = linear(x, L.wq, L.bq);
      Var k = matmul(x, L.wk);
      Var v = linear(x, L.wv, L.bv);
      std::vector<Var> head_outs;
      std::vector<Tensor> head_scores;
      for (int h = 0; h < cfg_.heads; ++h) {
        Var qh = cols(q, h * dh, (h + 1) * dh);
        Var kh = cols(k, h * dh, (h + 1) * dh);
        Var vh = cols(v, h * dh, (h + 1) * dh);
        Var logits = scale(matmul(qh, transpose(kh)), inv_sqrt);
        Var attn = softmax_lastdim(logits, key_mask);
        if (record) head_scores.push_back(attn.val());
        head_outs.push_back(matmul(attn, vh));
      }
      if (record) record->scores.push_back(std::move(head_scores));
      Var attended = linear(concat_cols(head_outs), L.wo, L.bo);
      tokens = add(tokens, attended);
      Var y = layer_norm(tokens, L.ln2_g, L.ln2_b);
      Var ffn = linear(relu(linear(y, L.w1, L.b1)), L.w2, L.b2);
      tokens = add(tokens, ffn);
    }
    return tokens;
  }

 private:
  struct Layer {
    Var wq, bq, wk, wv, bv, wo, bo;
    Var w1, b1, w2, b2;
    Var ln1_g, ln1_b, ln2_g, ln2_b;
  };
  EncoderConfig cfg_;
  std::string prefix_;
  std::vector<Layer> layers_;
};

}  // namespace coplan
