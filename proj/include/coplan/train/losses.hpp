#pragma once

// Training objectives: per-pixel BCE for the map-feature surrogate, summed
// L1 over planned and predicted waypoints, and their weighted total.

#include "coplan/tensor.hpp"

namespace coplan {

// Mean binary cross-entropy over every pixel of the semantic channels.
inline Var loss_seg(const Var& logits, const Tensor& gt) {
  if (logits.shape() != gt.shape)
    throw ShapeError("loss_seg: logits " + shape_str(logits.shape()) +
                     " vs ground truth " + shape_str(gt.shape));
  return bce_with_logits_mean(logits, gt);
}

// Sum over t of |p_t - p_t^gt|_1 (sum form, not mean).
inline Var loss_planning(const Var& plan, const Tensor& gt) {
  if (plan.shape() != gt.shape)
    throw ShapeError("loss_planning: plan " + shape_str(plan.shape()) +
                     " vs label " + shape_str(gt.shape));
  return l1_sum(plan, Var::leaf(gt, false));
}

// Double sum over the N selected other vehicles and T steps; N=0 -> 0.
inline Var loss_prediction(const std::vector<Var>& preds,
                           const std::vector<Tensor>& gts) {
  if (preds.size() != gts.size())
    throw ShapeError("loss_prediction: " + std::to_string(preds.size()) +
                     " predictions vs " + std::to_string(gts.size()) + " labels");
  Var total = Var::leaf(Tensor::scalar(0.0), false);
  for (size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].shape() != gts[i].shape)
      throw ShapeError("loss_prediction: shape mismatch at vehicle " +
                       std::to_string(i));
    total = add(total, l1_sum(preds[i], Var::leaf(gts[i], false)));
  }
  return total;
}

// L = L_per + lambda * L_jpp
inline Var loss_total(const Var& per, const Var& jpp, double lambda) {
  return add(per, scale(jpp, lambda));
}

}  // namespace coplan
