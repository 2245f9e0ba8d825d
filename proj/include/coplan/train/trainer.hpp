#pragma once

// Three-stage training schedule: (1) map-feature surrogate alone on BCE,
// (2) transformers + decoders on the joint waypoint loss with the surrogate
// frozen, (3) everything on the weighted total.  Adam with step-decayed
// learning rate; deterministic given (config, seed).

#include "coplan/train/checkpoint.hpp"
#include "coplan/train/dataset.hpp"
#include "coplan/train/losses.hpp"

namespace coplan {

struct TrainConfig {
  ModelConfig model{};
  double lambda = 1.0;
  double lr = 3e-4;
  int lr_step = 3;
  double lr_gamma = 0.5;
  int batch = 4;
  int epochs_stage1 = 2;
  int epochs_stage2 = 4;
  int epochs_stage3 = 4;
  int max_steps_per_stage = 0;   // 0 = unlimited
  double plan_l1_stop = 0.0;     // early-stop when per-waypoint plan L1 drops below
  uint64_t seed = 1;
};

struct StepMetrics {
  int stage = 0;
  int epoch = 0;
  long step = 0;       // optimizer updates within the stage
  double lr = 0.0;
  double loss = 0.0;   // stage objective, batch mean
  double seg = 0.0;
  double plan = 0.0;   // summed L1, batch mean
  double pred = 0.0;
};

inline void save_metrics_csv(const std::vector<StepMetrics>& rows,
                             const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write metrics csv: " + path);
  f << "stage,epoch,step,lr,loss,seg,plan,pred\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%ld,%.12g,%.12g,%.12g,%.12g,%.12g\n",
                  r.stage, r.epoch, r.step, r.lr, r.loss, r.seg, r.plan, r.pred);
    f << buf;
  }
}

class Trainer {
 public:
  Trainer(TrainConfig cfg, Dataset dataset)
      : cfg_(cfg), ds_(std::move(dataset)), model_(cfg.model),
        rng_(cfg.seed) {
    if (ds_.samples.empty()) throw DataError("training dataset is empty");
    frames_.resize(ds_.samples.size());
    seg_gt_.resize(ds_.samples.size());
  }

  JointModel& model() { return model_; }
  const std::vector<StepMetrics>& metrics() const { return metrics_; }

  const FrameInput& frame(size_t i) {
    if (!frames_[i]) {
      const Sample& s = ds_.samples[i];
      frames_[i] = frame_from_sample(ds_.scenarios[static_cast<size_t>(s.scenario_id)],
                                     s, cfg_.model.grid);
      seg_gt_[i] = seg_ground_truth(frames_[i]->feature, cfg_.model.grid);
    }
    return *frames_[i];
  }

  // Loss terms for one sample under the given selection mode.
  struct SampleLoss {
    Var seg, plan, pred;
    int n_selected = 0;
  };

  SampleLoss sample_loss(size_t i, AssembleMode mode, bool need_seg) {
    const FrameInput& in = frame(i);
    const Sample& s = ds_.samples[i];
    SampleLoss out;
    if (need_seg)
      out.seg = loss_seg(model_.seg_logits(Var::leaf(in.feature, false)), seg_gt_[i]);
    ModelOutput mo = model_.forward(in, mode, &rng_);
    out.plan = loss_planning(mo.plan, label_tensor(s.ego_label));
    std::vector<Tensor> gts;
    for (int sel : mo.selected)
      gts.push_back(label_tensor(s.other_labels[static_cast<size_t>(sel)]));
    out.pred = loss_prediction(mo.predictions, gts);
    out.n_selected = static_cast<int>(mo.selected.size());
    return out;
  }

  // Returns true if the stage ended via the early-stop criterion.
  bool run_stage(int stage) {
    int epochs = stage == 1   ? cfg_.epochs_stage1
                 : stage == 2 ? cfg_.epochs_stage2
                              : cfg_.epochs_stage3;
    auto frozen = [stage](const std::string& name) {
      bool is_seg = SegHead::owns_param(name);
      if (stage == 1) return !is_seg;
      if (stage == 2) return is_seg;
      return false;
    };
    std::vector<size_t> order(ds_.samples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    long steps = 0;
    for (int epoch = 0; epoch < epochs; ++epoch) {
      AdamConfig adam;
      adam.lr = steplr(epoch, cfg_.lr, cfg_.lr_step, cfg_.lr_gamma);
      // Seeded in-place shuffle.
      for (size_t i = 0; i + 1 < order.size(); ++i) {
        size_t j = i + static_cast<size_t>(
                           uniform_int(rng_, 0, static_cast<int>(order.size() - i) - 1));
        std::swap(order[i], order[j]);
      }
      for (size_t b = 0; b < order.size(); b += static_cast<size_t>(cfg_.batch)) {
        size_t e = std::min(order.size(), b + static_cast<size_t>(cfg_.batch));
        double inv = 1.0 / static_cast<double>(e - b);
        Var total;
        StepMetrics m;
        m.stage = stage;
        m.epoch = epoch;
        m.step = steps;
        m.lr = adam.lr;
        for (size_t k = b; k < e; ++k) {
          SampleLoss sl =
              sample_loss(order[k], AssembleMode::kTraining, stage != 2);
          Var contrib;
          if (stage == 1) {
            contrib = sl.seg;
          } else {
            Var jpp = add(sl.plan, sl.pred);
            contrib = stage == 2 ? jpp : loss_total(sl.seg, jpp, cfg_.lambda);
          }
          total = total.node() ? add(total, contrib) : contrib;
          if (sl.seg.node()) m.seg += sl.seg.val().item() * inv;
          m.plan += sl.plan.val().item() * inv;
          m.pred += sl.pred.val().item() * inv;
        }
        total = scale(total, inv);
        m.loss = total.val().item();
        model_.params().zero_grad();
        backward(total);
        adam_step(model_.params(), adam, frozen);
        metrics_.push_back(m);
        ++steps;
        double per_wp = m.plan / static_cast<double>(cfg_.model.wp.horizon);
        if (stage != 1 && cfg_.plan_l1_stop > 0.0 && per_wp < cfg_.plan_l1_stop)
          return true;
        if (cfg_.max_steps_per_stage > 0 && steps >= cfg_.max_steps_per_stage)
          return false;
      }
    }
    return false;
  }

  // Full schedule; writes one checkpoint per stage when dir is non-empty.
  void train_all(const std::string& checkpoint_dir = "",
                 const std::string& config_echo = "{}") {
    for (int stage = 1; stage <= 3; ++stage) {
      run_stage(stage);
      if (!checkpoint_dir.empty()) {
        CheckpointMeta meta;
        meta.config_json = config_echo;
        meta.stage = stage;
        meta.rng_state = rng_to_string(rng_);
        save_checkpoint(model_.params(), meta,
                        checkpoint_dir + "/stage" + std::to_string(stage) + ".ckpt");
      }
    }
  }

  // Snapshot / restore the full optimizer state (weights, Adam moments,
  // shuffle RNG) so an interrupted run resumes bit-for-bit.
  void save_state(const std::string& path, int stage,
                  const std::string& config_echo = "{}") const {
    CheckpointMeta meta;
    meta.config_json = config_echo;
    meta.stage = stage;
    meta.rng_state = rng_to_string(rng_);
    save_checkpoint(model_.params(), meta, path);
  }

  CheckpointMeta load_state(const std::string& path) {
    CheckpointMeta meta = load_checkpoint(model_.params(), path);
    rng_ = rng_from_string(meta.rng_state);
    return meta;
  }

  // Mean per-waypoint joint L1 on a held-out set under inference selection.
  double eval_joint_l1(const Dataset& held) {
    if (held.samples.empty()) throw DataError("eval dataset is empty");
    double total = 0.0;
    for (const Sample& s : held.samples) {
      FrameInput in = frame_from_sample(
          held.scenarios[static_cast<size_t>(s.scenario_id)], s, cfg_.model.grid);
      ModelOutput mo = model_.forward(in, AssembleMode::kInference);
      double l1 = l1_sum(mo.plan, Var::leaf(label_tensor(s.ego_label), false))
                      .val().item();
      for (size_t k = 0; k < mo.selected.size(); ++k)
        l1 += l1_sum(mo.predictions[k],
                     Var::leaf(label_tensor(
                                   s.other_labels[static_cast<size_t>(mo.selected[k])]),
                               false))
                  .val().item();
      int points = cfg_.model.wp.horizon *
                   (1 + static_cast<int>(mo.selected.size()));
      total += l1 / static_cast<double>(points);
    }
    return total / static_cast<double>(held.samples.size());
  }

 private:
  TrainConfig cfg_;
  Dataset ds_;
  JointModel model_;
  Rng rng_;
  std::vector<std::optional<FrameInput>> frames_;
  std::vector<Tensor> seg_gt_;
  std::vector<StepMetrics> metrics_;
};

}  // namespace coplan
