#include <doctest.h>

#include <filesystem>

#include "coplan/train/trainer.hpp"

using namespace coplan;

namespace {

ModelConfig tiny_model() {
  ModelConfig m;
  m.local_layers = 1;
  m.local_heads = 2;
  m.d_model = 16;
  m.global_layers = 1;
  m.global_heads = 2;
  m.d_g = 32;
  m.wp.gru_hidden = 16;
  m.wp.horizon = 4;
  return m;
}

Dataset tiny_dataset(int scenarios = 2) {
  GenConfig g;
  g.seed = 11;
  g.scenarios = scenarios;
  g.horizon = 4;
  g.max_time = 3.0;
  return generate_dataset(g);
}

std::string temp_dir(const std::string& tag) {
  auto p = std::filesystem::temp_directory_path() / ("coplan_test_" + tag);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

}  // namespace

TEST_CASE("planning loss is the summed L1 of Eq. (2)") {
  Tensor gt({10, 2});
  for (int i = 0; i < 10; ++i) gt.v[2 * i] = i * 0.5;
  Var same = Var::leaf(gt, false);
  CHECK(loss_planning(same, gt).val().item() == 0.0);

  Tensor off = gt;
  for (int i = 0; i < 10; ++i) off.v[2 * i] += 1.0;  // +1 m in x each step
  CHECK(loss_planning(Var::leaf(off, false), gt).val().item() ==
        doctest::Approx(10.0).epsilon(1e-12));

  Tensor bad({9, 2});
  CHECK_THROWS_AS(loss_planning(Var::leaf(bad, false), gt), ShapeError);

  SUBCASE("random pair matches scalar brute force to 1e-12") {
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
      Tensor a({7, 2}), b({7, 2});
      for (double& x : a.v) x = uniform(rng, -10.0, 10.0);
      for (double& x : b.v) x = uniform(rng, -10.0, 10.0);
      double brute = 0.0;
      for (int k = 0; k < 14; ++k) brute += std::abs(a.v[k] - b.v[k]);
      CHECK(loss_planning(Var::leaf(a, false), b).val().item() ==
            doctest::Approx(brute).epsilon(1e-12));
    }
  }
}

TEST_CASE("prediction loss double-sums over vehicles and steps") {
  CHECK(loss_prediction({}, {}).val().item() == 0.0);

  Tensor gt({10, 2});
  Tensor off = gt;
  for (int i = 0; i < 10; ++i) off.v[2 * i] += 1.0;
  std::vector<Var> preds = {Var::leaf(off, false), Var::leaf(off, false)};
  std::vector<Tensor> gts = {gt, gt};
  CHECK(loss_prediction(preds, gts).val().item() ==
        doctest::Approx(20.0).epsilon(1e-12));

  gts.pop_back();
  CHECK_THROWS_AS(loss_prediction(preds, gts), ShapeError);

  SUBCASE("random instances match brute force to 1e-12") {
    Rng rng(9);
    for (int trial = 0; trial < 100; ++trial) {
      int n = uniform_int(rng, 0, 4);
      std::vector<Var> p;
      std::vector<Tensor> g;
      double brute = 0.0;
      for (int i = 0; i < n; ++i) {
        Tensor a({5, 2}), b({5, 2});
        for (double& x : a.v) x = uniform(rng, -8.0, 8.0);
        for (double& x : b.v) x = uniform(rng, -8.0, 8.0);
        for (int k = 0; k < 10; ++k) brute += std::abs(a.v[k] - b.v[k]);
        p.push_back(Var::leaf(a, false));
        g.push_back(b);
      }
      CHECK(loss_prediction(p, g).val().item() ==
            doctest::Approx(brute).epsilon(1e-12));
    }
  }
}

TEST_CASE("total loss weights the joint term") {
  auto c = [](double x) { return Var::leaf(Tensor::scalar(x), false); };
  CHECK(loss_total(c(0.5), c(2.0), 1.0).val().item() == doctest::Approx(2.5));
  CHECK(loss_total(c(0.7), c(9.0), 0.0).val().item() == doctest::Approx(0.7));
  CHECK(loss_total(c(1.0), c(4.0), 0.5).val().item() == doctest::Approx(3.0));
}

TEST_CASE("seg loss saturates correctly") {
  Tensor gt({3, 4, 4});
  Rng rng(3);
  for (double& x : gt.v) x = uniform_int(rng, 0, 1);
  Var zero = Var::leaf(Tensor({3, 4, 4}), false);
  CHECK(loss_seg(zero, gt).val().item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  Tensor strong({3, 4, 4});
  for (int64_t i = 0; i < strong.numel(); ++i)
    strong.v[i] = gt.v[i] > 0.5 ? 20.0 : -20.0;
  CHECK(loss_seg(Var::leaf(strong, false), gt).val().item() < 1e-6);
  CHECK_THROWS_AS(loss_seg(Var::leaf(Tensor({3, 4, 5}), false), gt), ShapeError);
}

TEST_CASE("dataset round-trips field-for-field") {
  Dataset ds = tiny_dataset();
  REQUIRE(ds.samples.size() > 3);
  std::string dir = temp_dir("ds_roundtrip");
  save_dataset(ds, dir, 11);
  Dataset back = load_dataset(dir);
  REQUIRE(back.samples.size() == ds.samples.size());
  REQUIRE(back.scenarios.size() == ds.scenarios.size());
  for (size_t i = 0; i < ds.samples.size(); ++i)
    CHECK(back.samples[i] == ds.samples[i]);
  // Scenario payload equality via canonical JSON.
  for (size_t i = 0; i < ds.scenarios.size(); ++i)
    CHECK(to_json(back.scenarios[i]) == to_json(ds.scenarios[i]));
}

TEST_CASE("corrupted dataset lines are reported with their line number") {
  Dataset ds = tiny_dataset();
  std::string dir = temp_dir("ds_corrupt");
  save_dataset(ds, dir, 11);
  {
    std::ofstream f(dir + "/samples.jsonl", std::ios::app);
    f << "{not json\n";
  }
  try {
    load_dataset(dir);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    std::string msg = e.what();
    CHECK(msg.find("line " + std::to_string(ds.samples.size() + 1)) !=
          std::string::npos);
  }
}

TEST_CASE("index mismatch and empty datasets are rejected") {
  Dataset ds = tiny_dataset();
  std::string dir = temp_dir("ds_trunc");
  save_dataset(ds, dir, 11);
  {  // drop one sample line without updating the index
    Dataset fewer = ds;
    fewer.samples.pop_back();
    std::ofstream f(dir + "/samples.jsonl");
    for (const auto& s : fewer.samples) f << sample_to_json(s).dump() << "\n";
  }
  CHECK_THROWS_AS(load_dataset(dir), DataError);

  Dataset empty;
  TrainConfig cfg;
  cfg.model = tiny_model();
  CHECK_THROWS_AS(Trainer(cfg, empty), DataError);
  CHECK_THROWS_AS(generate_dataset(GenConfig{1, 0}), DataError);
}

TEST_CASE("dataset respects the nine-other-vehicle cap") {
  Dataset ds = tiny_dataset(6);
  for (const Sample& s : ds.samples) {
    CHECK(s.other_ids.size() <= 9);
    CHECK(s.other_labels.size() == s.other_ids.size());
    CHECK(s.ego_label.size() == 4);
    CHECK(s.behavior >= 0);
    CHECK(s.behavior < 6);
  }
}

TEST_CASE("checkpoint save/load round-trips bit-exactly") {
  ModelConfig mc = tiny_model();
  JointModel m(mc);
  // Dirty the optimizer state so moments are exercised too.
  Rng rng(17);
  for (auto& [name, p] : m.params().all()) {
    for (double& x : p.adam_m.v) x = uniform(rng, -1.0, 1.0);
    for (double& x : p.adam_v.v) x = uniform(rng, 0.0, 1.0);
    p.step_count = uniform_int(rng, 0, 50);
  }
  std::string dir = temp_dir("ckpt");
  CheckpointMeta meta;
  meta.config_json = "{\"tag\":42}";
  meta.stage = 2;
  Rng state_rng(123);
  (void)state_rng();
  meta.rng_state = rng_to_string(state_rng);
  save_checkpoint(m.params(), meta, dir + "/a.ckpt");

  JointModel m2(mc);
  CheckpointMeta back = load_checkpoint(m2.params(), dir + "/a.ckpt");
  CHECK(back.config_json == meta.config_json);
  CHECK(back.stage == 2);
  Rng restored = rng_from_string(back.rng_state);
  Rng expected(123);
  (void)expected();
  CHECK(restored() == expected());
  for (const auto& [name, p] : m.params().all()) {
    const Param& q = m2.params().at(name);
    CHECK(p.var.val().v == q.var.val().v);  // bit-exact
    CHECK(p.adam_m.v == q.adam_m.v);
    CHECK(p.adam_v.v == q.adam_v.v);
    CHECK(p.step_count == q.step_count);
  }

  SUBCASE("wrong architecture is rejected") {
    ModelConfig other = mc;
    other.variant = Variant::kNoBoth;
    JointModel m3(other);
    CHECK_THROWS_AS(load_checkpoint(m3.params(), dir + "/a.ckpt"), DataError);
  }
  SUBCASE("garbage file is rejected") {
    std::ofstream f(dir + "/junk.ckpt", std::ios::binary);
    f << "plainly not a checkpoint";
    f.close();
    JointModel m4(mc);
    CHECK_THROWS_AS(load_checkpoint(m4.params(), dir + "/junk.ckpt"), DataError);
  }
}

TEST_CASE("stage 1 trains only the surrogate and stage 2 freezes it") {
  Dataset ds = tiny_dataset();
  ds.samples.resize(4);
  TrainConfig cfg;
  cfg.model = tiny_model();
  cfg.batch = 2;
  cfg.epochs_stage1 = 1;
  cfg.epochs_stage2 = 1;
  cfg.max_steps_per_stage = 2;
  Trainer tr(cfg, ds);

  auto snapshot = [&](bool seg_only) {
    std::map<std::string, std::vector<double>> snap;
    for (const auto& [name, p] : tr.model().params().all())
      if (SegHead::owns_param(name) == seg_only) snap[name] = p.var.val().v;
    return snap;
  };

  auto non_seg_before = snapshot(false);
  tr.run_stage(1);
  for (const auto& [name, vals] : snapshot(false))
    CHECK(vals == non_seg_before.at(name));  // stage 1 touched nothing else

  auto seg_after_1 = snapshot(true);
  tr.run_stage(2);
  for (const auto& [name, vals] : snapshot(true))
    CHECK(vals == seg_after_1.at(name));  // bit-identical through stage 2
}

TEST_CASE("seeded training is deterministic and the loss decreases") {
  Dataset ds = tiny_dataset();
  ds.samples.resize(6);
  TrainConfig cfg;
  cfg.model = tiny_model();
  cfg.batch = 3;
  cfg.lr = 1e-3;
  cfg.epochs_stage1 = 1;
  cfg.epochs_stage2 = 8;
  cfg.epochs_stage3 = 0;
  cfg.seed = 77;

  auto run = [&]() {
    Trainer tr(cfg, ds);
    tr.run_stage(1);
    tr.run_stage(2);
    return tr.metrics();
  };
  auto m1 = run();
  auto m2 = run();
  REQUIRE(m1.size() == m2.size());
  for (size_t i = 0; i < m1.size(); ++i)
    CHECK(std::abs(m1[i].loss - m2[i].loss) <= 1e-9);

  // Joint loss at the end of stage 2 is below its start.
  std::vector<double> stage2;
  for (const auto& r : m1)
    if (r.stage == 2) stage2.push_back(r.loss);
  REQUIRE(stage2.size() >= 4);
  CHECK(stage2.back() < stage2.front());
}

TEST_CASE("metrics csv is written with one row per step") {
  Dataset ds = tiny_dataset();
  ds.samples.resize(2);
  TrainConfig cfg;
  cfg.model = tiny_model();
  cfg.batch = 2;
  cfg.max_steps_per_stage = 1;
  Trainer tr(cfg, ds);
  tr.run_stage(1);
  tr.run_stage(2);
  std::string dir = temp_dir("metrics");
  save_metrics_csv(tr.metrics(), dir + "/m.csv");
  std::ifstream f(dir + "/m.csv");
  std::string line;
  int rows = 0;
  std::getline(f, line);
  CHECK(line == "stage,epoch,step,lr,loss,seg,plan,pred");
  while (std::getline(f, line))
    if (!line.empty()) ++rows;
  CHECK(rows == static_cast<int>(tr.metrics().size()));
}
