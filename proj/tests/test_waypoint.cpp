#include <doctest.h>

#include "coplan/model/model.hpp"

using namespace coplan;

namespace {

Tensor random_feat(Rng& rng, Shape s) {
  Tensor t(std::move(s));
  for (double& x : t.v) x = uniform(rng, -1.0, 1.0);
  return t;
}

WaypointConfig small_wp() {
  WaypointConfig cfg;
  cfg.in_channels = 2;
  cfg.crop_size = 8;
  cfg.gru_hidden = 16;
  cfg.horizon = 4;
  return cfg;
}

}  // namespace

TEST_CASE("delta accumulation is a prefix sum from the origin") {
  std::vector<Var> d;
  for (int i = 0; i < 3; ++i)
    d.push_back(Var::leaf(Tensor({2}, {1.0, 0.0}), false));
  Var traj = accumulate_deltas(d);
  REQUIRE(traj.shape() == Shape{3, 2});
  CHECK(traj.val().v == std::vector<double>{1, 0, 2, 0, 3, 0});

  Var traj2 = accumulate_deltas(d, {5.0, -1.0});
  CHECK(traj2.val().v == std::vector<double>{6, -1, 7, -1, 8, -1});

  SUBCASE("all-zero deltas copy the origin") {
    std::vector<Var> z(4, Var::leaf(Tensor({2}), false));
    Var t = accumulate_deltas(z, {2.0, 3.0});
    for (int i = 0; i < 4; ++i) {
      CHECK(t.val().v[i * 2] == 2.0);
      CHECK(t.val().v[i * 2 + 1] == 3.0);
    }
  }
}

TEST_CASE("accumulation gradient is lower-triangular identity blocks") {
  // d p_t / d delta_k = I for k <= t, 0 otherwise; check via backward on
  // each waypoint coordinate.
  std::vector<Var> d;
  Rng rng(3);
  for (int i = 0; i < 3; ++i) {
    Tensor t({2}, {uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0)});
    d.push_back(Var::leaf(t, true));
  }
  for (int t = 0; t < 3; ++t) {
    for (Var& v : d)
      if (v.node()->grad_alloc)
        std::fill(v.node()->grad.v.begin(), v.node()->grad.v.end(), 0.0);
    Var traj = accumulate_deltas(d);
    Var px = row(traj, t);
    backward(sum_all(mul(px, Var::leaf(Tensor({2}, {1.0, 0.0}), false))));
    for (int k = 0; k < 3; ++k) {
      double gx = d[static_cast<size_t>(k)].node()->grad.v[0];
      double gy = d[static_cast<size_t>(k)].node()->grad.v[1];
      CHECK(gx == (k <= t ? 1.0 : 0.0));
      CHECK(gy == 0.0);
    }
  }
}

TEST_CASE("embedder maps crops to 512 features and passes a gradient check") {
  ParamStore ps;
  Rng rng(5);
  Embedder emb(ps, rng);
  Var v = emb.forward(Var::leaf(Tensor({16, 24, 24}), false));
  REQUIRE(v.shape() == Shape{512});
  // Zero input: first conv gives its bias (zero) -> output is fc bias (zero).
  for (double x : v.val().v) CHECK(x == 0.0);

  ParamStore ps2;
  Rng rng2(7);
  Embedder small(ps2, rng2, small_wp());
  Tensor f = random_feat(rng2, {2, 8, 8});
  auto fn = [&]() { return sum_all(small.forward(Var::leaf(f, false))); };
  GradCheckReport rep = grad_check(fn, ps2, 1e-5, 1e-3, 8, 11);
  CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("ego branches are isolated: unused branches get zero gradient") {
  ParamStore ps;
  Rng rng(9);
  WaypointConfig cfg = small_wp();
  EgoDecoder ego(ps, rng, cfg);
  // Heads start at zero; open them so gradients are non-trivial.
  for (auto& [name, p] : ps.all())
    if (name.find(".head.") != std::string::npos)
      for (double& x : p.var.node()->val.v) x = uniform(rng, -0.1, 0.1);
  Tensor vf = random_feat(rng, {kFeatureDim});
  int used = 2;
  std::vector<Var> deltas = ego.decode(Var::leaf(vf, false), used);
  REQUIRE(static_cast<int>(deltas.size()) == cfg.horizon);
  ps.zero_grad();
  backward(sum_all(accumulate_deltas(deltas)));
  double used_mag = 0.0;
  for (auto& [name, p] : ps.all()) {
    if (name.rfind("ego.branch", 0) != 0) continue;
    bool is_used = name.rfind("ego.branch" + std::to_string(used), 0) == 0;
    double mag = 0.0;
    if (p.var.node()->grad_alloc)
      for (double g : p.var.node()->grad.v) mag = std::max(mag, std::abs(g));
    if (is_used) used_mag = std::max(used_mag, mag);
    else CHECK(mag == 0.0);
  }
  CHECK(used_mag > 0.0);
}

TEST_CASE("different behaviors produce different trajectories") {
  ParamStore ps;
  Rng rng(11);
  EgoDecoder ego(ps, rng, small_wp());
  for (auto& [name, p] : ps.all())
    if (name.find(".head.") != std::string::npos)
      for (double& x : p.var.node()->val.v) x = uniform(rng, -0.5, 0.5);
  Tensor vf = random_feat(rng, {kFeatureDim});
  Var a = accumulate_deltas(ego.decode(Var::leaf(vf, false), 0));
  Var b = accumulate_deltas(ego.decode(Var::leaf(vf, false), 1));
  double mx = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i)
    mx = std::max(mx, std::abs(a.val().v[i] - b.val().v[i]));
  CHECK(mx > 0.0);
  CHECK_THROWS_AS(ego.decode(Var::leaf(vf, false), 6), ShapeError);
  CHECK_THROWS_AS(ego.decode(Var::leaf(vf, false), -1), ShapeError);
}

TEST_CASE("zero-initialized heads emit zero deltas") {
  ParamStore ps;
  Rng rng(13);
  WaypointConfig cfg = small_wp();
  EgoDecoder ego(ps, rng, cfg);
  OtherDecoder other(ps, rng, cfg);
  Tensor vf = random_feat(rng, {kFeatureDim});
  for (const Var& d : ego.decode(Var::leaf(vf, false), 3))
    for (double x : d.val().v) CHECK(x == 0.0);
  for (const Var& d : other.decode(Var::leaf(vf, false)))
    for (double x : d.val().v) CHECK(x == 0.0);
}

TEST_CASE("refinement is the identity at init and checks its inputs") {
  ParamStore ps;
  Rng rng(15);
  WaypointConfig cfg = small_wp();
  Refiner ref(ps, rng, cfg);
  std::vector<Var> deltas;
  for (int i = 0; i < cfg.horizon; ++i)
    deltas.push_back(Var::leaf(random_feat(rng, {2}), false));
  std::vector<Var> out = ref.refine(deltas, {10.0, 5.0});
  REQUIRE(out.size() == deltas.size());
  for (size_t i = 0; i < out.size(); ++i)
    for (int j = 0; j < 2; ++j)
      CHECK(out[i].val().v[j] == doctest::Approx(deltas[i].val().v[j]).epsilon(1e-12));

  CHECK_THROWS_AS(ref.refine(deltas, {std::nan(""), 0.0}), NumericError);
  deltas.pop_back();
  CHECK_THROWS_AS(ref.refine(deltas, {1.0, 1.0}), ShapeError);
}

TEST_CASE("gradient check through the refinement GRU") {
  ParamStore ps;
  Rng rng(17);
  WaypointConfig cfg = small_wp();
  cfg.horizon = 3;
  Refiner ref(ps, rng, cfg);
  for (double& x : ps.at("refine.mlp2.w").var.node()->val.v)
    x = uniform(rng, -0.2, 0.2);
  std::vector<Tensor> raw;
  for (int i = 0; i < cfg.horizon; ++i) raw.push_back(random_feat(rng, {2}));
  auto fn = [&]() {
    std::vector<Var> d;
    for (const Tensor& t : raw) d.push_back(Var::leaf(t, false));
    return sum_all(accumulate_deltas(ref.refine(d, {4.0, -2.0})));
  };
  GradCheckReport rep = grad_check(fn, ps, 1e-5, 1e-3, 8, 19);
  CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("other-vehicle decoder is shared and deterministic") {
  ParamStore ps;
  Rng rng(19);
  WaypointConfig cfg = small_wp();
  OtherDecoder other(ps, rng, cfg);
  size_t n_params = ps.all().size();
  Tensor va = random_feat(rng, {kFeatureDim});
  Var t1 = accumulate_deltas(other.decode(Var::leaf(va, false)));
  Var t2 = accumulate_deltas(other.decode(Var::leaf(va, false)));
  CHECK(ps.all().size() == n_params);  // second vehicle adds no parameters
  for (int64_t i = 0; i < t1.numel(); ++i)
    CHECK(t1.val().v[i] == t2.val().v[i]);
}

TEST_CASE("ablation variants wire up and differ in parameter count") {
  ModelConfig base;
  base.grid.channels = 4;
  base.grid.height = base.grid.width = 16;
  base.grid.x_min = -4.0;
  base.grid.y_min = -8.0;
  base.crop.size = 12;
  base.crop.x_min = -3.0;
  base.crop.y_min = -6.0;
  base.local_layers = 1;
  base.local_heads = 2;
  base.d_model = 8;
  base.global_layers = 1;
  base.global_heads = 2;
  base.d_g = 16;
  base.wp.gru_hidden = 8;
  base.wp.horizon = 3;

  std::map<Variant, int64_t> counts;
  for (Variant v : {Variant::kFull, Variant::kNoLocal, Variant::kNoGlobal,
                    Variant::kNoBoth}) {
    ModelConfig cfg = base;
    cfg.variant = v;
    JointModel m(cfg);
    counts[v] = m.params().total_size();
    // Every variant runs end to end from raw crops.
    std::vector<Var> crops;
    Rng rng(23);
    for (int i = 0; i < 2; ++i)
      crops.push_back(Var::leaf(random_feat(rng, {4, 12, 12}), false));
    ModelOutput out = m.forward_from_crops(crops, 1, {8.0, 0.0});
    CHECK(out.plan.shape() == Shape{3, 2});
    REQUIRE(out.predictions.size() == 1);
    CHECK(out.predictions[0].shape() == Shape{3, 2});
  }
  CHECK(counts[Variant::kNoLocal] < counts[Variant::kFull]);
  CHECK(counts[Variant::kNoGlobal] < counts[Variant::kFull]);
  CHECK(counts[Variant::kNoBoth] < counts[Variant::kNoLocal]);
  CHECK(counts[Variant::kNoBoth] < counts[Variant::kNoGlobal]);
}

TEST_CASE("full model pipeline passes a reduced-depth gradient check") {
  ModelConfig cfg;
  cfg.grid.channels = 2;
  cfg.grid.height = cfg.grid.width = 16;
  cfg.grid.x_min = -4.0;
  cfg.grid.y_min = -8.0;
  cfg.crop.size = 12;
  cfg.crop.x_min = -3.0;
  cfg.crop.y_min = -6.0;
  cfg.local_layers = 2;
  cfg.local_heads = 2;
  cfg.d_model = 8;
  cfg.global_layers = 2;
  cfg.global_heads = 2;
  cfg.d_g = 16;
  cfg.wp.gru_hidden = 8;
  cfg.wp.horizon = 3;
  JointModel m(cfg);
  Rng rng(29);
  // Open the zero-initialized residual paths and heads.
  for (auto& [name, p] : m.params().all())
    if (name.find("rebuild") != std::string::npos ||
        name.find(".head.") != std::string::npos ||
        name.find("mlp2") != std::string::npos)
      for (double& x : p.var.node()->val.v) x = uniform(rng, -0.1, 0.1);
  Tensor ca = random_feat(rng, {2, 12, 12});
  Tensor cb = random_feat(rng, {2, 12, 12});
  Tensor gt_plan = random_feat(rng, {3, 2});
  Tensor gt_pred = random_feat(rng, {3, 2});
  auto fn = [&]() {
    ModelOutput out = m.forward_from_crops(
        {Var::leaf(ca, false), Var::leaf(cb, false)}, 0, {5.0, 1.0});
    return add(l1_sum(out.plan, Var::leaf(gt_plan, false)),
               l1_sum(out.predictions[0], Var::leaf(gt_pred, false)));
  };
  // Slightly larger step: the loss runs through ~10 nonlinear stages, so
  // 1e-5 central differences sit at the cancellation-noise floor.
  GradCheckReport rep = grad_check(fn, m.params(), 3e-5, 3e-3, 3, 31);
  CHECK(rep.max_rel_err < 3e-3);
}

TEST_CASE("trajectory length always matches the configured horizon") {
  ParamStore ps;
  Rng rng(37);
  WaypointConfig cfg = small_wp();
  cfg.horizon = 10;
  EgoDecoder ego(ps, rng, cfg);
  Refiner ref(ps, rng, cfg);
  OtherDecoder other(ps, rng, cfg);
  Tensor vf = random_feat(rng, {kFeatureDim});
  std::vector<Var> d = ego.decode(Var::leaf(vf, false), 5);
  CHECK(d.size() == 10);
  CHECK(ref.refine(d, {1.0, 2.0}).size() == 10);
  CHECK(other.decode(Var::leaf(vf, false)).size() == 10);
  CHECK(accumulate_deltas(d).shape() == Shape{10, 2});
}
