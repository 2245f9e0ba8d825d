#pragma once

// Named parameter store, Adam optimizer with StepLR, and a central-difference
// gradient checker.

#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "coplan/tensor.hpp"

namespace coplan {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  return d(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi) {  // inclusive bounds
  std::uniform_int_distribution<int> d(lo, hi);
  return d(rng);
}

struct Param {
  Var var;       // leaf tensor, requires_grad
  Tensor adam_m; // first-moment buffer
  Tensor adam_v; // second-moment buffer
  long step_count = 0;
};

class ParamStore {
 public:
  // Creates the parameter on first request; later calls return the same Var.
  Var get(const std::string& name, const Shape& shape,
          std::function<void(Tensor&)> init) {
    auto it = params_.find(name);
    if (it != params_.end()) {
      if (it->second.var.shape() != shape)
        throw ShapeError("param '" + name + "' requested with shape " +
                         shape_str(shape) + ", registered as " +
                         shape_str(it->second.var.shape()));
      return it->second.var;
    }
    Tensor t(shape);
    if (init) init(t);
    Param p;
    p.var = Var::leaf(std::move(t), true);
    p.adam_m = Tensor::zeros(shape);
    p.adam_v = Tensor::zeros(shape);
    auto [ins, ok] = params_.emplace(name, std::move(p));
    (void)ok;
    return ins->second.var;
  }

  Var zeros(const std::string& name, const Shape& shape) {
    return get(name, shape, nullptr);
  }
  Var constant(const std::string& name, const Shape& shape, double c) {
    return get(name, shape, [c](Tensor& t) { std::fill(t.v.begin(), t.v.end(), c); });
  }
  // Uniform in +-sqrt(1/fan_in).
  Var uniform_fan_in(const std::string& name, const Shape& shape, int fan_in,
                     Rng& rng) {
    double b = std::sqrt(1.0 / fan_in);
    return get(name, shape, [b, &rng](Tensor& t) {
      for (double& x : t.v) x = uniform(rng, -b, b);
    });
  }

  bool contains(const std::string& name) const { return params_.count(name) > 0; }
  Param& at(const std::string& name) { return params_.at(name); }
  const Param& at(const std::string& name) const { return params_.at(name); }
  std::map<std::string, Param>& all() { return params_; }
  const std::map<std::string, Param>& all() const { return params_; }

  int64_t total_size() const {
    int64_t n = 0;
    for (const auto& [k, p] : params_) n += p.var.val().numel();
    return n;
  }

  void zero_grad() {
    for (auto& [k, p] : params_) {
      if (p.var.node()->grad_alloc)
        std::fill(p.var.node()->grad.v.begin(), p.var.node()->grad.v.end(), 0.0);
    }
  }

 private:
  std::map<std::string, Param> params_;
};

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update on every parameter with an allocated
// gradient, except names matched by `frozen`.
inline void adam_step(ParamStore& store, const AdamConfig& cfg,
                      const std::function<bool(const std::string&)>& frozen = nullptr) {
  for (auto& [name, p] : store.all()) {
    if (frozen && frozen(name)) continue;
    Node& node = *p.var.node();
    if (!node.grad_alloc) continue;
    if (!node.grad.same_shape(node.val))
      throw ShapeError("adam_step: grad shape mismatch for '" + name + "'");
    p.step_count += 1;
    double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p.step_count));
    double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p.step_count));
    for (int64_t i = 0; i < node.val.numel(); ++i) {
      double g = node.grad.v[i];
      p.adam_m.v[i] = cfg.beta1 * p.adam_m.v[i] + (1.0 - cfg.beta1) * g;
      p.adam_v.v[i] = cfg.beta2 * p.adam_v.v[i] + (1.0 - cfg.beta2) * g * g;
      double mhat = p.adam_m.v[i] / bc1;
      double vhat = p.adam_v.v[i] / bc2;
      node.val.v[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

// lr(e) = base * gamma^floor(e / step_size)
inline double steplr(int epoch, double base_lr = 3e-4, int step_size = 3,
                     double gamma = 0.5) {
  if (epoch < 0) throw NumericError("steplr: negative epoch");
  return base_lr * std::pow(gamma, static_cast<double>(epoch / step_size));
}

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  int64_t worst_index = -1;
  int64_t entries_checked = 0;
};

// Central-difference check of d(f)/d(param) for every named parameter.
// `max_entries_per_param` > 0 subsamples entries deterministically (seeded).
inline GradCheckReport grad_check(const std::function<Var()>& f, ParamStore& store,
                                  double epsilon = 1e-5, double tol = 1e-3,
                                  int64_t max_entries_per_param = 0,
                                  uint64_t sample_seed = 0) {
  (void)tol;
  store.zero_grad();
  Var out = f();
  backward(out);
  GradCheckReport rep;
  Rng rng(sample_seed);
  for (auto& [name, p] : store.all()) {
    Node& node = *p.var.node();
    Tensor analytic = node.grad_alloc ? node.grad : Tensor::zeros(node.val.shape);
    if (!analytic.finite())
      throw NumericError("grad_check: non-finite analytic gradient for '" + name + "'");
    int64_t n = node.val.numel();
    std::vector<int64_t> idx;
    if (max_entries_per_param > 0 && n > max_entries_per_param) {
      for (int64_t k = 0; k < max_entries_per_param; ++k)
        idx.push_back(static_cast<int64_t>(rng() % static_cast<uint64_t>(n)));
    } else {
      idx.resize(n);
      for (int64_t k = 0; k < n; ++k) idx[k] = k;
    }
    for (int64_t i : idx) {
      double orig = node.val.v[i];
      node.val.v[i] = orig + epsilon;
      double fp = f().val().item();
      node.val.v[i] = orig - epsilon;
      double fm = f().val().item();
      node.val.v[i] = orig;
      double numeric = (fp - fm) / (2.0 * epsilon);
      if (!std::isfinite(numeric))
        throw NumericError("grad_check: non-finite numeric gradient for '" + name + "'");
      double a = analytic.v[i];
      double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      rep.entries_checked += 1;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_param = name;
        rep.worst_index = i;
      }
    }
  }
  return rep;
}

}  // namespace coplan
