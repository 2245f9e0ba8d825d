#pragma once

// Dense float64 tensors with reverse-mode automatic differentiation.
// Row-major storage, shape-checked ops, tape built from shared_ptr nodes.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace coplan {

using Shape = std::vector<int>;

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

// Enables a per-op finite check on outputs. Off by default (slow path).
inline bool& debug_check_finite() {
  static bool flag = false;
  return flag;
}

struct Tensor {
  Shape shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), v(shape_numel(shape), 0.0) {}
  Tensor(Shape s, std::vector<double> data) : shape(std::move(s)), v(std::move(data)) {
    if (static_cast<int64_t>(v.size()) != shape_numel(shape))
      throw ShapeError("tensor data size " + std::to_string(v.size()) +
                       " does not match shape " + shape_str(shape));
  }

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor full(Shape s, double x) {
    Tensor t(std::move(s));
    std::fill(t.v.begin(), t.v.end(), x);
    return t;
  }
  static Tensor scalar(double x) { return Tensor({1}, {x}); }

  int64_t numel() const { return static_cast<int64_t>(v.size()); }
  double item() const {
    if (v.size() != 1) throw ShapeError("item() on non-scalar " + shape_str(shape));
    return v[0];
  }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape) +
                     " vs " + shape_str(b.shape));
}

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Tensor val;
  Tensor grad;  // allocated on first use
  bool needs_grad = false;
  bool grad_alloc = false;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> back;  // pushes this->grad into parents

  Tensor& ensure_grad() {
    if (!grad_alloc) {
      grad = Tensor::zeros(val.shape);
      grad_alloc = true;
    }
    return grad;
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(NodePtr n) : n_(std::move(n)) {}

  static Var leaf(Tensor t, bool requires_grad = false) {
    auto n = std::make_shared<Node>();
    n->val = std::move(t);
    n->needs_grad = requires_grad;
    return Var(std::move(n));
  }
  static Var scalar(double x) { return leaf(Tensor::scalar(x)); }

  bool defined() const { return n_ != nullptr; }
  const Tensor& val() const { return n_->val; }
  Tensor& mutable_val() { return n_->val; }
  const Shape& shape() const { return n_->val.shape; }
  int64_t numel() const { return n_->val.numel(); }
  Tensor& grad() { return n_->ensure_grad(); }
  bool needs_grad() const { return n_->needs_grad; }
  NodePtr node() const { return n_; }

 private:
  NodePtr n_;
};

namespace detail {

inline Var make_op(Tensor out, std::vector<NodePtr> parents,
                   std::function<void(Node&)> back) {
  auto n = std::make_shared<Node>();
  n->val = std::move(out);
  if (debug_check_finite() && !n->val.finite())
    throw NumericError("non-finite value produced by op");
  for (const auto& p : parents)
    if (p->needs_grad) n->needs_grad = true;
  if (n->needs_grad) {
    n->parents = std::move(parents);
    n->back = std::move(back);
  }
  return Var(std::move(n));
}

// b broadcasts over a's leading dims iff b.shape is a suffix of a.shape.
inline bool is_suffix(const Shape& big, const Shape& small) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

// Reduce grad over leading dims of `big` into the suffix-shaped accumulator.
inline void reduce_to_suffix(const Tensor& g, Tensor& acc) {
  int64_t block = acc.numel();
  int64_t reps = g.numel() / block;
  for (int64_t r = 0; r < reps; ++r)
    for (int64_t i = 0; i < block; ++i) acc.v[i] += g.v[r * block + i];
}

}  // namespace detail

// ---- elementwise binary ops with suffix broadcasting ----

namespace detail {

template <class Fwd, class BackA, class BackB>
Var binary_broadcast(const Var& a, const Var& b, const char* name, Fwd fwd,
                     BackA back_a, BackB back_b) {
  const Tensor& ta = a.val();
  const Tensor& tb = b.val();
  bool b_suffix = is_suffix(ta.shape, tb.shape);
  bool a_suffix = is_suffix(tb.shape, ta.shape);
  if (!b_suffix && !a_suffix)
    throw ShapeError(std::string(name) + ": shape mismatch " + shape_str(ta.shape) +
                     " vs " + shape_str(tb.shape));
  const Tensor& big = b_suffix ? ta : tb;
  const Tensor& small = b_suffix ? tb : ta;
  int64_t block = small.numel();
  Tensor out(big.shape);
  for (int64_t i = 0; i < big.numel(); ++i) {
    double x = b_suffix ? big.v[i] : small.v[i % block];
    double y = b_suffix ? small.v[i % block] : big.v[i];
    out.v[i] = fwd(x, y);
  }
  NodePtr na = a.node(), nb = b.node();
  return make_op(std::move(out), {na, nb},
                 [na, nb, b_suffix, block, back_a, back_b](Node& self) {
                   int64_t n = self.val.numel();
                   auto val_a = [&](int64_t i) {
                     return b_suffix ? na->val.v[i] : na->val.v[i % block];
                   };
                   auto val_b = [&](int64_t i) {
                     return b_suffix ? nb->val.v[i % block] : nb->val.v[i];
                   };
                   if (na->needs_grad) {
                     Tensor& ga = na->ensure_grad();
                     for (int64_t i = 0; i < n; ++i) {
                       double g = self.grad.v[i] * back_a(val_a(i), val_b(i));
                       ga.v[b_suffix ? i : i % block] += g;
                     }
                   }
                   if (nb->needs_grad) {
                     Tensor& gb = nb->ensure_grad();
                     for (int64_t i = 0; i < n; ++i) {
                       double g = self.grad.v[i] * back_b(val_a(i), val_b(i));
                       gb.v[b_suffix ? i % block : i] += g;
                     }
                   }
                 });
}

}  // namespace detail

inline Var add(const Var& a, const Var& b) {
  return detail::binary_broadcast(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

inline Var sub(const Var& a, const Var& b) {
  return detail::binary_broadcast(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

inline Var mul(const Var& a, const Var& b) {
  return detail::binary_broadcast(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

inline Var scale(const Var& a, double c) {
  Tensor out(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) out.v[i] = a.val().v[i] * c;
  NodePtr na = a.node();
  return detail::make_op(std::move(out), {na}, [na, c](Node& self) {
    if (!na->needs_grad) return;
    Tensor& g = na->ensure_grad();
    for (int64_t i = 0; i < self.val.numel(); ++i) g.v[i] += self.grad.v[i] * c;
  });
}

// ---- unary activations ----

namespace detail {

template <class Fwd, class Back>
Var unary(const Var& a, Fwd fwd, Back back_from_out) {
  Tensor out(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) out.v[i] = fwd(a.val().v[i]);
  NodePtr na = a.node();
  return make_op(std::move(out), {na}, [na, back_from_out](Node& self) {
    if (!na->needs_grad) return;
    Tensor& g = na->ensure_grad();
    for (int64_t i = 0; i < self.val.numel(); ++i)
      g.v[i] += self.grad.v[i] * back_from_out(na->val.v[i], self.val.v[i]);
  });
}

}  // namespace detail

inline Var relu(const Var& a) {
  return detail::unary(
      a, [](double x) { return x > 0 ? x : 0.0; },
      [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

inline Var sigmoid(const Var& a) {
  return detail::unary(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

inline Var tanh_op(const Var& a) {
  return detail::unary(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

// ---- matmul / transpose (2D) ----

inline Var matmul(const Var& a, const Var& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
    throw ShapeError("matmul: incompatible " + shape_str(sa) + " x " + shape_str(sb));
  int m = sa[0], k = sa[1], n = sb[1];
  Tensor out({m, n});
  const double* A = a.val().v.data();
  const double* B = b.val().v.data();
  double* C = out.v.data();
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      double aip = A[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = B + p * n;
      double* crow = C + i * n;
      for (int j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  NodePtr na = a.node(), nb = b.node();
  return detail::make_op(std::move(out), {na, nb}, [na, nb, m, k, n](Node& self) {
    const double* G = self.grad.v.data();
    if (na->needs_grad) {
      double* GA = na->ensure_grad().v.data();
      const double* B = nb->val.v.data();
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          const double* grow = G + i * n;
          const double* brow = B + p * n;
          double acc = 0.0;
          for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
          GA[i * k + p] += acc;
        }
    }
    if (nb->needs_grad) {
      double* GB = nb->ensure_grad().v.data();
      const double* A = na->val.v.data();
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          double aip = A[i * k + p];
          if (aip == 0.0) continue;
          for (int j = 0; j < n; ++j) GB[p * n + j] += aip * G[i * n + j];
        }
    }
  });
}

inline Var transpose(const Var& a) {
  const Shape& s = a.shape();
  if (s.size() != 2) throw ShapeError("transpose: need 2D, got " + shape_str(s));
  int m = s[0], n = s[1];
  Tensor out({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.v[j * m + i] = a.val().v[i * n + j];
  NodePtr na = a.node();
  return detail::make_op(std::move(out), {na}, [na, m, n](Node& self) {
    if (!na->needs_grad) return;
    Tensor& g = na->ensure_grad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) g.v[i * n + j] += self.grad.v[j * m + i];
  });
}

// ---- softmax over last dim, optional additive mask (suffix-broadcast) ----

inline Var softmax_lastdim(const Var& a, const Tensor* add_mask = nullptr) {
  const Shape& s = a.shape();
  if (s.empty()) throw ShapeError("softmax: rank-0 input");
  int n = s.back();
  int64_t rows = a.numel() / n;
  if (add_mask) {
    if (!detail::is_suffix(s, add_mask->shape))
      throw ShapeError("softmax mask shape " + shape_str(add_mask->shape) +
                       " not a suffix of " + shape_str(s));
  }
  int64_t mblock = add_mask ? add_mask->numel() : 0;
  Tensor out(s);
  for (int64_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
      double z = a.val().v[r * n + j];
      if (add_mask) z += add_mask->v[(r * n + j) % mblock];
      out.v[r * n + j] = z;
      mx = std::max(mx, z);
    }
    if (mx < -1e8)
      throw NumericError("softmax: fully masked row " + std::to_string(r));
    double denom = 0.0;
    for (int j = 0; j < n; ++j) {
      double e = std::exp(out.v[r * n + j] - mx);
      out.v[r * n + j] = e;
      denom += e;
    }
    for (int j = 0; j < n; ++j) out.v[r * n + j] /= denom;
  }
  NodePtr na = a.node();
  return detail::make_op(std::move(out), {na}, [na, rows, n](Node& self) {
    if (!na->needs_grad) return;
    Tensor& g = na->ensure_grad();
    for (int64_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (int j = 0; j < n; ++j)
        dot += self.grad.v[r * n + j] * self.val.v[r * n + j];
      for (int j = 0; j < n; ++j) {
        double y = self.val.v[r * n + j];
        g.v[r * n + j] += y * (self.grad.v[r * n + j] - dot);
      }
    }
  });
}

// ---- layer norm over last dim, learnable scale/shift ----

inline Var layer_norm(const Var& x, const Var& gamma, const Var& beta,
                      double eps = 1e-5) {
  const Shape& s = x.shape();
  int n = s.back();
  if (gamma.numel() != n || beta.numel() != n)
    throw ShapeError("layer_norm: scale/shift size must equal last dim");
  int64_t rows = x.numel() / n;
  Tensor out(s);
  std::vector<double> mu(rows), rstd(rows);
  for (int64_t r = 0; r < rows; ++r) {
    double m = 0.0;
    for (int j = 0; j < n; ++j) m += x.val().v[r * n + j];
    m /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      double d = x.val().v[r * n + j] - m;
      var += d * d;
    }
    var /= n;
    mu[r] = m;
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < n; ++j) {
      double xn = (x.val().v[r * n + j] - m) * rstd[r];
      out.v[r * n + j] = xn * gamma.val().v[j] + beta.val().v[j];
    }
  }
  NodePtr nx = x.node(), ng = gamma.node(), nb = beta.node();
  return detail::make_op(
      std::move(out), {nx, ng, nb},
      [nx, ng, nb, rows, n, mu, rstd](Node& self) {
        for (int64_t r = 0; r < rows; ++r) {
          if (ng->needs_grad || nb->needs_grad) {
            Tensor& gg = ng->ensure_grad();
            Tensor& gb = nb->ensure_grad();
            for (int j = 0; j < n; ++j) {
              double xn = (nx->val.v[r * n + j] - mu[r]) * rstd[r];
              gg.v[j] += self.grad.v[r * n + j] * xn;
              gb.v[j] += self.grad.v[r * n + j];
            }
          }
          if (nx->needs_grad) {
            Tensor& gx = nx->ensure_grad();
            double sum_dy = 0.0, sum_dy_xn = 0.0;
            for (int j = 0; j < n; ++j) {
              double dy = self.grad.v[r * n + j] * ng->val.v[j];
              double xn = (nx->val.v[r * n + j] - mu[r]) * rstd[r];
              sum_dy += dy;
              sum_dy_xn += dy * xn;
            }
            for (int j = 0; j < n; ++j) {
              double dy = self.grad.v[r * n + j] * ng->val.v[j];
              double xn = (nx->val.v[r * n + j] - mu[r]) * rstd[r];
              gx.v[r * n + j] +=
                  rstd[r] * (dy - sum_dy / n - xn * sum_dy_xn / n);
            }
          }
        }
      });
}

// ---- linear: x [.., in] * W [in, out] + b [out] ----

inline Var reshape(const Var& x, Shape s);

inline Var linear(const Var& x, const Var& w, const Var& b) {
  const Shape& sx = x.shape();
  const Shape& sw = w.shape();
  if (sw.size() != 2) throw ShapeError("linear: weight must be 2D");
  int in = sw[0], out_dim = sw[1];
  if (sx.back() != in)
    throw ShapeError("linear: input dim " + std::to_string(sx.back()) +
                     " vs weight in-dim " + std::to_string(in));
  if (b.numel() != out_dim) throw ShapeError("linear: bias size mismatch");
  int64_t rows = x.numel() / in;
  Shape out_shape = sx;
  out_shape.back() = out_dim;
  Var xf = reshape(Var(x), {static_cast<int>(rows), in});
  Var y = add(matmul(xf, w), b);
  return reshape(y, out_shape);
}

inline Var reshape(const Var& x, Shape s) {
  if (shape_numel(s) != x.numel())
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(s) +
                     " changes element count");
  Tensor out(std::move(s), x.val().v);
  NodePtr nx = x.node();
  return detail::make_op(std::move(out), {nx}, [nx](Node& self) {
    if (!nx->needs_grad) return;
    Tensor& g = nx->ensure_grad();
    for (int64_t i = 0; i < self.val.numel(); ++i) g.v[i] += self.grad.v[i];
  });
}

// ---- 2D convolution on [Cin,H,W] with weight [Cout,Cin,kh,kw] ----

inline Var conv2d(const Var& x, const Var& w, const Var& b, int stride = 1,
                  int pad = 0) {
  const Shape& sx = x.shape();
  const Shape& sw = w.shape();
  if (sx.size() != 3 || sw.size() != 4 || sx[0] != sw[1])
    throw ShapeError("conv2d: incompatible " + shape_str(sx) + " and " +
                     shape_str(sw));
  int cin = sx[0], h = sx[1], wd = sx[2];
  int cout = sw[0], kh = sw[2], kw = sw[3];
  if (b.numel() != cout) throw ShapeError("conv2d: bias size mismatch");
  int ho = (h + 2 * pad - kh) / stride + 1;
  int wo = (wd + 2 * pad - kw) / stride + 1;
  if (ho <= 0 || wo <= 0) throw ShapeError("conv2d: empty output");
  Tensor out({cout, ho, wo});
  const double* X = x.val().v.data();
  const double* W = w.val().v.data();
  for (int oc = 0; oc < cout; ++oc) {
    double bias = b.val().v[oc];
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        double acc = bias;
        for (int ic = 0; ic < cin; ++ic)
          for (int ky = 0; ky < kh; ++ky) {
            int iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < kw; ++kx) {
              int ix = ox * stride + kx - pad;
              if (ix < 0 || ix >= wd) continue;
              acc += X[(ic * h + iy) * wd + ix] *
                     W[((oc * cin + ic) * kh + ky) * kw + kx];
            }
          }
        out.v[(oc * ho + oy) * wo + ox] = acc;
      }
  }
  NodePtr nx = x.node(), nw = w.node(), nb = b.node();
  return detail::make_op(
      std::move(out), {nx, nw, nb},
      [nx, nw, nb, cin, h, wd, cout, kh, kw, ho, wo, stride, pad](Node& self) {
        const double* G = self.grad.v.data();
        const double* X = nx->val.v.data();
        const double* W = nw->val.v.data();
        double* GX = nx->needs_grad ? nx->ensure_grad().v.data() : nullptr;
        double* GW = nw->needs_grad ? nw->ensure_grad().v.data() : nullptr;
        double* GB = nb->needs_grad ? nb->ensure_grad().v.data() : nullptr;
        for (int oc = 0; oc < cout; ++oc)
          for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
              double g = G[(oc * ho + oy) * wo + ox];
              if (g == 0.0) continue;
              if (GB) GB[oc] += g;
              for (int ic = 0; ic < cin; ++ic)
                for (int ky = 0; ky < kh; ++ky) {
                  int iy = oy * stride + ky - pad;
                  if (iy < 0 || iy >= h) continue;
                  for (int kx = 0; kx < kw; ++kx) {
                    int ix = ox * stride + kx - pad;
                    if (ix < 0 || ix >= wd) continue;
                    int64_t xi = (static_cast<int64_t>(ic) * h + iy) * wd + ix;
                    int64_t wi = ((static_cast<int64_t>(oc) * cin + ic) * kh + ky) * kw + kx;
                    if (GX) GX[xi] += g * W[wi];
                    if (GW) GW[wi] += g * X[xi];
                  }
                }
            }
      });
}

// ---- 2D average pooling, kernel == stride ----

inline Var avg_pool2d(const Var& x, int k) {
  const Shape& s = x.shape();
  if (s.size() != 3) throw ShapeError("avg_pool2d: need [C,H,W]");
  int c = s[0], h = s[1], w = s[2];
  if (h % k != 0 || w % k != 0)
    throw ShapeError("avg_pool2d: dims not divisible by pool size");
  int ho = h / k, wo = w / k;
  Tensor out({c, ho, wo});
  double inv = 1.0 / (k * k);
  for (int ic = 0; ic < c; ++ic)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        double acc = 0.0;
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx)
            acc += x.val().v[(ic * h + oy * k + ky) * w + ox * k + kx];
        out.v[(ic * ho + oy) * wo + ox] = acc * inv;
      }
  NodePtr nx = x.node();
  return detail::make_op(std::move(out), {nx}, [nx, c, h, w, k, ho, wo, inv](Node& self) {
    if (!nx->needs_grad) return;
    Tensor& g = nx->ensure_grad();
    for (int ic = 0; ic < c; ++ic)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          double gv = self.grad.v[(ic * ho + oy) * wo + ox] * inv;
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx)
              g.v[(ic * h + oy * k + ky) * w + ox * k + kx] += gv;
        }
  });
}

// ---- bilinear upsampling [C,h,w] -> [C,H,W], pixel-center mapping ----

inline Var upsample_bilinear(const Var& x, int H, int W) {
  const Shape& s = x.shape();
  if (s.size() != 3) throw ShapeError("upsample_bilinear: need [C,H,W]");
  int c = s[0], h = s[1], w = s[2];
  Tensor out({c, H, W});
  struct Tap { int i0, i1; double w0, w1; };
  std::vector<Tap> ys(H), xs(W);
  auto make_taps = [](int src, int dst, std::vector<Tap>& taps) {
    double scale = static_cast<double>(src) / dst;
    for (int d = 0; d < dst; ++d) {
      double p = (d + 0.5) * scale - 0.5;
      p = std::clamp(p, 0.0, static_cast<double>(src - 1));
      int i0 = static_cast<int>(std::floor(p));
      int i1 = std::min(i0 + 1, src - 1);
      double f = p - i0;
      taps[d] = {i0, i1, 1.0 - f, f};
    }
  };
  make_taps(h, H, ys);
  make_taps(w, W, xs);
  for (int ic = 0; ic < c; ++ic)
    for (int oy = 0; oy < H; ++oy)
      for (int ox = 0; ox < W; ++ox) {
        const Tap& ty = ys[oy];
        const Tap& tx = xs[ox];
        double v = ty.w0 * (tx.w0 * x.val().v[(ic * h + ty.i0) * w + tx.i0] +
                            tx.w1 * x.val().v[(ic * h + ty.i0) * w + tx.i1]) +
                   ty.w1 * (tx.w0 * x.val().v[(ic * h + ty.i1) * w + tx.i0] +
                            tx.w1 * x.val().v[(ic * h + ty.i1) * w + tx.i1]);
        out.v[(ic * H + oy) * W + ox] = v;
      }
  NodePtr nx = x.node();
  return detail::make_op(std::move(out), {nx}, [nx, c, h, w, H, W, ys, xs](Node& self) {
    if (!nx->needs_grad) return;
    Tensor& g = nx->ensure_grad();
    for (int ic = 0; ic < c; ++ic)
      for (int oy = 0; oy < H; ++oy)
        for (int ox = 0; ox < W; ++ox) {
          double gv = self.grad.v[(ic * H + oy) * W + ox];
          if (gv == 0.0) continue;
          const Tap& ty = ys[oy];
          const Tap& tx = xs[ox];
          g.v[(ic * h + ty.i0) * w + tx.i0] += gv * ty.w0 * tx.w0;
          g.v[(ic * h + ty.i0) * w + tx.i1] += gv * ty.w0 * tx.w1;
          g.v[(ic * h + ty.i1) * w + tx.i0] += gv * ty.w1 * tx.w0;
          g.v[(ic * h + ty.i1) * w + tx.i1] += gv * ty.w1 * tx.w1;
        }
  });
}

// ---- bilinear grid sampling with zero padding outside the extent ----
// pts holds (row, col) fractional coordinates into [H,W]; output [C, P].

inline Var grid_sample(const Var& x, const std::vector<std::array<double, 2>>& pts) {
  const Shape& s = x.shape();
  if (s.size() != 3) throw ShapeError("grid_sample: need [C,H,W]");
  int c = s[0], h = s[1], w = s[2];
  int p = static_cast<int>(pts.size());
  for (const auto& pt : pts)
    if (!std::isfinite(pt[0]) || !std::isfinite(pt[1]))
      throw NumericError("grid_sample: non-finite sample coordinate");
  Tensor out({c, p});
  struct Corner { int64_t idx; double wgt; };
  std::vector<std::array<Corner, 4>> taps(p);
  for (int i = 0; i < p; ++i) {
    double r = pts[i][0], cc = pts[i][1];
    int r0 = static_cast<int>(std::floor(r));
    int c0 = static_cast<int>(std::floor(cc));
    double fr = r - r0, fc = cc - c0;
    auto corner = [&](int ri, int ci, double wgt) -> Corner {
      if (ri < 0 || ri >= h || ci < 0 || ci >= w || wgt == 0.0) return {-1, 0.0};
      return {static_cast<int64_t>(ri) * w + ci, wgt};
    };
    taps[i] = {corner(r0, c0, (1 - fr) * (1 - fc)),
               corner(r0, c0 + 1, (1 - fr) * fc),
               corner(r0 + 1, c0, fr * (1 - fc)),
               corner(r0 + 1, c0 + 1, fr * fc)};
  }
  for (int ic = 0; ic < c; ++ic) {
    const double* plane = x.val().v.data() + static_cast<int64_t>(ic) * h * w;
    for (int i = 0; i < p; ++i) {
      double v = 0.0;
      for (const Corner& t : taps[i])
        if (t.idx >= 0) v += t.wgt * plane[t.idx];
      out.v[ic * p + i] = v;
    }
  }
  NodePtr nx = x.node();
  int64_t plane_sz = static_cast<int64_t>(h) * w;
  return detail::make_op(std::move(out), {nx}, [nx, c, p, plane_sz, taps](Node& self) {
    if (!nx->needs_grad) return;
    Tensor& g = nx->ensure_grad();
    for (int ic = 0; ic < c; ++ic)
      for (int i = 0; i < p; ++i) {
        double gv = self.grad.v[ic * p + i];
        if (gv == 0.0) continue;
        for (const auto& t : taps[i])
          if (t.idx >= 0) g.v[ic * plane_sz + t.idx] += gv * t.wgt;
      }
  });
}

// ---- embedding lookup: table [n, d], single index -> [d] ----

inline Var embedding(const Var& table, int idx) {
  const Shape& s = table.shape();
  if (s.size() != 2) throw ShapeError("embedding: table must be 2D");
  if (idx < 0 || idx >= s[0])
    throw ShapeError("embedding: index " + std::to_string(idx) + " out of range");
  int d = s[1];
  Tensor out({d});
  std::copy_n(table.val().v.begin() + static_cast<int64_t>(idx) * d, d, out.v.begin());
  NodePtr nt = table.node();
  return detail::make_op(std::move(out), {nt}, [nt, idx, d](Node& self) {
    if (!nt->needs_grad) return;
    Tensor& g = nt->ensure_grad();
    for (int j = 0; j < d; ++j) g.v[static_cast<int64_t>(idx) * d + j] += self.grad.v[j];
  });
}

// ---- slicing / stacking ----

inline Var row(const Var& x, int i) {
  const Shape& s = x.shape();
  if (s.size() != 2) throw ShapeError("row: need 2D");
  if (i < 0 || i >= s[0]) throw ShapeError("row: index out of range");
  int n = s[1];
  Tensor out({n});
  std::copy_n(x.val().v.begin() + static_cast<int64_t>(i) * n, n, out.v.begin());
  NodePtr nx = x.node();
  return detail::make_op(std::move(out), {nx}, [nx, i, n](Node& self) {
    if (!nx->needs_grad) return;
    Tensor& g = nx->ensure_grad();
    for (int j = 0; j < n; ++j) g.v[static_cast<int64_t>(i) * n + j] += self.grad.v[j];
  });
}

inline Var cols(const Var& x, int c0, int c1) {
  const Shape& s = x.shape();
  if (s.size() != 2) throw ShapeError("cols: need 2D");
  if (c0 < 0 || c1 > s[1] || c0 >= c1) throw ShapeError("cols: bad range");
  int m = s[0], n = s[1], k = c1 - c0;
  Tensor out({m, k});
  for (int i = 0; i < m; ++i)
    std::copy_n(x.val().v.begin() + static_cast<int64_t>(i) * n + c0, k,
                out.v.begin() + static_cast<int64_t>(i) * k);
  NodePtr nx = x.node();
  return detail::make_op(std::move(out), {nx}, [nx, m, n, c0, k](Node& self) {
    if (!nx->needs_grad) return;
    Tensor& g = nx->ensure_grad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < k; ++j)
        g.v[static_cast<int64_t>(i) * n + c0 + j] += self.grad.v[static_cast<int64_t>(i) * k + j];
  });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  int m = parts[0].shape()[0];
  int total = 0;
  for (const Var& p : parts) {
    if (p.shape().size() != 2 || p.shape()[0] != m)
      throw ShapeError("concat_cols: row count mismatch");
    total += p.shape()[1];
  }
  Tensor out({m, total});
  std::vector<NodePtr> parents;
  std::vector<int> offs;
  int off = 0;
  for (const Var& p : parts) {
    int k = p.shape()[1];
    for (int i = 0; i < m; ++i)
      std::copy_n(p.val().v.begin() + static_cast<int64_t>(i) * k, k,
                  out.v.begin() + static_cast<int64_t>(i) * total + off);
    parents.push_back(p.node());
    offs.push_back(off);
    off += k;
  }
  return detail::make_op(std::move(out), parents, [parents, offs, m, total](Node& self) {
    for (size_t pi = 0; pi < parents.size(); ++pi) {
      if (!parents[pi]->needs_grad) continue;
      Tensor& g = parents[pi]->ensure_grad();
      int k = parents[pi]->val.shape[1];
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < k; ++j)
          g.v[static_cast<int64_t>(i) * k + j] +=
              self.grad.v[static_cast<int64_t>(i) * total + offs[pi] + j];
    }
  });
}

inline Var concat_vec(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_vec: no inputs");
  int total = 0;
  for (const Var& p : parts) {
    if (p.shape().size() != 1) throw ShapeError("concat_vec: need 1D inputs");
    total += p.shape()[0];
  }
  Tensor out({total});
  std::vector<NodePtr> parents;
  std::vector<int> offs;
  int off = 0;
  for (const Var& p : parts) {
    std::copy(p.val().v.begin(), p.val().v.end(), out.v.begin() + off);
    parents.push_back(p.node());
    offs.push_back(off);
    off += p.shape()[0];
  }
  return detail::make_op(std::move(out), parents, [parents, offs](Node& self) {
    for (size_t pi = 0; pi < parents.size(); ++pi) {
      if (!parents[pi]->needs_grad) continue;
      Tensor& g = parents[pi]->ensure_grad();
      for (int64_t j = 0; j < g.numel(); ++j) g.v[j] += self.grad.v[offs[pi] + j];
    }
  });
}

inline Var stack_rows(const std::vector<Var>& rows_in) {
  if (rows_in.empty()) throw ShapeError("stack_rows: no inputs");
  int d = rows_in[0].shape()[0];
  int m = static_cast<int>(rows_in.size());
  Tensor out({m, d});
  std::vector<NodePtr> parents;
  for (int i = 0; i < m; ++i) {
    if (rows_in[i].shape().size() != 1 || rows_in[i].shape()[0] != d)
      throw ShapeError("stack_rows: row size mismatch");
    std::copy(rows_in[i].val().v.begin(), rows_in[i].val().v.end(),
              out.v.begin() + static_cast<int64_t>(i) * d);
    parents.push_back(rows_in[i].node());
  }
  return detail::make_op(std::move(out), parents, [parents, d](Node& self) {
    for (size_t i = 0; i < parents.size(); ++i) {
      if (!parents[i]->needs_grad) continue;
      Tensor& g = parents[i]->ensure_grad();
      for (int j = 0; j < d; ++j) g.v[j] += self.grad.v[i * d + j];
    }
  });
}

// ---- reductions / losses ----

inline Var sum_all(const Var& x) {
  double acc = 0.0;
  for (double v : x.val().v) acc += v;
  NodePtr nx = x.node();
  return detail::make_op(Tensor::scalar(acc), {nx}, [nx](Node& self) {
    if (!nx->needs_grad) return;
    Tensor& g = nx->ensure_grad();
    for (double& gv : g.v) gv += self.grad.v[0];
  });
}

inline Var mean_all(const Var& x) { return scale(sum_all(x), 1.0 / x.numel()); }

// Sum of elementwise |a - b|; subgradient 0 at ties.
inline Var l1_sum(const Var& a, const Var& b) {
  require_same_shape(a.val(), b.val(), "l1_sum");
  double acc = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) acc += std::abs(a.val().v[i] - b.val().v[i]);
  NodePtr na = a.node(), nb = b.node();
  return detail::make_op(Tensor::scalar(acc), {na, nb}, [na, nb](Node& self) {
    double g0 = self.grad.v[0];
    for (int64_t i = 0; i < na->val.numel(); ++i) {
      double d = na->val.v[i] - nb->val.v[i];
      double s = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
      if (na->needs_grad) na->ensure_grad().v[i] += g0 * s;
      if (nb->needs_grad) nb->ensure_grad().v[i] -= g0 * s;
    }
  });
}

// Mean binary cross-entropy with logits against fixed 0/1 targets.
inline Var bce_with_logits_mean(const Var& logits, const Tensor& targets) {
  require_same_shape(logits.val(), targets, "bce_with_logits");
  int64_t n = logits.numel();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double z = logits.val().v[i], t = targets.v[i];
    acc += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
  }
  NodePtr nl = logits.node();
  return detail::make_op(Tensor::scalar(acc / n), {nl}, [nl, targets, n](Node& self) {
    if (!nl->needs_grad) return;
    Tensor& g = nl->ensure_grad();
    double g0 = self.grad.v[0] / n;
    for (int64_t i = 0; i < n; ++i) {
      double z = nl->val.v[i];
      double sig = 1.0 / (1.0 + std::exp(-z));
      g.v[i] += g0 * (sig - targets.v[i]);
    }
  });
}

// ---- backward pass ----

inline void backward(const Var& root) {
  if (root.numel() != 1) throw ShapeError("backward: root must be scalar");
  // topological order by iterative DFS
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.push_back({root.node().get(), 0});
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (p->needs_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root.node()->ensure_grad().v[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->back && n->grad_alloc) n->back(*n);
  }
  if (debug_check_finite() && !root.node()->grad.finite())
    throw NumericError("non-finite gradient at root");
}

// 1-D vector through a weight matrix [in, out], no bias.
inline Var matvec(const Var& x, const Var& w) {
  if (x.shape().size() != 1) throw ShapeError("matvec: need 1D input");
  return reshape(matmul(reshape(x, {1, x.shape()[0]}), w), {w.shape()[1]});
}

// Standard GRU cell built from primitive ops; h' = (1 - z) * h + z * cand.
struct GruParams {
  Var wz, uz, bz;  // update gate
  Var wr, ur, br;  // reset gate
  Var wh, uh, bh;  // candidate
};

inline Var gru_cell(const Var& x, const Var& h, const GruParams& p) {
  Var z = sigmoid(add(add(matvec(x, p.wz), matvec(h, p.uz)), p.bz));
  Var r = sigmoid(add(add(matvec(x, p.wr), matvec(h, p.ur)), p.br));
  Var cand = tanh_op(add(add(matvec(x, p.wh), matvec(mul(r, h), p.uh)), p.bh));
  Var keep = mul(sub(Var::leaf(Tensor::full(z.shape(), 1.0)), z), h);
  return add(keep, mul(z, cand));
}

}  // namespace coplan
