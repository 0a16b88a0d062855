#include "coboom/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "coboom/error.hpp"

namespace coboom {

using detail::TensorImpl;

namespace {

void ensure_finite(const std::vector<double>& values, std::string_view op) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("non-finite value produced by " + std::string(op));
  }
}

template <class Backward>
Tensor emit(std::string_view op, Shape shape, std::vector<double> values,
            const std::vector<const Tensor*>& parents, Backward&& backward) {
  ensure_finite(values, op);
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  bool track = false;
  for (const Tensor* p : parents) track = track || (p->defined() && p->requires_grad());
  if (track) {
    impl->requires_grad = true;
    impl->node = std::make_unique<detail::Node>();
    impl->node->op = op;
    for (const Tensor* p : parents) {
      if (p->defined()) impl->node->parents.push_back(p->impl());
    }
    impl->node->backward = std::forward<Backward>(backward);
  }
  return Tensor::from_impl(std::move(impl));
}

void require_rank(const Tensor& t, std::size_t rank, std::string_view op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + " expects rank " + std::to_string(rank) + ", got " +
                         shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aik = av[i * k + p];
      const double* brow = bv + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aik * brow[j];
    }
  }
  TensorImpl* A = a.impl().get();
  TensorImpl* B = b.impl().get();
  return emit("matmul", {m, n}, std::move(out), {&a, &b}, [A, B, m, k, n](const TensorImpl& o) {
    const double* go = o.grad.data();
    if (double* ga = A->grad_sink()) {
      const double* bv = B->values.data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += go[i * n + j] * bv[p * n + j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (double* gb = B->grad_sink()) {
      const double* av = A->values.data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double aik = av[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aik * go[i * n + j];
        }
      }
    }
  });
}

namespace {

struct ConvGeometry {
  std::size_t cin, h, w, cout, kh, kw, stride, pad, oh, ow;

  // Output columns whose input column ox*stride + kx - pad is inside [0, w).
  std::pair<std::size_t, std::size_t> col_range(std::size_t kx) const {
    std::size_t lo = 0;
    if (kx < pad) lo = (pad - kx + stride - 1) / stride;
    const long long last = static_cast<long long>(w) - 1 + static_cast<long long>(pad) -
                           static_cast<long long>(kx);
    if (last < 0) return {1, 0};
    const std::size_t hi = std::min(ow - 1, static_cast<std::size_t>(last) / stride);
    return {lo, hi};
  }
  bool row_valid(std::size_t oy, std::size_t ky, std::size_t& iy) const {
    const long long y = static_cast<long long>(oy * stride + ky) - static_cast<long long>(pad);
    if (y < 0 || y >= static_cast<long long>(h)) return false;
    iy = static_cast<std::size_t>(y);
    return true;
  }
};

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, std::size_t stride,
              std::size_t pad) {
  require_rank(input, 3, "conv2d input");
  require_rank(kernels, 4, "conv2d kernels");
  if (stride == 0) throw DimensionError("conv2d: stride must be positive");
  ConvGeometry g{};
  g.cin = input.dim(0);
  g.h = input.dim(1);
  g.w = input.dim(2);
  g.cout = kernels.dim(0);
  g.kh = kernels.dim(2);
  g.kw = kernels.dim(3);
  g.stride = stride;
  g.pad = pad;
  if (kernels.dim(1) != g.cin) {
    throw DimensionError("conv2d: kernel channels " + shape_str(kernels.shape()) +
                         " do not match input " + shape_str(input.shape()));
  }
  if (g.h + 2 * pad < g.kh || g.w + 2 * pad < g.kw) {
    throw DimensionError("conv2d: output would be empty for input " + shape_str(input.shape()) +
                         " with pad " + std::to_string(pad));
  }
  if (bias.defined() && bias.shape() != Shape{g.cout}) {
    throw DimensionError("conv2d: bias shape " + shape_str(bias.shape()) + " expected [" +
                         std::to_string(g.cout) + "]");
  }
  g.oh = (g.h + 2 * pad - g.kh) / stride + 1;
  g.ow = (g.w + 2 * pad - g.kw) / stride + 1;

  std::vector<double> out(g.cout * g.oh * g.ow, 0.0);
  const double* in = input.values().data();
  const double* ker = kernels.values().data();
  for (std::size_t co = 0; co < g.cout; ++co) {
    double* oplane = out.data() + co * g.oh * g.ow;
    if (bias.defined()) std::fill_n(oplane, g.oh * g.ow, bias.values()[co]);
    for (std::size_t ci = 0; ci < g.cin; ++ci) {
      const double* iplane = in + ci * g.h * g.w;
      const double* kk = ker + (co * g.cin + ci) * g.kh * g.kw;
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          const double wv = kk[ky * g.kw + kx];
          const auto [lo, hi] = g.col_range(kx);
          if (lo > hi) continue;
          for (std::size_t oy = 0; oy < g.oh; ++oy) {
            std::size_t iy;
            if (!g.row_valid(oy, ky, iy)) continue;
            const double* irow = iplane + iy * g.w;
            double* orow = oplane + oy * g.ow;
            for (std::size_t ox = lo; ox <= hi; ++ox) orow[ox] += wv * irow[ox * stride + kx - pad];
          }
        }
      }
    }
  }

  TensorImpl* I = input.impl().get();
  TensorImpl* K = kernels.impl().get();
  TensorImpl* Bi = bias.defined() ? bias.impl().get() : nullptr;
  return emit("conv2d", {g.cout, g.oh, g.ow}, std::move(out), {&input, &kernels, &bias},
              [I, K, Bi, g](const TensorImpl& o) {
                const double* go = o.grad.data();
                double* gi = I->grad_sink();
                double* gk = K->grad_sink();
                const double* in = I->values.data();
                const double* ker = K->values.data();
                for (std::size_t co = 0; co < g.cout; ++co) {
                  const double* gplane = go + co * g.oh * g.ow;
                  for (std::size_t ci = 0; ci < g.cin; ++ci) {
                    const std::size_t ioff = ci * g.h * g.w;
                    const std::size_t koff = (co * g.cin + ci) * g.kh * g.kw;
                    for (std::size_t ky = 0; ky < g.kh; ++ky) {
                      for (std::size_t kx = 0; kx < g.kw; ++kx) {
                        const auto [lo, hi] = g.col_range(kx);
                        if (lo > hi) continue;
                        const double wv = ker[koff + ky * g.kw + kx];
                        double wacc = 0.0;
                        for (std::size_t oy = 0; oy < g.oh; ++oy) {
                          std::size_t iy;
                          if (!g.row_valid(oy, ky, iy)) continue;
                          const std::size_t rbase = ioff + iy * g.w;
                          const double* grow = gplane + oy * g.ow;
                          for (std::size_t ox = lo; ox <= hi; ++ox) {
                            const std::size_t idx = rbase + ox * g.stride + kx - g.pad;
                            wacc += grow[ox] * in[idx];
                            if (gi) gi[idx] += wv * grow[ox];
                          }
                        }
                        if (gk) gk[koff + ky * g.kw + kx] += wacc;
                      }
                    }
                  }
                }
                if (Bi) {
                  if (double* gb = Bi->grad_sink()) {
                    for (std::size_t co = 0; co < g.cout; ++co) {
                      double acc = 0.0;
                      for (std::size_t p = 0; p < g.oh * g.ow; ++p) acc += go[co * g.oh * g.ow + p];
                      gb[co] += acc;
                    }
                  }
                }
              });
}

Tensor upsample_nearest2x(const Tensor& x) {
  require_rank(x, 3, "upsample_nearest2x");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t oh = 2 * h, ow = 2 * w;
  std::vector<double> out(c * oh * ow);
  const double* xv = x.values().data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx) {
        out[(ch * oh + y) * ow + xx] = xv[(ch * h + y / 2) * w + xx / 2];
      }
    }
  }
  TensorImpl* X = x.impl().get();
  return emit("upsample_nearest2x", {c, oh, ow}, std::move(out), {&x},
              [X, c, h, w, oh, ow](const TensorImpl& o) {
                double* gx = X->grad_sink();
                if (!gx) return;
                for (std::size_t ch = 0; ch < c; ++ch) {
                  for (std::size_t y = 0; y < oh; ++y) {
                    for (std::size_t xx = 0; xx < ow; ++xx) {
                      gx[(ch * h + y / 2) * w + xx / 2] += o.grad[(ch * oh + y) * ow + xx];
                    }
                  }
                }
              });
}

namespace {
thread_local ScopedStopGradientTape* active_tape = nullptr;
}  // namespace

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.values().begin(), x.values().end());
  std::vector<bool> mask(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = out[i] > 0.0;
    if (!mask[i]) out[i] = 0.0;
  }
  if (ScopedStopGradientTape* tape = active_tape) {
    if (!tape->replay_) {
      tape->masks_.push_back(std::move(mask));
    } else if (tape->mask_cursor_ >= tape->masks_.size() || tape->masks_[tape->mask_cursor_++] != mask) {
      tape->kink_crossed_ = true;
    }
  }
  TensorImpl* X = x.impl().get();
  return emit("relu", x.shape(), std::move(out), {&x}, [X](const TensorImpl& o) {
    double* gx = X->grad_sink();
    if (!gx) return;
    for (std::size_t i = 0; i < o.values.size(); ++i) {
      if (X->values[i] > 0.0) gx[i] += o.grad[i];
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  const bool suffix = bs.size() <= as.size() && std::equal(bs.begin(), bs.end(), as.end() - bs.size());
  if (!suffix) {
    throw DimensionError("add: shape " + shape_str(bs) + " does not broadcast onto " + shape_str(as));
  }
  const std::size_t inner = b.numel();
  std::vector<double> out(a.values().begin(), a.values().end());
  const double* bv = b.values().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % inner];
  TensorImpl* A = a.impl().get();
  TensorImpl* B = b.impl().get();
  return emit("add", as, std::move(out), {&a, &b}, [A, B, inner](const TensorImpl& o) {
    if (double* ga = A->grad_sink()) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i];
    }
    if (double* gb = B->grad_sink()) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) gb[i % inner] += o.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

Tensor multiply(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "multiply");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  TensorImpl* A = a.impl().get();
  TensorImpl* B = b.impl().get();
  return emit("multiply", a.shape(), std::move(out), {&a, &b}, [A, B](const TensorImpl& o) {
    if (double* ga = A->grad_sink()) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i] * B->values[i];
    }
    if (double* gb = B->grad_sink()) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) gb[i] += o.grad[i] * A->values[i];
    }
  });
}

Tensor divide(const Tensor& a, const Tensor& b) {
  const bool scalar_b = b.numel() == 1;
  if (!scalar_b) require_same_shape(a, b, "divide");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double d = b.values()[scalar_b ? 0 : i];
    if (d == 0.0) throw NumericError("divide: division by zero");
    out[i] = a.values()[i] / d;
  }
  TensorImpl* A = a.impl().get();
  TensorImpl* B = b.impl().get();
  return emit("divide", a.shape(), std::move(out), {&a, &b}, [A, B, scalar_b](const TensorImpl& o) {
    double* ga = A->grad_sink();
    double* gb = B->grad_sink();
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      const std::size_t j = scalar_b ? 0 : i;
      const double d = B->values[j];
      if (ga) ga[i] += o.grad[i] / d;
      if (gb) gb[j] -= o.grad[i] * A->values[i] / (d * d);
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (double& v : out) v *= factor;
  TensorImpl* X = x.impl().get();
  return emit("scale", x.shape(), std::move(out), {&x}, [X, factor](const TensorImpl& o) {
    if (double* gx = X->grad_sink()) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) gx[i] += factor * o.grad[i];
    }
  });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  TensorImpl* X = x.impl().get();
  return emit("sum", {}, {acc}, {&x}, [X](const TensorImpl& o) {
    if (double* gx = X->grad_sink()) {
      for (std::size_t i = 0; i < X->values.size(); ++i) gx[i] += o.grad[0];
    }
  });
}

Tensor mean(const Tensor& x) {
  const double n = static_cast<double>(x.numel());
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  TensorImpl* X = x.impl().get();
  return emit("mean", {}, {acc / n}, {&x}, [X, n](const TensorImpl& o) {
    if (double* gx = X->grad_sink()) {
      const double g = o.grad[0] / n;
      for (std::size_t i = 0; i < X->values.size(); ++i) gx[i] += g;
    }
  });
}

Tensor mean_rows(const Tensor& x) {
  require_rank(x, 2, "mean_rows");
  const std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<double> out(d, 0.0);
  const double* xv = x.values().data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out[j] += xv[i * d + j];
  }
  for (double& v : out) v /= static_cast<double>(n);
  TensorImpl* X = x.impl().get();
  return emit("mean_rows", {d}, std::move(out), {&x}, [X, n, d](const TensorImpl& o) {
    if (double* gx = X->grad_sink()) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) gx[i * d + j] += o.grad[j] / static_cast<double>(n);
      }
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  TensorImpl* X = x.impl().get();
  return emit("reshape", std::move(shape), std::move(out), {&x}, [X](const TensorImpl& o) {
    if (double* gx = X->grad_sink()) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) gx[i] += o.grad[i];
    }
  });
}

Tensor transpose(const Tensor& x) {
  require_rank(x, 2, "transpose");
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<double> out(r * c);
  const double* xv = x.values().data();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xv[i * c + j];
  }
  TensorImpl* X = x.impl().get();
  return emit("transpose", {c, r}, std::move(out), {&x}, [X, r, c](const TensorImpl& o) {
    if (double* gx = X->grad_sink()) {
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += o.grad[j * r + i];
      }
    }
  });
}

Tensor concat_last(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_last: no inputs");
  const std::size_t rows = parts.front().dim(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_last");
    if (p.dim(0) != rows) {
      throw DimensionError("concat_last: row count mismatch " + shape_str(p.shape()));
    }
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  std::vector<double> out(rows * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const double* pv = parts[k].values().data();
    for (std::size_t i = 0; i < rows; ++i) {
      std::copy_n(pv + i * widths[k], widths[k], out.data() + i * total + offset);
    }
    offset += widths[k];
  }
  std::vector<const Tensor*> parents;
  std::vector<TensorImpl*> impls;
  for (const auto& p : parts) {
    parents.push_back(&p);
    impls.push_back(p.impl().get());
  }
  return emit("concat_last", {rows, total}, std::move(out), parents,
              [impls, widths, rows, total](const TensorImpl& o) {
                std::size_t off = 0;
                for (std::size_t k = 0; k < impls.size(); ++k) {
                  if (double* gp = impls[k]->grad_sink()) {
                    for (std::size_t i = 0; i < rows; ++i) {
                      for (std::size_t j = 0; j < widths[k]; ++j) {
                        gp[i * widths[k] + j] += o.grad[i * total + off + j];
                      }
                    }
                  }
                  off += widths[k];
                }
              });
}

Tensor l2_norm(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v * v;
  const double norm = std::sqrt(acc);
  TensorImpl* X = x.impl().get();
  return emit("l2_norm", {}, {norm}, {&x}, [X, norm](const TensorImpl& o) {
    double* gx = X->grad_sink();
    if (!gx || norm == 0.0) return;
    for (std::size_t i = 0; i < X->values.size(); ++i) gx[i] += o.grad[0] * X->values[i] / norm;
  });
}

Tensor softmax_rows(const Tensor& x) {
  require_rank(x, 2, "softmax_rows");
  const std::size_t n = x.dim(0), m = x.dim(1);
  std::vector<double> out(n * m);
  const double* xv = x.values().data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = xv + i * m;
    const double mx = *std::max_element(row, row + m);
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      out[i * m + j] = std::exp(row[j] - mx);
      z += out[i * m + j];
    }
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] /= z;
  }
  TensorImpl* X = x.impl().get();
  return emit("softmax_rows", {n, m}, std::move(out), {&x}, [X, n, m](const TensorImpl& o) {
    double* gx = X->grad_sink();
    if (!gx) return;
    for (std::size_t i = 0; i < n; ++i) {
      const double* y = o.values.data() + i * m;
      const double* gy = o.grad.data() + i * m;
      double dot = 0.0;
      for (std::size_t j = 0; j < m; ++j) dot += gy[j] * y[j];
      for (std::size_t j = 0; j < m; ++j) gx[i * m + j] += y[j] * (gy[j] - dot);
    }
  });
}

ScopedStopGradientTape::ScopedStopGradientTape() : previous_(active_tape) { active_tape = this; }
ScopedStopGradientTape::~ScopedStopGradientTape() { active_tape = previous_; }

void ScopedStopGradientTape::start_replay() {
  replay_ = true;
  rewind();
}

void ScopedStopGradientTape::rewind() {
  cursor_ = 0;
  mask_cursor_ = 0;
  kink_crossed_ = false;
}

Tensor stop_gradient(const Tensor& x) {
  ScopedStopGradientTape* tape = active_tape;
  if (tape && tape->replay_) {
    if (tape->cursor_ >= tape->values_.size() || tape->values_[tape->cursor_].size() != x.numel()) {
      throw ContractError("stop_gradient replay: graph differs from the recorded evaluation");
    }
    return Tensor(x.shape(), tape->values_[tape->cursor_++]);
  }
  std::vector<double> v(x.values().begin(), x.values().end());
  if (tape) tape->values_.push_back(v);
  return Tensor(x.shape(), std::move(v));
}

Tensor testing::negate_backward(const Tensor& x) {
  std::vector<double> out(x.values().begin(), x.values().end());
  TensorImpl* X = x.impl().get();
  return emit("negate_backward", x.shape(), std::move(out), {&x}, [X](const TensorImpl& o) {
    if (double* gx = X->grad_sink()) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) gx[i] -= o.grad[i];
    }
  });
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
  require_same_shape(logits, targets, "bce_with_logits");
  const std::size_t n = logits.numel();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = logits.values()[i];
    const double t = targets.values()[i];
    acc += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
  }
  TensorImpl* L = logits.impl().get();
  std::vector<double> tv(targets.values().begin(), targets.values().end());
  return emit("bce_with_logits", {}, {acc / static_cast<double>(n)}, {&logits},
              [L, tv = std::move(tv), n](const TensorImpl& o) {
                double* gl = L->grad_sink();
                if (!gl) return;
                const double g = o.grad[0] / static_cast<double>(n);
                for (std::size_t i = 0; i < n; ++i) {
                  const double z = L->values[i];
                  const double s = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                                            : std::exp(z) / (1.0 + std::exp(z));
                  gl[i] += g * (s - tv[i]);
                }
              });
}

}  // namespace coboom
