#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "egowm/core/autograd.hpp"
#include "egowm/core/kernels.hpp"
#include "egowm/core/tensor.hpp"

namespace egowm::ops {

namespace detail {

inline void require_same(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

template <typename T, typename F>
Tensor<T> map(const Tensor<T>& x, F f) {
  Tensor<T> out(x.shape());
  for (int64_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}

inline int normalize_axis(int axis, int rank) {
  const int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  return a;
}

template <typename T>
Tensor<T> permute_tensor(const Tensor<T>& x, const std::vector<int>& axes) {
  const int r = x.rank();
  if (static_cast<int>(axes.size()) != r) throw ShapeError("permute: axes length does not match rank");
  std::vector<int64_t> in_stride(r, 1);
  for (int i = r - 2; i >= 0; --i) in_stride[i] = in_stride[i + 1] * x.dim(i + 1);
  Shape out_shape(r);
  std::vector<int64_t> stride(r);
  std::vector<bool> used(r, false);
  for (int i = 0; i < r; ++i) {
    const int a = axes[i];
    if (a < 0 || a >= r || used[a]) throw ShapeError("permute: invalid axes");
    used[a] = true;
    out_shape[i] = x.dim(a);
    stride[i] = in_stride[a];
  }
  Tensor<T> out(out_shape);
  std::vector<int64_t> idx(r, 0);
  int64_t src = 0;
  const int64_t n = out.size();
  const int64_t last = out_shape[r - 1], last_stride = stride[r - 1];
  for (int64_t o = 0; o < n; o += last) {
    for (int64_t j = 0; j < last; ++j) out[o + j] = x[src + j * last_stride];
    // advance all but the innermost axis
    for (int i = r - 2; i >= 0; --i) {
      src += stride[i];
      if (++idx[i] < out_shape[i]) break;
      src -= stride[i] * out_shape[i];
      idx[i] = 0;
    }
  }
  return out;
}

inline std::vector<int> inverse_axes(const std::vector<int>& axes) {
  std::vector<int> inv(axes.size());
  for (size_t i = 0; i < axes.size(); ++i) inv[static_cast<size_t>(axes[i])] = static_cast<int>(i);
  return inv;
}

}  // namespace detail

template <typename T>
Var<T> constant(Tensor<T> value) {
  return Var<T>(std::move(value));
}

// ---------------------------------------------------------------- elementwise

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::require_same(a.shape(), b.shape(), "add");
  Tensor<T> out(a.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& n) {
    for (size_t p = 0; p < 2; ++p)
      if (n.parent(p).requires_grad) n.parent(p).accumulate(n.grad);
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  detail::require_same(a.shape(), b.shape(), "sub");
  Tensor<T> out(a.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& n) {
    if (n.parent(0).requires_grad) n.parent(0).accumulate(n.grad);
    if (n.parent(1).requires_grad) {
      auto& g = n.parent(1).grad_buffer();
      for (int64_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  detail::require_same(a.shape(), b.shape(), "mul");
  Tensor<T> out(a.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& n) {
    auto& pa = n.parent(0);
    auto& pb = n.parent(1);
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * pa.value[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, double s) {
  const T k = static_cast<T>(s);
  return make_result<T>(detail::map(a.value(), [k](T v) { return v * k; }), {a}, [k](Node<T>& n) {
    auto& g = n.parent(0).grad_buffer();
    for (int64_t i = 0; i < g.size(); ++i) g[i] += k * n.grad[i];
  });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, double c) {
  const T k = static_cast<T>(c);
  return make_result<T>(detail::map(a.value(), [k](T v) { return v + k; }), {a},
                        [](Node<T>& n) { n.parent(0).accumulate(n.grad); });
}

/// g * a where g holds a single learnable value (e.g. a residual gate).
template <typename T>
Var<T> gate(const Var<T>& a, const Var<T>& g) {
  if (g.value().size() != 1) throw ShapeError("gate: gate must hold exactly one value, got " + to_string(g.shape()));
  const T gv = g.value()[0];
  return make_result<T>(detail::map(a.value(), [gv](T v) { return gv * v; }), {a, g}, [](Node<T>& n) {
    auto& pa = n.parent(0);
    auto& pg = n.parent(1);
    const T gv = pg.value[0];
    if (pa.requires_grad) {
      auto& ga = pa.grad_buffer();
      for (int64_t i = 0; i < ga.size(); ++i) ga[i] += gv * n.grad[i];
    }
    if (pg.requires_grad) {
      T s{0};
      for (int64_t i = 0; i < n.grad.size(); ++i) s += n.grad[i] * pa.value[i];
      pg.grad_buffer()[0] += s;
    }
  });
}

/// x * sigmoid(x)
template <typename T>
Var<T> silu(const Var<T>& x) {
  auto out = detail::map(x.value(), [](T v) { return v / (T{1} + std::exp(-v)); });
  return make_result<T>(std::move(out), {x}, [](Node<T>& n) {
    auto& p = n.parent(0);
    auto& g = p.grad_buffer();
    for (int64_t i = 0; i < g.size(); ++i) {
      const T v = p.value[i];
      const T s = T{1} / (T{1} + std::exp(-v));
      g[i] += n.grad[i] * s * (T{1} + v * (T{1} - s));
    }
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  auto out = detail::map(x.value(), [](T v) { return T{1} / (T{1} + std::exp(-v)); });
  return make_result<T>(std::move(out), {x}, [](Node<T>& n) {
    auto& g = n.parent(0).grad_buffer();
    for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * n.value[i] * (T{1} - n.value[i]);
  });
}

// ---------------------------------------------------------------- reductions

template <typename T>
Var<T> sum(const Var<T>& x) {
  T s{0};
  for (auto v : x.value().span()) s += v;
  return make_result<T>(Tensor<T>::scalar(s), {x}, [](Node<T>& n) {
    auto& g = n.parent(0).grad_buffer();
    for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[0];
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.value().size()));
}

/// mean((a - b)^2)
template <typename T>
Var<T> mse(const Var<T>& a, const Var<T>& b) {
  detail::require_same(a.shape(), b.shape(), "mse");
  const int64_t n = a.value().size();
  T s{0};
  for (int64_t i = 0; i < n; ++i) {
    const T d = a.value()[i] - b.value()[i];
    s += d * d;
  }
  return make_result<T>(Tensor<T>::scalar(s / static_cast<T>(n)), {a, b}, [n](Node<T>& node) {
    auto& pa = node.parent(0);
    auto& pb = node.parent(1);
    const T k = T{2} * node.grad[0] / static_cast<T>(n);
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (int64_t i = 0; i < n; ++i) g[i] += k * (pa.value[i] - pb.value[i]);
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (int64_t i = 0; i < n; ++i) g[i] -= k * (pa.value[i] - pb.value[i]);
    }
  });
}

// ---------------------------------------------------------------- broadcasting over the trailing axis

/// x[..., d] + v[d]
template <typename T>
Var<T> add_rowvec(const Var<T>& x, const Var<T>& v) {
  const int64_t d = v.value().size();
  if (x.dim(-1) != d) throw ShapeError("add_rowvec: trailing extent " + std::to_string(x.dim(-1)) + " vs " + std::to_string(d));
  Tensor<T> out = x.value();
  for (int64_t i = 0; i < out.size(); ++i) out[i] += v.value()[i % d];
  return make_result<T>(std::move(out), {x, v}, [d](Node<T>& n) {
    if (n.parent(0).requires_grad) n.parent(0).accumulate(n.grad);
    if (n.parent(1).requires_grad) {
      auto& g = n.parent(1).grad_buffer();
      for (int64_t i = 0; i < n.grad.size(); ++i) g[i % d] += n.grad[i];
    }
  });
}

/// x[..., d] * v[d]
template <typename T>
Var<T> mul_rowvec(const Var<T>& x, const Var<T>& v) {
  const int64_t d = v.value().size();
  if (x.dim(-1) != d) throw ShapeError("mul_rowvec: trailing extent " + std::to_string(x.dim(-1)) + " vs " + std::to_string(d));
  Tensor<T> out = x.value();
  for (int64_t i = 0; i < out.size(); ++i) out[i] *= v.value()[i % d];
  return make_result<T>(std::move(out), {x, v}, [d](Node<T>& n) {
    auto& px = n.parent(0);
    auto& pv = n.parent(1);
    if (px.requires_grad) {
      auto& g = px.grad_buffer();
      for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * pv.value[i % d];
    }
    if (pv.requires_grad) {
      auto& g = pv.grad_buffer();
      for (int64_t i = 0; i < n.grad.size(); ++i) g[i % d] += n.grad[i] * px.value[i];
    }
  });
}

// ---------------------------------------------------------------- layout

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  return make_result<T>(std::move(out), {x}, [](Node<T>& n) {
    auto& g = n.parent(0).grad_buffer();
    for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
  });
}

template <typename T>
Var<T> permute(const Var<T>& x, std::vector<int> axes) {
  auto out = detail::permute_tensor(x.value(), axes);
  return make_result<T>(std::move(out), {x}, [inv = detail::inverse_axes(axes)](Node<T>& n) {
    n.parent(0).accumulate(detail::permute_tensor(n.grad, inv));
  });
}

template <typename T>
Var<T> transpose(const Var<T>& x) {
  if (x.rank() != 2) throw ShapeError("transpose expects a matrix, got " + to_string(x.shape()));
  return permute(x, {1, 0});
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& xs, int axis) {
  if (xs.empty()) throw ShapeError("concat of nothing");
  const int r = xs[0].rank();
  const int a = detail::normalize_axis(axis, r);
  Shape shape = xs[0].shape();
  shape[a] = 0;
  for (const auto& x : xs) {
    if (x.rank() != r) throw ShapeError("concat: rank mismatch");
    for (int i = 0; i < r; ++i)
      if (i != a && x.dim(i) != shape[i]) throw ShapeError("concat: extent mismatch " + to_string(x.shape()) + " vs " + to_string(xs[0].shape()));
    shape[a] += x.dim(a);
  }
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < a; ++i) outer *= shape[i];
  for (int i = a + 1; i < r; ++i) inner *= shape[i];
  Tensor<T> out(shape);
  std::vector<int64_t> chunk;
  for (const auto& x : xs) chunk.push_back(x.dim(a) * inner);
  const int64_t row = shape[a] * inner;
  for (int64_t o = 0; o < outer; ++o) {
    int64_t off = o * row;
    for (size_t k = 0; k < xs.size(); ++k) {
      std::copy_n(xs[k].value().data() + o * chunk[k], chunk[k], out.data() + off);
      off += chunk[k];
    }
  }
  return make_result<T>(std::move(out), xs, [outer, row, chunk](Node<T>& n) {
    int64_t base = 0;
    for (size_t k = 0; k < chunk.size(); ++k) {
      auto& p = n.parent(k);
      if (p.requires_grad) {
        auto& g = p.grad_buffer();
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t j = 0; j < chunk[k]; ++j) g[o * chunk[k] + j] += n.grad[o * row + base + j];
      }
      base += chunk[k];
    }
  });
}

/// x restricted to [begin, end) along axis.
template <typename T>
Var<T> slice(const Var<T>& x, int axis, int64_t begin, int64_t end) {
  const int r = x.rank();
  const int a = detail::normalize_axis(axis, r);
  if (begin < 0 || end > x.dim(a) || begin >= end) {
    throw ShapeError("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") out of range for " + to_string(x.shape()));
  }
  Shape shape = x.shape();
  shape[a] = end - begin;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < a; ++i) outer *= shape[i];
  for (int i = a + 1; i < r; ++i) inner *= shape[i];
  const int64_t in_row = x.dim(a) * inner, out_row = shape[a] * inner, off = begin * inner;
  Tensor<T> out(shape);
  for (int64_t o = 0; o < outer; ++o) std::copy_n(x.value().data() + o * in_row + off, out_row, out.data() + o * out_row);
  return make_result<T>(std::move(out), {x}, [outer, in_row, out_row, off](Node<T>& n) {
    auto& g = n.parent(0).grad_buffer();
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t j = 0; j < out_row; ++j) g[o * in_row + off + j] += n.grad[o * out_row + j];
  });
}

/// Repeats x `times` times along axis (x must have extent 1 there).
template <typename T>
Var<T> broadcast_axis(const Var<T>& x, int axis, int64_t times) {
  const int a = detail::normalize_axis(axis, x.rank());
  if (x.dim(a) != 1) throw ShapeError("broadcast_axis: extent along axis must be 1, got " + to_string(x.shape()));
  return concat(std::vector<Var<T>>(static_cast<size_t>(times), x), a);
}

// ---------------------------------------------------------------- dense layers

/// x[..., d_in] W^T + b, with W[d_out, d_in] and optional b[d_out].
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b = {}) {
  if (w.rank() != 2) throw ShapeError("linear: weight must be [d_out, d_in], got " + to_string(w.shape()));
  const int64_t din = w.dim(1), dout = w.dim(0);
  if (x.dim(-1) != din) {
    throw ShapeError("linear: input trailing extent " + std::to_string(x.dim(-1)) + " does not match d_in " + std::to_string(din));
  }
  if (b.defined() && b.value().size() != dout) throw ShapeError("linear: bias length does not match d_out");
  const int64_t rows = x.value().size() / din;
  Shape shape = x.shape();
  shape.back() = dout;
  Tensor<T> out(shape);
  kernels::gemm(false, true, rows, dout, din, x.value().data(), w.value().data(), out.data(), false);
  if (b.defined())
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t j = 0; j < dout; ++j) out[r * dout + j] += b.value()[j];
  std::vector<Var<T>> parents{x, w};
  if (b.defined()) parents.push_back(b);
  return make_result<T>(std::move(out), parents, [rows, din, dout](Node<T>& n) {
    auto& px = n.parent(0);
    auto& pw = n.parent(1);
    if (px.requires_grad)
      kernels::gemm(false, false, rows, din, dout, n.grad.data(), pw.value.data(), px.grad_buffer().data(), true);
    if (pw.requires_grad)
      kernels::gemm(true, false, dout, din, rows, n.grad.data(), px.value.data(), pw.grad_buffer().data(), true);
    if (n.parents.size() > 2 && n.parent(2).requires_grad) {
      auto& gb = n.parent(2).grad_buffer();
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < dout; ++j) gb[j] += n.grad[r * dout + j];
    }
  });
}

/// a[M,K] b[K,N]
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  const int64_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
  Tensor<T> out(Shape{M, N});
  kernels::gemm(false, false, M, N, K, a.value().data(), b.value().data(), out.data(), false);
  return make_result<T>(std::move(out), {a, b}, [M, N, K](Node<T>& n) {
    auto& pa = n.parent(0);
    auto& pb = n.parent(1);
    if (pa.requires_grad) kernels::gemm(false, true, M, K, N, n.grad.data(), pb.value.data(), pa.grad_buffer().data(), true);
    if (pb.requires_grad) kernels::gemm(true, false, K, N, M, pa.value.data(), n.grad.data(), pb.grad_buffer().data(), true);
  });
}

// ---------------------------------------------------------------- convolution

using Extents3 = std::array<int64_t, 3>;

/// 3D convolution of x[C_in,T,H,W] with w[C_out,C_in,kt,kh,kw] and optional b[C_out].
/// Padding is given per side so causal (past-only) temporal padding is expressible.
template <typename T>
Var<T> conv3d(const Var<T>& x, const Var<T>& w, const Var<T>& b, Extents3 stride, Extents3 pad_lo, Extents3 pad_hi) {
  if (x.rank() != 4) throw ShapeError("conv3d: input must be [C,T,H,W], got " + to_string(x.shape()));
  if (w.rank() != 5) throw ShapeError("conv3d: weight must be [Co,Ci,kt,kh,kw], got " + to_string(w.shape()));
  if (w.dim(1) != x.dim(0)) {
    throw ShapeError("conv3d: input has " + std::to_string(x.dim(0)) + " channels, weight expects " + std::to_string(w.dim(1)));
  }
  for (int i = 0; i < 3; ++i)
    if (stride[i] < 1 || pad_lo[i] < 0 || pad_hi[i] < 0) throw ShapeError("conv3d: stride must be positive and padding non-negative");
  kernels::ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), {w.dim(2), w.dim(3), w.dim(4)}, stride, pad_lo, pad_hi};
  const int64_t to = g.t_out(), ho = g.h_out(), wo = g.w_out();
  if (to < 1 || ho < 1 || wo < 1) {
    throw ShapeError("conv3d: input " + to_string(x.shape()) + " with kernel " + to_string(Shape(g.kernel.begin(), g.kernel.end())) +
                     " yields non-positive output extent");
  }
  const int64_t co = w.dim(0), K = g.patch(), P = g.positions();
  if (b.defined() && b.value().size() != co) throw ShapeError("conv3d: bias length does not match output channels");

  Tensor<T> out(Shape{co, to, ho, wo});
  auto cols = std::make_shared<std::vector<T>>();
  const T* colp = x.value().data();
  if (!g.pointwise()) {
    cols->resize(static_cast<size_t>(K * P));
    kernels::im2col(g, x.value().data(), cols->data());
    colp = cols->data();
  }
  kernels::gemm_nn(co, P, K, w.value().data(), colp, out.data(), false);
  if (b.defined())
    for (int64_t c = 0; c < co; ++c) {
      const T bv = b.value()[c];
      T* o = out.data() + c * P;
      for (int64_t p = 0; p < P; ++p) o[p] += bv;
    }

  std::vector<Var<T>> parents{x, w};
  if (b.defined()) parents.push_back(b);
  // The gathered columns are kept for the weight gradient only when a backward pass can happen.
  if (!grad_enabled() || !w.requires_grad()) cols.reset();
  return make_result<T>(std::move(out), parents, [g, co, K, P, cols](Node<T>& n) {
    auto& px = n.parent(0);
    auto& pw = n.parent(1);
    if (pw.requires_grad) {
      const T* colp = g.pointwise() ? px.value.data() : cols->data();
      kernels::gemm(false, true, co, K, P, n.grad.data(), colp, pw.grad_buffer().data(), true);
    }
    if (px.requires_grad) {
      if (g.pointwise()) {
        kernels::gemm(true, false, K, P, co, pw.value.data(), n.grad.data(), px.grad_buffer().data(), true);
      } else {
        std::vector<T> dcols(static_cast<size_t>(K * P));
        kernels::gemm(true, false, K, P, co, pw.value.data(), n.grad.data(), dcols.data(), false);
        kernels::col2im(g, dcols.data(), px.grad_buffer().data());
      }
    }
    if (n.parents.size() > 2 && n.parent(2).requires_grad) {
      auto& gb = n.parent(2).grad_buffer();
      for (int64_t c = 0; c < co; ++c) {
        T s{0};
        for (int64_t p = 0; p < P; ++p) s += n.grad[c * P + p];
        gb[c] += s;
      }
    }
  });
}

/// 2D convolution of x[C_in,H,W] with w[C_out,C_in,kh,kw]; symmetric padding.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, std::array<int64_t, 2> stride, std::array<int64_t, 2> pad) {
  if (x.rank() != 3) throw ShapeError("conv2d: input must be [C,H,W], got " + to_string(x.shape()));
  if (w.rank() != 4) throw ShapeError("conv2d: weight must be [Co,Ci,kh,kw], got " + to_string(w.shape()));
  auto x4 = reshape(x, {x.dim(0), 1, x.dim(1), x.dim(2)});
  auto w5 = reshape(w, {w.dim(0), w.dim(1), 1, w.dim(2), w.dim(3)});
  auto y = conv3d(x4, w5, b, {1, stride[0], stride[1]}, {0, pad[0], pad[1]}, {0, pad[0], pad[1]});
  return reshape(y, {y.dim(0), y.dim(2), y.dim(3)});
}

// ---------------------------------------------------------------- normalization

namespace detail {

/// Normalizes `groups` contiguous segments of x, each of length seg, then applies
/// per-channel affine (channel = segment-local index / per_channel).
template <typename T>
Var<T> segment_norm(const Var<T>& x, int64_t groups, const Var<T>& gamma, const Var<T>& beta, int64_t per_channel,
                    double eps) {
  const int64_t n = x.value().size();
  const int64_t seg = n / groups;
  Tensor<T> xhat(x.shape());
  std::vector<T> inv_std(static_cast<size_t>(groups));
  for (int64_t g = 0; g < groups; ++g) {
    const T* src = x.value().data() + g * seg;
    double m = 0;
    for (int64_t i = 0; i < seg; ++i) m += src[i];
    m /= static_cast<double>(seg);
    double v = 0;
    for (int64_t i = 0; i < seg; ++i) v += (src[i] - m) * (src[i] - m);
    v /= static_cast<double>(seg);
    const double is = 1.0 / std::sqrt(v + eps);
    inv_std[static_cast<size_t>(g)] = static_cast<T>(is);
    for (int64_t i = 0; i < seg; ++i) xhat[g * seg + i] = static_cast<T>((src[i] - m) * is);
  }
  const bool affine = gamma.defined();
  Tensor<T> out = xhat;
  if (affine)
    for (int64_t i = 0; i < n; ++i) {
      const int64_t c = i / per_channel;
      out[i] = gamma.value()[c] * xhat[i] + beta.value()[c];
    }
  std::vector<Var<T>> parents{x};
  if (affine) {
    parents.push_back(gamma);
    parents.push_back(beta);
  }
  return make_result<T>(std::move(out), parents,
                        [xhat = std::move(xhat), inv_std = std::move(inv_std), groups, seg, per_channel, affine](Node<T>& node) {
                          const int64_t total = groups * seg;
                          std::vector<T> dxhat(static_cast<size_t>(total));
                          for (int64_t i = 0; i < total; ++i)
                            dxhat[i] = affine ? node.grad[i] * node.parent(1).value[i / per_channel] : node.grad[i];
                          if (node.parent(0).requires_grad) {
                            auto& gx = node.parent(0).grad_buffer();
                            for (int64_t g = 0; g < groups; ++g) {
                              double m1 = 0, m2 = 0;
                              for (int64_t i = g * seg; i < (g + 1) * seg; ++i) {
                                m1 += dxhat[i];
                                m2 += dxhat[i] * xhat[i];
                              }
                              m1 /= static_cast<double>(seg);
                              m2 /= static_cast<double>(seg);
                              const double is = inv_std[static_cast<size_t>(g)];
                              for (int64_t i = g * seg; i < (g + 1) * seg; ++i)
                                gx[i] += static_cast<T>(is * (dxhat[i] - m1 - xhat[i] * m2));
                            }
                          }
                          if (affine) {
                            if (node.parent(1).requires_grad) {
                              auto& gg = node.parent(1).grad_buffer();
                              for (int64_t i = 0; i < total; ++i) gg[i / per_channel] += node.grad[i] * xhat[i];
                            }
                            if (node.parent(2).requires_grad) {
                              auto& gb = node.parent(2).grad_buffer();
                              for (int64_t i = 0; i < total; ++i) gb[i / per_channel] += node.grad[i];
                            }
                          }
                        });
}

}  // namespace detail

inline constexpr double kGroupNormEps = 1e-5;

/// GroupNorm over x[C, ...]: channels split into `groups` contiguous groups, each normalized
/// to zero mean / unit variance, then scaled and shifted per channel.
template <typename T>
Var<T> group_norm(const Var<T>& x, int64_t groups, const Var<T>& gamma, const Var<T>& beta, double eps = kGroupNormEps) {
  const int64_t c = x.dim(0);
  if (groups < 1 || c % groups != 0) {
    throw ShapeError("group_norm: " + std::to_string(c) + " channels not divisible into " + std::to_string(groups) + " groups");
  }
  if (gamma.defined() && (gamma.value().size() != c || beta.value().size() != c)) {
    throw ShapeError("group_norm: scale/shift must have one entry per channel");
  }
  return detail::segment_norm(x, groups, gamma, beta, x.value().size() / c, eps);
}

/// GroupNorm applied to every time step of x[C,T,H,W] separately, so no statistics flow across frames.
template <typename T>
Var<T> frame_group_norm(const Var<T>& x, int64_t groups, const Var<T>& gamma, const Var<T>& beta, double eps = kGroupNormEps) {
  if (x.rank() != 4) throw ShapeError("frame_group_norm: expected [C,T,H,W], got " + to_string(x.shape()));
  const int64_t c = x.dim(0), t = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (groups < 1 || c % groups != 0) {
    throw ShapeError("frame_group_norm: " + std::to_string(c) + " channels not divisible into " + std::to_string(groups) + " groups");
  }
  if (gamma.value().size() != c || beta.value().size() != c) throw ShapeError("frame_group_norm: scale/shift must have one entry per channel");
  const Var<T> frames = permute(x, {1, 0, 2, 3});
  const Var<T> g = concat(std::vector<Var<T>>(static_cast<size_t>(t), gamma), 0);
  const Var<T> b = concat(std::vector<Var<T>>(static_cast<size_t>(t), beta), 0);
  const Var<T> y = detail::segment_norm(frames, t * groups, g, b, h * w, eps);
  return permute(y, {1, 0, 2, 3});
}

/// Per-row normalization of x[R, d] without affine parameters.
template <typename T>
Var<T> layer_norm(const Var<T>& x, double eps = 1e-6) {
  const int64_t d = x.dim(-1);
  return detail::segment_norm(x, x.value().size() / d, Var<T>{}, Var<T>{}, d, eps);
}

}  // namespace egowm::ops
