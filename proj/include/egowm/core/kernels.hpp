#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace egowm::kernels {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// General product on row-major operands: C = op(A) * op(B) (+ C when accumulate), op = transpose
/// when flagged. A is stored [M,K] (or [K,M] if trans_a), B is [K,N] (or [N,K] if trans_b).
template <typename T>
void gemm(bool trans_a, bool trans_b, int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C,
          bool accumulate) {
  using Map = Eigen::Map<const RowMatrix<T>>;
  Eigen::Map<RowMatrix<T>> c(C, M, N);
  const auto run = [&](const auto& a, const auto& b) {
    if (accumulate) {
      c.noalias() += a * b;
    } else {
      c.noalias() = a * b;
    }
  };
  const Map a(A, trans_a ? K : M, trans_a ? M : K), b(B, trans_b ? N : K, trans_b ? K : N);
  if (trans_a && trans_b) {
    run(a.transpose(), b.transpose());
  } else if (trans_a) {
    run(a.transpose(), b);
  } else if (trans_b) {
    run(a, b.transpose());
  } else {
    run(a, b);
  }
}

template <typename T>
void gemm_nn(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C, bool accumulate) {
  gemm(false, false, M, N, K, A, B, C, accumulate);
}

/// Geometry of one 3D convolution on an unbatched [C,T,H,W] volume. Padding may be asymmetric.
struct ConvGeometry {
  int64_t c_in, t_in, h_in, w_in;
  std::array<int64_t, 3> kernel, stride, pad_lo, pad_hi;

  int64_t out_extent(int axis, int64_t n) const {
    const int64_t span = n + pad_lo[axis] + pad_hi[axis] - kernel[axis];
    return span < 0 ? 0 : span / stride[axis] + 1;
  }
  int64_t t_out() const { return out_extent(0, t_in); }
  int64_t h_out() const { return out_extent(1, h_in); }
  int64_t w_out() const { return out_extent(2, w_in); }
  int64_t patch() const { return c_in * kernel[0] * kernel[1] * kernel[2]; }
  int64_t positions() const { return t_out() * h_out() * w_out(); }
  bool pointwise() const {
    return kernel == std::array<int64_t, 3>{1, 1, 1} && stride == std::array<int64_t, 3>{1, 1, 1} &&
           pad_lo == std::array<int64_t, 3>{0, 0, 0} && pad_hi == std::array<int64_t, 3>{0, 0, 0};
  }
};

/// Output indices [lo, hi) along one axis whose tap at kernel offset `k` lands inside the input.
inline std::pair<int64_t, int64_t> valid_range(int64_t n_in, int64_t n_out, int64_t k, int64_t stride, int64_t pad) {
  // o*stride + k - pad in [0, n_in)
  const int64_t lo_num = pad - k;
  int64_t lo = lo_num <= 0 ? 0 : (lo_num + stride - 1) / stride;
  const int64_t hi_num = n_in - 1 + pad - k;
  int64_t hi = hi_num < 0 ? 0 : hi_num / stride + 1;
  hi = std::min(hi, n_out);
  lo = std::min(lo, hi);
  return {lo, hi};
}

/// cols[patch, positions] gathered from x[C,T,H,W]; out-of-range taps read zero.
template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* cols) {
  const int64_t to = g.t_out(), ho = g.h_out(), wo = g.w_out();
  const int64_t P = to * ho * wo, sw = g.stride[2];
  int64_t row = 0;
  for (int64_t c = 0; c < g.c_in; ++c)
    for (int64_t dt = 0; dt < g.kernel[0]; ++dt)
      for (int64_t dh = 0; dh < g.kernel[1]; ++dh)
        for (int64_t dw = 0; dw < g.kernel[2]; ++dw, ++row) {
          T* dst = cols + row * P;
          const auto [w0, w1] = valid_range(g.w_in, wo, dw, sw, g.pad_lo[2]);
          for (int64_t ot = 0; ot < to; ++ot) {
            const int64_t it = ot * g.stride[0] + dt - g.pad_lo[0];
            for (int64_t oh = 0; oh < ho; ++oh) {
              T* d = dst + (ot * ho + oh) * wo;
              const int64_t ih = oh * g.stride[1] + dh - g.pad_lo[1];
              if (it < 0 || it >= g.t_in || ih < 0 || ih >= g.h_in) {
                std::fill(d, d + wo, T{0});
                continue;
              }
              const T* src = x + ((c * g.t_in + it) * g.h_in + ih) * g.w_in + dw - g.pad_lo[2];
              std::fill(d, d + w0, T{0});
              if (sw == 1) {
                std::copy(src + w0, src + w1, d + w0);
              } else {
                for (int64_t ow = w0; ow < w1; ++ow) d[ow] = src[ow * sw];
              }
              std::fill(d + w1, d + wo, T{0});
            }
          }
        }
}

/// Adjoint of im2col: scatter-adds cols back into dx.
template <typename T>
void col2im(const ConvGeometry& g, const T* cols, T* dx) {
  const int64_t to = g.t_out(), ho = g.h_out(), wo = g.w_out();
  const int64_t P = to * ho * wo, sw = g.stride[2];
  int64_t row = 0;
  for (int64_t c = 0; c < g.c_in; ++c)
    for (int64_t dt = 0; dt < g.kernel[0]; ++dt)
      for (int64_t dh = 0; dh < g.kernel[1]; ++dh)
        for (int64_t dw = 0; dw < g.kernel[2]; ++dw, ++row) {
          const T* srcrow = cols + row * P;
          const auto [w0, w1] = valid_range(g.w_in, wo, dw, sw, g.pad_lo[2]);
          for (int64_t ot = 0; ot < to; ++ot) {
            const int64_t it = ot * g.stride[0] + dt - g.pad_lo[0];
            if (it < 0 || it >= g.t_in) continue;
            for (int64_t oh = 0; oh < ho; ++oh) {
              const int64_t ih = oh * g.stride[1] + dh - g.pad_lo[1];
              if (ih < 0 || ih >= g.h_in) continue;
              const T* __restrict s = srcrow + (ot * ho + oh) * wo;
              T* __restrict d = dx + ((c * g.t_in + it) * g.h_in + ih) * g.w_in + dw - g.pad_lo[2];
              for (int64_t ow = w0; ow < w1; ++ow) d[ow * sw] += s[ow];
            }
          }
        }
}

}  // namespace egowm::kernels
