#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "egowm/core/ops.hpp"

namespace egowm {

/// (t, h, w) index of a token on the latent patch grid.
struct GridPos {
  int64_t t = 0, h = 0, w = 0;
  GridPos operator+(const GridPos& o) const { return {t + o.t, h + o.h, w + o.w}; }
  bool operator==(const GridPos&) const = default;
};

/// Grid coordinates in token order: t slowest, w fastest.
inline std::vector<GridPos> grid_positions(int64_t t, int64_t h, int64_t w) {
  std::vector<GridPos> out;
  out.reserve(static_cast<size_t>(t * h * w));
  for (int64_t i = 0; i < t; ++i)
    for (int64_t j = 0; j < h; ++j)
      for (int64_t k = 0; k < w; ++k) out.push_back({i, j, k});
  return out;
}

inline int64_t grid_index(const GridPos& p, int64_t h, int64_t w) { return (p.t * h + p.h) * w + p.w; }

inline GridPos grid_unindex(int64_t index, int64_t h, int64_t w) {
  return {index / (h * w), (index / w) % h, index % w};
}

namespace ops {

namespace detail {

struct AttnDims {
  int64_t batch, nq, nk, d, dv, heads, hd, hdv;
};

template <typename T>
AttnDims attention_dims(const Var<T>& q, const Var<T>& k, const Var<T>& v, int64_t heads) {
  if (q.rank() != k.rank() || q.rank() != v.rank() || (q.rank() != 2 && q.rank() != 3)) {
    throw ShapeError("attention: q/k/v must all be [N,d] or [B,N,d]");
  }
  const bool batched = q.rank() == 3;
  AttnDims a{};
  a.batch = batched ? q.dim(0) : 1;
  a.nq = q.dim(-2);
  a.nk = k.dim(-2);
  a.d = q.dim(-1);
  a.dv = v.dim(-1);
  a.heads = heads;
  if (batched && (k.dim(0) != a.batch || v.dim(0) != a.batch)) throw ShapeError("attention: batch extents differ");
  if (k.dim(-1) != a.d) {
    throw ShapeError("attention: query width " + std::to_string(a.d) + " does not match key width " + std::to_string(k.dim(-1)));
  }
  if (v.dim(-2) != a.nk) throw ShapeError("attention: keys and values must have the same length");
  if (heads < 1 || a.d % heads != 0 || a.dv % heads != 0) {
    throw ShapeError("attention: widths " + std::to_string(a.d) + "/" + std::to_string(a.dv) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
  a.hd = a.d / heads;
  a.hdv = a.dv / heads;
  return a;
}

template <typename T>
std::vector<T> softmax_weights(const AttnDims& a, const T* q, const T* k) {
  std::vector<T> p(static_cast<size_t>(a.batch * a.heads * a.nq * a.nk));
  const T scale = T{1} / std::sqrt(static_cast<T>(a.hd));
  for (int64_t b = 0; b < a.batch; ++b)
    for (int64_t h = 0; h < a.heads; ++h)
      for (int64_t i = 0; i < a.nq; ++i) {
        T* row = p.data() + ((b * a.heads + h) * a.nq + i) * a.nk;
        const T* qi = q + (b * a.nq + i) * a.d + h * a.hd;
        T mx = -std::numeric_limits<T>::infinity();
        for (int64_t j = 0; j < a.nk; ++j) {
          const T* kj = k + (b * a.nk + j) * a.d + h * a.hd;
          T s{0};
          for (int64_t c = 0; c < a.hd; ++c) s += qi[c] * kj[c];
          row[j] = s * scale;
          mx = std::max(mx, row[j]);
        }
        T z{0};
        for (int64_t j = 0; j < a.nk; ++j) {
          row[j] = std::exp(row[j] - mx);
          z += row[j];
        }
        for (int64_t j = 0; j < a.nk; ++j) row[j] /= z;
      }
  return p;
}

}  // namespace detail

/// Softmax attention weights [B, heads, Nq, Nk] (inspection only, not recorded on the tape).
template <typename T>
Tensor<T> attention_weights(const Var<T>& q, const Var<T>& k, int64_t heads = 1) {
  auto a = detail::attention_dims(q, k, k, heads);
  auto p = detail::softmax_weights(a, q.value().data(), k.value().data());
  return Tensor<T>(Shape{a.batch, a.heads, a.nq, a.nk}, std::move(p));
}

/// Scaled dot-product attention. Keys/values may be longer than the queries; the
/// output always has one row per query.
template <typename T>
Var<T> attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, int64_t heads = 1) {
  const auto a = detail::attention_dims(q, k, v, heads);
  auto p = detail::softmax_weights(a, q.value().data(), k.value().data());
  Shape shape = q.shape();
  shape.back() = a.dv;
  Tensor<T> out(shape);
  const T* vv = v.value().data();
  for (int64_t b = 0; b < a.batch; ++b)
    for (int64_t h = 0; h < a.heads; ++h)
      for (int64_t i = 0; i < a.nq; ++i) {
        const T* row = p.data() + ((b * a.heads + h) * a.nq + i) * a.nk;
        T* o = out.data() + (b * a.nq + i) * a.dv + h * a.hdv;
        for (int64_t j = 0; j < a.nk; ++j) {
          const T w = row[j];
          const T* vj = vv + (b * a.nk + j) * a.dv + h * a.hdv;
          for (int64_t c = 0; c < a.hdv; ++c) o[c] += w * vj[c];
        }
      }
  return make_result<T>(std::move(out), {q, k, v}, [a, p = std::move(p)](Node<T>& n) {
    auto& pq = n.parent(0);
    auto& pk = n.parent(1);
    auto& pv = n.parent(2);
    const T scale = T{1} / std::sqrt(static_cast<T>(a.hd));
    T* gq = pq.requires_grad ? pq.grad_buffer().data() : nullptr;
    T* gk = pk.requires_grad ? pk.grad_buffer().data() : nullptr;
    T* gv = pv.requires_grad ? pv.grad_buffer().data() : nullptr;
    std::vector<T> ds(static_cast<size_t>(a.nk));
    for (int64_t b = 0; b < a.batch; ++b)
      for (int64_t h = 0; h < a.heads; ++h)
        for (int64_t i = 0; i < a.nq; ++i) {
          const T* row = p.data() + ((b * a.heads + h) * a.nq + i) * a.nk;
          const T* go = n.grad.data() + (b * a.nq + i) * a.dv + h * a.hdv;
          T dot_sum{0};
          for (int64_t j = 0; j < a.nk; ++j) {
            const T* vj = pv.value.data() + (b * a.nk + j) * a.dv + h * a.hdv;
            T dp{0};
            for (int64_t c = 0; c < a.hdv; ++c) dp += go[c] * vj[c];
            ds[j] = dp;
            dot_sum += dp * row[j];
            if (gv) {
              T* gvj = gv + (b * a.nk + j) * a.dv + h * a.hdv;
              for (int64_t c = 0; c < a.hdv; ++c) gvj[c] += row[j] * go[c];
            }
          }
          const T* qi = pq.value.data() + (b * a.nq + i) * a.d + h * a.hd;
          T* gqi = gq ? gq + (b * a.nq + i) * a.d + h * a.hd : nullptr;
          for (int64_t j = 0; j < a.nk; ++j) {
            const T s = row[j] * (ds[j] - dot_sum) * scale;
            const T* kj = pk.value.data() + (b * a.nk + j) * a.d + h * a.hd;
            if (gqi)
              for (int64_t c = 0; c < a.hd; ++c) gqi[c] += s * kj[c];
            if (gk) {
              T* gkj = gk + (b * a.nk + j) * a.d + h * a.hd;
              for (int64_t c = 0; c < a.hd; ++c) gkj[c] += s * qi[c];
            }
          }
        }
  });
}

namespace detail {

/// Pair counts per axis for a head of width hd: h and w get hd/6 pairs each, t the rest.
inline std::array<int64_t, 3> rope_axis_pairs(int64_t hd) {
  const int64_t hw = hd / 6;
  return {hd / 2 - 2 * hw, hw, hw};
}

/// Rotation angle for every (token, pair) slot of one head.
inline std::vector<double> rope_angles(const std::vector<GridPos>& pos, const GridPos& shift, int64_t hd, double theta) {
  const auto pairs = rope_axis_pairs(hd);
  const int64_t np = hd / 2;
  std::vector<double> ang(pos.size() * static_cast<size_t>(np));
  for (size_t n = 0; n < pos.size(); ++n) {
    const GridPos p = pos[n] + shift;
    const int64_t coord[3] = {p.t, p.h, p.w};
    int64_t slot = 0;
    for (int ax = 0; ax < 3; ++ax) {
      const double dim = 2.0 * static_cast<double>(pairs[ax]);
      for (int64_t i = 0; i < pairs[ax]; ++i, ++slot) {
        const double freq = std::pow(theta, -2.0 * static_cast<double>(i) / dim);
        ang[n * static_cast<size_t>(np) + static_cast<size_t>(slot)] = static_cast<double>(coord[ax]) * freq;
      }
    }
  }
  return ang;
}

template <typename T>
void rotate_pairs(const T* src, T* dst, const std::vector<double>& ang, int64_t tokens, int64_t d, int64_t heads, double sign) {
  const int64_t hd = d / heads, np = hd / 2;
  for (int64_t n = 0; n < tokens; ++n)
    for (int64_t h = 0; h < heads; ++h)
      for (int64_t i = 0; i < np; ++i) {
        const double a = sign * ang[static_cast<size_t>(n * np + i)];
        const T c = static_cast<T>(std::cos(a)), s = static_cast<T>(std::sin(a));
        const int64_t off = n * d + h * hd + 2 * i;
        const T x0 = src[off], x1 = src[off + 1];
        dst[off] = x0 * c - x1 * s;
        dst[off + 1] = x0 * s + x1 * c;
      }
}

}  // namespace detail

inline constexpr double kRopeTheta = 10000.0;

/// Rotary position encoding over a (t,h,w) grid. Each head's channel pairs are split
/// across the three axes; `shift` offsets every position (used to anchor auxiliary streams).
template <typename T>
Var<T> rope(const Var<T>& x, const std::vector<GridPos>& positions, GridPos shift = {}, int64_t heads = 1,
            double theta = kRopeTheta) {
  if (x.rank() != 2) throw ShapeError("rope: expects tokens [N,d], got " + to_string(x.shape()));
  const int64_t n = x.dim(0), d = x.dim(1);
  if (static_cast<int64_t>(positions.size()) != n) throw ShapeError("rope: one position per token required");
  if (heads < 1 || d % heads != 0) throw ShapeError("rope: width not divisible by head count");
  if ((d / heads) % 2 != 0) throw ShapeError("rope: head width " + std::to_string(d / heads) + " is odd; rotations need channel pairs");
  auto ang = detail::rope_angles(positions, shift, d / heads, theta);
  Tensor<T> out(x.shape());
  detail::rotate_pairs(x.value().data(), out.data(), ang, n, d, heads, 1.0);
  return make_result<T>(std::move(out), {x}, [ang = std::move(ang), n, d, heads](Node<T>& node) {
    Tensor<T> g(node.grad.shape());
    detail::rotate_pairs(node.grad.data(), g.data(), ang, n, d, heads, -1.0);
    node.parent(0).accumulate(g);
  });
}

}  // namespace ops
}  // namespace egowm
