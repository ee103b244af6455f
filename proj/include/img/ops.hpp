#pragma once

#include <algorithm>
#include <cmath>

#include "img/graph.hpp"
#include "img/rng.hpp"
#include "img/tensor.hpp"

// Differentiable primitives. Every op computes its forward result eagerly and,
// when the graph is recording and an input participates in differentiation,
// appends a node whose closure accumulates input gradients from the output
// gradient. Loops run in a fixed order so results are bit-reproducible.

namespace img {

namespace detail {

template <typename S>
inline void axpy_into(std::vector<S>& dst, const std::vector<S>& src, S k) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += k * src[i];
}

}  // namespace detail

template <typename S>
Tensor<S> add(Graph<S>& g, const Tensor<S>& a, const Tensor<S>& b) {
  check(a.shape == b.shape,
        "add: shape mismatch " + a.shape.str() + " vs " + b.shape.str());
  Tensor<S> out(a.shape);
  const S* pa = a.data();
  const S* pb = b.data();
  S* po = out.data();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  if (g.recording()) {
    const int ia = g.input_id(a), ib = g.input_id(b);
    if (ia >= 0 || ib >= 0)
      out.node = g.record({ia, ib}, n, [ia, ib](Graph<S>& gr, int self) {
        const auto& go = gr.grad_of(self);
        if (ia >= 0) detail::axpy_into(gr.grad_acc(ia), go, S(1));
        if (ib >= 0) detail::axpy_into(gr.grad_acc(ib), go, S(1));
      });
  }
  return out;
}

template <typename S>
Tensor<S> sub(Graph<S>& g, const Tensor<S>& a, const Tensor<S>& b) {
  check(a.shape == b.shape,
        "sub: shape mismatch " + a.shape.str() + " vs " + b.shape.str());
  Tensor<S> out(a.shape);
  const S* pa = a.data();
  const S* pb = b.data();
  S* po = out.data();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
  if (g.recording()) {
    const int ia = g.input_id(a), ib = g.input_id(b);
    if (ia >= 0 || ib >= 0)
      out.node = g.record({ia, ib}, n, [ia, ib](Graph<S>& gr, int self) {
        const auto& go = gr.grad_of(self);
        if (ia >= 0) detail::axpy_into(gr.grad_acc(ia), go, S(1));
        if (ib >= 0) detail::axpy_into(gr.grad_acc(ib), go, S(-1));
      });
  }
  return out;
}

template <typename S>
Tensor<S> mul(Graph<S>& g, const Tensor<S>& a, const Tensor<S>& b) {
  check(a.shape == b.shape,
        "mul: shape mismatch " + a.shape.str() + " vs " + b.shape.str());
  Tensor<S> out(a.shape);
  const S* pa = a.data();
  const S* pb = b.data();
  S* po = out.data();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
  if (g.recording()) {
    const int ia = g.input_id(a), ib = g.input_id(b);
    if (ia >= 0 || ib >= 0)
      out.node = g.record({ia, ib}, n,
                          [ia, ib, sa = a.store, sb = b.store](Graph<S>& gr, int self) {
                            const auto& go = gr.grad_of(self);
                            if (ia >= 0) {
                              auto& ga = gr.grad_acc(ia);
                              for (std::size_t i = 0; i < ga.size(); ++i)
                                ga[i] += go[i] * (*sb)[i];
                            }
                            if (ib >= 0) {
                              auto& gb = gr.grad_acc(ib);
                              for (std::size_t i = 0; i < gb.size(); ++i)
                                gb[i] += go[i] * (*sa)[i];
                            }
                          });
  }
  return out;
}

template <typename S>
Tensor<S> scale(Graph<S>& g, const Tensor<S>& x, S k) {
  Tensor<S> out(x.shape);
  const S* px = x.data();
  S* po = out.data();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = k * px[i];
  if (g.recording()) {
    const int ix = g.input_id(x);
    if (ix >= 0)
      out.node = g.record({ix}, n, [ix, k](Graph<S>& gr, int self) {
        detail::axpy_into(gr.grad_acc(ix), gr.grad_of(self), k);
      });
  }
  return out;
}

template <typename S>
Tensor<S> add_scalar(Graph<S>& g, const Tensor<S>& x, S c) {
  Tensor<S> out(x.shape);
  const S* px = x.data();
  S* po = out.data();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = px[i] + c;
  if (g.recording()) {
    const int ix = g.input_id(x);
    if (ix >= 0)
      out.node = g.record({ix}, n, [ix](Graph<S>& gr, int self) {
        detail::axpy_into(gr.grad_acc(ix), gr.grad_of(self), S(1));
      });
  }
  return out;
}

// a[N,T,C,H,W] * b[N,T,C,1,1], b broadcast over each H x W plane. This is the
// channel-wise multiplication that applies attention weights to features.
template <typename S>
Tensor<S> mul_bcast_hw(Graph<S>& g, const Tensor<S>& a, const Tensor<S>& b) {
  check(a.shape.rank() == 5 && b.shape.rank() == 5,
        "mul_bcast_hw: expected rank-5 inputs");
  check(b.shape[3] == 1 && b.shape[4] == 1 && b.shape[0] == a.shape[0] &&
            b.shape[1] == a.shape[1] && b.shape[2] == a.shape[2],
        "mul_bcast_hw: weights " + b.shape.str() + " do not broadcast over " +
            a.shape.str());
  Tensor<S> out(a.shape);
  const int64_t planes = a.shape[0] * a.shape[1] * a.shape[2];
  const int64_t plane = a.shape[3] * a.shape[4];
  const S* pa = a.data();
  const S* pb = b.data();
  S* po = out.data();
  for (int64_t p = 0; p < planes; ++p) {
    const S w = pb[p];
    const S* row = pa + p * plane;
    S* orow = po + p * plane;
    for (int64_t i = 0; i < plane; ++i) orow[i] = w * row[i];
  }
  if (g.recording()) {
    const int ia = g.input_id(a), ib = g.input_id(b);
    if (ia >= 0 || ib >= 0)
      out.node = g.record(
          {ia, ib}, out.numel(),
          [ia, ib, sa = a.store, sb = b.store, planes, plane](Graph<S>& gr, int self) {
            const auto& go = gr.grad_of(self);
            if (ia >= 0) {
              auto& ga = gr.grad_acc(ia);
              for (int64_t p = 0; p < planes; ++p) {
                const S w = (*sb)[p];
                for (int64_t i = 0; i < plane; ++i)
                  ga[p * plane + i] += w * go[p * plane + i];
              }
            }
            if (ib >= 0) {
              auto& gb = gr.grad_acc(ib);
              for (int64_t p = 0; p < planes; ++p) {
                S acc(0);
                for (int64_t i = 0; i < plane; ++i)
                  acc += go[p * plane + i] * (*sa)[p * plane + i];
                gb[p] += acc;
              }
            }
          });
  }
  return out;
}

template <typename S>
Tensor<S> sigmoid(Graph<S>& g, const Tensor<S>& x) {
  Tensor<S> out(x.shape);
  const S* px = x.data();
  S* po = out.data();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) {
    const S v = px[i];
    if (v >= S(0)) {
      po[i] = S(1) / (S(1) + std::exp(-v));
    } else {
      const S e = std::exp(v);
      po[i] = e / (S(1) + e);
    }
  }
  if (g.recording()) {
    const int ix = g.input_id(x);
    if (ix >= 0)
      out.node = g.record({ix}, n, [ix, so = out.store](Graph<S>& gr, int self) {
        const auto& go = gr.grad_of(self);
        auto& gx = gr.grad_acc(ix);
        for (std::size_t i = 0; i < gx.size(); ++i) {
          const S s = (*so)[i];
          gx[i] += go[i] * s * (S(1) - s);
        }
      });
  }
  return out;
}

template <typename S>
Tensor<S> relu(Graph<S>& g, const Tensor<S>& x) {
  Tensor<S> out(x.shape);
  const S* px = x.data();
  S* po = out.data();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = px[i] > S(0) ? px[i] : S(0);
  if (g.recording()) {
    const int ix = g.input_id(x);
    if (ix >= 0)
      out.node = g.record({ix}, n, [ix, sx = x.store](Graph<S>& gr, int self) {
        const auto& go = gr.grad_of(self);
        auto& gx = gr.grad_acc(ix);
        for (std::size_t i = 0; i < gx.size(); ++i)
          if ((*sx)[i] > S(0)) gx[i] += go[i];
      });
  }
  return out;
}

template <typename S>
Tensor<S> sum(Graph<S>& g, const Tensor<S>& x) {
  Tensor<S> out(Shape{});
  S acc(0);
  const S* px = x.data();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) acc += px[i];
  out[0] = acc;
  if (g.recording()) {
    const int ix = g.input_id(x);
    if (ix >= 0)
      out.node = g.record({ix}, 1, [ix](Graph<S>& gr, int self) {
        const S go = gr.grad_of(self)[0];
        auto& gx = gr.grad_acc(ix);
        for (auto& v : gx) v += go;
      });
  }
  return out;
}

template <typename S>
Tensor<S> reshape(Graph<S>& g, const Tensor<S>& x, const Shape& s) {
  check(s.numel() == x.numel(), "reshape: element count mismatch " +
                                    x.shape.str() + " -> " + s.str());
  Tensor<S> out;
  out.shape = s;
  out.store = std::make_shared<std::vector<S>>(*x.store);
  if (g.recording()) {
    const int ix = g.input_id(x);
    if (ix >= 0)
      out.node = g.record({ix}, out.numel(), [ix](Graph<S>& gr, int self) {
        detail::axpy_into(gr.grad_acc(ix), gr.grad_of(self), S(1));
      });
  }
  return out;
}

// Axis permutation: output axis i is input axis perm[i].
template <typename S>
Tensor<S> permute(Graph<S>& g, const Tensor<S>& x, const std::vector<int>& perm) {
  const int r = x.shape.rank();
  check(static_cast<int>(perm.size()) == r, "permute: rank mismatch");
  std::vector<bool> seen(r, false);
  for (int p : perm) {
    check(p >= 0 && p < r && !seen[p], "permute: invalid permutation");
    seen[p] = true;
  }
  Shape os;
  {
    std::array<int64_t, Shape::kMaxRank> d{};
    for (int i = 0; i < r; ++i) d[i] = x.shape[perm[i]];
    switch (r) {
      case 0: os = Shape{}; break;
      case 1: os = Shape{d[0]}; break;
      case 2: os = Shape{d[0], d[1]}; break;
      case 3: os = Shape{d[0], d[1], d[2]}; break;
      case 4: os = Shape{d[0], d[1], d[2], d[3]}; break;
      default: os = Shape{d[0], d[1], d[2], d[3], d[4]}; break;
    }
  }
  // in-strides seen through the output index order
  std::array<int64_t, Shape::kMaxRank> in_strides{};
  {
    std::array<int64_t, Shape::kMaxRank> s{};
    int64_t acc = 1;
    for (int i = r - 1; i >= 0; --i) {
      s[i] = acc;
      acc *= x.shape[i];
    }
    for (int i = 0; i < r; ++i) in_strides[i] = s[perm[i]];
  }
  Tensor<S> out(os);
  const S* px = x.data();
  S* po = out.data();
  const int64_t n = out.numel();
  std::array<int64_t, Shape::kMaxRank> idx{};
  for (int64_t flat = 0; flat < n; ++flat) {
    int64_t src = 0;
    for (int i = 0; i < r; ++i) src += idx[i] * in_strides[i];
    po[flat] = px[src];
    for (int i = r - 1; i >= 0; --i) {
      if (++idx[i] < os[i]) break;
      idx[i] = 0;
    }
  }
  if (g.recording()) {
    const int ix = g.input_id(x);
    if (ix >= 0)
      out.node = g.record({ix}, n, [ix, in_strides, os, r](Graph<S>& gr, int self) {
        const auto& go = gr.grad_of(self);
        auto& gx = gr.grad_acc(ix);
        std::array<int64_t, Shape::kMaxRank> idx{};
        for (std::size_t flat = 0; flat < go.size(); ++flat) {
          int64_t src = 0;
          for (int i = 0; i < r; ++i) src += idx[i] * in_strides[i];
          gx[src] += go[flat];
          for (int i = r - 1; i >= 0; --i) {
            if (++idx[i] < os[i]) break;
            idx[i] = 0;
          }
        }
      });
  }
  return out;
}

// Channel slice [c0, c1) of a rank-5 tensor.
template <typename S>
Tensor<S> slice_channels(Graph<S>& g, const Tensor<S>& x, int64_t c0, int64_t c1) {
  check(x.shape.rank() == 5, "slice_channels: expected rank-5 input");
  const int64_t N = x.shape[0], T = x.shape[1], C = x.shape[2], H = x.shape[3],
                W = x.shape[4];
  check(c0 >= 0 && c0 < c1 && c1 <= C, "slice_channels: bad range");
  Tensor<S> out(Shape{N, T, c1 - c0, H, W});
  const int64_t plane = H * W;
  const S* px = x.data();
  S* po = out.data();
  for (int64_t nt = 0; nt < N * T; ++nt) {
    const S* src = px + (nt * C + c0) * plane;
    S* dst = po + nt * (c1 - c0) * plane;
    std::copy(src, src + (c1 - c0) * plane, dst);
  }
  if (g.recording()) {
    const int ix = g.input_id(x);
    if (ix >= 0)
      out.node = g.record({ix}, out.numel(),
                          [ix, N, T, C, plane, c0, c1](Graph<S>& gr, int self) {
                            const auto& go = gr.grad_of(self);
                            auto& gx = gr.grad_acc(ix);
                            const int64_t cs = c1 - c0;
                            for (int64_t nt = 0; nt < N * T; ++nt) {
                              const S* src = go.data() + nt * cs * plane;
                              S* dst = gx.data() + (nt * C + c0) * plane;
                              for (int64_t i = 0; i < cs * plane; ++i) dst[i] += src[i];
                            }
                          });
  }
  return out;
}

template <typename S>
Tensor<S> concat_channels(Graph<S>& g, const std::vector<Tensor<S>>& parts) {
  check(!parts.empty(), "concat_channels: no inputs");
  const auto& s0 = parts[0].shape;
  check(s0.rank() == 5, "concat_channels: expected rank-5 inputs");
  int64_t C = 0;
  for (const auto& p : parts) {
    check(p.shape.rank() == 5 && p.shape[0] == s0[0] && p.shape[1] == s0[1] &&
              p.shape[3] == s0[3] && p.shape[4] == s0[4],
          "concat_channels: incompatible shapes");
    C += p.shape[2];
  }
  const int64_t N = s0[0], T = s0[1], H = s0[3], W = s0[4], plane = H * W;
  Tensor<S> out(Shape{N, T, C, H, W});
  S* po = out.data();
  int64_t base = 0;
  for (const auto& p : parts) {
    const int64_t pc = p.shape[2];
    const S* src = p.data();
    for (int64_t nt = 0; nt < N * T; ++nt)
      std::copy(src + nt * pc * plane, src + (nt + 1) * pc * plane,
                po + (nt * C + base) * plane);
    base += pc;
  }
  if (g.recording()) {
    std::vector<int> ids(parts.size());
    std::vector<int64_t> widths(parts.size());
    bool any = false;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      ids[i] = g.input_id(parts[i]);
      widths[i] = parts[i].shape[2];
      any = any || ids[i] >= 0;
    }
    if (any)
      out.node = g.record(ids, out.numel(),
                          [ids, widths, N, T, C, plane](Graph<S>& gr, int self) {
                            const auto& go = gr.grad_of(self);
                            int64_t base = 0;
                            for (std::size_t k = 0; k < ids.size(); ++k) {
                              const int64_t pc = widths[k];
                              if (ids[k] >= 0) {
                                auto& gp = gr.grad_acc(ids[k]);
                                for (int64_t nt = 0; nt < N * T; ++nt) {
                                  const S* src = go.data() + (nt * C + base) * plane;
                                  S* dst = gp.data() + nt * pc * plane;
                                  for (int64_t i = 0; i < pc * plane; ++i)
                                    dst[i] += src[i];
                                }
                              }
                              base += pc;
                            }
                          });
  }
  return out;
}

// Single frame t of a clip: [N,T,C,H,W] -> [N,C,H,W].
template <typename S>
Tensor<S> slice_frame(Graph<S>& g, const Tensor<S>& x, int64_t t) {
  check(x.shape.rank() == 5, "slice_frame: expected rank-5 input");
  const int64_t N = x.shape[0], T = x.shape[1], chw = x.shape[2] * x.shape[3] * x.shape[4];
  check(t >= 0 && t < T, "slice_frame: frame index out of range");
  Tensor<S> out(Shape{N, x.shape[2], x.shape[3], x.shape[4]});
  const S* px = x.data();
  S* po = out.data();
  for (int64_t n = 0; n < N; ++n)
    std::copy(px + (n * T + t) * chw, px + (n * T + t + 1) * chw, po + n * chw);
  if (g.recording()) {
    const int ix = g.input_id(x);
    if (ix >= 0)
      out.node = g.record({ix}, out.numel(), [ix, N, T, t, chw](Graph<S>& gr, int self) {
        const auto& go = gr.grad_of(self);
        auto& gx = gr.grad_acc(ix);
        for (int64_t n = 0; n < N; ++n) {
          const S* src = go.data() + n * chw;
          S* dst = gx.data() + (n * T + t) * chw;
          for (int64_t i = 0; i < chw; ++i) dst[i] += src[i];
        }
      });
  }
  return out;
}

// Stack T same-shape [N,C,H,W] frames into [N,T,C,H,W].
template <typename S>
Tensor<S> stack_frames(Graph<S>& g, const std::vector<Tensor<S>>& frames) {
  check(!frames.empty(), "stack_frames: no inputs");
  const auto& s0 = frames[0].shape;
  check(s0.rank() == 4, "stack_frames: expected rank-4 frames");
  for (const auto& f : frames)
    check(f.shape == s0, "stack_frames: inconsistent frame shapes");
  const int64_t N = s0[0], T = static_cast<int64_t>(frames.size()),
                chw = s0[1] * s0[2] * s0[3];
  Tensor<S> out(Shape{N, T, s0[1], s0[2], s0[3]});
  S* po = out.data();
  for (int64_t t = 0; t < T; ++t) {
    const S* src = frames[t].data();
    for (int64_t n = 0; n < N; ++n)
      std::copy(src + n * chw, src + (n + 1) * chw, po + (n * T + t) * chw);
  }
  if (g.recording()) {
    std::vector<int> ids(frames.size());
    bool any = false;
    for (std::size_t i = 0; i < frames.size(); ++i) {
      ids[i] = g.input_id(frames[i]);
      any = any || ids[i] >= 0;
    }
    if (any)
      out.node = g.record(ids, out.numel(), [ids, N, T, chw](Graph<S>& gr, int self) {
        const auto& go = gr.grad_of(self);
        for (int64_t t = 0; t < T; ++t) {
          if (ids[t] < 0) continue;
          auto& gf = gr.grad_acc(ids[t]);
          for (int64_t n = 0; n < N; ++n) {
            const S* src = go.data() + (n * T + t) * chw;
            S* dst = gf.data() + n * chw;
            for (int64_t i = 0; i < chw; ++i) dst[i] += src[i];
          }
        }
      });
  }
  return out;
}

// Mean over each H x W plane: [N,T,C,H,W] -> [N,T,C,1,1].
template <typename S>
Tensor<S> spatial_global_avg_pool(Graph<S>& g, const Tensor<S>& x) {
  check(x.shape.rank() == 5, "spatial_global_avg_pool: expected rank-5 input");
  const int64_t planes = x.shape[0] * x.shape[1] * x.shape[2];
  const int64_t plane = x.shape[3] * x.shape[4];
  Tensor<S> out(Shape{x.shape[0], x.shape[1], x.shape[2], 1, 1});
  const S* px = x.data();
  S* po = out.data();
  const S inv = S(1) / static_cast<S>(plane);
  for (int64_t p = 0; p < planes; ++p) {
    S acc(0);
    const S* row = px + p * plane;
    for (int64_t i = 0; i < plane; ++i) acc += row[i];
    po[p] = acc * inv;
  }
  if (g.recording()) {
    const int ix = g.input_id(x);
    if (ix >= 0)
      out.node = g.record({ix}, planes, [ix, planes, plane, inv](Graph<S>& gr, int self) {
        const auto& go = gr.grad_of(self);
        auto& gx = gr.grad_acc(ix);
        for (int64_t p = 0; p < planes; ++p) {
          const S v = go[p] * inv;
          for (int64_t i = 0; i < plane; ++i) gx[p * plane + i] += v;
        }
      });
  }
  return out;
}

// Cosine similarity of the H*W spatial vectors of a and b, per sample and
// channel: [N,C,H,W] x [N,C,H,W] -> [N,C,1,1]. The denominator is guarded by
// max(|A||B|, 1e-8) so zero-norm planes produce 0 rather than NaN. When the
// Cauchy-Schwarz bound is met with equality (parallel or antiparallel
// vectors, e.g. identical frames) the result is snapped to exactly +/-1.
template <typename S>
Tensor<S> cosine_similarity_per_channel(Graph<S>& g, const Tensor<S>& a,
                                        const Tensor<S>& b) {
  check(a.shape.rank() == 4 && a.shape == b.shape,
        "cosine_similarity: expected equal rank-4 shapes, got " +
            a.shape.str() + " vs " + b.shape.str());
  const int64_t planes = a.shape[0] * a.shape[1];
  const int64_t plane = a.shape[2] * a.shape[3];
  constexpr double kEps = 1e-8;
  Tensor<S> out(Shape{a.shape[0], a.shape[1], 1, 1});
  // Saved for backward: per-plane dot products and the guarded denominator.
  auto saved = std::make_shared<std::vector<S>>(planes * 3);
  const S* pa = a.data();
  const S* pb = b.data();
  S* po = out.data();
  for (int64_t p = 0; p < planes; ++p) {
    const S* va = pa + p * plane;
    const S* vb = pb + p * plane;
    S dab(0), daa(0), dbb(0);
    for (int64_t i = 0; i < plane; ++i) {
      dab += va[i] * vb[i];
      daa += va[i] * va[i];
      dbb += vb[i] * vb[i];
    }
    S denom = std::sqrt(daa) * std::sqrt(dbb);
    if (denom < S(kEps)) denom = S(kEps);
    S c;
    if (dab * dab == daa * dbb && dab != S(0)) {
      c = dab > S(0) ? S(1) : S(-1);
    } else {
      c = dab / denom;
      c = std::clamp(c, S(-1), S(1));
    }
    po[p] = c;
    (*saved)[p * 3 + 0] = daa;
    (*saved)[p * 3 + 1] = dbb;
    (*saved)[p * 3 + 2] = denom;
  }
  if (g.recording()) {
    const int ia = g.input_id(a), ib = g.input_id(b);
    if (ia >= 0 || ib >= 0)
      out.node = g.record(
          {ia, ib}, planes,
          [ia, ib, sa = a.store, sb = b.store, so = out.store, saved, planes,
           plane](Graph<S>& gr, int self) {
            const auto& go = gr.grad_of(self);
            for (int64_t p = 0; p < planes; ++p) {
              const S daa = (*saved)[p * 3 + 0];
              const S dbb = (*saved)[p * 3 + 1];
              const S denom = (*saved)[p * 3 + 2];
              const S c = (*so)[p];
              const S gc = go[p];
              if (gc == S(0)) continue;
              const S* va = sa->data() + p * plane;
              const S* vb = sb->data() + p * plane;
              const bool guarded = std::sqrt(daa) * std::sqrt(dbb) < S(1e-8);
              if (ia >= 0) {
                S* gra = gr.grad_acc(ia).data() + p * plane;
                if (guarded) {
                  for (int64_t i = 0; i < plane; ++i) gra[i] += gc * vb[i] / denom;
                } else {
                  const S ka = c / daa;
                  for (int64_t i = 0; i < plane; ++i)
                    gra[i] += gc * (vb[i] / denom - ka * va[i]);
                }
              }
              if (ib >= 0) {
                S* grb = gr.grad_acc(ib).data() + p * plane;
                if (guarded) {
                  for (int64_t i = 0; i < plane; ++i) grb[i] += gc * va[i] / denom;
                } else {
                  const S kb = c / dbb;
                  for (int64_t i = 0; i < plane; ++i)
                    grb[i] += gc * (va[i] / denom - kb * vb[i]);
                }
              }
            }
          });
  }
  return out;
}

// Fully connected map: x[N,F] * w[M,F]^T + b[M] -> [N,M].
template <typename S>
Tensor<S> linear(Graph<S>& g, const Tensor<S>& x, const Tensor<S>& w,
                 const Tensor<S>& b) {
  check(x.shape.rank() == 2 && w.shape.rank() == 2 && b.shape.rank() == 1,
        "linear: bad ranks");
  const int64_t N = x.shape[0], F = x.shape[1], M = w.shape[0];
  check(w.shape[1] == F, "linear: feature mismatch, input has " +
                             std::to_string(F) + " features, weights expect " +
                             std::to_string(w.shape[1]));
  check(b.shape[0] == M, "linear: bias size mismatch");
  Tensor<S> out(Shape{N, M});
  const S* px = x.data();
  const S* pw = w.data();
  const S* pb = b.data();
  S* po = out.data();
  for (int64_t n = 0; n < N; ++n)
    for (int64_t m = 0; m < M; ++m) {
      S acc = pb[m];
      const S* xr = px + n * F;
      const S* wr = pw + m * F;
      for (int64_t f = 0; f < F; ++f) acc += xr[f] * wr[f];
      po[n * M + m] = acc;
    }
  if (g.recording()) {
    const int ix = g.input_id(x), iw = g.input_id(w), ibi = g.input_id(b);
    if (ix >= 0 || iw >= 0 || ibi >= 0)
      out.node = g.record(
          {ix, iw, ibi}, N * M,
          [ix, iw, ibi, sx = x.store, sw = w.store, N, F, M](Graph<S>& gr, int self) {
            const auto& go = gr.grad_of(self);
            if (ix >= 0) {
              auto& gx = gr.grad_acc(ix);
              for (int64_t n = 0; n < N; ++n)
                for (int64_t m = 0; m < M; ++m) {
                  const S gv = go[n * M + m];
                  const S* wr = sw->data() + m * F;
                  S* xr = gx.data() + n * F;
                  for (int64_t f = 0; f < F; ++f) xr[f] += gv * wr[f];
                }
            }
            if (iw >= 0) {
              auto& gw = gr.grad_acc(iw);
              for (int64_t n = 0; n < N; ++n)
                for (int64_t m = 0; m < M; ++m) {
                  const S gv = go[n * M + m];
                  const S* xr = sx->data() + n * F;
                  S* wr = gw.data() + m * F;
                  for (int64_t f = 0; f < F; ++f) wr[f] += gv * xr[f];
                }
            }
            if (ibi >= 0) {
              auto& gb = gr.grad_acc(ibi);
              for (int64_t n = 0; n < N; ++n)
                for (int64_t m = 0; m < M; ++m) gb[m] += go[n * M + m];
            }
          });
  }
  return out;
}

// Inverted dropout with an explicitly seeded mask. Callers derive the Rng per
// (epoch, batch) so masks are reproducible. Inactive -> identity.
template <typename S>
Tensor<S> dropout(Graph<S>& g, const Tensor<S>& x, double rate, Rng& rng,
                  bool active) {
  check(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0,1)");
  if (!active || rate == 0.0) return x;
  const int64_t n = x.numel();
  auto mask = std::make_shared<std::vector<S>>(n);
  const S keep_inv = S(1.0 / (1.0 - rate));
  for (int64_t i = 0; i < n; ++i)
    (*mask)[i] = rng.uniform() >= rate ? keep_inv : S(0);
  Tensor<S> out(x.shape);
  const S* px = x.data();
  S* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = px[i] * (*mask)[i];
  if (g.recording()) {
    const int ix = g.input_id(x);
    if (ix >= 0)
      out.node = g.record({ix}, n, [ix, mask](Graph<S>& gr, int self) {
        const auto& go = gr.grad_of(self);
        auto& gx = gr.grad_acc(ix);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i] * (*mask)[i];
      });
  }
  return out;
}

// Elementwise max over a set of same-shape tensors, gradient routed to the
// first maximizer (deterministic tie-break). Used for max-consensus.
template <typename S>
Tensor<S> max_elements(Graph<S>& g, const std::vector<Tensor<S>>& xs) {
  check(!xs.empty(), "max_elements: no inputs");
  const Shape s0 = xs[0].shape;
  for (const auto& x : xs) check(x.shape == s0, "max_elements: shape mismatch");
  const int64_t n = s0.numel();
  Tensor<S> out(s0);
  auto argmax = std::make_shared<std::vector<int>>(n, 0);
  S* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = xs[0][i];
  for (std::size_t k = 1; k < xs.size(); ++k) {
    const S* px = xs[k].data();
    for (int64_t i = 0; i < n; ++i)
      if (px[i] > po[i]) {
        po[i] = px[i];
        (*argmax)[i] = static_cast<int>(k);
      }
  }
  if (g.recording()) {
    std::vector<int> ids(xs.size());
    bool any = false;
    for (std::size_t k = 0; k < xs.size(); ++k) {
      ids[k] = g.input_id(xs[k]);
      any = any || ids[k] >= 0;
    }
    if (any)
      out.node = g.record(ids, n, [ids, argmax](Graph<S>& gr, int self) {
        const auto& go = gr.grad_of(self);
        for (std::size_t i = 0; i < go.size(); ++i) {
          const int k = (*argmax)[i];
          if (ids[k] >= 0) gr.grad_acc(ids[k])[i] += go[i];
        }
      });
  }
  return out;
}

}  // namespace img
