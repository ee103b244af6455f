#pragma once

#include "img/graph.hpp"
#include "img/ops.hpp"

namespace img {

// Weights of a 2D convolution applied independently per (n,t) slice.
// Only 1x1 and 3x3 kernels occur; padding preserves spatial extents
// (0 for 1x1, 1 for 3x3).
template <typename S>
struct ConvParams {
  Tensor<S> weights;  // [C_out, C_in, k, k]
  Tensor<S> bias;     // [C_out], may be absent
  bool has_bias = true;
  int pad = 0;

  ConvParams() = default;

  static ConvParams make(int64_t c_out, int64_t c_in, int k, Rng& rng,
                         bool with_bias = true) {
    check(k == 1 || k == 3, "ConvParams: kernel must be 1 or 3");
    ConvParams p;
    const double bound = std::sqrt(6.0 / (static_cast<double>(c_in) * k * k));
    p.weights = Tensor<S>::uniform(Shape{c_out, c_in, k, k}, S(-bound), S(bound), rng);
    p.weights.set_requires_grad();
    p.has_bias = with_bias;
    if (with_bias) {
      p.bias = Tensor<S>::zeros(Shape{c_out});
      p.bias.set_requires_grad();
    }
    p.pad = (k - 1) / 2;
    return p;
  }

  static ConvParams zeros(int64_t c_out, int64_t c_in, int k, bool with_bias = true) {
    ConvParams p;
    p.weights = Tensor<S>::zeros(Shape{c_out, c_in, k, k});
    p.weights.set_requires_grad();
    p.has_bias = with_bias;
    if (with_bias) {
      p.bias = Tensor<S>::zeros(Shape{c_out});
      p.bias.set_requires_grad();
    }
    p.pad = (k - 1) / 2;
    return p;
  }

  // Identity map over channels (square, 1x1 or center-tap 3x3).
  static ConvParams identity(int64_t c, int k) {
    ConvParams p = zeros(c, c, k);
    for (int64_t i = 0; i < c; ++i)
      p.weights.at(i, i, static_cast<int64_t>(k / 2), static_cast<int64_t>(k / 2)) = S(1);
    return p;
  }

  int64_t c_out() const { return weights.shape[0]; }
  int64_t c_in() const { return weights.shape[1]; }
  int k() const { return static_cast<int>(weights.shape[2]); }

  template <typename T>
  ConvParams<T> cast() const {
    ConvParams<T> p;
    p.weights = weights.template cast<T>();
    p.has_bias = has_bias;
    if (has_bias) p.bias = bias.template cast<T>();
    p.pad = pad;
    return p;
  }
};

namespace detail {

// Fixed-order 8-lane dot product. The lane split is independent of input
// size, so results are bit-reproducible while still vectorizing.
template <typename S>
inline S dot8(const S* a, const S* b, int64_t n) {
  S acc[8] = {S(0), S(0), S(0), S(0), S(0), S(0), S(0), S(0)};
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (int l = 0; l < 8; ++l) acc[l] += a[i + l] * b[i + l];
  for (; i < n; ++i) acc[i % 8] += a[i] * b[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) +
         ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

// Per-slice forward: in [C_in,H,W] -> out [C_out,H,W], zero padding.
template <typename S>
void conv2d_slice_fwd(const S* in, S* out, const S* w, const S* bias,
                      int64_t c_in, int64_t c_out, int64_t H, int64_t W, int k,
                      int pad) {
  const int64_t plane = H * W;
  for (int64_t co = 0; co < c_out; ++co) {
    S* op = out + co * plane;
    const S b = bias ? bias[co] : S(0);
    for (int64_t i = 0; i < plane; ++i) op[i] = b;
    for (int64_t ci = 0; ci < c_in; ++ci) {
      const S* ip = in + ci * plane;
      const S* wp = w + (co * c_in + ci) * k * k;
      if (k == 1) {
        const S wv = wp[0];
        for (int64_t i = 0; i < plane; ++i) op[i] += wv * ip[i];
      } else {
        for (int kh = 0; kh < k; ++kh)
          for (int kw = 0; kw < k; ++kw) {
            const S wv = wp[kh * k + kw];
            const int64_t dh = kh - pad, dw = kw - pad;
            const int64_t oh0 = std::max<int64_t>(0, -dh);
            const int64_t oh1 = std::min<int64_t>(H, H - dh);
            const int64_t ow0 = std::max<int64_t>(0, -dw);
            const int64_t ow1 = std::min<int64_t>(W, W - dw);
            for (int64_t oh = oh0; oh < oh1; ++oh) {
              S* orow = op + oh * W;
              const S* irow = ip + (oh + dh) * W + dw;
              for (int64_t ow = ow0; ow < ow1; ++ow) orow[ow] += wv * irow[ow];
            }
          }
      }
    }
  }
}

template <typename S>
void conv2d_slice_bwd_input(S* din, const S* dout, const S* w, int64_t c_in,
                            int64_t c_out, int64_t H, int64_t W, int k, int pad) {
  const int64_t plane = H * W;
  for (int64_t co = 0; co < c_out; ++co) {
    const S* gp = dout + co * plane;
    for (int64_t ci = 0; ci < c_in; ++ci) {
      S* dp = din + ci * plane;
      const S* wp = w + (co * c_in + ci) * k * k;
      if (k == 1) {
        const S wv = wp[0];
        for (int64_t i = 0; i < plane; ++i) dp[i] += wv * gp[i];
      } else {
        for (int kh = 0; kh < k; ++kh)
          for (int kw = 0; kw < k; ++kw) {
            const S wv = wp[kh * k + kw];
            const int64_t dh = kh - pad, dw = kw - pad;
            const int64_t oh0 = std::max<int64_t>(0, -dh);
            const int64_t oh1 = std::min<int64_t>(H, H - dh);
            const int64_t ow0 = std::max<int64_t>(0, -dw);
            const int64_t ow1 = std::min<int64_t>(W, W - dw);
            for (int64_t oh = oh0; oh < oh1; ++oh) {
              const S* grow = gp + oh * W;
              S* drow = dp + (oh + dh) * W + dw;
              for (int64_t ow = ow0; ow < ow1; ++ow) drow[ow] += wv * grow[ow];
            }
          }
      }
    }
  }
}

template <typename S>
void conv2d_slice_bwd_weights(S* dw, S* dbias, const S* in, const S* dout,
                              int64_t c_in, int64_t c_out, int64_t H, int64_t W,
                              int k, int pad) {
  const int64_t plane = H * W;
  for (int64_t co = 0; co < c_out; ++co) {
    const S* gp = dout + co * plane;
    if (dbias) {
      S acc(0);
      for (int64_t i = 0; i < plane; ++i) acc += gp[i];
      dbias[co] += acc;
    }
    for (int64_t ci = 0; ci < c_in; ++ci) {
      const S* ip = in + ci * plane;
      S* wp = dw + (co * c_in + ci) * k * k;
      if (k == 1) {
        wp[0] += dot8(gp, ip, plane);
      } else {
        for (int kh = 0; kh < k; ++kh)
          for (int kw = 0; kw < k; ++kw) {
            const int64_t dh = kh - pad, dw_ = kw - pad;
            const int64_t oh0 = std::max<int64_t>(0, -dh);
            const int64_t oh1 = std::min<int64_t>(H, H - dh);
            const int64_t ow0 = std::max<int64_t>(0, -dw_);
            const int64_t ow1 = std::min<int64_t>(W, W - dw_);
            S acc(0);
            for (int64_t oh = oh0; oh < oh1; ++oh)
              acc += dot8(gp + oh * W + ow0, ip + (oh + dh) * W + dw_ + ow0,
                          ow1 - ow0);
            wp[kh * k + kw] += acc;
          }
      }
    }
  }
}

}  // namespace detail

// 2D convolution applied independently to each (n,t) slice of a clip:
// [N,T,C_in,H,W] -> [N,T,C_out,H,W], spatial extents preserved.
template <typename S>
Tensor<S> conv2d(Graph<S>& g, const Tensor<S>& x, ConvParams<S>& p) {
  check(x.shape.rank() == 5, "conv2d: expected rank-5 input, got " + x.shape.str());
  const int64_t N = x.shape[0], T = x.shape[1], C = x.shape[2], H = x.shape[3],
                W = x.shape[4];
  check(C == p.c_in(), "conv2d: input has " + std::to_string(C) +
                           " channels but weights expect " +
                           std::to_string(p.c_in()));
  const int64_t Co = p.c_out();
  const int k = p.k();
  check(p.pad == (k - 1) / 2, "conv2d: padding must preserve spatial extents");
  Tensor<S> out(Shape{N, T, Co, H, W});
  const int64_t in_sl = C * H * W, out_sl = Co * H * W;
  const S* bias = p.has_bias ? p.bias.data() : nullptr;
  for (int64_t nt = 0; nt < N * T; ++nt)
    detail::conv2d_slice_fwd(x.data() + nt * in_sl, out.data() + nt * out_sl,
                             p.weights.data(), bias, C, Co, H, W, k, p.pad);
  if (g.recording()) {
    const int ix = g.input_id(x);
    const int iw = g.input_id(p.weights);
    const int ib = p.has_bias ? g.input_id(p.bias) : -1;
    if (ix >= 0 || iw >= 0 || ib >= 0)
      out.node = g.record(
          {ix, iw, ib}, out.numel(),
          [ix, iw, ib, sx = x.store, sw = p.weights.store, N, T, C, Co, H, W, k,
           pad = p.pad, in_sl, out_sl](Graph<S>& gr, int self) {
            const auto& go = gr.grad_of(self);
            if (ix >= 0) {
              auto& gx = gr.grad_acc(ix);
              for (int64_t nt = 0; nt < N * T; ++nt)
                detail::conv2d_slice_bwd_input(gx.data() + nt * in_sl,
                                               go.data() + nt * out_sl,
                                               sw->data(), C, Co, H, W, k, pad);
            }
            if (iw >= 0 || ib >= 0) {
              S* dw = iw >= 0 ? gr.grad_acc(iw).data() : nullptr;
              std::vector<S> scratch;
              if (!dw) {
                scratch.assign(Co * C * k * k, S(0));
                dw = scratch.data();
              }
              S* db = ib >= 0 ? gr.grad_acc(ib).data() : nullptr;
              for (int64_t nt = 0; nt < N * T; ++nt)
                detail::conv2d_slice_bwd_weights(dw, db, sx->data() + nt * in_sl,
                                                 go.data() + nt * out_sl, C, Co,
                                                 H, W, k, pad);
            }
          });
  }
  return out;
}

// Per-channel temporal convolution with a length-3 kernel and zero padding of
// one frame at both ends:
//   out[n,t,c,h,w] = sum_j taps[c,j] * x[n, t+j-1, c, h, w],  j in {0,1,2}
// where out-of-range frames read as zero. taps[c] = (0,0,1) shifts channel c
// one frame left, (1,0,0) one frame right, (0,1,0) leaves it unchanged.
template <typename S>
Tensor<S> temporal_depthwise_conv(Graph<S>& g, const Tensor<S>& x,
                                  const Tensor<S>& taps) {
  check(x.shape.rank() == 5, "temporal_depthwise_conv: expected rank-5 input");
  check(taps.shape.rank() == 2 && taps.shape[1] == 3,
        "temporal_depthwise_conv: taps must be [C,3]");
  const int64_t N = x.shape[0], T = x.shape[1], C = x.shape[2],
                plane = x.shape[3] * x.shape[4];
  check(taps.shape[0] == C, "temporal_depthwise_conv: kernel has " +
                                std::to_string(taps.shape[0]) +
                                " channels but input has " + std::to_string(C));
  Tensor<S> out(x.shape);
  const S* px = x.data();
  const S* pk = taps.data();
  S* po = out.data();
  auto xoff = [&](int64_t n, int64_t t, int64_t c) {
    return ((n * T + t) * C + c) * plane;
  };
  for (int64_t n = 0; n < N; ++n)
    for (int64_t t = 0; t < T; ++t)
      for (int64_t c = 0; c < C; ++c) {
        S* orow = po + xoff(n, t, c);
        for (int64_t i = 0; i < plane; ++i) orow[i] = S(0);
        for (int j = 0; j < 3; ++j) {
          const int64_t ts = t + j - 1;
          if (ts < 0 || ts >= T) continue;
          const S kv = pk[c * 3 + j];
          if (kv == S(0)) continue;
          const S* irow = px + xoff(n, ts, c);
          for (int64_t i = 0; i < plane; ++i) orow[i] += kv * irow[i];
        }
      }
  if (g.recording()) {
    const int ix = g.input_id(x);
    const int ik = g.input_id(taps);
    if (ix >= 0 || ik >= 0)
      out.node = g.record(
          {ix, ik}, out.numel(),
          [ix, ik, sx = x.store, sk = taps.store, N, T, C, plane](Graph<S>& gr,
                                                                  int self) {
            const auto& go = gr.grad_of(self);
            auto off = [&](int64_t n, int64_t t, int64_t c) {
              return ((n * T + t) * C + c) * plane;
            };
            if (ix >= 0) {
              auto& gx = gr.grad_acc(ix);
              for (int64_t n = 0; n < N; ++n)
                for (int64_t t = 0; t < T; ++t)
                  for (int64_t c = 0; c < C; ++c) {
                    const S* grow = go.data() + off(n, t, c);
                    for (int j = 0; j < 3; ++j) {
                      const int64_t ts = t + j - 1;
                      if (ts < 0 || ts >= T) continue;
                      const S kv = (*sk)[c * 3 + j];
                      if (kv == S(0)) continue;
                      S* drow = gx.data() + off(n, ts, c);
                      for (int64_t i = 0; i < plane; ++i) drow[i] += kv * grow[i];
                    }
                  }
            }
            if (ik >= 0) {
              auto& gk = gr.grad_acc(ik);
              for (int64_t n = 0; n < N; ++n)
                for (int64_t t = 0; t < T; ++t)
                  for (int64_t c = 0; c < C; ++c) {
                    const S* grow = go.data() + off(n, t, c);
                    for (int j = 0; j < 3; ++j) {
                      const int64_t ts = t + j - 1;
                      if (ts < 0 || ts >= T) continue;
                      gk[c * 3 + j] += detail::dot8(grow, sx->data() + off(n, ts, c), plane);
                    }
                  }
            }
          });
  }
  return out;
}

// Channel-mixing temporal convolution (kernel length 3, zero padding), the
// plain 1D temporal convolution used as the shift-module baseline:
//   out[n,t,co,h,w] = sum_ci sum_j w[co,ci,j] * x[n, t+j-1, ci, h, w]
template <typename S>
Tensor<S> temporal_mix_conv(Graph<S>& g, const Tensor<S>& x, const Tensor<S>& w) {
  check(x.shape.rank() == 5, "temporal_mix_conv: expected rank-5 input");
  check(w.shape.rank() == 3 && w.shape[2] == 3, "temporal_mix_conv: weights must be [C,C,3]");
  const int64_t N = x.shape[0], T = x.shape[1], C = x.shape[2],
                plane = x.shape[3] * x.shape[4];
  check(w.shape[0] == C && w.shape[1] == C,
        "temporal_mix_conv: weight channels " + std::to_string(w.shape[0]) +
            " do not match input channels " + std::to_string(C));
  Tensor<S> out(x.shape);
  const S* px = x.data();
  const S* pw = w.data();
  S* po = out.data();
  auto off = [&](int64_t n, int64_t t, int64_t c) {
    return ((n * T + t) * C + c) * plane;
  };
  for (int64_t n = 0; n < N; ++n)
    for (int64_t t = 0; t < T; ++t)
      for (int64_t co = 0; co < C; ++co) {
        S* orow = po + off(n, t, co);
        for (int64_t i = 0; i < plane; ++i) orow[i] = S(0);
        for (int64_t ci = 0; ci < C; ++ci)
          for (int j = 0; j < 3; ++j) {
            const int64_t ts = t + j - 1;
            if (ts < 0 || ts >= T) continue;
            const S wv = pw[(co * C + ci) * 3 + j];
            const S* irow = px + off(n, ts, ci);
            for (int64_t i = 0; i < plane; ++i) orow[i] += wv * irow[i];
          }
      }
  if (g.recording()) {
    const int ix = g.input_id(x);
    const int iw = g.input_id(w);
    if (ix >= 0 || iw >= 0)
      out.node = g.record(
          {ix, iw}, out.numel(),
          [ix, iw, sx = x.store, sw = w.store, N, T, C, plane](Graph<S>& gr,
                                                               int self) {
            const auto& go = gr.grad_of(self);
            auto off = [&](int64_t n, int64_t t, int64_t c) {
              return ((n * T + t) * C + c) * plane;
            };
            if (ix >= 0) {
              auto& gx = gr.grad_acc(ix);
              for (int64_t n = 0; n < N; ++n)
                for (int64_t t = 0; t < T; ++t)
                  for (int64_t co = 0; co < C; ++co) {
                    const S* grow = go.data() + off(n, t, co);
                    for (int64_t ci = 0; ci < C; ++ci)
                      for (int j = 0; j < 3; ++j) {
                        const int64_t ts = t + j - 1;
                        if (ts < 0 || ts >= T) continue;
                        const S wv = (*sw)[(co * C + ci) * 3 + j];
                        S* drow = gx.data() + off(n, ts, ci);
                        for (int64_t i = 0; i < plane; ++i) drow[i] += wv * grow[i];
                      }
                  }
            }
            if (iw >= 0) {
              auto& gw = gr.grad_acc(iw);
              for (int64_t n = 0; n < N; ++n)
                for (int64_t t = 0; t < T; ++t)
                  for (int64_t co = 0; co < C; ++co) {
                    const S* grow = go.data() + off(n, t, co);
                    for (int64_t ci = 0; ci < C; ++ci)
                      for (int j = 0; j < 3; ++j) {
                        const int64_t ts = t + j - 1;
                        if (ts < 0 || ts >= T) continue;
                        gw[(co * C + ci) * 3 + j] +=
                            detail::dot8(grow, sx->data() + off(n, ts, ci), plane);
                      }
                  }
            }
          });
  }
  return out;
}

}  // namespace img
