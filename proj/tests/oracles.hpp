// Independent reference implementations used only by tests: straight
// transliterations of the defining sums, kept free of any code shared with
// the library's compute paths.
#pragma once

#include <cmath>
#include <vector>

#include "img/tensor.hpp"

namespace oracle {

// Sliding-window 2D convolution per (n,t) slice, zero padding, stride 1.
template <typename S>
img::Tensor<S> conv2d_naive(const img::Tensor<S>& x, const img::Tensor<S>& w,
                            const img::Tensor<S>& bias, bool has_bias, int pad) {
  const int64_t N = x.shape[0], T = x.shape[1], Ci = x.shape[2], H = x.shape[3],
                W = x.shape[4];
  const int64_t Co = w.shape[0], k = w.shape[2];
  img::Tensor<S> out(img::Shape{N, T, Co, H, W});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t t = 0; t < T; ++t)
      for (int64_t co = 0; co < Co; ++co)
        for (int64_t oh = 0; oh < H; ++oh)
          for (int64_t ow = 0; ow < W; ++ow) {
            S acc = has_bias ? bias[co] : S(0);
            for (int64_t ci = 0; ci < Ci; ++ci)
              for (int64_t kh = 0; kh < k; ++kh)
                for (int64_t kw = 0; kw < k; ++kw) {
                  const int64_t ih = oh + kh - pad, iw = ow + kw - pad;
                  if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                  acc += w.at(co, ci, kh, kw) * x.at(n, t, ci, ih, iw);
                }
            out.at(n, t, co, oh, ow) = acc;
          }
  return out;
}

// Per-channel temporal convolution, kernel length 3, zero padding.
template <typename S>
img::Tensor<S> temporal_conv_naive(const img::Tensor<S>& x,
                                   const img::Tensor<S>& taps) {
  const int64_t N = x.shape[0], T = x.shape[1], C = x.shape[2], H = x.shape[3],
                W = x.shape[4];
  img::Tensor<S> out(x.shape);
  for (int64_t n = 0; n < N; ++n)
    for (int64_t t = 0; t < T; ++t)
      for (int64_t c = 0; c < C; ++c)
        for (int64_t h = 0; h < H; ++h)
          for (int64_t w = 0; w < W; ++w) {
            S acc(0);
            for (int64_t j = 0; j < 3; ++j) {
              const int64_t ts = t + j - 1;
              if (ts < 0 || ts >= T) continue;
              acc += taps.at(c, j) * x.at(n, ts, c, h, w);
            }
            out.at(n, t, c, h, w) = acc;
          }
  return out;
}

// Channel-mixing temporal convolution, kernel length 3, zero padding.
template <typename S>
img::Tensor<S> temporal_mix_naive(const img::Tensor<S>& x,
                                  const img::Tensor<S>& w) {
  const int64_t N = x.shape[0], T = x.shape[1], C = x.shape[2], H = x.shape[3],
                W = x.shape[4];
  img::Tensor<S> out(x.shape);
  for (int64_t n = 0; n < N; ++n)
    for (int64_t t = 0; t < T; ++t)
      for (int64_t co = 0; co < C; ++co)
        for (int64_t h = 0; h < H; ++h)
          for (int64_t ww = 0; ww < W; ++ww) {
            S acc(0);
            for (int64_t ci = 0; ci < C; ++ci)
              for (int64_t j = 0; j < 3; ++j) {
                const int64_t ts = t + j - 1;
                if (ts < 0 || ts >= T) continue;
                acc += w.at(co, ci, j) * x.at(n, ts, ci, h, ww);
              }
            out.at(n, t, co, h, ww) = acc;
          }
  return out;
}

// Plane mean by direct accumulation.
template <typename S>
img::Tensor<S> avg_pool_naive(const img::Tensor<S>& x) {
  const int64_t N = x.shape[0], T = x.shape[1], C = x.shape[2], H = x.shape[3],
                W = x.shape[4];
  img::Tensor<S> out(img::Shape{N, T, C, 1, 1});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t t = 0; t < T; ++t)
      for (int64_t c = 0; c < C; ++c) {
        S acc(0);
        for (int64_t h = 0; h < H; ++h)
          for (int64_t w = 0; w < W; ++w) acc += x.at(n, t, c, h, w);
        out.at(n, t, c, int64_t(0), int64_t(0)) = acc / static_cast<S>(H * W);
      }
  return out;
}

// Cosine similarity of two flat vectors by the direct formula.
template <typename S>
double cosine_naive(const std::vector<S>& a, const std::vector<S>& b) {
  double dab = 0, daa = 0, dbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dab += static_cast<double>(a[i]) * b[i];
    daa += static_cast<double>(a[i]) * a[i];
    dbb += static_cast<double>(b[i]) * b[i];
  }
  const double denom = std::max(std::sqrt(daa) * std::sqrt(dbb), 1e-8);
  return dab / denom;
}

}  // namespace oracle
