#pragma once

#include <string>

#include "img/conv.hpp"
#include "img/graph.hpp"

namespace img {

// Fixed frame shift: the first C/8 channels move one frame toward the past
// (frame t takes frame t+1), the next C/8 one frame toward the future, and
// the remaining 3/4 stay. Vacated boundary frames are zero-filled, matching
// what the zero-padded convolution form produces.
template <typename S>
Tensor<S> tsm_shift(Graph<S>& g, const Tensor<S>& x) {
  check(x.shape.rank() == 5, "tsm_shift: expected rank-5 input");
  const int64_t N = x.shape[0], T = x.shape[1], C = x.shape[2],
                plane = x.shape[3] * x.shape[4];
  check(C % 8 == 0, "tsm_shift: channel count " + std::to_string(C) +
                        " is not divisible by 8");
  const int64_t c_left = C / 8, c_right = C / 4;
  Tensor<S> out(x.shape);
  const S* px = x.data();
  S* po = out.data();
  auto off = [&](int64_t n, int64_t t, int64_t c) {
    return ((n * T + t) * C + c) * plane;
  };
  for (int64_t n = 0; n < N; ++n)
    for (int64_t t = 0; t < T; ++t)
      for (int64_t c = 0; c < C; ++c) {
        int64_t ts = t;
        if (c < c_left)
          ts = t + 1;  // left shift
        else if (c < c_right)
          ts = t - 1;  // right shift
        S* orow = po + off(n, t, c);
        if (ts < 0 || ts >= T) {
          for (int64_t i = 0; i < plane; ++i) orow[i] = S(0);
        } else {
          const S* irow = px + off(n, ts, c);
          for (int64_t i = 0; i < plane; ++i) orow[i] = irow[i];
        }
      }
  if (g.recording()) {
    const int ix = g.input_id(x);
    if (ix >= 0)
      out.node = g.record({ix}, out.numel(),
                          [ix, N, T, C, plane, c_left, c_right](Graph<S>& gr, int self) {
                            const auto& go = gr.grad_of(self);
                            auto& gx = gr.grad_acc(ix);
                            auto off = [&](int64_t n, int64_t t, int64_t c) {
                              return ((n * T + t) * C + c) * plane;
                            };
                            for (int64_t n = 0; n < N; ++n)
                              for (int64_t t = 0; t < T; ++t)
                                for (int64_t c = 0; c < C; ++c) {
                                  int64_t ts = t;
                                  if (c < c_left)
                                    ts = t + 1;
                                  else if (c < c_right)
                                    ts = t - 1;
                                  if (ts < 0 || ts >= T) continue;
                                  const S* grow = go.data() + off(n, t, c);
                                  S* drow = gx.data() + off(n, ts, c);
                                  for (int64_t i = 0; i < plane; ++i)
                                    drow[i] += grow[i];
                                }
                          });
  }
  return out;
}

// The [C,3] tap table whose depthwise temporal convolution reproduces
// tsm_shift exactly: rows (0,0,1) for the left-shift eighth, (1,0,0) for the
// right-shift eighth, (0,1,0) elsewhere.
template <typename S>
Tensor<S> make_tsm_kernel(int64_t c) {
  check(c % 8 == 0, "make_tsm_kernel: channel count " + std::to_string(c) +
                        " is not divisible by 8");
  Tensor<S> taps = Tensor<S>::zeros(Shape{c, 3});
  for (int64_t i = 0; i < c; ++i) {
    if (i < c / 8)
      taps.at(i, int64_t(2)) = S(1);
    else if (i < c / 4)
      taps.at(i, int64_t(0)) = S(1);
    else
      taps.at(i, int64_t(1)) = S(1);
  }
  return taps;
}

enum class ShiftMode {
  kConv1d,      // plain channel-mixing temporal convolution (baseline)
  kRandom,      // depthwise taps, random init, trainable
  kFrozen,      // depthwise taps, fixed-shift init, not trainable
  kPretrained,  // depthwise taps, fixed-shift init, trainable
  kIdentity,    // depthwise taps pinned to (0,1,0): no temporal mixing
};

inline const char* shift_mode_name(ShiftMode m) {
  switch (m) {
    case ShiftMode::kConv1d: return "conv1d";
    case ShiftMode::kRandom: return "random";
    case ShiftMode::kFrozen: return "frozen";
    case ShiftMode::kPretrained: return "pretrained";
    case ShiftMode::kIdentity: return "identity";
  }
  return "?";
}

inline ShiftMode shift_mode_from_name(const std::string& s) {
  if (s == "conv1d") return ShiftMode::kConv1d;
  if (s == "random") return ShiftMode::kRandom;
  if (s == "frozen") return ShiftMode::kFrozen;
  if (s == "pretrained") return ShiftMode::kPretrained;
  if (s == "identity") return ShiftMode::kIdentity;
  throw std::invalid_argument("unknown shift mode '" + s + "'");
}

// Learnable per-channel temporal rearrangement. In the depthwise modes this
// is a [C,3] tap table fed to temporal_depthwise_conv; the conv1d baseline
// instead carries a full [C,C,3] channel-mixing kernel.
template <typename S>
struct ShiftKernel {
  ShiftMode mode = ShiftMode::kPretrained;
  Tensor<S> taps;  // [C,3]
  Tensor<S> mix;   // [C,C,3], conv1d mode only
  bool trainable = true;

  static ShiftKernel make(ShiftMode mode, int64_t c, Rng& rng) {
    ShiftKernel k;
    k.mode = mode;
    switch (mode) {
      case ShiftMode::kConv1d: {
        const double bound = std::sqrt(1.0 / (3.0 * static_cast<double>(c)));
        k.mix = Tensor<S>::uniform(Shape{c, c, 3}, S(-bound), S(bound), rng);
        k.mix.set_requires_grad();
        k.trainable = true;
        break;
      }
      case ShiftMode::kRandom: {
        const double bound = 1.0 / std::sqrt(3.0);
        k.taps = Tensor<S>::uniform(Shape{c, 3}, S(-bound), S(bound), rng);
        k.taps.set_requires_grad();
        k.trainable = true;
        break;
      }
      case ShiftMode::kFrozen:
        k.taps = make_tsm_kernel<S>(c);
        k.trainable = false;
        break;
      case ShiftMode::kPretrained:
        k.taps = make_tsm_kernel<S>(c);
        k.taps.set_requires_grad();
        k.trainable = true;
        break;
      case ShiftMode::kIdentity:
        k.taps = Tensor<S>::zeros(Shape{c, 3});
        for (int64_t i = 0; i < c; ++i) k.taps.at(i, int64_t(1)) = S(1);
        k.trainable = false;
        break;
    }
    return k;
  }

  int64_t channels() const {
    return mode == ShiftMode::kConv1d ? mix.shape[0] : taps.shape[0];
  }

  template <typename T>
  ShiftKernel<T> cast() const {
    ShiftKernel<T> k;
    k.mode = mode;
    if (taps.store) k.taps = taps.template cast<T>();
    if (mix.store) k.mix = mix.template cast<T>();
    k.trainable = trainable;
    return k;
  }
};

// Apply the shift. Depthwise modes delegate to temporal_depthwise_conv, the
// conv1d baseline to the channel-mixing form; both zero-pad one frame.
template <typename S>
Tensor<S> adaptive_shift(Graph<S>& g, const Tensor<S>& x, ShiftKernel<S>& k) {
  check(x.shape.rank() == 5, "adaptive_shift: expected rank-5 input");
  check(k.channels() == x.shape[2],
        "adaptive_shift: kernel channels " + std::to_string(k.channels()) +
            " do not match input channels " + std::to_string(x.shape[2]));
  if (k.mode == ShiftMode::kConv1d) return temporal_mix_conv(g, x, k.mix);
  return temporal_depthwise_conv(g, x, k.taps);
}

}  // namespace img
