#pragma once

#include "img/conv.hpp"
#include "img/ops.hpp"
#include "img/shift.hpp"

namespace img {

// Cascaded long-range integration: the input is split into four channel
// slices; slice 0 passes through, each further slice goes through its own
// 3x3 convolution followed by a shift, taking the previous slice's output as
// a residual. The cascade widens the temporal and spatial footprint slice by
// slice. The cascade order is load-bearing and must not be re-ordered.
template <typename S>
struct ClimParams {
  static constexpr int kSlices = 4;
  std::array<ConvParams<S>, 3> conv_spt;  // 3x3, C/4 -> C/4, untied
  std::array<ShiftKernel<S>, 3> shift;    // one per processed slice

  static ClimParams make(int64_t c, Rng& rng,
                         std::array<ShiftMode, 3> modes = {
                             ShiftMode::kPretrained, ShiftMode::kPretrained,
                             ShiftMode::kPretrained}) {
    check(c % 32 == 0, "clim: channel count " + std::to_string(c) +
                           " must be divisible by 32 (4 slices of shiftable "
                           "eighths)");
    const int64_t cs = c / 4;
    ClimParams p;
    for (int i = 0; i < 3; ++i) {
      p.conv_spt[i] = ConvParams<S>::make(cs, cs, 3, rng);
      p.shift[i] = ShiftKernel<S>::make(modes[i], cs, rng);
    }
    return p;
  }

  template <typename T>
  ClimParams<T> cast() const {
    ClimParams<T> p;
    for (int i = 0; i < 3; ++i) {
      p.conv_spt[i] = conv_spt[i].template cast<T>();
      p.shift[i] = shift[i].template cast<T>();
    }
    return p;
  }
};

template <typename S>
Tensor<S> clim_forward(Graph<S>& g, const Tensor<S>& x, ClimParams<S>& params) {
  check(x.shape.rank() == 5, "clim: expected rank-5 input");
  const int64_t c = x.shape[2];
  check(c % 32 == 0, "clim: channel count " + std::to_string(c) +
                         " must be divisible by 32");
  const int64_t cs = c / 4;
  std::vector<Tensor<S>> out;
  out.reserve(4);
  out.push_back(slice_channels(g, x, 0, cs));  // slice 0: passthrough
  Tensor<S> prev;
  for (int i = 1; i < 4; ++i) {
    Tensor<S> xi = slice_channels(g, x, i * cs, (i + 1) * cs);
    Tensor<S> in = i == 1 ? xi : add(g, xi, prev);
    Tensor<S> yi = adaptive_shift(g, conv2d(g, in, params.conv_spt[i - 1]),
                                  params.shift[i - 1]);
    out.push_back(yi);
    prev = yi;
  }
  return concat_channels(g, out);
}

struct ClimProbeResult {
  // Output frames whose values change when a single input frame is
  // perturbed, per slice.
  std::array<std::vector<int64_t>, 4> frames;
  std::array<int64_t, 4> temporal_width;
  // Bounding-box extents of the change from a single-pixel perturbation.
  std::array<int64_t, 4> spatial_height;
  std::array<int64_t, 4> spatial_width;
};

// Jacobian sparsity probe. The module is affine, so the footprint of a
// perturbation is exactly the difference of two forward passes.
template <typename S>
ClimProbeResult temporal_dependency_probe(ClimParams<S>& params, int64_t t0,
                                          int64_t t_len = 9, int64_t hw = 9) {
  const int64_t c = params.conv_spt[0].c_in() * 4;
  check(t0 >= 0 && t0 < t_len, "probe: frame index out of range");
  Graph<S> g(false);

  Tensor<S> base(Shape{1, t_len, c, hw, hw});
  Tensor<S> y0 = clim_forward(g, base, params);

  ClimProbeResult res{};
  const int64_t cs = c / 4;
  const int64_t plane = hw * hw;
  const double tol = 1e-12;

  // temporal probe: bump every value of frame t0
  {
    Tensor<S> x = base.clone();
    for (int64_t i = 0; i < c * plane; ++i)
      (*x.store)[t0 * c * plane + i] += S(1);
    Tensor<S> y1 = clim_forward(g, x, params);
    for (int s = 0; s < 4; ++s) {
      for (int64_t t = 0; t < t_len; ++t) {
        bool hit = false;
        for (int64_t ch = s * cs; ch < (s + 1) * cs && !hit; ++ch)
          for (int64_t i = 0; i < plane; ++i) {
            const int64_t off = (t * c + ch) * plane + i;
            if (std::abs(static_cast<double>(y1[off] - y0[off])) > tol) {
              hit = true;
              break;
            }
          }
        if (hit) res.frames[s].push_back(t);
      }
      res.temporal_width[s] =
          res.frames[s].empty()
              ? 0
              : res.frames[s].back() - res.frames[s].front() + 1;
    }
  }

  // spatial probe: bump one center pixel of frame t0, all channels
  {
    Tensor<S> x = base.clone();
    const int64_t ph = hw / 2, pw = hw / 2;
    for (int64_t ch = 0; ch < c; ++ch)
      (*x.store)[((t0 * c + ch) * hw + ph) * hw + pw] += S(1);
    Tensor<S> y1 = clim_forward(g, x, params);
    for (int s = 0; s < 4; ++s) {
      int64_t hmin = hw, hmax = -1, wmin = hw, wmax = -1;
      for (int64_t t = 0; t < t_len; ++t)
        for (int64_t ch = s * cs; ch < (s + 1) * cs; ++ch)
          for (int64_t h = 0; h < hw; ++h)
            for (int64_t w = 0; w < hw; ++w) {
              const int64_t off = ((t * c + ch) * hw + h) * hw + w;
              if (std::abs(static_cast<double>(y1[off] - y0[off])) > tol) {
                hmin = std::min(hmin, h);
                hmax = std::max(hmax, h);
                wmin = std::min(wmin, w);
                wmax = std::max(wmax, w);
              }
            }
      res.spatial_height[s] = hmax < hmin ? 0 : hmax - hmin + 1;
      res.spatial_width[s] = wmax < wmin ? 0 : wmax - wmin + 1;
    }
  }
  return res;
}

}  // namespace img
