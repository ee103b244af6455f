#include "img/clim.hpp"

#include <gtest/gtest.h>

#include <cstring>

#include "img/gradcheck.hpp"
#include "oracles.hpp"

using namespace img;

TEST(Clim, RejectsChannelsNotDivisibleBy32) {
  Rng rng(1);
  EXPECT_THROW(ClimParams<double>::make(24, rng), std::invalid_argument);
  ClimParams<double> p = ClimParams<double>::make(32, rng);
  Graph<double> g(false);
  Tensor<double> x(Shape{1, 2, 24, 2, 2});
  EXPECT_THROW(clim_forward(g, x, p), std::invalid_argument);
}

TEST(Clim, SliceZeroPassesThroughBitwise) {
  Rng rng(2);
  ClimParams<double> p = ClimParams<double>::make(32, rng);
  Tensor<double> x = Tensor<double>::normal(Shape{2, 4, 32, 3, 3}, 0, 1, rng);
  Graph<double> g(false);
  auto y = clim_forward(g, x, p);
  ASSERT_TRUE(y.shape == x.shape);
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t t = 0; t < 4; ++t)
      for (int64_t c = 0; c < 8; ++c)
        for (int64_t h = 0; h < 3; ++h)
          for (int64_t w = 0; w < 3; ++w)
            EXPECT_EQ(std::memcmp(&y.at(n, t, c, h, w), &x.at(n, t, c, h, w),
                                  sizeof(double)), 0);
}

TEST(Clim, ZeroConvolutionsAnnihilateProcessedSlices) {
  Rng rng(3);
  ClimParams<double> p = ClimParams<double>::make(32, rng);
  for (auto& conv : p.conv_spt) {
    for (auto& v : *conv.weights.store) v = 0.0;
    for (auto& v : *conv.bias.store) v = 0.0;
  }
  Tensor<double> x = Tensor<double>::normal(Shape{1, 3, 32, 2, 2}, 0, 1, rng);
  Graph<double> g(false);
  auto y = clim_forward(g, x, p);
  for (int64_t t = 0; t < 3; ++t)
    for (int64_t c = 0; c < 32; ++c)
      for (int64_t i = 0; i < 4; ++i) {
        const double v = y.at(int64_t(0), t, c, i / 2, i % 2);
        if (c < 8)
          EXPECT_EQ(v, x.at(int64_t(0), t, c, i / 2, i % 2));
        else
          EXPECT_EQ(v, 0.0);
      }
}

// Straight-line transliteration of the cascade: conv then shift per slice,
// residual from the previous processed slice, concatenate.
TEST(Clim, MatchesCompositionOracle) {
  Rng rng(4);
  ClimParams<double> p = ClimParams<double>::make(32, rng);
  Tensor<double> x = Tensor<double>::normal(Shape{2, 4, 32, 3, 3}, 0, 1, rng);
  Graph<double> g(false);
  auto got = clim_forward(g, x, p);

  const int64_t cs = 8;
  auto slice = [&](const Tensor<double>& src, int64_t s) {
    Tensor<double> out(Shape{2, 4, cs, 3, 3});
    for (int64_t n = 0; n < 2; ++n)
      for (int64_t t = 0; t < 4; ++t)
        for (int64_t c = 0; c < cs; ++c)
          for (int64_t h = 0; h < 3; ++h)
            for (int64_t w = 0; w < 3; ++w)
              out.at(n, t, c, h, w) = src.at(n, t, s * cs + c, h, w);
    return out;
  };
  std::vector<Tensor<double>> outs;
  outs.push_back(slice(x, 0));
  Tensor<double> prev;
  for (int s = 1; s < 4; ++s) {
    Tensor<double> in = slice(x, s);
    if (s > 1)
      for (int64_t i = 0; i < in.numel(); ++i) in[i] += prev[i];
    Tensor<double> c = oracle::conv2d_naive(in, p.conv_spt[s - 1].weights,
                                            p.conv_spt[s - 1].bias, true, 1);
    Tensor<double> y = oracle::temporal_conv_naive(c, p.shift[s - 1].taps);
    outs.push_back(y);
    prev = y;
  }
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t t = 0; t < 4; ++t)
      for (int s = 0; s < 4; ++s)
        for (int64_t c = 0; c < cs; ++c)
          for (int64_t h = 0; h < 3; ++h)
            for (int64_t w = 0; w < 3; ++w) {
              const double want = outs[s].at(n, t, c, h, w);
              const double have = got.at(n, t, s * cs + c, h, w);
              const double denom = std::max({std::abs(want), std::abs(have), 1e-8});
              EXPECT_LE(std::abs(want - have) / denom, 1e-6);
            }
}

TEST(Clim, TemporalDependencyWindowsUnderFixedShifts) {
  Rng rng(5);
  ClimParams<double> p = ClimParams<double>::make(
      32, rng, {ShiftMode::kFrozen, ShiftMode::kFrozen, ShiftMode::kFrozen});
  const auto probe = temporal_dependency_probe(p, 4, 9, 9);
  // slice 0 depends on exactly the perturbed frame
  ASSERT_EQ(probe.frames[0].size(), 1u);
  EXPECT_EQ(probe.frames[0][0], 4);
  // each processed slice adds at most one +/-1 frame hop
  EXPECT_LE(probe.temporal_width[1], 3);
  EXPECT_LE(probe.temporal_width[2], 5);
  EXPECT_LE(probe.temporal_width[3], 7);
  for (int64_t t : probe.frames[1]) {
    EXPECT_GE(t, 3);
    EXPECT_LE(t, 5);
  }
  for (int64_t t : probe.frames[3]) {
    EXPECT_GE(t, 1);
    EXPECT_LE(t, 7);
  }
  // spatial growth: at most (2i+1) pixels in slice i
  EXPECT_EQ(probe.spatial_height[0], 1);
  EXPECT_EQ(probe.spatial_width[0], 1);
  EXPECT_LE(probe.spatial_height[1], 3);
  EXPECT_LE(probe.spatial_height[2], 5);
  EXPECT_LE(probe.spatial_height[3], 7);
  EXPECT_LE(probe.spatial_width[3], 7);
}

TEST(Clim, PretrainedProbeMatchesFrozenBeforeTraining) {
  Rng rng(6);
  ClimParams<double> p = ClimParams<double>::make(32, rng);  // pretrained default
  const auto probe = temporal_dependency_probe(p, 3, 8, 7);
  EXPECT_LE(probe.temporal_width[1], 3);
  EXPECT_LE(probe.temporal_width[2], 5);
  EXPECT_LE(probe.temporal_width[3], 7);
}

TEST(Clim, GradientsMatchFiniteDifferencesThroughResiduals) {
  Rng rng(7);
  ClimParams<double> p = ClimParams<double>::make(32, rng);
  Tensor<double> x = Tensor<double>::normal(Shape{1, 3, 32, 3, 3}, 0, 1, rng);
  Tensor<double> probe = Tensor<double>::normal(x.shape, 0, 1, rng);
  auto f = [&](Graph<double>& g) {
    return sum(g, mul(g, clim_forward(g, x, p), probe));
  };
  EXPECT_LE(gradient_check<double>(f, x), 1e-5);
  for (int j = 0; j < 3; ++j) {
    EXPECT_LE(gradient_check<double>(f, p.conv_spt[j].weights), 1e-5);
    EXPECT_LE(gradient_check<double>(f, p.shift[j].taps), 1e-5);
  }
}

TEST(Clim, Conv1dBaselineSlices) {
  Rng rng(8);
  ClimParams<double> p = ClimParams<double>::make(
      32, rng, {ShiftMode::kConv1d, ShiftMode::kConv1d, ShiftMode::kConv1d});
  Tensor<double> x = Tensor<double>::normal(Shape{1, 4, 32, 2, 2}, 0, 1, rng);
  Graph<double> g(false);
  auto y = clim_forward(g, x, p);
  EXPECT_TRUE(y.shape == x.shape);
  EXPECT_TRUE(y.all_finite());
  auto f = [&](Graph<double>& g2) { return sum(g2, sigmoid(g2, clim_forward(g2, x, p))); };
  EXPECT_LE(gradient_check<double>(f, p.shift[0].mix), 1e-5);
}
