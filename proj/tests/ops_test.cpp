#include "img/ops.hpp"

#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace img;

namespace {
Tensor<double> randt(const Shape& s, Rng& rng) {
  return Tensor<double>::normal(s, 0.0, 1.0, rng);
}
}  // namespace

TEST(Elementwise, AddSubMulScale) {
  Graph<double> g(false);
  Tensor<double> a(Shape{3}, {1, 2, 3});
  Tensor<double> b(Shape{3}, {10, 20, 30});
  auto s = add(g, a, b);
  EXPECT_EQ(s[2], 33);
  auto d = sub(g, b, a);
  EXPECT_EQ(d[0], 9);
  auto m = mul(g, a, b);
  EXPECT_EQ(m[1], 40);
  auto k = scale(g, a, 2.0);
  EXPECT_EQ(k[2], 6);
  auto c = add_scalar(g, a, -1.0);
  EXPECT_EQ(c[0], 0);
  Tensor<double> wrong(Shape{4});
  EXPECT_THROW(add(g, a, wrong), std::invalid_argument);
}

TEST(Elementwise, SigmoidAndRelu) {
  Graph<double> g(false);
  Tensor<double> x(Shape{3}, {0.0, 100.0, -100.0});
  auto s = sigmoid(g, x);
  EXPECT_DOUBLE_EQ(s[0], 0.5);
  EXPECT_NEAR(s[1], 1.0, 1e-12);
  EXPECT_NEAR(s[2], 0.0, 1e-12);
  auto r = relu(g, x);
  EXPECT_EQ(r[1], 100.0);
  EXPECT_EQ(r[2], 0.0);
}

TEST(Structure, ReshapeAndPermute) {
  Graph<double> g(false);
  Tensor<double> x(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
  auto r = reshape(g, x, Shape{3, 2});
  EXPECT_EQ(r.at(2, 1), 6);
  EXPECT_THROW(reshape(g, x, Shape{4, 2}), std::invalid_argument);

  auto p = permute(g, x, {1, 0});
  EXPECT_EQ(p.shape[0], 3);
  EXPECT_EQ(p.at(0, 1), 4);  // p[j,i] = x[i,j]
  EXPECT_EQ(p.at(2, 0), 3);

  Rng rng(3);
  Tensor<double> big = randt(Shape{2, 3, 4, 2, 2}, rng);
  auto fwd = permute(g, big, {3, 1, 4, 0, 2});
  auto back = permute(g, fwd, {3, 1, 4, 0, 2});
  // applying a permutation twice is the identity only for involutions; use
  // the inverse instead
  std::vector<int> inv(5);
  const std::vector<int> perm{3, 1, 4, 0, 2};
  for (int i = 0; i < 5; ++i) inv[perm[i]] = i;
  auto restored = permute(g, fwd, inv);
  ASSERT_TRUE(restored.shape == big.shape);
  for (int64_t i = 0; i < big.numel(); ++i) EXPECT_EQ(restored[i], big[i]);
  (void)back;
}

TEST(Structure, ChannelSliceConcatRoundTrip) {
  Graph<double> g(false);
  Rng rng(5);
  Tensor<double> x = randt(Shape{2, 3, 8, 2, 2}, rng);
  auto a = slice_channels(g, x, 0, 3);
  auto b = slice_channels(g, x, 3, 8);
  EXPECT_EQ(a.shape[2], 3);
  auto back = concat_channels(g, {a, b});
  for (int64_t i = 0; i < x.numel(); ++i) EXPECT_EQ(back[i], x[i]);
  EXPECT_THROW(slice_channels(g, x, 5, 3), std::invalid_argument);
}

TEST(Structure, FrameSliceStackRoundTrip) {
  Graph<double> g(false);
  Rng rng(6);
  Tensor<double> x = randt(Shape{2, 4, 3, 2, 2}, rng);
  std::vector<Tensor<double>> frames;
  for (int64_t t = 0; t < 4; ++t) frames.push_back(slice_frame(g, x, t));
  EXPECT_EQ(frames[0].shape.rank(), 4);
  auto back = stack_frames(g, frames);
  for (int64_t i = 0; i < x.numel(); ++i) EXPECT_EQ(back[i], x[i]);
  EXPECT_THROW(slice_frame(g, x, 4), std::invalid_argument);
}

TEST(Pool, ConstantAndTinyPlane) {
  Graph<double> g(false);
  Tensor<double> c(Shape{1, 1, 1, 3, 3}, 2.5);
  EXPECT_DOUBLE_EQ(spatial_global_avg_pool(g, c)[0], 2.5);
  Tensor<double> q(Shape{1, 1, 1, 2, 2}, {1, 2, 3, 4});
  EXPECT_DOUBLE_EQ(spatial_global_avg_pool(g, q)[0], 2.5);
}

TEST(Pool, MatchesDirectSummation) {
  Graph<double> g(false);
  Rng rng(8);
  Tensor<double> x = randt(Shape{2, 2, 3, 7, 7}, rng);
  auto got = spatial_global_avg_pool(g, x);
  auto want = oracle::avg_pool_naive(x);
  for (int64_t i = 0; i < got.numel(); ++i)
    EXPECT_NEAR(got[i], want[i], 1e-7);
}

TEST(Cosine, SelfSimilarityIsExactlyOne) {
  Graph<double> g(false);
  Rng rng(9);
  Tensor<double> a = randt(Shape{2, 3, 4, 4}, rng);
  auto c = cosine_similarity_per_channel(g, a, a);
  for (int64_t i = 0; i < c.numel(); ++i) EXPECT_EQ(c[i], 1.0);
}

TEST(Cosine, HandComputedCases) {
  Graph<double> g(false);
  // planes (1,2,2) vs (2,1,2): cos = 8/9
  Tensor<double> a(Shape{1, 1, 1, 3}, {1, 2, 2});
  Tensor<double> b(Shape{1, 1, 1, 3}, {2, 1, 2});
  EXPECT_NEAR(cosine_similarity_per_channel(g, a, b)[0], 8.0 / 9.0, 1e-15);

  Tensor<double> e1(Shape{1, 1, 1, 3}, {1, 0, 0});
  Tensor<double> e2(Shape{1, 1, 1, 3}, {0, 1, 0});
  EXPECT_DOUBLE_EQ(cosine_similarity_per_channel(g, e1, e2)[0], 0.0);

  Graph<double> g2(false);
  Tensor<double> neg(Shape{1, 1, 1, 3}, {-1, -2, -2});
  EXPECT_EQ(cosine_similarity_per_channel(g2, a, neg)[0], -1.0);
}

TEST(Cosine, ZeroNormGuardAndRange) {
  Graph<double> g(false);
  Tensor<double> z(Shape{1, 1, 2, 2});
  Tensor<double> a(Shape{1, 1, 2, 2}, {1, 2, 3, 4});
  auto c = cosine_similarity_per_channel(g, z, a);
  EXPECT_EQ(c[0], 0.0);
  EXPECT_TRUE(c.all_finite());

  Rng rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor<double> x = randt(Shape{2, 4, 3, 3}, rng);
    Tensor<double> y = randt(Shape{2, 4, 3, 3}, rng);
    auto cc = cosine_similarity_per_channel(g, x, y);
    for (int64_t i = 0; i < cc.numel(); ++i) {
      EXPECT_LE(cc[i], 1.0 + 1e-6);
      EXPECT_GE(cc[i], -1.0 - 1e-6);
    }
    // against the direct formula
    std::vector<double> va(9), vb(9);
    for (int64_t k = 0; k < 9; ++k) {
      va[k] = x[k];
      vb[k] = y[k];
    }
    EXPECT_NEAR(cc[0], oracle::cosine_naive(va, vb), 1e-12);
  }
}

TEST(Broadcast, MulBcastHw) {
  Graph<double> g(false);
  Rng rng(11);
  Tensor<double> a = randt(Shape{2, 2, 3, 2, 2}, rng);
  Tensor<double> w = randt(Shape{2, 2, 3, 1, 1}, rng);
  auto y = mul_bcast_hw(g, a, w);
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t t = 0; t < 2; ++t)
      for (int64_t c = 0; c < 3; ++c)
        for (int64_t h = 0; h < 2; ++h)
          for (int64_t ww = 0; ww < 2; ++ww)
            EXPECT_DOUBLE_EQ(y.at(n, t, c, h, ww),
                             a.at(n, t, c, h, ww) *
                                 w.at(n, t, c, int64_t(0), int64_t(0)));
}

TEST(Linear, MatchesManualComputation) {
  Graph<double> g(false);
  Tensor<double> x(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor<double> w(Shape{2, 3}, {1, 0, -1, 0.5, 0.5, 0.5});
  Tensor<double> b(Shape{2}, {10, -10});
  auto y = linear(g, x, w, b);
  EXPECT_DOUBLE_EQ(y.at(0, 0), 10 + 1 - 3);
  EXPECT_DOUBLE_EQ(y.at(0, 1), -10 + 0.5 * 6);
  EXPECT_DOUBLE_EQ(y.at(1, 0), 10 + 4 - 6);
  EXPECT_DOUBLE_EQ(y.at(1, 1), -10 + 0.5 * 15);
}

TEST(Dropout, InactiveIsIdentityAndActiveScales) {
  Graph<double> g(false);
  Rng rng(12);
  Tensor<double> x(Shape{1000}, 1.0);
  Rng mask_rng(77);
  auto same = dropout(g, x, 0.5, mask_rng, false);
  EXPECT_EQ(same.store.get(), x.store.get());  // no copy when inactive

  Rng mask_rng2(77);
  auto y = dropout(g, x, 0.5, mask_rng2, true);
  int64_t kept = 0;
  for (int64_t i = 0; i < y.numel(); ++i) {
    EXPECT_TRUE(y[i] == 0.0 || y[i] == 2.0);
    kept += y[i] != 0.0;
  }
  EXPECT_GT(kept, 400);
  EXPECT_LT(kept, 600);

  Rng mask_rng3(77);
  auto y2 = dropout(g, x, 0.5, mask_rng3, true);
  for (int64_t i = 0; i < y.numel(); ++i) EXPECT_EQ(y[i], y2[i]);
}

TEST(MaxElements, RoutesToFirstMaximizer) {
  Graph<double> g(false);
  Tensor<double> a(Shape{3}, {1, 5, 2});
  Tensor<double> b(Shape{3}, {1, 4, 7});
  auto m = max_elements(g, {a, b});
  EXPECT_EQ(m[0], 1.0);  // tie resolves to the first input
  EXPECT_EQ(m[1], 5.0);
  EXPECT_EQ(m[2], 7.0);
}
