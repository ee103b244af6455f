#include <gtest/gtest.h>

#include "img/conv.hpp"
#include "img/gradcheck.hpp"
#include "img/norm.hpp"
#include "img/ops.hpp"

using namespace img;

TEST(Backward, SigmoidDerivativeAtZero) {
  Graph<double> g;
  Tensor<double> x(Shape{}, 0.0);
  x.set_requires_grad();
  auto loss = sum(g, sigmoid(g, x));
  g.backward(loss);
  EXPECT_DOUBLE_EQ(g.grad(x)[0], 0.25);
}

TEST(Backward, QuadraticGradientIsTwoX) {
  Graph<double> g;
  Rng rng(1);
  Tensor<double> x = Tensor<double>::normal(Shape{2, 3}, 0, 1, rng);
  x.set_requires_grad();
  auto loss = sum(g, mul(g, x, x));
  g.backward(loss);
  const auto gx = g.grad(x);
  for (int64_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(gx[i], 2 * x[i], 1e-14);
}

TEST(Backward, RepeatedCallRejected) {
  Graph<double> g;
  Tensor<double> x(Shape{2}, 1.0);
  x.set_requires_grad();
  auto loss = sum(g, x);
  g.backward(loss);
  EXPECT_THROW(g.backward(loss), std::logic_error);
}

TEST(Backward, NonScalarLossRejected) {
  Graph<double> g;
  Tensor<double> x(Shape{2}, 1.0);
  x.set_requires_grad();
  auto y = scale(g, x, 2.0);
  EXPECT_THROW(g.backward(y), std::invalid_argument);
}

TEST(Backward, LossOutsideGraphRejected) {
  Graph<double> g;
  Tensor<double> loss(Shape{}, 1.0);
  EXPECT_THROW(g.backward(loss), std::invalid_argument);
}

TEST(Backward, UntouchedParameterHasZeroGrad) {
  Graph<double> g;
  Tensor<double> x(Shape{2}, 1.0);
  x.set_requires_grad();
  Tensor<double> unused(Shape{3}, 2.0);
  unused.set_requires_grad();
  g.backward(sum(g, x));
  EXPECT_EQ(g.find_grad(unused), nullptr);
  const auto gz = g.grad(unused);
  for (double v : gz) EXPECT_EQ(v, 0.0);
}

TEST(Backward, SharedParameterAccumulatesOnce) {
  // y = sum(w*a) + sum(w*b): dy/dw = a + b, through one leaf slot
  Graph<double> g;
  Tensor<double> w(Shape{3}, {1, 2, 3});
  w.set_requires_grad();
  Tensor<double> a(Shape{3}, {1, 1, 1});
  Tensor<double> b(Shape{3}, {10, 20, 30});
  auto loss = add(g, sum(g, mul(g, w, a)), sum(g, mul(g, w, b)));
  g.backward(loss);
  const auto gw = g.grad(w);
  EXPECT_DOUBLE_EQ(gw[0], 11);
  EXPECT_DOUBLE_EQ(gw[1], 21);
  EXPECT_DOUBLE_EQ(gw[2], 31);
}

TEST(Backward, FiniteGraphYieldsFiniteGradients) {
  Graph<double> g;
  Rng rng(2);
  Tensor<double> x = Tensor<double>::normal(Shape{2, 4, 8, 3, 3}, 0, 1, rng);
  x.set_requires_grad();
  Tensor<double> taps = Tensor<double>::normal(Shape{8, 3}, 0, 1, rng);
  taps.set_requires_grad();
  auto y = temporal_depthwise_conv(g, x, taps);
  auto loss = sum(g, sigmoid(g, y));
  g.backward(loss);
  for (double v : g.grad(x)) EXPECT_TRUE(std::isfinite(v));
  for (double v : g.grad(taps)) EXPECT_TRUE(std::isfinite(v));
}

TEST(Backward, BitwiseDeterministicAcrossRuns) {
  auto run = [](std::vector<double>* grads) {
    Graph<double> g;
    Rng rng(33);
    Tensor<double> x = Tensor<double>::normal(Shape{2, 3, 4, 5, 5}, 0, 1, rng);
    x.set_requires_grad();
    ConvParams<double> p = ConvParams<double>::make(4, 4, 3, rng);
    auto loss = sum(g, sigmoid(g, conv2d(g, x, p)));
    g.backward(loss);
    *grads = g.grad(x);
    const auto gw = g.grad(p.weights);
    grads->insert(grads->end(), gw.begin(), gw.end());
  };
  std::vector<double> a, b;
  run(&a);
  run(&b);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

// --- finite-difference checks for every primitive, including degenerate
// extents (T=1, H=W=1) ---

namespace {

double check_op(const std::function<Tensor<double>(Graph<double>&, const Tensor<double>&)>& op,
                const Shape& shape, std::uint64_t seed, double eps = 1e-4) {
  Rng rng(seed);
  Tensor<double> x = Tensor<double>::normal(shape, 0, 1, rng);
  auto f = [&](Graph<double>& g) { return sum(g, sigmoid(g, op(g, x))); };
  return gradient_check<double>(f, x, eps);
}

}  // namespace

TEST(GradCheck, LinearFunctionIsExact) {
  Rng rng(3);
  Tensor<double> x = Tensor<double>::normal(Shape{3, 4}, 0, 1, rng);
  auto f = [&](Graph<double>& g) { return sum(g, x); };
  EXPECT_LE(gradient_check<double>(f, x), 1e-10);
}

TEST(GradCheck, SmoothElementwise) {
  Rng rng(4);
  Tensor<double> x = Tensor<double>::normal(Shape{2, 5}, 0, 1, rng);
  auto f = [&](Graph<double>& g) { return sum(g, sigmoid(g, x)); };
  EXPECT_LE(gradient_check<double>(f, x), 1e-6);
}

TEST(GradCheck, ElementwiseOps) {
  Rng rng(5);
  Tensor<double> other = Tensor<double>::normal(Shape{2, 1, 8, 1, 1}, 0, 1, rng);
  EXPECT_LE(check_op([&](Graph<double>& g, const Tensor<double>& x) {
              return mul(g, x, other);
            }, Shape{2, 1, 8, 1, 1}, 6), 1e-5);
  EXPECT_LE(check_op([&](Graph<double>& g, const Tensor<double>& x) {
              return sub(g, scale(g, x, 3.0), other);
            }, Shape{2, 1, 8, 1, 1}, 7), 1e-5);
  EXPECT_LE(check_op([&](Graph<double>& g, const Tensor<double>& x) {
              return add_scalar(g, relu(g, x), 0.5);
            }, Shape{3, 7}, 8), 1e-5);
}

TEST(GradCheck, ConvAndPoolIncludingDegenerateExtents) {
  Rng rng(9);
  ConvParams<double> p3 = ConvParams<double>::make(3, 2, 3, rng);
  EXPECT_LE(check_op([&](Graph<double>& g, const Tensor<double>& x) {
              return conv2d(g, x, p3);
            }, Shape{2, 2, 2, 4, 4}, 10), 1e-5);
  // degenerate: single frame, single pixel
  ConvParams<double> p1 = ConvParams<double>::make(4, 2, 1, rng);
  EXPECT_LE(check_op([&](Graph<double>& g, const Tensor<double>& x) {
              return conv2d(g, x, p1);
            }, Shape{2, 1, 2, 1, 1}, 11), 1e-5);
  EXPECT_LE(check_op([&](Graph<double>& g, const Tensor<double>& x) {
              return spatial_global_avg_pool(g, x);
            }, Shape{2, 1, 3, 1, 1}, 12), 1e-5);
  // conv weight gradients
  {
    Tensor<double> x = Tensor<double>::normal(Shape{1, 2, 2, 3, 3}, 0, 1, rng);
    auto f = [&](Graph<double>& g) { return sum(g, sigmoid(g, conv2d(g, x, p3))); };
    EXPECT_LE(gradient_check<double>(f, p3.weights), 1e-5);
    EXPECT_LE(gradient_check<double>(f, p3.bias), 1e-5);
  }
}

TEST(GradCheck, TemporalConvsAndShiftTaps) {
  Rng rng(13);
  Tensor<double> taps = Tensor<double>::normal(Shape{8, 3}, 0, 1, rng);
  taps.set_requires_grad();
  EXPECT_LE(check_op([&](Graph<double>& g, const Tensor<double>& x) {
              return temporal_depthwise_conv(g, x, taps);
            }, Shape{2, 4, 8, 2, 2}, 14), 1e-5);
  EXPECT_LE(check_op([&](Graph<double>& g, const Tensor<double>& x) {
              return temporal_depthwise_conv(g, x, taps);
            }, Shape{1, 1, 8, 1, 1}, 15), 1e-5);  // T=1
  {
    Tensor<double> x = Tensor<double>::normal(Shape{2, 4, 8, 2, 2}, 0, 1, rng);
    auto f = [&](Graph<double>& g) {
      return sum(g, sigmoid(g, temporal_depthwise_conv(g, x, taps)));
    };
    EXPECT_LE(gradient_check<double>(f, taps), 1e-5);
  }
  {
    Tensor<double> w = Tensor<double>::normal(Shape{4, 4, 3}, 0, 0.5, rng);
    w.set_requires_grad();
    Tensor<double> x = Tensor<double>::normal(Shape{2, 3, 4, 2, 2}, 0, 1, rng);
    auto f = [&](Graph<double>& g) {
      return sum(g, sigmoid(g, temporal_mix_conv(g, x, w)));
    };
    EXPECT_LE(gradient_check<double>(f, w), 1e-5);
    EXPECT_LE(gradient_check<double>(f, x), 1e-5);
  }
}

TEST(GradCheck, StructuralOps) {
  EXPECT_LE(check_op([](Graph<double>& g, const Tensor<double>& x) {
              return permute(g, x, {1, 0, 2, 4, 3});
            }, Shape{2, 3, 2, 2, 3}, 16), 1e-5);
  EXPECT_LE(check_op([](Graph<double>& g, const Tensor<double>& x) {
              auto a = slice_channels(g, x, 0, 2);
              auto b = slice_channels(g, x, 2, 8);
              return concat_channels(g, {b, a});
            }, Shape{1, 2, 8, 2, 2}, 17), 1e-5);
  EXPECT_LE(check_op([](Graph<double>& g, const Tensor<double>& x) {
              std::vector<Tensor<double>> fs;
              for (int64_t t = 0; t < 3; ++t) fs.push_back(slice_frame(g, x, t));
              std::swap(fs[0], fs[2]);
              return stack_frames(g, fs);
            }, Shape{2, 3, 2, 2, 2}, 18), 1e-5);
  EXPECT_LE(check_op([](Graph<double>& g, const Tensor<double>& x) {
              return reshape(g, x, Shape{4, 6});
            }, Shape{2, 3, 4, 1, 1}, 19), 1e-5);
}

TEST(GradCheck, CosineAndBroadcast) {
  Rng rng(20);
  Tensor<double> b = Tensor<double>::normal(Shape{2, 3, 3, 3}, 0, 1, rng);
  b.set_requires_grad();
  EXPECT_LE(check_op([&](Graph<double>& g, const Tensor<double>& x) {
              return cosine_similarity_per_channel(g, x, b);
            }, Shape{2, 3, 3, 3}, 21), 1e-5);
  {
    Tensor<double> a = Tensor<double>::normal(Shape{2, 3, 3, 3}, 0, 1, rng);
    auto f = [&](Graph<double>& g) {
      return sum(g, sigmoid(g, cosine_similarity_per_channel(g, a, b)));
    };
    EXPECT_LE(gradient_check<double>(f, b), 1e-5);
  }
  Tensor<double> w = Tensor<double>::normal(Shape{2, 2, 4, 1, 1}, 0, 1, rng);
  w.set_requires_grad();
  EXPECT_LE(check_op([&](Graph<double>& g, const Tensor<double>& x) {
              return mul_bcast_hw(g, x, w);
            }, Shape{2, 2, 4, 3, 3}, 22), 1e-5);
  {
    Tensor<double> a = Tensor<double>::normal(Shape{2, 2, 4, 3, 3}, 0, 1, rng);
    auto f = [&](Graph<double>& g) {
      return sum(g, sigmoid(g, mul_bcast_hw(g, a, w)));
    };
    EXPECT_LE(gradient_check<double>(f, w), 1e-5);
  }
}

TEST(GradCheck, LinearAndMax) {
  Rng rng(23);
  Tensor<double> w = Tensor<double>::normal(Shape{3, 5}, 0, 1, rng);
  w.set_requires_grad();
  Tensor<double> b = Tensor<double>::normal(Shape{3}, 0, 1, rng);
  b.set_requires_grad();
  EXPECT_LE(check_op([&](Graph<double>& g, const Tensor<double>& x) {
              return linear(g, x, w, b);
            }, Shape{4, 5}, 24), 1e-5);
  {
    Tensor<double> x = Tensor<double>::normal(Shape{4, 5}, 0, 1, rng);
    auto f = [&](Graph<double>& g) {
      return sum(g, sigmoid(g, linear(g, x, w, b)));
    };
    EXPECT_LE(gradient_check<double>(f, w), 1e-5);
    EXPECT_LE(gradient_check<double>(f, b), 1e-5);
  }
  {
    Tensor<double> a = Tensor<double>::normal(Shape{6}, 0, 1, rng);
    Tensor<double> c = Tensor<double>::normal(Shape{6}, 0, 1, rng);
    auto f = [&](Graph<double>& g) {
      return sum(g, max_elements(g, {a, c}));
    };
    EXPECT_LE(gradient_check<double>(f, a), 1e-5);
  }
}

TEST(GradCheck, BatchNormModes) {
  Rng rng(25);
  for (BnMode mode : {BnMode::kTrain, BnMode::kEval, BnMode::kFrozen}) {
    BatchNormParams<double> bn = BatchNormParams<double>::make(4);
    for (int64_t i = 0; i < 4; ++i) {
      bn.gamma[i] = 0.5 + 0.2 * static_cast<double>(i);
      bn.beta[i] = 0.1 * static_cast<double>(i);
      bn.running_mean[i] = 0.3 * static_cast<double>(i);
      bn.running_var[i] = 1.0 + 0.1 * static_cast<double>(i);
    }
    Tensor<double> x = Tensor<double>::normal(Shape{2, 3, 4, 3, 3}, 0, 1, rng);
    // random projection: every coordinate gets an O(1) gradient, so the
    // relative-error denominator never degenerates
    Tensor<double> probe = Tensor<double>::normal(x.shape, 0, 1, rng);
    auto fx = [&](Graph<double>& g) {
      // running stats drift in train mode; evaluate on a copy each time
      BatchNormParams<double> local = bn;
      local.running_mean = bn.running_mean.clone();
      local.running_var = bn.running_var.clone();
      return sum(g, mul(g, batch_norm(g, x, local, mode), probe));
    };
    EXPECT_LE(gradient_check<double>(fx, x), 1e-5) << "mode " << int(mode);
    if (mode != BnMode::kFrozen) {
      EXPECT_LE(gradient_check<double>(fx, bn.gamma), 1e-5);
      EXPECT_LE(gradient_check<double>(fx, bn.beta), 1e-5);
    }
  }
}

TEST(BatchNorm, ModesAndRunningStats) {
  Rng rng(26);
  BatchNormParams<double> bn = BatchNormParams<double>::make(2);
  Tensor<double> x = Tensor<double>::normal(Shape{4, 2, 2, 3, 3}, 1.5, 2.0, rng);
  Graph<double> g(false);
  auto y = batch_norm(g, x, bn, BnMode::kTrain);
  // per-channel output is standardized in train mode
  for (int64_t c = 0; c < 2; ++c) {
    double s = 0, sq = 0;
    int64_t m = 0;
    for (int64_t n = 0; n < 4; ++n)
      for (int64_t t = 0; t < 2; ++t)
        for (int64_t h = 0; h < 3; ++h)
          for (int64_t w = 0; w < 3; ++w) {
            const double v = y.at(n, t, c, h, w);
            s += v;
            sq += v * v;
            ++m;
          }
    EXPECT_NEAR(s / m, 0.0, 1e-10);
    EXPECT_NEAR(sq / m, 1.0, 1e-3);  // eps-deflated variance
  }
  EXPECT_NE(bn.running_mean[0], 0.0);  // stats moved

  // frozen/eval: running stats do not move
  const double rm = bn.running_mean[0], rv = bn.running_var[0];
  batch_norm(g, x, bn, BnMode::kEval);
  batch_norm(g, x, bn, BnMode::kFrozen);
  EXPECT_EQ(bn.running_mean[0], rm);
  EXPECT_EQ(bn.running_var[0], rv);

  // frozen mode records no gradient for gamma/beta
  Graph<double> g2;
  Tensor<double> x2 = Tensor<double>::normal(Shape{1, 1, 2, 2, 2}, 0, 1, rng);
  x2.set_requires_grad();
  auto loss = sum(g2, batch_norm(g2, x2, bn, BnMode::kFrozen));
  g2.backward(loss);
  EXPECT_EQ(g2.find_grad(bn.gamma), nullptr);
  EXPECT_EQ(g2.find_grad(bn.beta), nullptr);
  EXPECT_NE(g2.find_grad(x2), nullptr);
}
