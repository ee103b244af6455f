#pragma once

#include "img/graph.hpp"
#include "img/tensor.hpp"

namespace img {

enum class BnMode {
  kTrain,   // batch statistics, running statistics updated
  kEval,    // running statistics, nothing updated
  kFrozen,  // running statistics; gamma/beta excluded from optimization
};

// Per-channel batch normalization over the (N,T,H,W) axes of a clip.
template <typename S>
struct BatchNormParams {
  Tensor<S> gamma;         // [C]
  Tensor<S> beta;          // [C]
  Tensor<S> running_mean;  // [C], not trainable
  Tensor<S> running_var;   // [C], not trainable
  double momentum = 0.1;
  double eps = 1e-5;

  static BatchNormParams make(int64_t c, double gamma_init = 1.0) {
    BatchNormParams p;
    p.gamma = Tensor<S>::full(Shape{c}, S(gamma_init));
    p.gamma.set_requires_grad();
    p.beta = Tensor<S>::zeros(Shape{c});
    p.beta.set_requires_grad();
    p.running_mean = Tensor<S>::zeros(Shape{c});
    p.running_var = Tensor<S>::full(Shape{c}, S(1));
    return p;
  }

  template <typename T>
  BatchNormParams<T> cast() const {
    BatchNormParams<T> p;
    p.gamma = gamma.template cast<T>();
    p.beta = beta.template cast<T>();
    p.running_mean = running_mean.template cast<T>();
    p.running_var = running_var.template cast<T>();
    p.momentum = momentum;
    p.eps = eps;
    return p;
  }
};

template <typename S>
Tensor<S> batch_norm(Graph<S>& g, const Tensor<S>& x, BatchNormParams<S>& p,
                     BnMode mode) {
  check(x.shape.rank() == 5, "batch_norm: expected rank-5 input");
  const int64_t N = x.shape[0], T = x.shape[1], C = x.shape[2],
                plane = x.shape[3] * x.shape[4];
  check(p.gamma.shape[0] == C, "batch_norm: input has " + std::to_string(C) +
                                   " channels but params expect " +
                                   std::to_string(p.gamma.shape[0]));
  const int64_t m = N * T * plane;  // reduction size per channel
  const bool use_batch = mode == BnMode::kTrain;

  auto mean = std::make_shared<std::vector<S>>(C);
  auto invstd = std::make_shared<std::vector<S>>(C);
  const S* px = x.data();
  auto chan_off = [&](int64_t n, int64_t t, int64_t c) {
    return ((n * T + t) * C + c) * plane;
  };
  if (use_batch) {
    for (int64_t c = 0; c < C; ++c) {
      S acc(0);
      for (int64_t n = 0; n < N; ++n)
        for (int64_t t = 0; t < T; ++t) {
          const S* row = px + chan_off(n, t, c);
          for (int64_t i = 0; i < plane; ++i) acc += row[i];
        }
      const S mu = acc / static_cast<S>(m);
      S var(0);
      for (int64_t n = 0; n < N; ++n)
        for (int64_t t = 0; t < T; ++t) {
          const S* row = px + chan_off(n, t, c);
          for (int64_t i = 0; i < plane; ++i) {
            const S d = row[i] - mu;
            var += d * d;
          }
        }
      var /= static_cast<S>(m);  // biased, as used for normalization
      (*mean)[c] = mu;
      (*invstd)[c] = S(1) / std::sqrt(var + S(p.eps));
      // running statistics track the batch values
      p.running_mean[c] =
          S(1 - p.momentum) * p.running_mean[c] + S(p.momentum) * mu;
      p.running_var[c] =
          S(1 - p.momentum) * p.running_var[c] + S(p.momentum) * var;
    }
  } else {
    for (int64_t c = 0; c < C; ++c) {
      (*mean)[c] = p.running_mean[c];
      (*invstd)[c] = S(1) / std::sqrt(p.running_var[c] + S(p.eps));
    }
  }

  Tensor<S> out(x.shape);
  S* po = out.data();
  for (int64_t n = 0; n < N; ++n)
    for (int64_t t = 0; t < T; ++t)
      for (int64_t c = 0; c < C; ++c) {
        const S mu = (*mean)[c], is = (*invstd)[c];
        const S ga = p.gamma[c], be = p.beta[c];
        const S* row = px + chan_off(n, t, c);
        S* orow = po + chan_off(n, t, c);
        for (int64_t i = 0; i < plane; ++i)
          orow[i] = ga * (row[i] - mu) * is + be;
      }

  if (g.recording()) {
    const int ix = g.input_id(x);
    const int iga = mode == BnMode::kFrozen ? -1 : g.input_id(p.gamma);
    const int ibe = mode == BnMode::kFrozen ? -1 : g.input_id(p.beta);
    if (ix >= 0 || iga >= 0 || ibe >= 0)
      out.node = g.record(
          {ix, iga, ibe}, out.numel(),
          [ix, iga, ibe, sx = x.store, sg = p.gamma.store, mean, invstd, N, T,
           C, plane, m, use_batch](Graph<S>& gr, int self) {
            const auto& go = gr.grad_of(self);
            auto off = [&](int64_t n, int64_t t, int64_t c) {
              return ((n * T + t) * C + c) * plane;
            };
            for (int64_t c = 0; c < C; ++c) {
              const S mu = (*mean)[c], is = (*invstd)[c], ga = (*sg)[c];
              // per-channel reductions of dy and dy * xhat
              S sum_dy(0), sum_dy_xh(0);
              for (int64_t n = 0; n < N; ++n)
                for (int64_t t = 0; t < T; ++t) {
                  const S* grow = go.data() + off(n, t, c);
                  const S* row = sx->data() + off(n, t, c);
                  for (int64_t i = 0; i < plane; ++i) {
                    sum_dy += grow[i];
                    sum_dy_xh += grow[i] * (row[i] - mu) * is;
                  }
                }
              if (iga >= 0) gr.grad_acc(iga)[c] += sum_dy_xh;
              if (ibe >= 0) gr.grad_acc(ibe)[c] += sum_dy;
              if (ix >= 0) {
                auto& gx = gr.grad_acc(ix);
                if (use_batch) {
                  const S k1 = ga * is / static_cast<S>(m);
                  for (int64_t n = 0; n < N; ++n)
                    for (int64_t t = 0; t < T; ++t) {
                      const S* grow = go.data() + off(n, t, c);
                      const S* row = sx->data() + off(n, t, c);
                      S* drow = gx.data() + off(n, t, c);
                      for (int64_t i = 0; i < plane; ++i) {
                        const S xh = (row[i] - mu) * is;
                        drow[i] += k1 * (static_cast<S>(m) * grow[i] - sum_dy -
                                         xh * sum_dy_xh);
                      }
                    }
                } else {
                  const S k = ga * is;  // running stats enter as constants
                  for (int64_t n = 0; n < N; ++n)
                    for (int64_t t = 0; t < T; ++t) {
                      const S* grow = go.data() + off(n, t, c);
                      S* drow = gx.data() + off(n, t, c);
                      for (int64_t i = 0; i < plane; ++i) drow[i] += k * grow[i];
                    }
                }
              }
            }
          });
  }
  return out;
}

}  // namespace img
