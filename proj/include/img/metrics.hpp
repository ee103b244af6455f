#pragma once

#include <cstdint>
#include <vector>

#include "img/graph.hpp"
#include "img/ops.hpp"

namespace img {

// Mean cross-entropy of scores [N,M] against integer labels, with
// max-subtraction so extreme logits stay finite. Gradient is the closed form
// (softmax - onehot) / N.
template <typename S>
Tensor<S> cross_entropy(Graph<S>& g, const Tensor<S>& scores,
                        const std::vector<int64_t>& labels) {
  check(scores.shape.rank() == 2, "cross_entropy: scores must be [N,M]");
  const int64_t N = scores.shape[0], M = scores.shape[1];
  check(static_cast<int64_t>(labels.size()) == N,
        "cross_entropy: label count mismatch");
  for (int64_t n = 0; n < N; ++n)
    check(labels[n] >= 0 && labels[n] < M,
          "cross_entropy: label " + std::to_string(labels[n]) +
              " out of range [0," + std::to_string(M) + ")");

  auto softmax = std::make_shared<std::vector<S>>(N * M);
  Tensor<S> out(Shape{});
  S loss(0);
  const S* ps = scores.data();
  for (int64_t n = 0; n < N; ++n) {
    const S* row = ps + n * M;
    S mx = row[0];
    for (int64_t m = 1; m < M; ++m) mx = std::max(mx, row[m]);
    S denom(0);
    for (int64_t m = 0; m < M; ++m) {
      const S e = std::exp(row[m] - mx);
      (*softmax)[n * M + m] = e;
      denom += e;
    }
    for (int64_t m = 0; m < M; ++m) (*softmax)[n * M + m] /= denom;
    loss += std::log(denom) + mx - row[labels[n]];
  }
  out[0] = loss / static_cast<S>(N);

  if (g.recording()) {
    const int is = g.input_id(scores);
    if (is >= 0)
      out.node = g.record({is}, 1,
                          [is, softmax, labels, N, M](Graph<S>& gr, int self) {
                            const S go = gr.grad_of(self)[0];
                            auto& gs = gr.grad_acc(is);
                            const S inv = go / static_cast<S>(N);
                            for (int64_t n = 0; n < N; ++n)
                              for (int64_t m = 0; m < M; ++m) {
                                S v = (*softmax)[n * M + m];
                                if (m == labels[n]) v -= S(1);
                                gs[n * M + m] += inv * v;
                              }
                          });
  }
  return out;
}

// Fraction of samples whose label ranks among the k highest scores. Ties are
// broken deterministically toward the lowest class index: a label is counted
// when (classes strictly above it) + (tied classes with lower index) < k.
template <typename S>
double topk_accuracy(const Tensor<S>& scores, const std::vector<int64_t>& labels,
                     int64_t k) {
  check(scores.shape.rank() == 2, "topk_accuracy: scores must be [N,M]");
  const int64_t N = scores.shape[0], M = scores.shape[1];
  check(k >= 1 && k <= M, "topk_accuracy: k=" + std::to_string(k) +
                              " out of range for " + std::to_string(M) +
                              " classes");
  check(static_cast<int64_t>(labels.size()) == N,
        "topk_accuracy: label count mismatch");
  int64_t correct = 0;
  const S* ps = scores.data();
  for (int64_t n = 0; n < N; ++n) {
    const int64_t y = labels[n];
    check(y >= 0 && y < M, "topk_accuracy: label out of range");
    const S* row = ps + n * M;
    int64_t rank = 0;
    for (int64_t m = 0; m < M; ++m) {
      if (row[m] > row[y] || (row[m] == row[y] && m < y)) ++rank;
    }
    if (rank < k) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(N);
}

}  // namespace img
