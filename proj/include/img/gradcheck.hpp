#pragma once

#include <functional>
#include <string>

#include "img/graph.hpp"
#include "img/tensor.hpp"

namespace img {

// Central-difference verification of reverse-mode gradients. `f` must build a
// scalar through the supplied graph. The checked tensor is perturbed in
// place (and restored), so `x` may be a network input or any parameter the
// closure reads through shared storage. Run in 64-bit: the oracle thresholds
// assume double precision.
//
// Returns max over coordinates of
//   |analytic - central| / max(|analytic|, |central|, 1e-8).
template <typename S>
double gradient_check(const std::function<Tensor<S>(Graph<S>&)>& f,
                      Tensor<S>& x, double eps = 1e-4) {
  const bool kept_flag = x.requires_grad;
  x.requires_grad = true;

  Graph<S> g;
  Tensor<S> y = f(g);
  check(y.numel() == 1, "gradient_check: f must be scalar-valued");
  g.backward(y);
  const std::vector<S> analytic = g.grad(x);

  double worst = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i) {
    const S keep = x[i];
    x[i] = keep + S(eps);
    Graph<S> gp(false);
    const double fp = static_cast<double>(f(gp)[0]);
    x[i] = keep - S(eps);
    Graph<S> gm(false);
    const double fm = static_cast<double>(f(gm)[0]);
    x[i] = keep;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::runtime_error("gradient_check: non-finite value at coordinate " +
                               std::to_string(i));
    const double central = (fp - fm) / (2.0 * eps);
    const double a = static_cast<double>(analytic[i]);
    const double denom = std::max({std::abs(a), std::abs(central), 1e-8});
    worst = std::max(worst, std::abs(a - central) / denom);
  }
  x.requires_grad = kept_flag;
  return worst;
}

}  // namespace img
