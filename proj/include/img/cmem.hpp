#pragma once

#include "img/conv.hpp"
#include "img/ops.hpp"

namespace img {

enum class AttentionForm {
  kShiftedSigmoid,  // 2*sigmoid(z) - 1, zero-centered: zero weights -> identity
  kLiteral,         // 2*sigmoid(z - 1), range (0,2)
};

inline const char* attention_form_name(AttentionForm f) {
  return f == AttentionForm::kShiftedSigmoid ? "shifted-sigmoid" : "literal";
}

inline AttentionForm attention_form_from_name(const std::string& s) {
  if (s == "shifted-sigmoid") return AttentionForm::kShiftedSigmoid;
  if (s == "literal") return AttentionForm::kLiteral;
  throw std::invalid_argument("unknown attention form '" + s + "'");
}

struct CmemConfig {
  int64_t r = 16;      // channel reduction ratio
  double alpha = 0.5;  // weight of the pooled difference features
  double beta = 0.5;   // weight of the cosine features
  AttentionForm attention_form = AttentionForm::kShiftedSigmoid;

  void validate(int64_t c) const {
    check(r > 0 && c % r == 0, "cmem: channel count " + std::to_string(c) +
                                   " not divisible by reduction ratio " +
                                   std::to_string(r));
    check(alpha >= 0 && beta >= 0 && alpha + beta > 0,
          "cmem: weights must be nonnegative and not both zero");
  }
};

// Short-range motion attention: adjacent-frame differences and cosine
// similarities of reduced features are fused into per-channel excitation
// weights, applied with a residual bypass so static content passes through.
template <typename S>
struct CmemParams {
  ConvParams<S> conv_prev;   // 1x1, C -> C/r
  ConvParams<S> conv_trans;  // 3x3, C/r -> C/r, shared across the frame pair
  ConvParams<S> conv_exp;    // 1x1, C/r -> C

  static CmemParams make(int64_t c, const CmemConfig& cfg, Rng& rng) {
    cfg.validate(c);
    const int64_t cr = c / cfg.r;
    CmemParams p;
    p.conv_prev = ConvParams<S>::make(cr, c, 1, rng);
    p.conv_trans = ConvParams<S>::make(cr, cr, 3, rng);
    p.conv_exp = ConvParams<S>::make(c, cr, 1, rng);
    return p;
  }

  template <typename T>
  CmemParams<T> cast() const {
    CmemParams<T> p;
    p.conv_prev = conv_prev.template cast<T>();
    p.conv_trans = conv_trans.template cast<T>();
    p.conv_exp = conv_exp.template cast<T>();
    return p;
  }
};

// X^r: channel reduction of the input features.
template <typename S>
Tensor<S> reduce_channels(Graph<S>& g, const Tensor<S>& x, CmemParams<S>& p) {
  return conv2d(g, x, p.conv_prev);
}

// Adjacent-frame differences of the transformed reduced features. Slot s
// holds trans(x_{s+1}) - trans(x_s) for s < T-1; the final slot is
// zero-filled so the temporal extent is preserved. T=1 degenerates to zeros.
template <typename S>
Tensor<S> motion_difference(Graph<S>& g, const Tensor<S>& xr, CmemParams<S>& p) {
  const int64_t T = xr.shape[1];
  Tensor<S> y = conv2d(g, xr, p.conv_trans);
  std::vector<Tensor<S>> slots;
  slots.reserve(T);
  for (int64_t s = 0; s + 1 < T; ++s)
    slots.push_back(sub(g, slice_frame(g, y, s + 1), slice_frame(g, y, s)));
  slots.push_back(Tensor<S>::zeros(
      Shape{xr.shape[0], xr.shape[2], xr.shape[3], xr.shape[4]}));
  return stack_frames(g, slots);
}

// Adjacent-frame cosine similarities of the transformed reduced features,
// per channel: [N,T,C/r,1,1], final slot zero-filled.
template <typename S>
Tensor<S> motion_cosine(Graph<S>& g, const Tensor<S>& xr, CmemParams<S>& p) {
  const int64_t T = xr.shape[1];
  Tensor<S> y = conv2d(g, xr, p.conv_trans);
  std::vector<Tensor<S>> slots;
  slots.reserve(T);
  for (int64_t s = 0; s + 1 < T; ++s)
    slots.push_back(cosine_similarity_per_channel(
        g, slice_frame(g, y, s + 1), slice_frame(g, y, s)));
  slots.push_back(Tensor<S>::zeros(Shape{xr.shape[0], xr.shape[2], 1, 1}));
  return stack_frames(g, slots);
}

// Fuse the motion features into attention weights and excite the input:
//   F  = alpha * Pool(M) + beta * P
//   Fs = 2*sigmoid(exp(F)) - 1          (shifted-sigmoid form)
//      | 2*sigmoid(exp(F) - 1)          (literal form)
//   out = x + x (.) Fs
template <typename S>
Tensor<S> fuse_and_excite(Graph<S>& g, const Tensor<S>& x, const Tensor<S>& m,
                          const Tensor<S>& p_cos, const CmemConfig& cfg,
                          CmemParams<S>& params,
                          Tensor<S>* attention_out = nullptr) {
  Tensor<S> mq = spatial_global_avg_pool(g, m);
  Tensor<S> f = add(g, scale(g, mq, S(cfg.alpha)), scale(g, p_cos, S(cfg.beta)));
  Tensor<S> fe = conv2d(g, f, params.conv_exp);
  Tensor<S> fs;
  if (cfg.attention_form == AttentionForm::kShiftedSigmoid)
    fs = add_scalar(g, scale(g, sigmoid(g, fe), S(2)), S(-1));
  else
    fs = scale(g, sigmoid(g, add_scalar(g, fe, S(-1))), S(2));
  if (attention_out) *attention_out = fs;
  return add(g, x, mul_bcast_hw(g, x, fs));
}

template <typename S>
Tensor<S> cmem_forward(Graph<S>& g, const Tensor<S>& x, const CmemConfig& cfg,
                       CmemParams<S>& params,
                       Tensor<S>* attention_out = nullptr) {
  cfg.validate(x.shape[2]);
  Tensor<S> xr = reduce_channels(g, x, params);
  Tensor<S> m = motion_difference(g, xr, params);
  Tensor<S> p = motion_cosine(g, xr, params);
  return fuse_and_excite(g, x, m, p, cfg, params, attention_out);
}

}  // namespace img
