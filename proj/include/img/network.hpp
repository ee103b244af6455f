#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "img/clim.hpp"
#include "img/cmem.hpp"
#include "img/metrics.hpp"
#include "img/norm.hpp"

namespace img {

enum class Consensus { kMean, kMax };

inline const char* consensus_name(Consensus c) {
  return c == Consensus::kMean ? "mean" : "max";
}
inline Consensus consensus_from_name(const std::string& s) {
  if (s == "mean") return Consensus::kMean;
  if (s == "max") return Consensus::kMax;
  throw std::invalid_argument("unknown consensus '" + s + "'");
}

struct NetworkConfig {
  int64_t in_channels = 3;
  int64_t width = 64;  // block input/output channels
  int64_t mid = 32;    // bottleneck width inside each block
  int64_t blocks = 3;
  int64_t num_classes = 4;
  CmemConfig cmem;
  bool cmem_enabled = true;
  bool clim_enabled = true;
  bool cmem_first = true;  // CMEM -> CLIM inside the block; flag for swapping
  ShiftMode shift_mode = ShiftMode::kPretrained;
  std::optional<std::array<ShiftMode, 3>> slice_shift_modes;
  Consensus consensus = Consensus::kMean;
  double dropout = 0.5;
  bool bn_frozen = false;
  std::uint64_t init_seed = 1;

  std::array<ShiftMode, 3> shift_modes() const {
    if (slice_shift_modes) return *slice_shift_modes;
    return {shift_mode, shift_mode, shift_mode};
  }

  void validate() const {
    check(num_classes >= 2, "network: need at least 2 classes");
    check(in_channels >= 1 && width >= 1 && blocks >= 1, "network: bad extents");
    if (clim_enabled)
      check(mid % 32 == 0, "network: mid width " + std::to_string(mid) +
                               " must be divisible by 32 for the cascade");
    if (cmem_enabled) cmem.validate(mid);
    check(dropout >= 0.0 && dropout < 1.0, "network: bad dropout rate");
  }
};

// Residual unit: 1x1 reduce -> motion modules -> 1x1 expand, with batch norm
// and rectification after each convolution except the tail. The tail norm
// starts at zero scale so a fresh block is the identity map.
template <typename S>
struct ImgBlockParams {
  ConvParams<S> head;  // 1x1, width -> mid
  BatchNormParams<S> bn_head;
  std::optional<CmemParams<S>> cmem;
  std::optional<ClimParams<S>> clim;
  ConvParams<S> tail;  // 1x1, mid -> width
  BatchNormParams<S> bn_tail;

  static ImgBlockParams make(const NetworkConfig& cfg, Rng& rng) {
    ImgBlockParams b;
    b.head = ConvParams<S>::make(cfg.mid, cfg.width, 1, rng);
    b.bn_head = BatchNormParams<S>::make(cfg.mid);
    if (cfg.cmem_enabled) b.cmem = CmemParams<S>::make(cfg.mid, cfg.cmem, rng);
    if (cfg.clim_enabled) b.clim = ClimParams<S>::make(cfg.mid, rng, cfg.shift_modes());
    b.tail = ConvParams<S>::make(cfg.width, cfg.mid, 1, rng);
    b.bn_tail = BatchNormParams<S>::make(cfg.width, 0.0);
    return b;
  }
};

template <typename S>
Tensor<S> img_block_forward(Graph<S>& g, const Tensor<S>& x,
                            const NetworkConfig& cfg, ImgBlockParams<S>& b,
                            BnMode bn, Tensor<S>* attention_out = nullptr) {
  check(x.shape[2] == cfg.width,
        "img_block: input has " + std::to_string(x.shape[2]) +
            " channels, block is configured for " + std::to_string(cfg.width));
  Tensor<S> h = relu(g, batch_norm(g, conv2d(g, x, b.head), b.bn_head, bn));
  auto run_cmem = [&](Tensor<S> v) {
    return b.cmem ? cmem_forward(g, v, cfg.cmem, *b.cmem, attention_out) : v;
  };
  auto run_clim = [&](Tensor<S> v) {
    return b.clim ? clim_forward(g, v, *b.clim) : v;
  };
  h = cfg.cmem_first ? run_clim(run_cmem(h)) : run_cmem(run_clim(h));
  Tensor<S> t = batch_norm(g, conv2d(g, h, b.tail), b.bn_tail, bn);
  return add(g, x, t);
}

// What a parameter is, for optimizer policy (weight decay hits convolution
// and linear weights only) and for checkpoint layout.
enum class ParamKind { kConvWeight, kBias, kNormGain, kNormBias, kNormStat, kShiftTap };

template <typename S>
struct ParamRef {
  std::string name;
  Tensor<S>* tensor;
  ParamKind kind;
  bool trainable;
  bool decay;
};

template <typename S>
struct Network {
  NetworkConfig cfg;
  ConvParams<S> stem;  // 3x3, in_channels -> width
  BatchNormParams<S> bn_stem;
  std::vector<ImgBlockParams<S>> blocks;
  Tensor<S> fc_w;  // [M, width]
  Tensor<S> fc_b;  // [M]

  static Network make(const NetworkConfig& cfg) {
    cfg.validate();
    Rng rng(mix_seed(cfg.init_seed, 0x1267));
    Network net;
    net.cfg = cfg;
    net.stem = ConvParams<S>::make(cfg.width, cfg.in_channels, 3, rng);
    net.bn_stem = BatchNormParams<S>::make(cfg.width);
    for (int64_t i = 0; i < cfg.blocks; ++i)
      net.blocks.push_back(ImgBlockParams<S>::make(cfg, rng));
    const double bound = std::sqrt(6.0 / static_cast<double>(cfg.width));
    net.fc_w = Tensor<S>::uniform(Shape{cfg.num_classes, cfg.width}, S(-bound),
                                  S(bound), rng);
    net.fc_w.set_requires_grad();
    net.fc_b = Tensor<S>::zeros(Shape{cfg.num_classes});
    net.fc_b.set_requires_grad();
    return net;
  }

  BnMode bn_mode(bool train) const {
    if (cfg.bn_frozen) return BnMode::kFrozen;
    return train ? BnMode::kTrain : BnMode::kEval;
  }

  // clip [N,T,C_in,H,W] -> class scores [N,M]. Dropout draws from `rng` only
  // when training; evaluation never touches it (a no-op by construction).
  Tensor<S> forward(Graph<S>& g, const Tensor<S>& clip, bool train, Rng* rng,
                    std::vector<Tensor<S>>* attention_out = nullptr) {
    check(clip.shape.rank() == 5, "network: expected rank-5 clip");
    check(clip.shape[2] == cfg.in_channels,
          "network: clip has " + std::to_string(clip.shape[2]) +
              " channels, stem expects " + std::to_string(cfg.in_channels));
    const BnMode bn = bn_mode(train);
    Tensor<S> x = relu(g, batch_norm(g, conv2d(g, clip, stem), bn_stem, bn));
    for (auto& b : blocks) {
      Tensor<S> att;
      x = img_block_forward(g, x, cfg, b, bn, attention_out ? &att : nullptr);
      if (attention_out && att.store) attention_out->push_back(att);
    }
    Tensor<S> pooled = spatial_global_avg_pool(g, x);  // [N,T,C,1,1]
    const int64_t N = clip.shape[0], T = clip.shape[1];
    std::vector<Tensor<S>> logits;
    logits.reserve(T);
    for (int64_t t = 0; t < T; ++t) {
      Tensor<S> ft = reshape(g, slice_frame(g, pooled, t), Shape{N, cfg.width});
      if (train && rng) ft = dropout(g, ft, cfg.dropout, *rng, true);
      logits.push_back(linear(g, ft, fc_w, fc_b));
    }
    if (cfg.consensus == Consensus::kMax) return max_elements(g, logits);
    Tensor<S> acc = logits[0];
    for (int64_t t = 1; t < T; ++t) acc = add(g, acc, logits[t]);
    return scale(g, acc, S(1) / static_cast<S>(T));
  }

  void visit_params(const std::function<void(const ParamRef<S>&)>& fn) {
    auto conv = [&](const std::string& base, ConvParams<S>& c) {
      fn({base + ".w", &c.weights, ParamKind::kConvWeight, true, true});
      if (c.has_bias) fn({base + ".b", &c.bias, ParamKind::kBias, true, false});
    };
    auto norm = [&](const std::string& base, BatchNormParams<S>& n) {
      const bool train_bn = !cfg.bn_frozen;
      fn({base + ".g", &n.gamma, ParamKind::kNormGain, train_bn, false});
      fn({base + ".bb", &n.beta, ParamKind::kNormBias, train_bn, false});
      fn({base + ".rm", &n.running_mean, ParamKind::kNormStat, false, false});
      fn({base + ".rv", &n.running_var, ParamKind::kNormStat, false, false});
    };
    conv("stem", stem);
    norm("stem.bn", bn_stem);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const std::string bp = "block" + std::to_string(i);
      auto& b = blocks[i];
      conv(bp + ".head", b.head);
      norm(bp + ".head.bn", b.bn_head);
      if (b.cmem) {
        conv(bp + ".cmem.prev", b.cmem->conv_prev);
        conv(bp + ".cmem.trans", b.cmem->conv_trans);
        conv(bp + ".cmem.exp", b.cmem->conv_exp);
      }
      if (b.clim) {
        for (int j = 0; j < 3; ++j) {
          conv(bp + ".clim.conv" + std::to_string(j), b.clim->conv_spt[j]);
          auto& sk = b.clim->shift[j];
          const std::string sp = bp + ".clim.shift" + std::to_string(j);
          if (sk.mode == ShiftMode::kConv1d)
            fn({sp + ".mix", &sk.mix, ParamKind::kConvWeight, sk.trainable, true});
          else
            fn({sp + ".taps", &sk.taps, ParamKind::kShiftTap, sk.trainable, true});
        }
      }
      conv(bp + ".tail", b.tail);
      norm(bp + ".tail.bn", b.bn_tail);
    }
    fn({"fc.w", &fc_w, ParamKind::kConvWeight, true, true});
    fn({"fc.b", &fc_b, ParamKind::kBias, true, false});
  }

  int64_t trainable_param_count() {
    int64_t n = 0;
    visit_params([&](const ParamRef<S>& p) {
      if (p.trainable) n += p.tensor->numel();
    });
    return n;
  }
};

}  // namespace img
