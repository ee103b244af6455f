#pragma once

#include <iomanip>
#include <ostream>
#include <sstream>

#include "img/checkpoint.hpp"
#include "img/dataset.hpp"
#include "img/metrics.hpp"
#include "img/network.hpp"

namespace img {

struct SgdConfig {
  int64_t batch_size = 32;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int64_t epochs = 30;
  std::vector<int64_t> decay_epochs = {20, 27};
  double decay_factor = 10.0;
  std::uint64_t seed = 1;
  double target_val_top1 = 0.0;  // early stop once reached, 0 disables

  void validate() const {
    check(batch_size >= 1, "trainer: batch size must be positive");
    // lr = 0 is allowed: a null update leaves parameters untouched
    check(lr >= 0.0, "trainer: learning rate must be nonnegative");
    check(momentum >= 0.0 && momentum < 1.0, "trainer: bad momentum");
    check(weight_decay >= 0.0, "trainer: negative weight decay");
    check(epochs >= 1, "trainer: need at least one epoch");
    check(decay_factor > 1.0, "trainer: decay factor must exceed 1");
    for (std::size_t i = 0; i < decay_epochs.size(); ++i) {
      check(decay_epochs[i] < epochs, "trainer: decay epoch beyond schedule");
      if (i) check(decay_epochs[i] > decay_epochs[i - 1],
                   "trainer: decay epochs must be strictly increasing");
    }
  }
};

// Piecewise-constant step decay: initial lr divided by factor^(number of
// decay epochs at or before `epoch`).
inline double lr_at(int64_t epoch, const SgdConfig& cfg) {
  int64_t drops = 0;
  for (int64_t e : cfg.decay_epochs)
    if (e <= epoch) ++drops;
  double lr = cfg.lr;
  for (int64_t i = 0; i < drops; ++i) lr /= cfg.decay_factor;
  return lr;
}

// One SGD step with classical momentum and decoupled weight decay (decay is
// applied directly to the weights, scaled by lr, and only to convolution and
// linear weights). With momentum 0 and decay 0 a step is exactly -lr * grad.
inline void sgd_step(Network<float>& net, Graph<float>& g, TrainState& st,
                     const SgdConfig& cfg, double lr) {
  net.visit_params([&](const ParamRef<float>& p) {
    if (!p.trainable) return;
    const auto* grad = g.find_grad(*p.tensor);
    auto& buf = st.momentum[p.name];
    if (buf.empty()) buf.assign(p.tensor->numel(), 0.f);
    float* w = p.tensor->data();
    const float mu = static_cast<float>(cfg.momentum);
    const float flr = static_cast<float>(lr);
    const float decay =
        p.decay ? static_cast<float>(lr * cfg.weight_decay) : 0.f;
    for (int64_t i = 0; i < p.tensor->numel(); ++i) {
      const float gi = grad ? (*grad)[i] : 0.f;
      buf[i] = mu * buf[i] + gi;
      w[i] -= flr * buf[i] + decay * w[i];
    }
  });
}

struct MetricRow {
  int64_t epoch;
  std::string split;
  double loss;
  double top1;
  double top5;
  double lr;
};

inline std::string metric_json(const MetricRow& r) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "{\"epoch\":" << r.epoch << ",\"split\":\"" << r.split
     << "\",\"loss\":" << r.loss << ",\"top1\":" << r.top1
     << ",\"top5\":" << r.top5 << ",\"lr\":" << r.lr << "}";
  return os.str();
}

// Raised when a batch produces a non-finite loss; identifies the batch so the
// run can be replayed.
struct TrainAbort : std::runtime_error {
  int64_t epoch, batch;
  TrainAbort(int64_t e, int64_t b)
      : std::runtime_error("non-finite loss at epoch " + std::to_string(e) +
                           ", batch " + std::to_string(b)),
        epoch(e),
        batch(b) {}
};

struct TrainResult {
  TrainState state;
  std::vector<MetricRow> metrics;
  double final_val_top1 = 0.0;
};

// Evaluate a split; deterministic batch order.
inline MetricRow evaluate(Network<float>& net, const DatasetArchive& data,
                          const std::vector<int64_t>& indices, int64_t epoch,
                          const std::string& split, int64_t batch_size,
                          double lr) {
  const int64_t M = net.cfg.num_classes;
  const int64_t k5 = std::min<int64_t>(5, M);
  double loss_sum = 0.0;
  double c1 = 0.0, c5 = 0.0;
  int64_t n_total = 0;
  for (std::size_t ofs = 0; ofs < indices.size();
       ofs += static_cast<std::size_t>(batch_size)) {
    std::vector<int64_t> idx(
        indices.begin() + ofs,
        indices.begin() + std::min(indices.size(),
                                   ofs + static_cast<std::size_t>(batch_size)));
    Tensor<float> clips = data.batch(idx);
    const auto labels = data.label_batch(idx);
    Graph<float> g(false);
    Tensor<float> scores = net.forward(g, clips, false, nullptr);
    Graph<float> gl(false);
    loss_sum += static_cast<double>(cross_entropy(gl, scores, labels)[0]) *
                static_cast<double>(idx.size());
    c1 += topk_accuracy(scores, labels, 1) * static_cast<double>(idx.size());
    c5 += topk_accuracy(scores, labels, k5) * static_cast<double>(idx.size());
    n_total += static_cast<int64_t>(idx.size());
  }
  const double inv = n_total ? 1.0 / static_cast<double>(n_total) : 0.0;
  return {epoch, split, loss_sum * inv, c1 * inv, c5 * inv, lr};
}

// Mini-batch SGD over the archive's training split with per-epoch evaluation.
// All randomness (shuffles, dropout masks) is derived from (seed, epoch,
// batch), so resuming from a checkpoint continues bit-identically.
inline TrainResult train(Network<float>& net, const DatasetArchive& data,
                         const SgdConfig& cfg, TrainState st = {},
                         std::ostream* metrics_out = nullptr,
                         const std::function<void(Network<float>&, const TrainState&,
                                                  const MetricRow&)>& on_epoch = {}) {
  cfg.validate();
  check(data.spec.channels == net.cfg.in_channels,
        "train: archive has " + std::to_string(data.spec.channels) +
            " channels, network expects " + std::to_string(net.cfg.in_channels));
  check(data.spec.num_classes() == net.cfg.num_classes,
        "train: archive has " + std::to_string(data.spec.num_classes()) +
            " classes, network expects " + std::to_string(net.cfg.num_classes));
  if (st.seed == 0) st.seed = cfg.seed;

  const auto train_idx = data.split_indices(0);
  const auto val_idx = data.split_indices(1);
  check(!train_idx.empty(), "train: empty training split");
  const int64_t M = net.cfg.num_classes;
  const int64_t k5 = std::min<int64_t>(5, M);

  TrainResult res;
  auto emit = [&](const MetricRow& r) {
    res.metrics.push_back(r);
    if (metrics_out) *metrics_out << metric_json(r) << "\n";
  };

  for (int64_t epoch = st.epoch; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(epoch, cfg);
    std::vector<int64_t> order = train_idx;
    Rng shuffle_rng(mix_seed(st.seed, static_cast<std::uint64_t>(epoch), 0xA11));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0, c1 = 0.0, c5 = 0.0;
    int64_t seen = 0;
    const int64_t batches =
        (static_cast<int64_t>(order.size()) + cfg.batch_size - 1) / cfg.batch_size;
    for (int64_t b = 0; b < batches; ++b) {
      const int64_t lo = b * cfg.batch_size;
      const int64_t hi = std::min<int64_t>(order.size(), lo + cfg.batch_size);
      std::vector<int64_t> idx(order.begin() + lo, order.begin() + hi);
      Tensor<float> clips = data.batch(idx);
      const auto labels = data.label_batch(idx);

      Rng drop_rng(mix_seed(st.seed, static_cast<std::uint64_t>(epoch),
                            0xB000 + static_cast<std::uint64_t>(b)));
      Graph<float> g;
      Tensor<float> scores = net.forward(g, clips, true, &drop_rng);
      Tensor<float> loss = cross_entropy(g, scores, labels);
      if (!std::isfinite(static_cast<double>(loss[0]))) throw TrainAbort(epoch, b);
      g.backward(loss);
      sgd_step(net, g, st, cfg, lr);

      const auto bs = static_cast<double>(idx.size());
      loss_sum += static_cast<double>(loss[0]) * bs;
      c1 += topk_accuracy(scores, labels, 1) * bs;
      c5 += topk_accuracy(scores, labels, k5) * bs;
      seen += static_cast<int64_t>(idx.size());
    }
    emit({epoch, "train", loss_sum / seen, c1 / seen, c5 / seen, lr});

    MetricRow val{epoch, "val", 0, 0, 0, lr};
    if (!val_idx.empty()) {
      val = evaluate(net, data, val_idx, epoch, "val", cfg.batch_size, lr);
      emit(val);
      if (val.top1 > st.best_top1) st.best_top1 = val.top1;
    }
    st.epoch = epoch + 1;
    if (on_epoch) on_epoch(net, st, val);
    res.final_val_top1 = val.top1;
    if (cfg.target_val_top1 > 0.0 && val.top1 >= cfg.target_val_top1) break;
  }
  res.state = std::move(st);
  return res;
}

// One ablation configuration: a network-config delta trained with shared
// seeds; reported as a CSV row.
struct AblationRun {
  std::string config_id;
  NetworkConfig net;
  SgdConfig sgd;
};

struct AblationRow {
  std::string config_id;
  double top1 = 0.0;
  double top5 = 0.0;
  int64_t params = 0;
  int64_t epochs = 0;
};

inline std::vector<AblationRow> run_ablation(const std::vector<AblationRun>& matrix,
                                             const DatasetArchive& data,
                                             std::ostream* log = nullptr) {
  std::vector<AblationRow> rows;
  for (const auto& runcfg : matrix) {
    Network<float> net = Network<float>::make(runcfg.net);
    AblationRow row;
    row.config_id = runcfg.config_id;
    row.params = net.trainable_param_count();
    double best1 = 0.0, best5 = 0.0;
    TrainResult r = train(net, data, runcfg.sgd, {}, log ? log : nullptr);
    for (const auto& m : r.metrics)
      if (m.split == "val" && m.top1 >= best1) {
        best1 = m.top1;
        best5 = m.top5;
      }
    row.top1 = best1;
    row.top5 = best5;
    row.epochs = r.state.epoch;
    rows.push_back(row);
  }
  return rows;
}

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "config_id,top1,top5,params,epochs\n";
  os << std::setprecision(10);
  for (const auto& r : rows)
    os << r.config_id << ',' << r.top1 << ',' << r.top5 << ',' << r.params
       << ',' << r.epochs << "\n";
  return os.str();
}

}  // namespace img
