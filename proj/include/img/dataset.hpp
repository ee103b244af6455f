#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "img/io.hpp"
#include "img/rng.hpp"
#include "img/tensor.hpp"

namespace img {

// Synthetic labeled clips whose classes are decidable only from motion
// (direction4) or from the temporal order of motion phases (phase-order2).
//
// direction4: a 3x3 sprite translates one of left/right/up/down at 1 px per
// frame. Start positions are sampled so that the pooled single-frame
// position distribution is the same trapezoid on both axes for every class:
// the moving axis draws the path interval uniformly, and the static axis
// draws directly from the trapezoid that pooling a moving axis produces. A
// lone frame therefore carries no class information.
//
// phase-order2: the sprite sweeps out-and-back along x with the turn at
// frame T/2, either rising first (class 0) or falling first (class 1). The
// two classes visit identical frame multisets, and away from the clip
// boundaries even every (prev, cur, next) frame triple multiset matches, so
// deciding the class requires integrating order information across frames.

enum class Task { kDirection4, kPhaseOrder2, kMixed };

inline const char* task_name(Task t) {
  switch (t) {
    case Task::kDirection4: return "direction4";
    case Task::kPhaseOrder2: return "phase-order2";
    case Task::kMixed: return "mixed";
  }
  return "?";
}

inline Task task_from_name(const std::string& s) {
  if (s == "direction4") return Task::kDirection4;
  if (s == "phase-order2") return Task::kPhaseOrder2;
  if (s == "mixed") return Task::kMixed;
  throw std::invalid_argument("unknown task '" + s + "'");
}

struct DatasetSpec {
  Task task = Task::kDirection4;
  int64_t train_per_class = 500;
  int64_t val_per_class = 100;
  int64_t frames = 8;
  int64_t height = 32;
  int64_t width = 32;
  int64_t channels = 1;
  double noise_std = 0.05;
  std::uint64_t seed = 1;

  int64_t num_classes() const {
    switch (task) {
      case Task::kDirection4: return 4;
      case Task::kPhaseOrder2: return 2;
      case Task::kMixed: return 6;
    }
    return 0;
  }

  void validate() const {
    check(train_per_class >= 1 && val_per_class >= 0, "dataset: need clips");
    check(frames >= 1, "dataset: need frames");
    check(channels == 1 || channels == 3, "dataset: channels must be 1 or 3");
    check(noise_std >= 0.0, "dataset: negative noise");
    const bool dir = task == Task::kDirection4 || task == Task::kMixed;
    const bool phase = task == Task::kPhaseOrder2 || task == Task::kMixed;
    if (dir) {
      check(height >= frames + 2 && width >= frames + 2,
            "dataset: sprite path exceeds the field; direction4 needs "
            "height and width >= frames + 2");
    }
    if (phase) {
      check(frames >= 8, "dataset: phase-order2 needs at least 8 frames");
      const int64_t amp = (frames - 1) / 2;
      check(width >= amp + 3, "dataset: sprite path exceeds the field; "
                              "phase-order2 needs width >= (frames-1)/2 + 3");
      check(height >= 3, "dataset: field too small for the sprite");
    }
  }
};

struct DatasetArchive {
  DatasetSpec spec;
  float mean = 0.f;
  float stddev = 1.f;
  std::vector<float> data;  // clip-major, each clip T*C*H*W row-major
  std::vector<std::uint16_t> labels;
  std::vector<std::uint8_t> splits;  // 0 = train, 1 = val

  int64_t clip_size() const {
    return spec.frames * spec.channels * spec.height * spec.width;
  }
  int64_t clip_count() const { return static_cast<int64_t>(labels.size()); }

  std::vector<int64_t> split_indices(int split) const {
    std::vector<int64_t> out;
    for (int64_t i = 0; i < clip_count(); ++i)
      if (splits[i] == split) out.push_back(i);
    return out;
  }

  // Assemble a batch [N,T,C,H,W], optionally normalized by the stored
  // statistics.
  Tensor<float> batch(const std::vector<int64_t>& indices,
                      bool normalize = true) const {
    const int64_t cs = clip_size();
    Tensor<float> out(Shape{static_cast<int64_t>(indices.size()), spec.frames,
                            spec.channels, spec.height, spec.width});
    float* po = out.data();
    const float inv = 1.f / stddev;
    for (std::size_t n = 0; n < indices.size(); ++n) {
      const float* src = data.data() + indices[n] * cs;
      float* dst = po + n * cs;
      if (normalize)
        for (int64_t i = 0; i < cs; ++i) dst[i] = (src[i] - mean) * inv;
      else
        std::copy(src, src + cs, dst);
    }
    return out;
  }

  std::vector<int64_t> label_batch(const std::vector<int64_t>& indices) const {
    std::vector<int64_t> out(indices.size());
    for (std::size_t n = 0; n < indices.size(); ++n) out[n] = labels[indices[n]];
    return out;
  }

  bool operator==(const DatasetArchive& o) const {
    return spec.task == o.spec.task &&
           spec.train_per_class == o.spec.train_per_class &&
           spec.val_per_class == o.spec.val_per_class &&
           spec.frames == o.spec.frames && spec.height == o.spec.height &&
           spec.width == o.spec.width && spec.channels == o.spec.channels &&
           spec.noise_std == o.spec.noise_std && spec.seed == o.spec.seed &&
           std::memcmp(&mean, &o.mean, 4) == 0 &&
           std::memcmp(&stddev, &o.stddev, 4) == 0 &&
           labels == o.labels && splits == o.splits &&
           data.size() == o.data.size() &&
           std::memcmp(data.data(), o.data.data(), data.size() * 4) == 0;
  }
};

namespace detail {

struct SpritePath {
  std::vector<int64_t> xs, ys;
};

// Uniform draw from the trapezoid that pooling a 1px/frame path produces on
// an axis of extent L: s + u with s ~ U{0..L-3-(T-1)}, u ~ U{0..T-1}.
inline int64_t trapezoid_coord(Rng& rng, int64_t L, int64_t T) {
  const int64_t smax = L - 3 - (T - 1);
  return static_cast<int64_t>(rng.below(smax + 1)) +
         static_cast<int64_t>(rng.below(T));
}

inline SpritePath direction_path(Rng& rng, int64_t cls, int64_t T, int64_t H,
                                 int64_t W) {
  SpritePath p;
  p.xs.resize(T);
  p.ys.resize(T);
  const bool horizontal = cls < 2;        // 0 left, 1 right, 2 up, 3 down
  const bool positive = (cls % 2) == 1;   // right / down increase coordinate
  const int64_t Lm = horizontal ? W : H;  // moving axis extent
  const int64_t Ls = horizontal ? H : W;
  const int64_t s = static_cast<int64_t>(rng.below(Lm - 2 - (T - 1)));
  const int64_t q = trapezoid_coord(rng, Ls, T);
  for (int64_t t = 0; t < T; ++t) {
    const int64_t m = positive ? s + t : s + (T - 1) - t;
    if (horizontal) {
      p.xs[t] = m;
      p.ys[t] = q;
    } else {
      p.xs[t] = q;
      p.ys[t] = m;
    }
  }
  return p;
}

inline SpritePath phase_path(Rng& rng, int64_t cls, int64_t T, int64_t H,
                             int64_t W) {
  SpritePath p;
  p.xs.resize(T);
  p.ys.resize(T);
  const int64_t amp = (T - 1) / 2;
  const int64_t x0 = static_cast<int64_t>(rng.below(W - 2 - amp));
  const int64_t y0 = static_cast<int64_t>(rng.below(H - 2));
  for (int64_t t = 0; t < T; ++t) {
    const int64_t v = std::min(t, T - 1 - t);  // rise to amp, fall back
    p.xs[t] = cls == 0 ? x0 + v : x0 + amp - v;
    p.ys[t] = y0;
  }
  return p;
}

}  // namespace detail

inline DatasetArchive generate(const DatasetSpec& spec) {
  spec.validate();
  const int64_t K = spec.num_classes();
  const int64_t per_class = spec.train_per_class + spec.val_per_class;
  const int64_t total = per_class * K;
  const int64_t T = spec.frames, H = spec.height, W = spec.width,
                C = spec.channels;

  DatasetArchive a;
  a.spec = spec;
  a.data.assign(total * T * C * H * W, 0.f);
  a.labels.resize(total);
  a.splits.resize(total);

  const int64_t train_total = spec.train_per_class * K;
  for (int64_t i = 0; i < total; ++i) {
    const bool is_train = i < train_total;
    const int64_t cls = i % K;
    a.labels[i] = static_cast<std::uint16_t>(cls);
    a.splits[i] = is_train ? 0 : 1;

    Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(i)));
    detail::SpritePath path;
    if (spec.task == Task::kDirection4) {
      path = detail::direction_path(rng, cls, T, H, W);
    } else if (spec.task == Task::kPhaseOrder2) {
      path = detail::phase_path(rng, cls, T, H, W);
    } else {
      path = cls < 4 ? detail::direction_path(rng, cls, T, H, W)
                     : detail::phase_path(rng, cls - 4, T, H, W);
    }

    float* clip = a.data.data() + i * T * C * H * W;
    for (int64_t t = 0; t < T; ++t)
      for (int64_t c = 0; c < C; ++c)
        for (int64_t h = 0; h < H; ++h)
          for (int64_t w = 0; w < W; ++w) {
            const bool lit = h >= path.ys[t] && h <= path.ys[t] + 2 &&
                             w >= path.xs[t] && w <= path.xs[t] + 2;
            double v = lit ? 1.0 : 0.0;
            if (spec.noise_std > 0.0) v += rng.normal(0.0, spec.noise_std);
            v = std::min(1.0, std::max(0.0, v));
            clip[((t * C + c) * H + h) * W + w] = static_cast<float>(v);
          }
  }

  // normalization statistics over the training split
  double sum = 0.0, sq = 0.0;
  int64_t n = 0;
  const int64_t cs = a.clip_size();
  for (int64_t i = 0; i < total; ++i) {
    if (a.splits[i] != 0) continue;
    const float* clip = a.data.data() + i * cs;
    for (int64_t j = 0; j < cs; ++j) {
      sum += clip[j];
      sq += static_cast<double>(clip[j]) * clip[j];
    }
    n += cs;
  }
  const double mean = sum / static_cast<double>(n);
  const double var = sq / static_cast<double>(n) - mean * mean;
  a.mean = static_cast<float>(mean);
  a.stddev = static_cast<float>(std::sqrt(std::max(var, 1e-12)));
  return a;
}

inline std::uint64_t archive_checksum(const DatasetArchive& a) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  h = detail::fnv1a(a.data.data(), a.data.size() * sizeof(float), h);
  h = detail::fnv1a(a.labels.data(), a.labels.size() * sizeof(std::uint16_t), h);
  h = detail::fnv1a(a.splits.data(), a.splits.size(), h);
  return h;
}

constexpr std::uint32_t kArchiveVersion = 1;

inline void save_archive(const DatasetArchive& a, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  os.write("IMGD", 4);
  detail::put<std::uint32_t>(os, kArchiveVersion);
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(a.spec.task));
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(a.spec.train_per_class));
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(a.spec.val_per_class));
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(a.spec.frames));
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(a.spec.height));
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(a.spec.width));
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(a.spec.channels));
  detail::put<double>(os, a.spec.noise_std);
  detail::put<std::uint64_t>(os, a.spec.seed);
  detail::put<float>(os, a.mean);
  detail::put<float>(os, a.stddev);
  detail::put<std::uint64_t>(os, archive_checksum(a));
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(a.clip_count()));
  os.write(reinterpret_cast<const char*>(a.labels.data()),
           a.labels.size() * sizeof(std::uint16_t));
  os.write(reinterpret_cast<const char*>(a.splits.data()), a.splits.size());
  os.write(reinterpret_cast<const char*>(a.data.data()), a.data.size() * 4);
  if (!os) throw std::runtime_error("write to '" + path + "' failed");
}

inline DatasetArchive load_archive(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "IMGD", 4) != 0)
    throw std::runtime_error("'" + path + "': bad magic at offset 0, expected \"IMGD\"");
  const auto version = detail::get<std::uint32_t>(is, "version");
  if (version != kArchiveVersion)
    throw std::runtime_error("'" + path + "': unsupported version " +
                             std::to_string(version));
  DatasetArchive a;
  a.spec.task = static_cast<Task>(detail::get<std::uint32_t>(is, "task"));
  a.spec.train_per_class = detail::get<std::uint32_t>(is, "train_per_class");
  a.spec.val_per_class = detail::get<std::uint32_t>(is, "val_per_class");
  a.spec.frames = detail::get<std::uint32_t>(is, "frames");
  a.spec.height = detail::get<std::uint32_t>(is, "height");
  a.spec.width = detail::get<std::uint32_t>(is, "width");
  a.spec.channels = detail::get<std::uint32_t>(is, "channels");
  a.spec.noise_std = detail::get<double>(is, "noise_std");
  a.spec.seed = detail::get<std::uint64_t>(is, "seed");
  a.mean = detail::get<float>(is, "mean");
  a.stddev = detail::get<float>(is, "stddev");
  const auto checksum = detail::get<std::uint64_t>(is, "checksum");
  const auto count = detail::get<std::uint32_t>(is, "clip count");
  a.labels.resize(count);
  a.splits.resize(count);
  a.data.resize(static_cast<std::size_t>(count) * a.clip_size());
  is.read(reinterpret_cast<char*>(a.labels.data()), count * sizeof(std::uint16_t));
  is.read(reinterpret_cast<char*>(a.splits.data()), count);
  is.read(reinterpret_cast<char*>(a.data.data()), a.data.size() * 4);
  if (!is)
    throw std::runtime_error("'" + path + "': archive truncated in payload");
  if (archive_checksum(a) != checksum)
    throw std::runtime_error("'" + path + "': payload checksum mismatch");
  return a;
}

}  // namespace img
