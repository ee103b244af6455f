#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <string>

#include "img/io.hpp"
#include "img/network.hpp"

namespace img {

// Training state that, together with the parameters, makes resumption
// bit-exact: epoch counter, optimizer momentum, the base seed (all per-epoch
// randomness is derived from it), and the best validation metric so far.
struct TrainState {
  int64_t epoch = 0;  // epochs completed
  double best_top1 = 0.0;
  std::uint64_t seed = 0;
  std::map<std::string, std::vector<float>> momentum;
};

constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_named_tensor(std::ostream& os, const std::string& name,
                             const Shape& shape, const float* data) {
  const auto len = static_cast<std::uint16_t>(name.size());
  put(os, len);
  os.write(name.data(), len);
  put<std::uint8_t>(os, static_cast<std::uint8_t>(shape.rank()));
  for (int i = 0; i < shape.rank(); ++i)
    put<std::uint32_t>(os, static_cast<std::uint32_t>(shape[i]));
  os.write(reinterpret_cast<const char*>(data), shape.numel() * 4);
}

struct NamedTensor {
  Shape shape;
  std::vector<float> data;
};

inline std::pair<std::string, NamedTensor> get_named_tensor(std::istream& is) {
  const auto len = get<std::uint16_t>(is, "name length");
  std::string name(len, '\0');
  is.read(name.data(), len);
  const auto rank = get<std::uint8_t>(is, "rank");
  if (rank > Shape::kMaxRank)
    throw std::runtime_error("checkpoint: bad tensor rank");
  NamedTensor t;
  std::array<int64_t, Shape::kMaxRank> d{1, 1, 1, 1, 1};
  for (int i = 0; i < rank; ++i) d[i] = get<std::uint32_t>(is, "dim");
  switch (rank) {
    case 0: t.shape = Shape{}; break;
    case 1: t.shape = Shape{d[0]}; break;
    case 2: t.shape = Shape{d[0], d[1]}; break;
    case 3: t.shape = Shape{d[0], d[1], d[2]}; break;
    case 4: t.shape = Shape{d[0], d[1], d[2], d[3]}; break;
    default: t.shape = Shape{d[0], d[1], d[2], d[3], d[4]}; break;
  }
  t.data.resize(t.shape.numel());
  is.read(reinterpret_cast<char*>(t.data.data()), t.data.size() * 4);
  if (!is) throw std::runtime_error("checkpoint truncated in tensor payload");
  return {name, std::move(t)};
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, Network<float>& net,
                            const TrainState& st, const std::string& config_echo) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  os.write("IMGC", 4);
  detail::put<std::uint32_t>(os, kCheckpointVersion);
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(config_echo.size()));
  os.write(config_echo.data(), config_echo.size());
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(st.epoch));
  detail::put<double>(os, st.best_top1);
  detail::put<std::uint64_t>(os, st.seed);

  std::uint32_t count = 0;
  net.visit_params([&](const ParamRef<float>&) { ++count; });
  detail::put(os, count);
  net.visit_params([&](const ParamRef<float>& p) {
    detail::put_named_tensor(os, p.name, p.tensor->shape, p.tensor->data());
  });

  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(st.momentum.size()));
  for (const auto& [name, buf] : st.momentum) {
    const auto len = static_cast<std::uint16_t>(name.size());
    detail::put(os, len);
    os.write(name.data(), len);
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(buf.size()));
    os.write(reinterpret_cast<const char*>(buf.data()), buf.size() * 4);
  }
  if (!os) throw std::runtime_error("write to '" + path + "' failed");
}

struct Checkpoint {
  std::string config_echo;
  TrainState state;
  std::map<std::string, detail::NamedTensor> params;
};

inline Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "IMGC", 4) != 0)
    throw std::runtime_error("'" + path + "': bad magic, expected \"IMGC\"");
  const auto version = detail::get<std::uint32_t>(is, "version");
  if (version != kCheckpointVersion)
    throw std::runtime_error("'" + path + "': unsupported version " +
                             std::to_string(version));
  Checkpoint c;
  const auto echo_len = detail::get<std::uint32_t>(is, "config length");
  c.config_echo.resize(echo_len);
  is.read(c.config_echo.data(), echo_len);
  c.state.epoch = detail::get<std::uint32_t>(is, "epoch");
  c.state.best_top1 = detail::get<double>(is, "best metric");
  c.state.seed = detail::get<std::uint64_t>(is, "seed");
  const auto count = detail::get<std::uint32_t>(is, "parameter count");
  for (std::uint32_t i = 0; i < count; ++i) {
    auto [name, t] = detail::get_named_tensor(is);
    c.params.emplace(std::move(name), std::move(t));
  }
  const auto mcount = detail::get<std::uint32_t>(is, "momentum count");
  for (std::uint32_t i = 0; i < mcount; ++i) {
    const auto len = detail::get<std::uint16_t>(is, "momentum name length");
    std::string name(len, '\0');
    is.read(name.data(), len);
    const auto n = detail::get<std::uint32_t>(is, "momentum size");
    std::vector<float> buf(n);
    is.read(reinterpret_cast<char*>(buf.data()), n * 4);
    if (!is) throw std::runtime_error("checkpoint truncated in momentum");
    c.state.momentum.emplace(std::move(name), std::move(buf));
  }
  return c;
}

// Copy checkpointed parameters into a network built from the same config.
inline void apply_checkpoint(const Checkpoint& c, Network<float>& net) {
  net.visit_params([&](const ParamRef<float>& p) {
    auto it = c.params.find(p.name);
    if (it == c.params.end())
      throw std::runtime_error("checkpoint is missing parameter '" + p.name + "'");
    if (!(it->second.shape == p.tensor->shape))
      throw std::runtime_error("checkpoint parameter '" + p.name + "' has shape " +
                               it->second.shape.str() + ", network expects " +
                               p.tensor->shape.str());
    std::copy(it->second.data.begin(), it->second.data.end(), p.tensor->data());
  });
}

}  // namespace img
