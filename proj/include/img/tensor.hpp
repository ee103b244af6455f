#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "img/rng.hpp"

namespace img {

// Shape of a dense tensor, up to 5 axes. Video features use all five as
// [N,T,C,H,W]; smaller ranks cover kernels, score matrices and scalars.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<int64_t> dims) {
    if (dims.size() > kMaxRank) throw std::invalid_argument("Shape: rank > 5");
    rank_ = static_cast<int>(dims.size());
    int i = 0;
    for (int64_t d : dims) dims_[i++] = d;
  }

  static constexpr int kMaxRank = 5;

  int rank() const { return rank_; }
  int64_t operator[](int axis) const { return dims_[axis]; }
  int64_t& operator[](int axis) { return dims_[axis]; }

  int64_t numel() const {
    int64_t n = 1;
    for (int i = 0; i < rank_; ++i) n *= dims_[i];
    return n;
  }

  bool operator==(const Shape& o) const {
    if (rank_ != o.rank_) return false;
    for (int i = 0; i < rank_; ++i)
      if (dims_[i] != o.dims_[i]) return false;
    return true;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    std::ostringstream os;
    os << '[';
    for (int i = 0; i < rank_; ++i) os << (i ? "," : "") << dims_[i];
    os << ']';
    return os.str();
  }

 private:
  std::array<int64_t, kMaxRank> dims_{1, 1, 1, 1, 1};
  int rank_ = 0;
};

// Dense row-major tensor of 32- or 64-bit reals. A Tensor is a cheap handle:
// copies share storage. Values are treated as immutable once produced by an
// operation; parameter storage is mutated only by the optimizer between
// forward passes.
template <typename S>
struct Tensor {
  Shape shape;
  std::shared_ptr<std::vector<S>> store;
  bool requires_grad = false;
  // Node id on the graph that produced this tensor; -1 for leaves/constants.
  int node = -1;

  Tensor() = default;
  explicit Tensor(const Shape& s)
      : shape(s), store(std::make_shared<std::vector<S>>(s.numel(), S(0))) {}
  Tensor(const Shape& s, S fill)
      : shape(s), store(std::make_shared<std::vector<S>>(s.numel(), fill)) {}
  Tensor(const Shape& s, std::vector<S> values) : shape(s) {
    if (static_cast<int64_t>(values.size()) != s.numel())
      throw std::invalid_argument("Tensor: data length " +
                                  std::to_string(values.size()) +
                                  " does not match shape " + s.str());
    store = std::make_shared<std::vector<S>>(std::move(values));
  }

  int64_t numel() const { return shape.numel(); }
  S* data() { return store->data(); }
  const S* data() const { return store->data(); }
  S& operator[](int64_t i) { return (*store)[i]; }
  const S& operator[](int64_t i) const { return (*store)[i]; }

  // Element access by multi-index (rank must match).
  template <typename... Ix>
  S& at(Ix... ix) {
    return (*store)[flat_index(ix...)];
  }
  template <typename... Ix>
  const S& at(Ix... ix) const {
    return (*store)[flat_index(ix...)];
  }

  template <typename... Ix>
  int64_t flat_index(Ix... ix) const {
    const std::array<int64_t, sizeof...(Ix)> idx{static_cast<int64_t>(ix)...};
    if (static_cast<int>(idx.size()) != shape.rank())
      throw std::invalid_argument("Tensor::at: index rank mismatch");
    int64_t flat = 0;
    for (std::size_t i = 0; i < idx.size(); ++i)
      flat = flat * shape[static_cast<int>(i)] + idx[i];
    return flat;
  }

  Tensor clone() const {
    Tensor out;
    out.shape = shape;
    out.store = std::make_shared<std::vector<S>>(*store);
    out.requires_grad = requires_grad;
    return out;
  }

  Tensor& set_requires_grad(bool v = true) {
    requires_grad = v;
    return *this;
  }

  bool all_finite() const {
    for (S v : *store)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> out;
    out.shape = shape;
    out.store = std::make_shared<std::vector<T>>(store->size());
    for (std::size_t i = 0; i < store->size(); ++i)
      (*out.store)[i] = static_cast<T>((*store)[i]);
    out.requires_grad = requires_grad;
    return out;
  }

  static Tensor zeros(const Shape& s) { return Tensor(s); }
  static Tensor full(const Shape& s, S v) { return Tensor(s, v); }

  static Tensor uniform(const Shape& s, S lo, S hi, Rng& rng) {
    Tensor out(s);
    for (auto& v : *out.store) v = static_cast<S>(rng.uniform(lo, hi));
    return out;
  }

  static Tensor normal(const Shape& s, S mean, S stddev, Rng& rng) {
    Tensor out(s);
    for (auto& v : *out.store) v = static_cast<S>(rng.normal(mean, stddev));
    return out;
  }
};

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace img
