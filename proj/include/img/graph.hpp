#pragma once

#include <functional>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "img/tensor.hpp"

namespace img {

// Reverse-mode differentiation record (a Wengert list). Operations append
// nodes during the forward pass; backward() replays them in reverse and
// accumulates exactly one gradient buffer per reachable node. Leaves are
// registered by storage identity, so a parameter used in several places
// (e.g. a shared convolution) accumulates into a single slot.
//
// A Graph is single-threaded: build one per forward pass. backward() may be
// called once per graph; a second call is rejected.
template <typename S>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, int self)>;

  explicit Graph(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }

  // Node id feeding gradients for tensor t: the producing node if t was made
  // on this graph, else a leaf slot if t requires grad, else -1 (constant).
  int input_id(const Tensor<S>& t) {
    if (t.node >= 0) return t.node;
    if (!t.requires_grad) return -1;
    return leaf_id(t);
  }

  int leaf_id(const Tensor<S>& t) {
    const void* key = t.store.get();
    auto it = leaves_.find(key);
    if (it != leaves_.end()) return it->second;
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{{}, t.numel(), nullptr});
    leaves_.emplace(key, id);
    return id;
  }

  int record(std::vector<int> parents, int64_t out_numel, BackwardFn back) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{std::move(parents), out_numel, std::move(back)});
    return id;
  }

  // Gradient buffer of a node, zero-initialized on first touch.
  std::vector<S>& grad_acc(int node) {
    if (grads_.size() < nodes_.size()) grads_.resize(nodes_.size());
    auto& buf = grads_[node];
    if (buf.empty()) buf.assign(nodes_[node].numel, S(0));
    return buf;
  }

  bool grad_present(int node) const {
    return node >= 0 && node < static_cast<int>(grads_.size()) &&
           !grads_[node].empty();
  }

  const std::vector<S>& grad_of(int node) const { return grads_[node]; }

  void backward(const Tensor<S>& loss) {
    if (loss.numel() != 1)
      throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                  loss.shape.str());
    if (loss.node < 0)
      throw std::invalid_argument(
          "backward: loss was not produced through this graph");
    if (!std::isfinite(static_cast<double>((*loss.store)[0])))
      throw std::runtime_error("backward: loss is not finite");
    if (backward_done_)
      throw std::logic_error("backward: already called on this graph");
    backward_done_ = true;

    grad_acc(loss.node)[0] = S(1);
    for (int i = loss.node; i >= 0; --i) {
      if (!grad_present(i)) continue;  // not reachable from the loss
      if (nodes_[i].back) nodes_[i].back(*this, i);
    }
  }

  // Gradient for a tensor (leaf or op output). Null when the tensor does not
  // participate in the differentiated graph.
  const std::vector<S>* find_grad(const Tensor<S>& t) const {
    int id = -1;
    auto it = leaves_.find(t.store.get());
    if (it != leaves_.end())
      id = it->second;
    else if (t.node >= 0)
      id = t.node;
    if (!grad_present(id)) return nullptr;
    return &grads_[id];
  }

  std::vector<S> grad(const Tensor<S>& t) const {
    const auto* g = find_grad(t);
    if (g) return *g;
    return std::vector<S>(t.numel(), S(0));
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    std::vector<int> parents;
    int64_t numel;
    BackwardFn back;
  };

  bool recording_;
  bool backward_done_ = false;
  std::vector<Node> nodes_;
  std::vector<std::vector<S>> grads_;
  std::unordered_map<const void*, int> leaves_;
};

}  // namespace img
