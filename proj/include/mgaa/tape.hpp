#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "mgaa/tensor.hpp"

namespace mgaa {

// Reverse-mode tape. Nodes are appended in forward order; backward() walks
// them in reverse, so every consumer's adjoint runs before its producers'.
// A node's value and gradient are released as soon as its own adjoint has
// run, which caps peak memory during training. Leaves (inputs, parameters)
// keep both so callers can read gradients afterwards.
template <typename T>
class Tape {
 public:
  using BackFn = std::function<void(Tape&, int)>;

  int leaf(Tensor<T> v) {
    nodes_.push_back(Node{std::move(v), Tensor<T>(), BackFn()});
    return int(nodes_.size()) - 1;
  }

  int push(Tensor<T> v, BackFn back) {
    nodes_.push_back(Node{std::move(v), Tensor<T>(), std::move(back)});
    return int(nodes_.size()) - 1;
  }

  Tensor<T>& val(int id) { return nodes_[size_t(id)].val; }
  const Tensor<T>& val(int id) const { return nodes_[size_t(id)].val; }

  // Gradient buffer, allocated to the value's shape on first touch.
  Tensor<T>& grad(int id) {
    Node& n = nodes_[size_t(id)];
    if (n.grad.empty()) {
      const auto& d = n.val.dims();
      n.grad = Tensor<T>(d[0], d[1], d[2], d[3]);
    }
    return n.grad;
  }

  bool grad_touched(int id) const { return !nodes_[size_t(id)].grad.empty(); }

  // Seeds the root (a scalar loss) and propagates. `seed` other than 1 scales
  // the whole gradient, which is how micro-batch contributions are weighted.
  void backward(int root, T seed = T(1)) {
    require(val(root).size() == 1, "backward root must be a scalar");
    grad(root)[0] = seed;
    for (int i = root; i >= 0; --i) {
      Node& n = nodes_[size_t(i)];
      if (!n.back) continue;  // leaf
      if (!n.grad.empty()) n.back(*this, i);
      n.grad.release();
      n.val.release();
    }
  }

  size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Tensor<T> val;
    Tensor<T> grad;
    BackFn back;
  };
  std::vector<Node> nodes_;
};

}  // namespace mgaa
