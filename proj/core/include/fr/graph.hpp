#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "fr/tensor.hpp"

namespace fr {

// Reverse-mode autodiff over Tensor. Graphs are built dynamically; each op
// returns a Node holding its value, its parents and a backward closure that
// scatters this node's gradient into the parents' gradients.
struct Node {
    Tensor value;
    Tensor grad;                      // allocated lazily by backward()
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;  // empty for leaves
};

using Var = std::shared_ptr<Node>;

inline Var make_leaf(Tensor v, bool requires_grad = false) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->requires_grad = requires_grad;
    return n;
}

inline Var make_const(Tensor v) { return make_leaf(std::move(v), false); }

// Runs reverse accumulation from `loss` (a 1x1x1x1 scalar). Gradients of all
// reachable nodes are zeroed first; leaves keep their accumulated grad until
// the next call.
void backward(const Var& loss);

}  // namespace fr
