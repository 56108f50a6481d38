// Copyright 2026 The TANO Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <initializer_list>
#include <vector>

#include "tano/tensor.hpp"

// Helpers shared by every op that defines its own backward pass.
namespace tano::detail {

inline bool wants_grad(std::initializer_list<const Tensor*> inputs) {
  if (GradientTape::active() == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

// Wraps a freshly computed buffer; records it when any input needs a grad.
inline Tensor finish(Shape shape, std::vector<double> data,
                     std::initializer_list<const Tensor*> inputs,
                     std::function<void(Node&)> backward) {
  Tensor out(std::move(shape), std::move(data));
  if (wants_grad(inputs)) {
    const auto& node = out.node();
    node->requires_grad = true;
    for (const Tensor* t : inputs) node->parents.push_back(t->node());
    node->backward = std::move(backward);
    GradientTape::active()->record(node);
  }
  return out;
}

// Parent grad buffer, or nullptr when that parent does not need one.
inline double* grad_of(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  if (!p.requires_grad) return nullptr;
  p.ensure_grad();
  return p.grad.data();
}

}  // namespace tano::detail
