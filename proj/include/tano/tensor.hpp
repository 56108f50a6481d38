// Copyright 2026 The TANO Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tano {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool has_grad = false;
  bool requires_grad = false;
  std::optional<std::size_t> tape_id;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward;

  void ensure_grad();
};

}  // namespace detail

/// Dense row-major tensor of doubles.
///
/// A Tensor is a reference handle: copies share storage and graph identity,
/// which is what the gradient tape needs. Use clone() for an independent
/// value. Data is written once when an op produces it; only leaves
/// (parameters) are mutated afterwards, and only between training steps.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor full(Shape shape, double value);
  /// Leaf that accumulates gradients during backward().
  static Tensor parameter(Shape shape, std::vector<double> data);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Position in the active tape, when this tensor was produced under one.
  std::optional<std::size_t> tape_id() const;

  /// Deep copy as a fresh leaf with the same requires_grad flag.
  Tensor clone() const;
  /// Deep copy as a constant (no gradient).
  Tensor detach() const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  // Internal: used by ops to wire the graph.
  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Records differentiable operations on the current thread.
///
/// Constructing a tape makes it active; at most one tape may be active per
/// thread. Ops executed while a tape is active and touching at least one
/// tensor that requires grad are recorded in execution order, which is a
/// topological order by construction.
class GradientTape {
 public:
  GradientTape();
  ~GradientTape();
  GradientTape(const GradientTape&) = delete;
  GradientTape& operator=(const GradientTape&) = delete;

  static GradientTape* active();

  /// Reverse accumulation from a scalar loss recorded on this tape. Gradients
  /// of leaves accumulate; the tape is cleared afterwards.
  void backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }
  void clear();

  void record(const std::shared_ptr<detail::Node>& node);

 private:
  std::vector<std::shared_ptr<detail::Node>> nodes_;
};

}  // namespace tano
