// Copyright 2026 The TANO Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "tano/tensor.hpp"

#include <sstream>

#include "tano/error.hpp"

namespace tano {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

void Node::ensure_grad() {
  if (!has_grad) {
    grad.assign(data.size(), 0.0);
    has_grad = true;
  }
}

}  // namespace detail

namespace {

std::shared_ptr<detail::Node> make_node(Shape shape, std::vector<double> data) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  return node;
}

const detail::Node& checked(const std::shared_ptr<detail::Node>& node) {
  if (!node) throw ValidationError("use of an undefined tensor");
  return *node;
}

thread_local GradientTape* g_active_tape = nullptr;

}  // namespace

Tensor::Tensor(Shape shape) {
  const std::size_t n = shape_numel(shape);
  node_ = make_node(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : node_(make_node(std::move(shape), std::move(data))) {}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

Tensor Tensor::full(Shape shape, double value) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> data) {
  Tensor t(std::move(shape), std::move(data));
  t.node_->requires_grad = true;
  return t;
}

const Shape& Tensor::shape() const { return checked(node_).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) +
                         " out of range for shape " + shape_str(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return checked(node_).data.size(); }

std::span<const double> Tensor::data() const { return checked(node_).data; }

std::span<double> Tensor::mutable_data() {
  checked(node_);
  return node_->data;
}

double Tensor::item() const {
  const auto& n = checked(node_);
  if (n.data.size() != 1) {
    throw DimensionError("item() on tensor of shape " + shape_str(n.shape));
  }
  return n.data[0];
}

bool Tensor::requires_grad() const { return checked(node_).requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  checked(node_);
  node_->requires_grad = on;
  return *this;
}

bool Tensor::has_grad() const { return checked(node_).has_grad; }

std::span<const double> Tensor::grad() const {
  const auto& n = checked(node_);
  if (!n.has_grad) throw ValidationError("tensor has no gradient");
  return n.grad;
}

std::span<double> Tensor::mutable_grad() {
  checked(node_);
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  checked(node_);
  node_->grad.clear();
  node_->has_grad = false;
}

std::optional<std::size_t> Tensor::tape_id() const {
  return checked(node_).tape_id;
}

Tensor Tensor::clone() const {
  const auto& n = checked(node_);
  Tensor t(n.shape, n.data);
  t.node_->requires_grad = n.requires_grad;
  return t;
}

Tensor Tensor::detach() const {
  const auto& n = checked(node_);
  return Tensor(n.shape, n.data);
}

GradientTape::GradientTape() {
  if (g_active_tape != nullptr) {
    throw ValidationError("a gradient tape is already active on this thread");
  }
  g_active_tape = this;
}

GradientTape::~GradientTape() {
  clear();
  if (g_active_tape == this) g_active_tape = nullptr;
}

GradientTape* GradientTape::active() { return g_active_tape; }

void GradientTape::record(const std::shared_ptr<detail::Node>& node) {
  node->tape_id = nodes_.size();
  nodes_.push_back(node);
}

void GradientTape::clear() {
  for (auto& n : nodes_) {
    n->tape_id.reset();
    n->backward = nullptr;
    n->parents.clear();
  }
  nodes_.clear();
}

void GradientTape::backward(const Tensor& loss) {
  const auto& root = loss.node();
  if (!root) throw ValidationError("backward() on an undefined tensor");
  if (root->data.size() != 1) {
    throw ValidationError("backward() requires a scalar loss, got shape " +
                          shape_str(root->shape));
  }
  if (!root->tape_id || *root->tape_id >= nodes_.size() ||
      nodes_[*root->tape_id] != root) {
    throw ValidationError("backward() loss is not recorded on this tape");
  }
  root->ensure_grad();
  root->grad[0] += 1.0;
  for (std::size_t i = *root->tape_id + 1; i-- > 0;) {
    detail::Node& node = *nodes_[i];
    if (node.has_grad && node.backward) node.backward(node);
  }
  clear();
}

}  // namespace tano
