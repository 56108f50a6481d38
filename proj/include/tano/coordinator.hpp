// Copyright 2026 The TANO Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tano/tensor.hpp"

namespace tano {

inline constexpr std::size_t kCoordinatorHidden = 64;

/// Two-layer MLP phi: d -> 64 -> R with ReLU between and softmax on top.
struct CoordinatorWeights {
  Tensor w1;  // d x 64
  Tensor b1;  // 64
  Tensor w2;  // 64 x R
  Tensor b2;  // R

  std::size_t num_domains() const { return w2.defined() ? w2.dim(1) : 0; }
  CoordinatorWeights clone() const;
  std::vector<Tensor*> parameters();
};

/// Glorot-uniform weights, zero biases.
CoordinatorWeights coordinator_init(std::size_t input_dim, std::size_t num_domains,
                                    std::uint64_t seed);

/// Coordinator output for one task.
struct DomainWeights {
  std::vector<double> w_hat;  // on the simplex, length R
  Tensor logits;              // 1 x R, on the tape while training
  std::string source;

  /// Fixed weights without a graph, e.g. an oracle forced to the truth.
  static DomainWeights from_probabilities(std::vector<double> w, std::string source = {});
};

/// Mean-pools the support embeddings, then applies the MLP and softmax.
DomainWeights coordinate(const Tensor& support_embeddings, const CoordinatorWeights& weights);

enum class SelectMode { kHard, kBlend };

struct WorkerSelection {
  SelectMode mode = SelectMode::kHard;
  std::size_t index = 0;        // argmax, lowest index on ties
  std::vector<double> weights;  // length R; top-k renormalized, zero elsewhere
  std::size_t k = 1;
};

/// Hard mode picks the argmax; blend mode keeps the k largest weights and
/// renormalizes them. Ties rank the lower index first.
WorkerSelection select_worker(const DomainWeights& w, std::size_t k, SelectMode mode);

/// -sum_r w_r log w_hat_r with log-softmax numerics; w must be one-hot.
Tensor coordinator_loss(const DomainWeights& w_hat, std::span<const double> w);
/// Same with the one-hot label given by its index.
Tensor coordinator_loss(const DomainWeights& w_hat, std::size_t label);

}  // namespace tano
