// Copyright 2026 The TANO Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tano/tensor.hpp"

namespace tano {

/// Per-class mean of the support embeddings, one row per class in label order.
/// Each label in [0, n_way) must occur exactly n_shot times.
Tensor compute_prototypes(const Tensor& support_embeddings, std::span<const int> support_labels,
                          std::size_t n_way, std::size_t n_shot);

/// logits[b, c] = -||q_b - p_c||^2.
Tensor classify_query(const Tensor& query_embeddings, const Tensor& prototypes);

/// Row-wise argmax, lowest index on ties.
std::vector<int> predict(const Tensor& logits);

/// Percentage of rows whose argmax equals the label.
double accuracy_percent(const Tensor& logits, std::span<const int> labels);

/// v_r * (mean query cross-entropy + coord_weight * coordinator loss).
Tensor episode_loss(const Tensor& query_logits, std::span<const int> query_labels,
                    const Tensor& coordinator_loss, double v_r, double coord_weight = 1.0);

}  // namespace tano
