// Copyright 2026 The TANO Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "tano/metric.hpp"

#include <string>

#include "tano/error.hpp"
#include "tano/ops.hpp"

namespace tano {

Tensor compute_prototypes(const Tensor& support_embeddings, std::span<const int> support_labels,
                          std::size_t n_way, std::size_t n_shot) {
  if (support_embeddings.rank() != 2) {
    throw DimensionError("support embeddings must be B x d, got " +
                         shape_str(support_embeddings.shape()));
  }
  const std::size_t b = support_embeddings.dim(0);
  if (n_way == 0 || n_shot == 0) throw ValidationError("n_way and n_shot must be positive");
  if (support_labels.size() != b) {
    throw DimensionError("compute_prototypes: " + std::to_string(support_labels.size()) +
                         " labels for " + std::to_string(b) + " embeddings");
  }
  std::vector<std::size_t> counts(n_way, 0);
  for (int y : support_labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= n_way) {
      throw ValidationError("support label " + std::to_string(y) + " outside [0, " +
                            std::to_string(n_way) + ")");
    }
    ++counts[static_cast<std::size_t>(y)];
  }
  for (std::size_t c = 0; c < n_way; ++c) {
    if (counts[c] != n_shot) {
      throw ValidationError("class " + std::to_string(c) + " has " +
                            std::to_string(counts[c]) + " support examples, expected " +
                            std::to_string(n_shot));
    }
  }
  // Averaging matrix A[c, i] = 1/n_shot when label_i == c.
  std::vector<double> a(n_way * b, 0.0);
  const double w = 1.0 / static_cast<double>(n_shot);
  for (std::size_t i = 0; i < b; ++i) {
    a[static_cast<std::size_t>(support_labels[i]) * b + i] = w;
  }
  return ops::matmul(Tensor({n_way, b}, std::move(a)), support_embeddings);
}

Tensor classify_query(const Tensor& query_embeddings, const Tensor& prototypes) {
  return ops::neg_sq_distance(query_embeddings, prototypes);
}

std::vector<int> predict(const Tensor& logits) {
  if (logits.rank() != 2) throw DimensionError("predict expects B x C logits");
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  auto d = logits.data();
  std::vector<int> out(rows, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < cols; ++c) {
      if (d[r * cols + c] > d[r * cols + best]) best = c;
    }
    out[r] = static_cast<int>(best);
  }
  return out;
}

double accuracy_percent(const Tensor& logits, std::span<const int> labels) {
  const std::vector<int> p = predict(logits);
  if (p.size() != labels.size()) throw DimensionError("accuracy: label count mismatch");
  if (p.empty()) throw ValidationError("accuracy of an empty query set");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < p.size(); ++i) hit += p[i] == labels[i];
  return 100.0 * static_cast<double>(hit) / static_cast<double>(p.size());
}

Tensor episode_loss(const Tensor& query_logits, std::span<const int> query_labels,
                    const Tensor& coordinator_loss, double v_r, double coord_weight) {
  if (!(v_r > 0.0)) throw ValidationError("episode_loss: v_r must be positive");
  if (!(coord_weight >= 0.0)) throw ValidationError("episode_loss: negative coordinator weight");
  Tensor ce = ops::cross_entropy(query_logits, query_labels);
  Tensor total = ops::add(ce, ops::scale(coordinator_loss, coord_weight));
  return ops::scale(total, v_r);
}

}  // namespace tano
