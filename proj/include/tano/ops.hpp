// Copyright 2026 The TANO Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tano/tensor.hpp"

// Differentiable tensor operations. Each op records itself on the active
// GradientTape when any input requires a gradient.
namespace tano::ops {

// Elementwise arithmetic (identical shapes).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor square(const Tensor& x);

/// Sum of all elements as a scalar.
Tensor sum(const Tensor& x);
/// Mean of all elements as a scalar.
Tensor mean(const Tensor& x);

/// a[M x K] * b[K x N].
Tensor matmul(const Tensor& a, const Tensor& b);
/// x[M x N] + bias[N] broadcast over rows.
Tensor add_row_bias(const Tensor& x, const Tensor& bias);
/// Column means of x[M x N] as a [1 x N] tensor.
Tensor mean_rows(const Tensor& x);
/// Rows [begin, end) of x along the leading axis.
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
/// Concatenation along the leading axis; trailing dims must agree.
Tensor concat_rows(const Tensor& a, const Tensor& b);
/// Same data, new shape with equal element count.
Tensor reshape(const Tensor& x, Shape shape);

Tensor relu(const Tensor& x);

/// 2x2 stride-2 max pooling on N x C x H x W. Odd spatial sizes are padded
/// with -inf on the bottom/right, so H' = ceil(H/2).
Tensor max_pool2(const Tensor& x);

/// Cross-correlation of input[N x C x H x W] with kernel[O x C x k x k].
Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride,
              std::size_t padding);

/// Numerically stable softmax along `axis` (0 or 1) of a rank-2 tensor, or
/// along the only axis of a rank-1 tensor.
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor log_softmax(const Tensor& x, std::size_t axis);

/// Mean over rows of -log softmax(logits)[row, target[row]].
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets);
/// Mean over rows of -sum_c target[row, c] * log softmax(logits)[row, c].
Tensor cross_entropy(const Tensor& logits, const Tensor& target_dist);

/// logits[b, c] = -||queries[b] - prototypes[c]||^2.
Tensor neg_sq_distance(const Tensor& queries, const Tensor& prototypes);

}  // namespace tano::ops
