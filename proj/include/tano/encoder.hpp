// Copyright 2026 The TANO Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "tano/normalization.hpp"
#include "tano/tensor.hpp"

namespace tano {

inline constexpr std::size_t kImageChannels = 3;
inline constexpr std::size_t kImageSize = 16;
inline constexpr std::size_t kNumBnLayers = 3;
inline constexpr std::array<std::size_t, kNumBnLayers> kLayerChannels = {16, 32, 32};
inline constexpr std::size_t kEmbeddingDim = 32 * 2 * 2;

/// Conv kernels of the three conv-BN-ReLU-pool blocks. BN parameters live in
/// the worker bank; convolutions carry no bias because BN removes it.
struct EncoderWeights {
  std::vector<Tensor> kernels;  // [16x3x3x3], [32x16x3x3], [32x32x3x3]

  EncoderWeights clone() const;
  std::vector<Tensor*> parameters();
};

/// Glorot-uniform kernels, reproducible from `seed`.
EncoderWeights encoder_init(std::uint64_t seed);

/// A bank whose workers all have the encoder's layer widths.
GroupWorkerBank make_bank(std::size_t num_domains);

struct EncodeResult {
  Tensor embedding;                // B x kEmbeddingDim
  std::vector<BatchStats> stats;   // train mode only: one entry per BN layer
  std::vector<Tensor> pre_norm;    // conv outputs, filled when tracing
  std::vector<Tensor> post_norm;   // BN outputs, filled when tracing
};

/// images[B x 3 x 16 x 16] -> embeddings through `worker`'s BN layers.
///
/// Train mode normalizes with batch statistics and reports them in `stats`;
/// the caller applies them with apply_running_updates. Eval mode uses the
/// worker's running statistics and is deterministic per sample.
EncodeResult encode(const Tensor& images, const EncoderWeights& weights,
                    const GroupWorker& worker, BnMode mode, bool trace = false);

/// Folds train-mode batch statistics into `worker`'s running statistics.
void apply_running_updates(GroupWorker& worker, const std::vector<BatchStats>& stats);

/// Copy of `worker` whose running statistics are replaced, layer by layer,
/// by the statistics of `pool` as it flows through the adapted layers.
GroupWorker adabn_adapt_worker(const Tensor& pool, const EncoderWeights& weights,
                               const GroupWorker& worker);

}  // namespace tano
