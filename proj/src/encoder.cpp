// Copyright 2026 The TANO Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "tano/encoder.hpp"

#include <cmath>
#include <random>
#include <string>

#include "tano/error.hpp"
#include "tano/ops.hpp"

namespace tano {

EncoderWeights EncoderWeights::clone() const {
  EncoderWeights w;
  for (const auto& k : kernels) w.kernels.push_back(k.clone());
  return w;
}

std::vector<Tensor*> EncoderWeights::parameters() {
  std::vector<Tensor*> out;
  for (auto& k : kernels) out.push_back(&k);
  return out;
}

EncoderWeights encoder_init(std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  EncoderWeights w;
  std::size_t in = kImageChannels;
  for (std::size_t out : kLayerChannels) {
    const double fan_in = static_cast<double>(in * 9);
    const double fan_out = static_cast<double>(out * 9);
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-a, a);
    std::vector<double> data(out * in * 9);
    for (double& v : data) v = dist(gen);
    w.kernels.push_back(Tensor::parameter({out, in, 3, 3}, std::move(data)));
    in = out;
  }
  return w;
}

GroupWorkerBank make_bank(std::size_t num_domains) {
  return GroupWorkerBank(num_domains, std::span<const std::size_t>(kLayerChannels));
}

namespace {

void check_worker(const GroupWorker& worker) {
  if (worker.layers.size() != kNumBnLayers) {
    throw DimensionError("worker has " + std::to_string(worker.layers.size()) +
                         " BN layers, encoder needs " + std::to_string(kNumBnLayers));
  }
  for (std::size_t j = 0; j < kNumBnLayers; ++j) {
    if (worker.layers[j].channels() != kLayerChannels[j]) {
      throw DimensionError("worker layer " + std::to_string(j) + " has " +
                           std::to_string(worker.layers[j].channels()) + " channels");
    }
  }
}

void check_images(const Tensor& images) {
  const Shape& s = images.shape();
  if (s.size() != 4 || s[1] != kImageChannels || s[2] != kImageSize ||
      s[3] != kImageSize) {
    throw DimensionError("encoder expects B x 3 x 16 x 16 images, got " + shape_str(s));
  }
  if (s[0] == 0) throw DimensionError("encoder called on an empty batch");
}

}  // namespace

EncodeResult encode(const Tensor& images, const EncoderWeights& weights,
                    const GroupWorker& worker, BnMode mode, bool trace) {
  check_images(images);
  check_worker(worker);
  if (weights.kernels.size() != kNumBnLayers) {
    throw DimensionError("encoder weights need one kernel per block");
  }
  EncodeResult r;
  Tensor x = images;
  for (std::size_t j = 0; j < kNumBnLayers; ++j) {
    Tensor z = ops::conv2d(x, weights.kernels[j], 1, 1);
    Tensor y;
    if (mode == BnMode::kTrain) {
      BatchStats st;
      y = bn_apply(z, worker.layers[j], BnMode::kTrain, &st);
      r.stats.push_back(std::move(st));
    } else {
      y = bn_apply(z, worker.layers[j], BnMode::kEval);
    }
    if (trace) {
      r.pre_norm.push_back(z);
      r.post_norm.push_back(y);
    }
    x = ops::max_pool2(ops::relu(y));
  }
  r.embedding = ops::reshape(x, {x.dim(0), kEmbeddingDim});
  return r;
}

void apply_running_updates(GroupWorker& worker, const std::vector<BatchStats>& stats) {
  if (stats.size() != worker.layers.size()) {
    throw DimensionError("one batch-statistics entry per BN layer is required");
  }
  for (std::size_t j = 0; j < stats.size(); ++j) {
    update_running_stats(worker.layers[j], stats[j]);
  }
}

GroupWorker adabn_adapt_worker(const Tensor& pool, const EncoderWeights& weights,
                               const GroupWorker& worker) {
  check_images(pool);
  check_worker(worker);
  GroupWorker out = worker.clone();
  out.index = GroupWorker::kTransient;
  Tensor x = pool;
  for (std::size_t j = 0; j < kNumBnLayers; ++j) {
    Tensor z = ops::conv2d(x, weights.kernels[j], 1, 1);
    out.layers[j] = adabn_adapt(out.layers[j], z);
    x = ops::max_pool2(ops::relu(bn_apply(z, out.layers[j], BnMode::kEval)));
  }
  return out;
}

}  // namespace tano
