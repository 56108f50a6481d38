// Copyright 2026 The TANO Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "tano/tensor.hpp"

namespace tano {

inline constexpr double kDefaultEpsilon = 1e-5;
inline constexpr double kDefaultMomentum = 0.1;

/// Per-channel statistics over the (N, H, W) positions of one channel.
struct BatchStats {
  std::vector<double> mean;
  std::vector<double> var;  // biased, divisor m
  std::size_t m = 0;        // elements per channel: N * H * W
};

/// Affine parameters and running statistics of one BN layer.
///
/// gamma and beta are trainable leaves; running_var holds a variance, not a
/// standard deviation.
struct BNLayerParams {
  Tensor gamma;
  Tensor beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double epsilon = kDefaultEpsilon;
  double momentum = kDefaultMomentum;

  /// gamma = 1, beta = 0, running mean 0, running variance 1.
  static BNLayerParams identity(std::size_t channels,
                                double epsilon = kDefaultEpsilon,
                                double momentum = kDefaultMomentum);

  std::size_t channels() const { return running_mean.size(); }
  BNLayerParams clone() const;
  void validate() const;
};

/// One complete set of BN parameters, one entry per BN layer of the encoder.
struct GroupWorker {
  static constexpr std::size_t kTransient = std::numeric_limits<std::size_t>::max();

  std::vector<BNLayerParams> layers;
  std::size_t index = kTransient;

  GroupWorker clone() const;
};

/// R domain workers followed by the global worker at index R.
class GroupWorkerBank {
 public:
  GroupWorkerBank() = default;
  GroupWorkerBank(std::size_t num_domains, std::span<const std::size_t> layer_channels,
                  double epsilon = kDefaultEpsilon, double momentum = kDefaultMomentum);
  /// Every worker starts as a copy of `prototype`.
  GroupWorkerBank(std::size_t num_domains, const GroupWorker& prototype);

  std::size_t num_domains() const { return workers_.empty() ? 0 : workers_.size() - 1; }
  std::size_t size() const { return workers_.size(); }
  std::size_t global_index() const { return num_domains(); }
  std::size_t num_layers() const;

  GroupWorker& worker(std::size_t r);
  const GroupWorker& worker(std::size_t r) const;
  GroupWorker& global() { return worker(global_index()); }
  const GroupWorker& global() const { return worker(global_index()); }

  GroupWorkerBank clone() const;

 private:
  std::vector<GroupWorker> workers_;
};

enum class BnMode { kTrain, kEval };

BatchStats compute_batch_stats(const Tensor& z);

/// Normalizes z[N x C (x H x W)] with `params`.
///
/// Train mode normalizes with the batch statistics of z (gradients flow
/// through them) and reports them through `batch_stats` when non-null. Eval
/// mode uses the running statistics as constants.
Tensor bn_apply(const Tensor& z, const BNLayerParams& params, BnMode mode,
                BatchStats* batch_stats = nullptr);

/// Normalizes z with externally supplied statistics treated as constants.
Tensor bn_apply(const Tensor& z, const BNLayerParams& params, const BatchStats& stats);

/// Exponential moving average of the running statistics; gamma and beta are
/// not touched.
void update_running_stats(BNLayerParams& params, const BatchStats& stats);

enum class VarianceBlend { kLinear, kMixture };

/// Convex combination of the R domain workers. `weights` must lie on the
/// simplex (sum 1 within 1e-9). The bank is not modified.
GroupWorker blend_workers(const GroupWorkerBank& bank, std::span<const double> weights,
                          VarianceBlend variance = VarianceBlend::kLinear);

/// Replaces the running statistics with those of `target_batch`.
BNLayerParams adabn_adapt(const BNLayerParams& params, const Tensor& target_batch);

/// | ||(z_hat - beta) / gamma||^2 - m * var / (var + eps) | for one channel of
/// train-mode normalized values; m = z_hat.size(). With eps = 0 the target is
/// m, i.e. the normalized channel lies on the sphere of radius sqrt(m).
double sphere_residual(std::span<const double> z_normalized, double gamma, double beta,
                       double var, double epsilon);

/// sphere_residual divided by its target m * var / (var + eps).
double sphere_residual_relative(std::span<const double> z_normalized, double gamma,
                                double beta, double var, double epsilon);

/// Values of channel `c` of an N x C (x H x W) tensor, in (n, h, w) order.
std::vector<double> channel_values(const Tensor& z, std::size_t c);

}  // namespace tano
