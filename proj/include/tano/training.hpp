// Copyright 2026 The TANO Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tano/coordinator.hpp"
#include "tano/data.hpp"
#include "tano/encoder.hpp"
#include "tano/normalization.hpp"

namespace tano {

/// Encoder, coordinator and worker bank of one network.
struct Model {
  EncoderWeights encoder;
  CoordinatorWeights coordinator;
  GroupWorkerBank bank;
  /// True domain served by each domain worker (majority domain under pseudo
  /// labels); empty when unknown.
  std::vector<std::size_t> worker_domains;
  /// k-means centroids of the task features, one row per worker.
  std::vector<std::vector<double>> centroids;
  /// Domain a single-domain model was trained on.
  std::optional<std::size_t> home_domain;

  std::size_t num_domains() const { return bank.num_domains(); }
  Model clone() const;
  /// Every trainable tensor: kernels, coordinator, then each worker's gamma
  /// and beta in bank order.
  std::vector<Tensor*> parameters();
};

/// Fresh model: Glorot kernels and coordinator, identity BN workers.
Model init_model(std::size_t num_domains, std::uint64_t seed);

enum class Baseline { kNone, kCommon, kMulti };
std::string baseline_name(Baseline b);
Baseline parse_baseline(const std::string& s);

struct TrainConfig {
  Protocol protocol = Protocol::kIntra;
  std::optional<std::size_t> holdout;
  std::size_t n_way = 5;
  std::size_t n_shot = 1;
  std::size_t n_query = 15;
  std::size_t epochs = 40;
  std::size_t episodes_per_epoch = 100;
  double lr0 = 0.001;
  double lr_min = 0.0;
  std::vector<double> v_r;  // per worker; empty means all 1
  double coord_weight = 1.0;
  double bn_momentum = kDefaultMomentum;
  double bn_epsilon = kDefaultEpsilon;
  std::uint64_t seed = 0;
  std::size_t workers = 4;  // worker count under pseudo labels
  bool pseudo_labels = false;
  std::size_t val_episodes = 100;
  Baseline baseline = Baseline::kNone;
  bool keep_epoch_checkpoints = true;

  void validate() const;
};

struct PretrainConfig {
  std::size_t epochs = 10;
  double lr = 0.01;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  /// Domain left out of pretraining (out-of-domain protocol).
  std::optional<std::size_t> holdout;
  /// Restricts pretraining to this one domain (independent single-domain models).
  std::optional<std::size_t> domain;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 0 is the state before training
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double lr = 0.0;
};

enum class CheckpointKind { kPretrain, kMeta, kMulti };
std::string checkpoint_kind_name(CheckpointKind k);

struct Checkpoint {
  CheckpointKind kind = CheckpointKind::kMeta;
  Model model;                 // best model (kPretrain, kMeta)
  std::vector<Model> members;  // one single-domain model per domain (kMulti)
  TrainConfig config;
  PretrainConfig pretrain;
  std::size_t epoch = 0;  // completed epochs
  std::size_t best_epoch = 0;
  double best_val_accuracy = 0.0;
  std::vector<EpochRecord> history;
  std::vector<std::size_t> pseudo_labels;  // worker label per training step
  std::uint64_t next_step = 0;             // episode counter for resume
  /// Latest model in an epoch checkpoint; `model` then holds the best so far.
  std::optional<Model> current;
};

/// manifest.json plus blobs/*.tano (float64, blob version 2).
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);
/// Hash over the manifest and every blob, in manifest order.
std::string checkpoint_hash(const std::filesystem::path& dir);

double cosine_lr(std::size_t t, std::size_t total, double lr0, double lr_min = 0.0);

/// Pretraining summary per epoch.
struct PretrainResult {
  Checkpoint checkpoint;
  std::vector<double> epoch_loss;
  std::vector<double> epoch_accuracy;  // percent
  std::size_t num_classes = 0;         // joint (domain, class) labels
};

/// Joint (domain, class) classification over the base split with a linear
/// head that is discarded afterwards. The result holds the encoder and the
/// global worker (a one-domain bank).
PretrainResult pretrain_backbone(const Dataset& dataset, const PretrainConfig& config);

struct StepMetrics {
  double loss = 0.0;
  double query_loss = 0.0;
  double coord_loss = 0.0;
  double accuracy = 0.0;  // percent of queries
  std::vector<double> w_hat;
};

/// Loss of one episode routed through `label` (teacher forcing), without
/// side effects. With a one-domain bank the loss path uses the global worker.
/// When `stats` is non-null it receives {global-pass stats, label-pass stats}.
struct EpisodeForward {
  Tensor loss;
  Tensor query_loss;
  Tensor coord_loss;
  Tensor query_logits;
  std::vector<double> w_hat;
  std::vector<BatchStats> global_stats;
  std::vector<BatchStats> label_stats;
};
EpisodeForward episode_forward(const Model& model, const Tensor& support, const Tensor& query,
                               const Episode& episode, std::size_t label,
                               const TrainConfig& config);

/// One SGD step on one episode: forward, backward, parameter update of the
/// encoder, coordinator, label worker and global worker, then running-stat
/// updates of those two workers.
StepMetrics meta_train_step(Model& model, const Dataset& dataset, const Episode& episode,
                            std::size_t label, const TrainConfig& config, double lr);

using ProgressFn = std::function<void(const EpochRecord&)>;

/// Full episodic training. `init` provides the encoder and global worker
/// (pretrained or fresh). Writes per-epoch checkpoints under `out/epochs`
/// and the best model to `out`. With `resume`, continues from that epoch
/// checkpoint and reproduces the uninterrupted run.
Checkpoint meta_train_loop(const Dataset& dataset, const Model& init, const TrainConfig& config,
                           const std::filesystem::path& out,
                           const Checkpoint* resume = nullptr, ProgressFn progress = nullptr);

/// MultiModels baseline trained independently: for every meta-training
/// domain, pretraining on that domain alone followed by single-domain
/// meta-training. Members are written under `out/members/d{r}`.
Checkpoint train_multi_models(const Dataset& dataset, const PretrainConfig& pretrain,
                              const TrainConfig& config, const std::filesystem::path& out,
                              ProgressFn progress = nullptr);

/// Mean eval-mode global-worker embedding of each training task's support.
std::vector<std::vector<double>> task_features(const Model& model, const Dataset& dataset,
                                               const std::vector<Episode>& episodes);

/// Episode of training step `t` under `config`.
Episode training_episode(const Dataset& dataset, const TrainConfig& config, std::uint64_t t);

}  // namespace tano
