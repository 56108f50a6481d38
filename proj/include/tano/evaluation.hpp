// Copyright 2026 The TANO Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "tano/data.hpp"
#include "tano/normalization.hpp"
#include "tano/training.hpp"

namespace tano {

enum class EvalMode { kTanoHard, kTanoBlend, kCommon, kMulti, kAdaBN, kOracle };

std::string eval_mode_name(EvalMode m);
EvalMode parse_eval_mode(const std::string& s);
/// Fixed row order of reports.
const std::vector<EvalMode>& report_mode_order();

struct EvalOptions {
  Protocol protocol = Protocol::kIntra;
  std::optional<std::size_t> holdout;
  EvalMode mode = EvalMode::kTanoHard;
  std::size_t n_episodes = 300;
  std::uint64_t seed = 0;
  std::size_t n_way = 5;
  std::size_t n_shot = 1;
  std::size_t n_query = 15;
  Split split = Split::kNovel;
  bool meta_test = true;        // false samples the meta-training domains
  std::size_t blend_k = 0;      // 0 blends over all domain workers
  VarianceBlend variance = VarianceBlend::kLinear;
  std::uint64_t stream = kStreamTestEpisode;
  /// Restricts sampling to one domain (cross-domain matrix rows).
  std::optional<std::size_t> only_domain;
};

struct ConfidenceInterval {
  double mean = 0.0;
  double half_width = 0.0;
};

/// mean +- 1.96 * s / sqrt(n) with the sample standard deviation s.
ConfidenceInterval confidence_interval(std::span<const double> values);

struct DomainAccuracy {
  std::size_t domain = 0;
  std::size_t episodes = 0;
  double mean = 0.0;
  double half_width = 0.0;
};

struct EvalReport {
  std::string protocol;
  std::string mode;
  std::size_t n_episodes = 0;
  std::vector<DomainAccuracy> per_domain;
  double mean = 0.0;
  double half_width = 0.0;
  std::optional<double> coordinator_accuracy;  // percent, TANO modes
  std::string config_hash;
  std::vector<double> accuracies;  // per episode, in episode order
  std::vector<std::size_t> episode_domains;

  std::string to_json() const;
};

/// Eval-mode embeddings memoized per (worker, image). Exact: an image's
/// eval-mode embedding does not depend on the batch it is computed in.
class Embedder {
 public:
  Embedder(const Model& model, const Dataset& dataset) : model_(model), dataset_(dataset) {}

  Tensor embed(std::size_t worker, std::span<const ImageRef> refs);
  /// Uncached embedding through a transient worker.
  Tensor embed_with(const GroupWorker& worker, std::span<const ImageRef> refs) const;

 private:
  const Model& model_;
  const Dataset& dataset_;
  std::unordered_map<std::size_t, std::vector<double>> cache_;
};

/// Accuracy (percent) of one episode under a non-multi mode, plus the
/// coordinator's chosen worker when the mode consults it.
struct EpisodeOutcome {
  double accuracy = 0.0;
  std::optional<std::size_t> chosen_worker;
};
EpisodeOutcome run_episode(const Model& model, Embedder& embedder, const Dataset& dataset,
                           const Episode& episode, const EvalOptions& options);

/// Episodic evaluation of a checkpoint. Multi mode routes each episode to
/// the member trained on its domain.
EvalReport evaluate_episodes(const Checkpoint& ckpt, const Dataset& dataset,
                             const EvalOptions& options);
/// Same for a bare model (every mode except multi).
EvalReport evaluate_model(const Model& model, const Dataset& dataset, const EvalOptions& options);

/// Hash of every parameter and running statistic.
std::string model_hash(const Model& model);

// ---------------------------------------------------------------------------
// Experiments

struct ExperimentConfig {
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> data_dir;  // generated when absent
  GenerateOptions data;
  PretrainConfig pretrain;
  TrainConfig train;
  std::vector<EvalMode> modes = {EvalMode::kTanoHard, EvalMode::kTanoBlend, EvalMode::kCommon,
                                 EvalMode::kMulti, EvalMode::kAdaBN};
  std::size_t eval_episodes = 300;
  std::size_t eval_queries = 15;
  std::vector<std::uint64_t> seeds = {0};
};

struct ModeSummary {
  EvalMode mode;
  std::vector<EvalReport> per_seed;
  ConfidenceInterval pooled;  // over all episodes of all seeds
  std::vector<ConfidenceInterval> per_domain;  // indexed like `domains`
};

struct ExperimentResult {
  std::vector<std::size_t> domains;  // evaluation domains
  std::vector<ModeSummary> modes;
  /// cross_domain[i][j]: accuracy of the model trained on domain i evaluated
  /// on domain j (first seed), when multi is requested.
  std::vector<std::vector<ConfidenceInterval>> cross_domain;
  std::vector<std::string> checkpoint_hashes;
  std::string report_json;
  std::string report_text;
};

/// generate -> pretrain -> (pseudo-label) -> meta-train -> evaluate for every
/// requested mode and seed. Writes report.json and report.txt to out_dir.
ExperimentResult run_experiment(const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// Normalization geometry

struct LayerGeometry {
  std::size_t layer = 0;
  double max_sphere_residual_matched = 0.0;  // relative, over workers and channels
  double gap_global = 0.0;   // cross-domain spread of standardized channel means
  double gap_matched = 0.0;
};

struct AnalysisReport {
  std::vector<LayerGeometry> layers;
  /// Per layer, per worker: max relative sphere residual on matched data.
  std::vector<std::vector<double>> residuals;
  /// Per layer, per domain, per channel: pre-normalization mean and variance.
  std::vector<std::vector<std::vector<double>>> pre_mean, pre_var;
  double matched_accuracy = 0.0;
  double mismatched_accuracy = 0.0;
  std::size_t source_domain = 0;  // worker whose statistics are swapped in
  std::size_t target_domain = 1;  // domain of the evaluated episodes

  std::string to_json() const;
};

/// Sphere residuals, per-domain statistic gaps under the global and matched
/// workers, and accuracy with deliberately swapped running statistics.
AnalysisReport emit_analysis_report(const Model& model, const Dataset& dataset,
                                    std::uint64_t seed, std::size_t n_episodes = 100);

}  // namespace tano
