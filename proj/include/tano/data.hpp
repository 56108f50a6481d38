// Copyright 2026 The TANO Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tano/rng.hpp"
#include "tano/tensor.hpp"

namespace tano {

// ---------------------------------------------------------------------------
// Synthetic domains

enum class Background { kFlat, kGradient, kChecker };
enum class NoiseKind { kGaussian, kSaltPepper };

/// Rendering style of one synthetic domain.
struct DomainSpec {
  std::size_t id = 0;
  std::array<double, 3> color_mean{};   // background colour
  std::array<double, 3> color_scale{};  // foreground minus background, per channel
  Background background = Background::kFlat;
  NoiseKind noise = NoiseKind::kGaussian;
  double noise_level = 0.0;  // gaussian sigma or salt-pepper probability
  bool inverted = false;     // polarity flip applied after rendering
};

/// The four hand-tuned default domains, followed by procedurally varied ones
/// when more are requested.
std::vector<DomainSpec> default_domains(std::size_t count);

/// The 20 procedural shape kinds in class order.
const std::vector<std::string>& shape_kinds();

enum class Split { kBase, kVal, kNovel };
std::string split_name(Split s);
Split parse_split(const std::string& s);

struct ClassSpec {
  std::size_t class_id = 0;
  std::string shape_kind;
  Split split = Split::kBase;
};

inline constexpr std::uint32_t kDatasetFormatVersion = 1;

struct DatasetManifest {
  std::vector<DomainSpec> domains;
  std::vector<ClassSpec> classes;
  std::size_t per_class = 0;  // images per (domain, class)
  std::uint64_t seed = 0;
  std::uint32_t format_version = kDatasetFormatVersion;

  std::size_t num_domains() const { return domains.size(); }
  std::size_t num_classes() const { return classes.size(); }
  std::vector<std::size_t> classes_in(Split s) const;
};

/// Images are stored as float32 in [0, 1], one buffer per (domain, class).
struct Dataset {
  DatasetManifest manifest;
  std::vector<std::vector<float>> blobs;  // index domain * num_classes + class

  static constexpr std::size_t kImageFloats = 3 * 16 * 16;

  std::span<const float> image(std::size_t domain, std::size_t cls, std::size_t item) const;
  std::size_t blob_index(std::size_t domain, std::size_t cls) const {
    return domain * manifest.num_classes() + cls;
  }
};

struct GenerateOptions {
  std::size_t num_domains = 4;
  std::size_t num_classes = 20;
  std::size_t per_class = 50;
  std::uint64_t seed = 0;
  /// Explicit domain styles; when non-empty they replace the defaults and
  /// must number num_domains.
  std::vector<DomainSpec> domains;
};

/// Domain style as stored in a dataset manifest.
std::string domain_spec_json(const DomainSpec& d);
DomainSpec parse_domain_spec(const std::string& json_text);

/// Renders every (domain, class) blob. Classes take shape kinds in order;
/// the last five are novel, the five before them validation, the rest base.
Dataset generate_synthetic_domains(const GenerateOptions& options);

/// `dir/manifest.json` plus `dir/blobs/d{r}_c{c}.tano`.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

/// Per-image mean of each colour channel.
std::array<double, 3> channel_means(std::span<const float> image);

// ---------------------------------------------------------------------------
// Episodes

enum class Protocol { kStandard, kIntra, kOut };
std::string protocol_name(Protocol p);
Protocol parse_protocol(const std::string& s);

/// Domains admissible for sampling. Meta-training under kOut excludes the
/// holdout, meta-testing under kOut uses only the holdout; kStandard uses the
/// single domain `holdout` (default 0).
std::vector<std::size_t> protocol_domains(Protocol protocol, std::size_t num_domains,
                                          std::optional<std::size_t> holdout, bool meta_test);

struct ImageRef {
  std::uint32_t domain = 0;
  std::uint32_t cls = 0;
  std::uint32_t item = 0;
};

/// One N-way K-shot task from a single domain. Support and query are
/// class-major: label c covers rows [c * n, (c + 1) * n).
struct Episode {
  std::size_t domain = 0;
  std::optional<std::size_t> pseudo_domain;
  std::size_t n_way = 0, n_shot = 0, n_query = 0;
  std::vector<std::size_t> classes;  // dataset class ids, in label order
  std::vector<ImageRef> support, query;
  std::vector<int> support_labels, query_labels;
};

Episode sample_episode(const Dataset& dataset, Split split, std::span<const std::size_t> domains,
                       std::size_t n_way, std::size_t n_shot, std::size_t n_query, Rng& rng);

/// Stacks images into a B x 3 x 16 x 16 tensor.
Tensor load_images(const Dataset& dataset, std::span<const ImageRef> refs);

/// Dense id of an image, unique within the dataset.
std::size_t image_key(const Dataset& dataset, const ImageRef& ref);

/// Compact JSON description, enough to replay the episode.
std::string episode_json(const Episode& episode);

// ---------------------------------------------------------------------------
// k-means pseudo-domain labels

struct KMeansResult {
  std::vector<std::size_t> labels;             // 0-based cluster per point
  std::vector<std::vector<double>> centroids;  // k x d
  double inertia = 0.0;                        // within-cluster sum of squares
  std::vector<double> history;                 // inertia per Lloyd iteration, best restart
  std::size_t iterations = 0;
};

/// Lloyd's algorithm with k-means++ seeding; keeps the restart with the
/// lowest inertia. An empty cluster is re-seeded at the point farthest from
/// its current centroid.
KMeansResult kmeans(const std::vector<std::vector<double>>& points, std::size_t k,
                    std::uint64_t seed, std::size_t restarts = 10, std::size_t max_iter = 100);

/// Index of the nearest centroid, lowest index on ties.
std::size_t nearest_centroid(std::span<const double> x,
                             const std::vector<std::vector<double>>& centroids);

/// Fraction of points whose cluster's majority true label matches theirs.
double cluster_purity(std::span<const std::size_t> clusters, std::span<const std::size_t> truth);

/// Best agreement over one-to-one relabelings of the clusters (exhaustive
/// search, k <= 8).
double matched_agreement(std::span<const std::size_t> clusters,
                         std::span<const std::size_t> truth, std::size_t k);

}  // namespace tano
