// Copyright 2026 The TANO Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace tano {

/// Seeded generator that can be split into independent child streams
/// addressed by (stream, index), so any episode can be regenerated from the
/// run seed and its position alone.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(mix(seed)) {}

  static std::uint64_t mix(std::uint64_t x);

  /// Independent generator for item `index` of `stream`.
  Rng derive(std::uint64_t stream, std::uint64_t index) const;

  std::uint64_t seed() const { return seed_; }
  std::mt19937_64& engine() { return engine_; }

  /// Uniform integer in [0, n).
  std::size_t uniform_index(std::size_t n);
  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi);
  double normal(double mean, double stddev);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

// Stream identifiers for Rng::derive.
enum RngStream : std::uint64_t {
  kStreamGenerate = 1,
  kStreamTrainEpisode = 2,
  kStreamValEpisode = 3,
  kStreamTestEpisode = 4,
  kStreamPretrain = 5,
  kStreamKMeans = 6,
  kStreamInit = 7,
};

}  // namespace tano
