// Copyright 2026 The TANO Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <vector>

#include "tano/error.hpp"
#include "tano/evaluation.hpp"
#include "tano/training.hpp"

namespace tano {
namespace {

namespace fs = std::filesystem;

const Dataset& tiny() {
  static const Dataset ds = generate_synthetic_domains({4, 20, 8, 31});
  return ds;
}

Model four_domain_model(std::uint64_t seed) {
  Model m = init_model(4, seed);
  m.worker_domains = {0, 1, 2, 3};
  return m;
}

EvalOptions small_eval(EvalMode mode) {
  EvalOptions o;
  o.mode = mode;
  o.n_episodes = 12;
  o.n_query = 3;
  o.seed = 4;
  return o;
}

TEST(ConfidenceInterval, MatchesFormula) {
  const std::vector<double> v = {20, 40, 60, 80, 100};
  const ConfidenceInterval ci = confidence_interval(v);
  const double s = std::sqrt((1600.0 + 400 + 0 + 400 + 1600) / 4.0);
  EXPECT_DOUBLE_EQ(ci.mean, 60.0);
  EXPECT_NEAR(ci.half_width, 1.96 * s / std::sqrt(5.0), 1e-12);
  const std::vector<double> one = {50};
  EXPECT_THROW(confidence_interval(one), ValidationError);
}

TEST(Modes, NamesRoundTrip) {
  for (EvalMode m : {EvalMode::kTanoHard, EvalMode::kTanoBlend, EvalMode::kCommon, EvalMode::kMulti,
                     EvalMode::kAdaBN, EvalMode::kOracle}) {
    EXPECT_EQ(parse_eval_mode(eval_mode_name(m)), m);
  }
  EXPECT_THROW(parse_eval_mode("tano"), ValidationError);
  EXPECT_EQ(report_mode_order().front(), EvalMode::kTanoHard);
}

TEST(Evaluate, DeterministicAndBounded) {
  const Model m = four_domain_model(3);
  const EvalReport a = evaluate_model(m, tiny(), small_eval(EvalMode::kTanoBlend));
  const EvalReport b = evaluate_model(m, tiny(), small_eval(EvalMode::kTanoBlend));
  EXPECT_EQ(a.to_json(), b.to_json());
  EXPECT_EQ(a.accuracies.size(), 12u);
  for (double acc : a.accuracies) {
    EXPECT_GE(acc, 0.0);
    EXPECT_LE(acc, 100.0);
  }
  ASSERT_TRUE(a.coordinator_accuracy.has_value());
  EvalOptions other = small_eval(EvalMode::kTanoBlend);
  other.seed = 5;
  EXPECT_NE(evaluate_model(m, tiny(), other).config_hash, a.config_hash);
}

TEST(Evaluate, SingleWorkerTanoEqualsCommon) {
  const Model m = init_model(1, 8);
  const EvalReport hard = evaluate_model(m, tiny(), small_eval(EvalMode::kTanoHard));
  const EvalReport common = evaluate_model(m, tiny(), small_eval(EvalMode::kCommon));
  EXPECT_EQ(hard.accuracies, common.accuracies);
  EXPECT_FALSE(hard.coordinator_accuracy.has_value());
}

TEST(Evaluate, OracleNeedsWorkerDomains) {
  Model m = four_domain_model(3);
  EXPECT_NO_THROW(evaluate_model(m, tiny(), small_eval(EvalMode::kOracle)));
  m.worker_domains.clear();
  EXPECT_THROW(evaluate_model(m, tiny(), small_eval(EvalMode::kOracle)), ValidationError);
}

TEST(Evaluate, MultiNeedsMultiCheckpoint) {
  Checkpoint ck;
  ck.model = init_model(1, 3);
  EXPECT_THROW(evaluate_episodes(ck, tiny(), small_eval(EvalMode::kMulti)), ValidationError);
  EXPECT_THROW(evaluate_model(ck.model, tiny(), small_eval(EvalMode::kMulti)), ValidationError);
}

TEST(Evaluate, OutProtocolNeedsHoldout) {
  const Model m = init_model(1, 3);
  EvalOptions o = small_eval(EvalMode::kCommon);
  o.protocol = Protocol::kOut;
  EXPECT_THROW(evaluate_model(m, tiny(), o), ValidationError);
  o.holdout = 2;
  const EvalReport r = evaluate_model(m, tiny(), o);
  ASSERT_EQ(r.per_domain.size(), 1u);
  EXPECT_EQ(r.per_domain[0].domain, 2u);
}

TEST(Evaluate, PerDomainCountsSumToTotal) {
  const Model m = init_model(1, 3);
  EvalOptions o = small_eval(EvalMode::kCommon);
  o.n_episodes = 40;
  const EvalReport r = evaluate_model(m, tiny(), o);
  std::size_t total = 0;
  for (const auto& d : r.per_domain) total += d.episodes;
  EXPECT_EQ(total, 40u);
  const double mean = std::accumulate(r.accuracies.begin(), r.accuracies.end(), 0.0) / 40.0;
  EXPECT_NEAR(r.mean, mean, 1e-12);
}

TEST(Embedder, CacheMatchesDirectEncode) {
  const Model m = init_model(2, 3);
  Embedder e(m, tiny());
  const std::vector<ImageRef> refs = {{0, 1, 2}, {1, 3, 4}, {3, 19, 7}};
  const Tensor first = e.embed(1, refs);
  const Tensor again = e.embed(1, refs);
  const Tensor direct = e.embed_with(m.bank.worker(1), refs);
  EXPECT_EQ(std::vector<double>(first.data().begin(), first.data().end()),
            std::vector<double>(direct.data().begin(), direct.data().end()));
  EXPECT_EQ(std::vector<double>(again.data().begin(), again.data().end()),
            std::vector<double>(direct.data().begin(), direct.data().end()));
}

TEST(Analysis, SphereResidualsAreSmall) {
  const Dataset ds = generate_synthetic_domains({4, 20, 16, 32});
  const Model m = four_domain_model(3);
  const AnalysisReport r = emit_analysis_report(m, ds, 1, 4);
  ASSERT_EQ(r.layers.size(), kNumBnLayers);
  for (const auto& l : r.layers) EXPECT_LT(l.max_sphere_residual_matched, 1e-3);
}

}  // namespace
}  // namespace tano
