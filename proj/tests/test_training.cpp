// Copyright 2026 The TANO Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "support.hpp"
#include "tano/blob.hpp"
#include "tano/error.hpp"
#include "tano/evaluation.hpp"
#include "tano/training.hpp"

namespace tano {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("tano_train_" + name);
  fs::remove_all(p);
  return p;
}

const Dataset& tiny() {
  static const Dataset ds = generate_synthetic_domains({4, 20, 8, 21});
  return ds;
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.n_way = 3;
  c.n_shot = 1;
  c.n_query = 2;
  c.epochs = 2;
  c.episodes_per_epoch = 4;
  c.val_episodes = 3;
  c.lr0 = 0.01;
  c.seed = 5;
  return c;
}

bool same_data(const Tensor& a, const Tensor& b) {
  return std::equal(a.data().begin(), a.data().end(), b.data().begin(), b.data().end());
}

bool same_worker(const GroupWorker& a, const GroupWorker& b) {
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    const auto& x = a.layers[l];
    const auto& y = b.layers[l];
    if (!same_data(x.gamma, y.gamma) || !same_data(x.beta, y.beta) ||
        x.running_mean != y.running_mean || x.running_var != y.running_var) {
      return false;
    }
  }
  return true;
}

TEST(Schedule, CosineEndpoints) {
  EXPECT_DOUBLE_EQ(cosine_lr(0, 100, 0.1, 0.0), 0.1);
  EXPECT_NEAR(cosine_lr(50, 100, 0.1, 0.0), 0.05, 1e-15);
  EXPECT_NEAR(cosine_lr(100, 100, 0.1, 0.01), 0.01, 1e-15);
  EXPECT_NEAR(cosine_lr(150, 100, 0.1, 0.01), 0.01, 1e-15);
  EXPECT_NEAR(cosine_lr(25, 100, 1.0, 0.0), 0.5 * (1 + std::cos(M_PI / 4)), 1e-15);
}

TEST(Config, ValidationRejectsBadValues) {
  TrainConfig c = tiny_config();
  c.n_way = 1;
  EXPECT_THROW(c.validate(), ValidationError);
  c = tiny_config();
  c.lr0 = -1;
  EXPECT_THROW(c.validate(), ValidationError);
  c = tiny_config();
  c.v_r = {1.0, 0.0};
  EXPECT_THROW(c.validate(), ValidationError);
  c = tiny_config();
  c.protocol = Protocol::kOut;
  EXPECT_THROW(c.validate(), ValidationError);
  PretrainConfig p;
  p.batch_size = 1;
  EXPECT_THROW(p.validate(), ValidationError);
}

TEST(Model, InitAndParameters) {
  Model m = init_model(3, 1);
  EXPECT_EQ(m.num_domains(), 3u);
  EXPECT_EQ(m.bank.size(), 4u);
  // 3 kernels, 4 coordinator tensors, gamma and beta of 3 layers for 4 workers.
  EXPECT_EQ(m.parameters().size(), 3u + 4u + 4u * 3u * 2u);
  Model c = m.clone();
  c.encoder.kernels[0].mutable_data()[0] += 1.0;
  EXPECT_NE(c.encoder.kernels[0].data()[0], m.encoder.kernels[0].data()[0]);
}

TEST(Episode, FullLossGradientsMatchFiniteDifferences) {
  const Dataset& ds = tiny();
  Model m = init_model(2, 3);
  // Break the identity symmetry of the fresh workers.
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u(0.8, 1.2);
  for (std::size_t r = 0; r < m.bank.size(); ++r)
    for (auto& l : m.bank.worker(r).layers) {
      for (double& g : l.gamma.mutable_data()) g = u(gen);
      for (double& b : l.beta.mutable_data()) b = u(gen) - 1.0;
    }
  TrainConfig c = tiny_config();
  c.coord_weight = 0.7;
  const std::vector<std::size_t> domains = {0, 1};
  Rng rng(9);
  const Episode e = sample_episode(ds, Split::kBase, domains, 3, 1, 2, rng);
  const Tensor support = load_images(ds, e.support), query = load_images(ds, e.query);
  auto params = m.parameters();
  const auto r = test::gradcheck(
      [&] { return episode_forward(m, support, query, e, 1, c).loss; }, params, 6);
  EXPECT_LT(r.max_rel_error, 1e-4) << "param " << r.param << "[" << r.index << "] analytic "
                                   << r.analytic << " numeric " << r.numeric;
  EXPECT_GT(r.checked, 100u);
}

TEST(Step, RepeatedEpisodeLossDecreases) {
  const Dataset& ds = tiny();
  Model m = init_model(1, 3);
  TrainConfig c = tiny_config();
  const Episode e = training_episode(ds, c, 0);
  const double first = meta_train_step(m, ds, e, 0, c, 0.01).loss;
  double last = first;
  for (int i = 0; i < 10; ++i) last = meta_train_step(m, ds, e, 0, c, 0.01).loss;
  EXPECT_LT(last, first);
}

TEST(Step, SingleDomainBankStaysTied) {
  const Dataset& ds = tiny();
  Model m = init_model(1, 3);
  TrainConfig c = tiny_config();
  for (std::uint64_t t = 0; t < 3; ++t) meta_train_step(m, ds, training_episode(ds, c, t), 0, c, 0.01);
  EXPECT_TRUE(same_worker(m.bank.worker(0), m.bank.global()));
  EXPECT_NE(m.bank.global().layers[0].running_mean[0], 0.0);
}

TEST(Step, OnlyLabelAndGlobalWorkersChange) {
  const Dataset& ds = tiny();
  Model m = init_model(3, 3);
  const Model before = m.clone();
  TrainConfig c = tiny_config();
  meta_train_step(m, ds, training_episode(ds, c, 0), 1, c, 0.01);
  EXPECT_TRUE(same_worker(m.bank.worker(0), before.bank.worker(0)));
  EXPECT_TRUE(same_worker(m.bank.worker(2), before.bank.worker(2)));
  EXPECT_FALSE(same_worker(m.bank.worker(1), before.bank.worker(1)));
  EXPECT_FALSE(same_worker(m.bank.global(), before.bank.global()));
}

TEST(Step, BadLabelRejected) {
  const Dataset& ds = tiny();
  Model m = init_model(2, 3);
  TrainConfig c = tiny_config();
  EXPECT_THROW(meta_train_step(m, ds, training_episode(ds, c, 0), 2, c, 0.01), ValidationError);
}

TEST(Checkpoint, RoundTripIsBitwise) {
  Checkpoint ck;
  ck.model = init_model(3, 8);
  ck.model.worker_domains = {0, 2, 3};
  ck.model.centroids = {{1.0, 2.0}, {3.0, 4.0}, {0.5, 0.25}};
  ck.model.bank.worker(1).layers[2].running_var[5] = 0.123456789012345678;
  ck.config = tiny_config();
  ck.history = {{0, 0.0, 0.0, 20.0, 0.01}, {1, 1.5, 40.0, 45.0, 0.005}};
  ck.pseudo_labels = {0, 1, 2, 1};
  ck.next_step = 4;
  const fs::path a = scratch("ck_a"), b = scratch("ck_b");
  save_checkpoint(ck, a);
  const Checkpoint back = load_checkpoint(a);
  EXPECT_EQ(back.model.worker_domains, ck.model.worker_domains);
  EXPECT_EQ(back.model.centroids, ck.model.centroids);
  EXPECT_EQ(back.pseudo_labels, ck.pseudo_labels);
  EXPECT_EQ(model_hash(back.model), model_hash(ck.model));
  save_checkpoint(back, b);
  EXPECT_EQ(checkpoint_hash(a), checkpoint_hash(b));
  EXPECT_EQ(read_file_bytes(a / "manifest.json"), read_file_bytes(b / "manifest.json"));
}

TEST(Checkpoint, CorruptionIsFormatError) {
  Checkpoint ck;
  ck.model = init_model(2, 8);
  const fs::path dir = scratch("ck_bad");
  save_checkpoint(ck, dir);
  const fs::path blob = dir / "blobs" / "enc_k1.tano";
  auto bytes = read_file_bytes(blob);
  bytes.resize(bytes.size() - 8);
  write_file_bytes(blob, bytes);
  EXPECT_THROW(load_checkpoint(dir), FormatError);
  save_checkpoint(ck, dir);
  bytes = read_file_bytes(blob);
  bytes.back() ^= 0x01;
  write_file_bytes(blob, bytes);
  EXPECT_THROW(load_checkpoint(dir), FormatError);
  fs::remove(blob);
  EXPECT_THROW(load_checkpoint(dir), FormatError);
  EXPECT_THROW(load_checkpoint(scratch("nothing")), FormatError);
}

TEST(Loop, DeterministicAndResumable) {
  const Dataset& ds = tiny();
  const Model init = init_model(1, 2);
  TrainConfig c = tiny_config();
  const fs::path a = scratch("loop_a"), b = scratch("loop_b"), r = scratch("loop_r");
  const Checkpoint ca = meta_train_loop(ds, init, c, a);
  meta_train_loop(ds, init, c, b);
  EXPECT_EQ(checkpoint_hash(a), checkpoint_hash(b));
  EXPECT_EQ(ca.history.size(), 3u);
  EXPECT_EQ(ca.model.num_domains(), 4u);
  EXPECT_EQ(ca.model.worker_domains, (std::vector<std::size_t>{0, 1, 2, 3}));

  const Checkpoint mid = load_checkpoint(a / "epochs" / "epoch_001");
  ASSERT_TRUE(mid.current.has_value());
  EXPECT_EQ(mid.next_step, c.episodes_per_epoch);
  meta_train_loop(ds, init, c, r, &mid);
  EXPECT_EQ(checkpoint_hash(a), checkpoint_hash(r));

  TrainConfig other = c;
  other.lr0 = 0.02;
  EXPECT_THROW(meta_train_loop(ds, init, other, scratch("loop_x"), &mid), ValidationError);
}

TEST(Loop, CommonBaselineUsesOneWorker) {
  const Dataset& ds = tiny();
  TrainConfig c = tiny_config();
  c.epochs = 1;
  c.baseline = Baseline::kCommon;
  const Checkpoint ck = meta_train_loop(ds, init_model(1, 2), c, scratch("loop_common"));
  EXPECT_EQ(ck.model.num_domains(), 1u);
}

TEST(Loop, PseudoLabelsCoverEveryStep) {
  const Dataset& ds = tiny();
  TrainConfig c = tiny_config();
  c.pseudo_labels = true;
  c.workers = 3;
  const Checkpoint ck = meta_train_loop(ds, init_model(1, 2), c, scratch("loop_pseudo"));
  EXPECT_EQ(ck.model.num_domains(), 3u);
  EXPECT_EQ(ck.pseudo_labels.size(), c.epochs * c.episodes_per_epoch);
  EXPECT_EQ(ck.model.worker_domains.size(), 3u);
  EXPECT_EQ(ck.model.centroids.size(), 3u);
}

TEST(Loop, MultiBaselineTrainsOneModelPerDomain) {
  const Dataset& ds = tiny();
  TrainConfig c = tiny_config();
  c.epochs = 1;
  c.baseline = Baseline::kMulti;
  const fs::path dir = scratch("loop_multi");
  meta_train_loop(ds, init_model(1, 2), c, dir);
  const Checkpoint ck = load_checkpoint(dir);
  ASSERT_EQ(ck.kind, CheckpointKind::kMulti);
  ASSERT_EQ(ck.members.size(), 4u);
  for (std::size_t d = 0; d < 4; ++d) EXPECT_EQ(ck.members[d].home_domain, d);
}

TEST(Pretrain, LearnsAndExcludesHoldout) {
  const Dataset& ds = tiny();
  PretrainConfig p;
  p.epochs = 3;
  p.batch_size = 32;
  p.seed = 1;
  p.holdout = 2;
  const PretrainResult r = pretrain_backbone(ds, p);
  EXPECT_EQ(r.num_classes, 30u);
  EXPECT_EQ(r.epoch_loss.size(), 3u);
  EXPECT_LT(r.epoch_loss.back(), r.epoch_loss.front());
  EXPECT_EQ(r.checkpoint.kind, CheckpointKind::kPretrain);
  EXPECT_EQ(r.checkpoint.model.num_domains(), 1u);
}

}  // namespace
}  // namespace tano
