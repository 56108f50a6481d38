// Copyright 2026 The TANO Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite: one PASS/FAIL line per criterion. The experiment
// criteria (4-7) share one intra-domain run over three seeds, one
// MultiModels run and one leave-one-domain-out run.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "support.hpp"
#include "tano/blob.hpp"
#include "tano/error.hpp"
#include "tano/evaluation.hpp"
#include "tano/log.hpp"
#include "tano/metric.hpp"
#include "tano/training.hpp"

namespace tano {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

// Experiment settings shared by criteria 4-7.
constexpr std::size_t kEvalEpisodes = 300;
constexpr std::size_t kEvalQueries = 15;
constexpr std::size_t kOutHoldout = 3;
const std::vector<std::uint64_t> kSeeds = {0, 1, 2};

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string ci_text(const ConfidenceInterval& ci) {
  return fmt("%.2f", ci.mean) + " +- " + fmt("%.2f", ci.half_width);
}

bool separated_above(const ConfidenceInterval& hi, const ConfidenceInterval& lo) {
  return hi.mean - hi.half_width > lo.mean + lo.half_width;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(TANO_CLI_PATH) + " -q " + args + " >/dev/null 2>&1 </dev/null";
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

TrainConfig acceptance_train_config() {
  TrainConfig c;
  c.epochs = 20;
  c.episodes_per_epoch = 100;
  c.val_episodes = 50;
  c.lr0 = 0.02;
  return c;
}

PretrainConfig acceptance_pretrain_config() {
  PretrainConfig p;
  p.epochs = 10;
  return p;
}

// ---------------------------------------------------------------------------
// 1. Numerics

Outcome criterion_numerics() {
  const auto t0 = Clock::now();
  std::mt19937_64 gen(101);
  using test::gradcheck;
  using test::probe;
  using test::random_tensor;
  double worst = 0.0;
  std::string worst_name;
  test::GradCheck worst_entry;
  std::size_t checked = 0, kinks = 0;
  auto check = [&](const std::string& name, const std::function<Tensor()>& loss,
                   const std::vector<Tensor*>& params, std::size_t samples = 20) {
    const test::GradCheck r = gradcheck(loss, params, samples);
    checked += r.checked;
    kinks += r.kinks;
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      worst_name = name;
      worst_entry = r;
    }
  };

  Tensor a = random_tensor({3, 4}, gen), b = random_tensor({3, 4}, gen);
  check("add", [&] { return probe(ops::add(a, b)); }, {&a, &b});
  check("sub", [&] { return probe(ops::sub(a, b)); }, {&a, &b});
  check("mul", [&] { return probe(ops::mul(a, b)); }, {&a, &b});
  check("scale", [&] { return probe(ops::scale(a, -1.3)); }, {&a});
  check("square", [&] { return probe(ops::square(a)); }, {&a});
  check("sum", [&] { return ops::sum(ops::square(a)); }, {&a});
  check("mean", [&] { return ops::mean(ops::square(a)); }, {&a});
  Tensor m = random_tensor({4, 6}, gen), n = random_tensor({6, 3}, gen), bias = random_tensor({3}, gen);
  check("matmul", [&] { return probe(ops::matmul(m, n)); }, {&m, &n});
  check("add_row_bias", [&] { return probe(ops::add_row_bias(ops::matmul(m, n), bias)); }, {&bias});
  check("mean_rows", [&] { return probe(ops::mean_rows(m)); }, {&m});
  check("slice_rows", [&] { return probe(ops::slice_rows(m, 1, 3)); }, {&m});
  Tensor extra = random_tensor({2, 6}, gen);
  check("concat_rows", [&] { return probe(ops::concat_rows(m, extra)); }, {&m, &extra});
  check("reshape", [&] { return probe(ops::reshape(m, {3, 8})); }, {&m});
  Tensor x = random_tensor({2, 3, 5, 5}, gen), k = random_tensor({4, 3, 3, 3}, gen);
  check("relu", [&] { return probe(ops::relu(x)); }, {&x});
  check("max_pool2", [&] { return probe(ops::max_pool2(x)); }, {&x});
  check("conv2d", [&] { return probe(ops::conv2d(x, k, 1, 1)); }, {&x, &k});
  check("conv2d stride 2", [&] { return probe(ops::conv2d(x, k, 2, 0)); }, {&x, &k});
  Tensor s = random_tensor({3, 5}, gen, -2, 2);
  check("softmax", [&] { return probe(ops::softmax(s, 1)); }, {&s});
  check("log_softmax", [&] { return probe(ops::log_softmax(s, 1)); }, {&s});
  const std::vector<int> targets = {1, 4, 0};
  check("cross_entropy", [&] { return ops::cross_entropy(s, targets); }, {&s});
  Tensor q = random_tensor({4, 6}, gen), p = random_tensor({3, 6}, gen);
  check("neg_sq_distance", [&] { return probe(ops::neg_sq_distance(q, p)); }, {&q, &p});

  Tensor z = random_tensor({3, 2, 3, 3}, gen, -2, 2);
  BNLayerParams bn = BNLayerParams::identity(2);
  for (double& g : bn.gamma.mutable_data()) g = 1.3;
  bn.running_mean = {0.2, -0.1};
  bn.running_var = {0.8, 1.4};
  check("bn train", [&] { return probe(bn_apply(z, bn, BnMode::kTrain)); }, {&z, &bn.gamma, &bn.beta});
  check("bn eval", [&] { return probe(bn_apply(z, bn, BnMode::kEval)); }, {&z, &bn.gamma, &bn.beta});

  CoordinatorWeights cw = coordinator_init(12, 3, 6);
  for (double& v : cw.b1.mutable_data()) v = 0.1;
  Tensor emb = random_tensor({4, 12}, gen);
  auto cparams = cw.parameters();
  cparams.push_back(&emb);
  check("coordinator", [&] { return coordinator_loss(coordinate(emb, cw), 2); }, cparams);
  Tensor sup = random_tensor({6, 5}, gen), qry = random_tensor({4, 5}, gen);
  const std::vector<int> sl = {0, 0, 1, 1, 2, 2}, ql = {0, 1, 2, 1};
  check("prototypes",
        [&] { return ops::cross_entropy(classify_query(qry, compute_prototypes(sup, sl, 3, 2)), ql); },
        {&sup, &qry});

  // Full episode loss of a four-worker model through every worker.
  const Dataset ds = generate_synthetic_domains({4, 20, 8, 41});
  Model model = init_model(4, 5);
  std::uniform_real_distribution<double> u(0.8, 1.2);
  for (std::size_t r = 0; r < model.bank.size(); ++r) {
    for (auto& l : model.bank.worker(r).layers) {
      for (double& g : l.gamma.mutable_data()) g = u(gen);
      for (double& be : l.beta.mutable_data()) be = u(gen) - 1.0;
    }
  }
  TrainConfig tc;
  tc.n_way = 3;
  tc.n_query = 2;
  tc.coord_weight = 0.7;
  const std::vector<std::size_t> domains = {0, 1, 2, 3};
  auto params = model.parameters();
  for (std::size_t label = 0; label < 4; ++label) {
    Rng rng(50 + label);
    const Episode e = sample_episode(ds, Split::kBase, domains, 3, 1, 2, rng);
    const Tensor support = load_images(ds, e.support), query = load_images(ds, e.query);
    check("episode loss via worker " + std::to_string(label),
          [&] { return episode_forward(model, support, query, e, label, tc).loss; }, params, 4);
  }

  const double secs = seconds_since(t0);
  Outcome o;
  // Kinked entries are excluded from the comparison; a large share would
  // leave too little checked.
  o.pass = worst < 1e-4 && secs < 30.0 && kinks * 20 <= checked;
  o.detail = std::to_string(checked) + " entries (" + std::to_string(kinks) +
             " straddle a kink), max rel error " + fmt("%.2e", worst) + " (" +
             worst_name + ", analytic " + fmt("%.3e", worst_entry.analytic) + " vs numeric " +
             fmt("%.3e", worst_entry.numeric) + "), " + fmt("%.1f", secs) + " s";
  return o;
}

// ---------------------------------------------------------------------------
// 2. Normalization oracle

Outcome criterion_bn_oracle() {
  std::mt19937_64 gen(202);
  std::uniform_int_distribution<std::size_t> dim(1, 5);
  double worst_train = 0.0, worst_stats = 0.0, worst_indep = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = dim(gen) + 1, c = dim(gen), h = dim(gen), w = dim(gen);
    Tensor z = test::random_tensor({n, c, h, w}, gen, -3, 3, false);
    BNLayerParams p = BNLayerParams::identity(c);
    std::uniform_real_distribution<double> g(0.5, 1.5), b(-0.5, 0.5);
    for (double& v : p.gamma.mutable_data()) v = g(gen);
    for (double& v : p.beta.mutable_data()) v = b(gen);
    for (double& v : p.running_mean) v = b(gen);
    for (double& v : p.running_var) v = g(gen);

    std::vector<double> mean, var;
    const auto ref = test::naive_bn({z.data().begin(), z.data().end()}, n, c, h * w,
                                    {p.gamma.data().begin(), p.gamma.data().end()},
                                    {p.beta.data().begin(), p.beta.data().end()}, p.epsilon, &mean,
                                    &var);
    const BatchStats st = compute_batch_stats(z);
    worst_stats = std::max({worst_stats, test::max_abs_diff(st.mean, mean),
                            test::max_abs_diff(st.var, var)});
    worst_train = std::max(worst_train, test::max_abs_diff(bn_apply(z, p, BnMode::kTrain).data(), ref));

    const Tensor full = bn_apply(z, p, BnMode::kEval);
    for (std::size_t i = 0; i < n; ++i) {
      const Tensor one = bn_apply(ops::slice_rows(z, i, i + 1), p, BnMode::kEval);
      worst_indep = std::max(
          worst_indep, test::max_abs_diff(one.data(), full.data().subspan(i * one.numel(), one.numel())));
    }
  }
  // Whole-encoder eval embeddings, single images against a batch.
  const Dataset ds = generate_synthetic_domains({4, 20, 4, 42});
  Model model = init_model(1, 9);
  for (auto& l : model.bank.global().layers) {
    for (double& v : l.running_mean) v = 0.05;
    for (double& v : l.running_var) v = 0.6;
  }
  std::vector<ImageRef> refs;
  for (std::uint32_t d = 0; d < 4; ++d) refs.push_back({d, 2 * d, d});
  const Tensor batch = encode(load_images(ds, refs), model.encoder, model.bank.global(), BnMode::kEval).embedding;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const Tensor one = encode(load_images(ds, std::span(&refs[i], 1)), model.encoder,
                              model.bank.global(), BnMode::kEval)
                           .embedding;
    worst_indep = std::max(worst_indep, test::max_abs_diff(one.data(), batch.data().subspan(
                                                                           i * kEmbeddingDim, kEmbeddingDim)));
  }
  Outcome o;
  o.pass = worst_train <= 1e-12 && worst_stats <= 1e-12 && worst_indep <= 1e-12;
  o.detail = "50 inputs: bn_apply " + fmt("%.1e", worst_train) + ", stats " +
             fmt("%.1e", worst_stats) + ", eval batch independence " + fmt("%.1e", worst_indep);
  return o;
}

// ---------------------------------------------------------------------------
// 3. Sphere invariants

Outcome criterion_sphere(const Model& trained, const Dataset& ds) {
  // worst[eps index][direct, affine]; radius_gap is the eps-induced distance
  // from the radius-sqrt(m) sphere, reported for context.
  double worst[2][2] = {{0, 0}, {0, 0}};
  double radius_gap = 0.0;
  std::size_t channels = 0;
  Rng rng(303);
  const double eps_values[2] = {0.0, kDefaultEpsilon};
  for (int ei = 0; ei < 2; ++ei) {
    const double eps = eps_values[ei];
    for (std::size_t r = 0; r < trained.bank.size(); ++r) {
      GroupWorker worker = trained.bank.worker(r).clone();
      for (auto& l : worker.layers) l.epsilon = eps;
      std::vector<std::size_t> doms;
      if (r < trained.worker_domains.size()) {
        doms = {trained.worker_domains[r]};
      } else {
        for (std::size_t d = 0; d < ds.manifest.num_domains(); ++d) doms.push_back(d);
      }
      for (int batch = 0; batch < 3; ++batch) {
        const Episode e = sample_episode(ds, Split::kBase, doms, 5, 2, 2, rng);
        const EncodeResult res = encode(load_images(ds, e.support), trained.encoder, worker,
                                        BnMode::kTrain, true);
        for (std::size_t l = 0; l < kNumBnLayers; ++l) {
          const auto& layer = worker.layers[l];
          const BatchStats& st = res.stats[l];
          for (std::size_t c = 0; c < kLayerChannels[l]; ++c) {
            const auto pre = channel_values(res.pre_norm[l], c);
            std::vector<double> xhat(pre.size());
            for (std::size_t i = 0; i < pre.size(); ++i) {
              xhat[i] = (pre[i] - st.mean[c]) / std::sqrt(st.var[c] + eps);
            }
            const double direct = sphere_residual_relative(xhat, 1.0, 0.0, st.var[c], eps);
            const double affine = sphere_residual_relative(channel_values(res.post_norm[l], c),
                                                           layer.gamma.data()[c], layer.beta.data()[c],
                                                           st.var[c], eps);
            worst[ei][0] = std::max(worst[ei][0], direct);
            worst[ei][1] = std::max(worst[ei][1], affine);
            if (eps > 0.0) {
              radius_gap = std::max(radius_gap, sphere_residual_relative(xhat, 1.0, 0.0, st.var[c], 0.0));
            }
            ++channels;
          }
        }
      }
    }
  }
  Outcome o;
  // eps = 0 is exact up to the roundoff of a sum over at most 512 values.
  o.pass = worst[0][0] < 1e-12 && worst[0][1] < 1e-9 && worst[1][0] < 1e-3 && worst[1][1] < 1e-3;
  o.detail = std::to_string(channels) + " channel batches over " + std::to_string(trained.bank.size()) +
             " workers; eps=0: " + fmt("%.1e", worst[0][0]) + " (affine inverted " +
             fmt("%.1e", worst[0][1]) + "); eps=1e-5: " + fmt("%.1e", worst[1][0]) +
             " (affine inverted " + fmt("%.1e", worst[1][1]) + "); max shrink below radius sqrt(m) " +
             fmt("%.1e", radius_gap);
  return o;
}

// ---------------------------------------------------------------------------
// Shared experiments

const ModeSummary& summary(const ExperimentResult& r, EvalMode m) {
  for (const auto& s : r.modes) {
    if (s.mode == m) return s;
  }
  throw ValidationError("mode " + eval_mode_name(m) + " missing from experiment");
}

ExperimentResult run_logged(const ExperimentConfig& cfg, const std::string& name) {
  const auto t0 = Clock::now();
  std::printf("[run] %s experiment in %s\n", name.c_str(), cfg.out_dir.c_str());
  std::fflush(stdout);
  ExperimentResult r = run_experiment(cfg);
  std::printf("%s", r.report_text.c_str());
  std::printf("[run] %s took %.0f s\n\n", name.c_str(), seconds_since(t0));
  std::fflush(stdout);
  return r;
}

Outcome criterion_intra(const ExperimentResult& r) {
  const auto& hard = summary(r, EvalMode::kTanoHard).pooled;
  const auto& common = summary(r, EvalMode::kCommon).pooled;
  const auto& adabn = summary(r, EvalMode::kAdaBN).pooled;
  const double margin = hard.mean - common.mean;
  const double adabn_gap = adabn.mean - common.mean;
  Outcome o;
  o.pass = margin >= 2.0 && separated_above(hard, common) && std::abs(adabn_gap) <= 2.0;
  o.detail = "tano-hard " + ci_text(hard) + ", common " + ci_text(common) + " (margin " +
             fmt("%+.2f", margin) + (separated_above(hard, common) ? ", CIs separated" : ", CIs overlap") +
             "), adabn " + ci_text(adabn) + " (" + fmt("%+.2f", adabn_gap) + " vs common)";
  return o;
}

// Entry [i][j]: model trained on domain i, evaluated on domain j. The drop is
// measured against the in-domain model of the evaluated domain, which is how
// the cross-domain table reads column by column.
Outcome criterion_cross_domain(const ExperimentResult& multi, const EvalReport& tano_seed0) {
  const auto& m = multi.cross_domain;
  const std::size_t nd = m.size();
  double min_drop = INFINITY, min_row_drop = INFINITY, min_margin = INFINITY;
  std::string where;
  for (std::size_t j = 0; j < nd; ++j) {
    double tano_j = 0.0;
    for (const auto& d : tano_seed0.per_domain) {
      if (d.domain == j) tano_j = d.mean;
    }
    for (std::size_t i = 0; i < nd; ++i) {
      if (i == j) continue;
      const double drop = m[j][j].mean - m[i][j].mean;
      if (drop < min_drop) {
        min_drop = drop;
        where = "model D" + std::to_string(i) + " on D" + std::to_string(j);
      }
      min_row_drop = std::min(min_row_drop, m[i][i].mean - m[i][j].mean);
      min_margin = std::min(min_margin, tano_j - m[i][j].mean);
    }
  }
  Outcome o;
  o.pass = min_drop >= 10.0 && min_margin > 0.0;
  o.detail = "min off-domain drop " + fmt("%.2f", min_drop) + " (" + where +
             "; against the model's own home accuracy " + fmt("%.2f", min_row_drop) +
             "), min tano margin over off-diagonal " + fmt("%+.2f", min_margin);
  return o;
}

Outcome criterion_coordinator(const ExperimentResult& r, const Dataset& ds, const fs::path& root) {
  const auto& hard = summary(r, EvalMode::kTanoHard);
  double coord_sum = 0.0, coord_min = 100.0;
  for (const auto& rep : hard.per_seed) {
    const double a = rep.coordinator_accuracy.value_or(0.0);
    coord_sum += a;
    coord_min = std::min(coord_min, a);
  }
  const double coord = coord_sum / static_cast<double>(hard.per_seed.size());

  // Pseudo labels exactly as meta-training computes them.
  const Checkpoint pre = load_checkpoint(root / "seed_0" / "pretrain");
  TrainConfig tc = acceptance_train_config();
  tc.seed = 0;
  tc.pseudo_labels = true;
  std::vector<Episode> episodes;
  std::vector<std::size_t> truth;
  for (std::uint64_t t = 0; t < 500; ++t) {
    episodes.push_back(training_episode(ds, tc, t));
    truth.push_back(episodes.back().domain);
  }
  const auto features = task_features(pre.model, ds, episodes);
  const KMeansResult km = kmeans(features, tc.workers, Rng(tc.seed).derive(kStreamKMeans, 0).seed());
  const double agreement = 100.0 * matched_agreement(km.labels, truth, tc.workers);

  Outcome o;
  o.pass = coord >= 90.0 && agreement >= 90.0;
  o.detail = "coordinator argmax accuracy " + fmt("%.2f", coord) + "% (min seed " +
             fmt("%.2f", coord_min) + "%), k-means purity under matching " + fmt("%.2f", agreement) +
             "% on 500 tasks";
  return o;
}

Outcome criterion_out_of_domain(const ExperimentResult& r) {
  const auto& blend = summary(r, EvalMode::kTanoBlend).pooled;
  const auto& common = summary(r, EvalMode::kCommon).pooled;
  Outcome o;
  o.pass = separated_above(blend, common);
  o.detail = "held-out D" + std::to_string(kOutHoldout) + ": tano-blend " + ci_text(blend) +
             ", common " + ci_text(common) + " (" + fmt("%+.2f", blend.mean - common.mean) + ")";
  return o;
}

// ---------------------------------------------------------------------------
// 8. Determinism and formats

ExperimentConfig tiny_experiment(const fs::path& out) {
  ExperimentConfig c;
  c.out_dir = out;
  c.data = {4, 20, 12, 77, {}};
  c.pretrain.epochs = 1;
  c.train.epochs = 1;
  c.train.episodes_per_epoch = 4;
  c.train.val_episodes = 2;
  c.train.n_query = 3;
  c.modes = {EvalMode::kTanoHard, EvalMode::kTanoBlend, EvalMode::kCommon, EvalMode::kMulti,
             EvalMode::kAdaBN};
  c.eval_episodes = 8;
  c.eval_queries = 3;
  c.seeds = {5};
  return c;
}

Outcome criterion_determinism(const fs::path& root, const fs::path& intra_root) {
  std::vector<std::string> failures;
  const fs::path a = root / "det_a", b = root / "det_b";
  fs::remove_all(a);
  fs::remove_all(b);
  set_log_level(LogLevel::kQuiet);
  const ExperimentResult ra = run_experiment(tiny_experiment(a));
  const ExperimentResult rb = run_experiment(tiny_experiment(b));
  set_log_level(LogLevel::kWarning);
  if (ra.checkpoint_hashes != rb.checkpoint_hashes) failures.push_back("checkpoint hashes differ");
  if (file_bytes(a / "report.json") != file_bytes(b / "report.json")) failures.push_back("report.json differs");
  if (file_bytes(a / "report.txt") != file_bytes(b / "report.txt")) failures.push_back("report.txt differs");

  // Bitwise round trips.
  const Dataset ds = read_dataset(a / "data");
  const fs::path ds2 = root / "det_dataset_copy";
  fs::remove_all(ds2);
  write_dataset(ds, ds2);
  for (const auto& entry : fs::directory_iterator(a / "data" / "blobs")) {
    if (file_bytes(entry.path()) != file_bytes(ds2 / "blobs" / entry.path().filename())) {
      failures.push_back("dataset blob " + entry.path().filename().string() + " changed");
      break;
    }
  }
  if (file_bytes(a / "data" / "manifest.json") != file_bytes(ds2 / "manifest.json")) {
    failures.push_back("dataset manifest changed");
  }
  std::size_t checkpoints = 0;
  for (const fs::path& ck : {intra_root / "seed_0" / "tano", intra_root / "seed_0" / "common",
                             a / "seed_5" / "multi", a / "seed_5" / "pretrain"}) {
    if (!fs::exists(ck / "manifest.json")) continue;
    const fs::path copy = root / "det_ckpt_copy";
    fs::remove_all(copy);
    save_checkpoint(load_checkpoint(ck), copy);
    if (checkpoint_hash(ck) != checkpoint_hash(copy)) failures.push_back("checkpoint " + ck.string() + " changed");
    ++checkpoints;
  }

  // Damaged files through the command-line tool.
  int bad_exits = 0, damaged = 0;
  auto expect4 = [&](const std::string& args, const std::string& what) {
    ++damaged;
    const int code = run_cli(args);
    if (code != 4) {
      ++bad_exits;
      failures.push_back(what + " exited " + std::to_string(code));
    }
  };
  const fs::path dd = root / "det_damaged_data";
  fs::remove_all(dd);
  fs::copy(a / "data", dd, fs::copy_options::recursive);
  fs::resize_file(dd / "blobs" / "d2_c7.tano", fs::file_size(dd / "blobs" / "d2_c7.tano") - 9);
  expect4("info --data " + dd.string(), "truncated dataset blob");
  expect4("eval --data " + dd.string() + " --ckpt " + (a / "seed_5" / "tano").string() + " --seed 1",
          "eval on truncated dataset");
  fs::remove_all(dd);
  fs::copy(a / "data", dd, fs::copy_options::recursive);
  {
    std::fstream f(dd / "blobs" / "d0_c0.tano", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(40);
    f.put('\x7f');
  }
  expect4("info --data " + dd.string(), "corrupted dataset blob");
  std::ofstream(dd / "manifest.json", std::ios::trunc) << "{\"format_version\": 1, \"domains\": [";
  expect4("info --data " + dd.string(), "truncated dataset manifest");

  const fs::path dc = root / "det_damaged_ckpt";
  fs::remove_all(dc);
  fs::copy(a / "seed_5" / "tano", dc, fs::copy_options::recursive);
  for (const auto& entry : fs::directory_iterator(dc / "blobs")) {
    fs::resize_file(entry.path(), fs::file_size(entry.path()) / 2);
    break;
  }
  expect4("info --ckpt " + dc.string(), "truncated checkpoint blob");
  expect4("eval --data " + (a / "data").string() + " --ckpt " + dc.string() + " --seed 1",
          "eval of truncated checkpoint");
  fs::remove_all(dc);
  fs::copy(a / "seed_5" / "tano", dc, fs::copy_options::recursive);
  {
    std::string text = file_bytes(dc / "manifest.json");
    std::ofstream(dc / "manifest.json", std::ios::trunc) << text.substr(0, text.size() / 2);
  }
  expect4("info --ckpt " + dc.string(), "truncated checkpoint manifest");

  Outcome o;
  o.pass = failures.empty();
  o.detail = "two identical runs, " + std::to_string(ra.checkpoint_hashes.size()) +
             " checkpoint hashes and report bytes compared; dataset + " + std::to_string(checkpoints) +
             " checkpoint round trips; " + std::to_string(damaged - bad_exits) + "/" +
             std::to_string(damaged) + " damaged inputs exit 4";
  for (const auto& f : failures) o.detail += "; " + f;
  return o;
}

// ---------------------------------------------------------------------------
// 9. Degeneracies

Outcome criterion_degeneracies(const fs::path& root) {
  std::vector<std::string> notes;
  bool pass = true;
  const Dataset ds = generate_synthetic_domains({4, 20, 20, 91});
  set_log_level(LogLevel::kQuiet);

  // One-worker TANO against the common baseline, trained from the same init.
  const Model init = pretrain_backbone(ds, [] {
                       PretrainConfig p;
                       p.epochs = 2;
                       p.seed = 3;
                       return p;
                     }()).checkpoint.model;
  TrainConfig tc;
  tc.epochs = 2;
  tc.episodes_per_epoch = 10;
  tc.val_episodes = 5;
  tc.seed = 3;
  TrainConfig one = tc;
  one.pseudo_labels = true;
  one.workers = 1;
  TrainConfig common = tc;
  common.baseline = Baseline::kCommon;
  const Checkpoint c1 = meta_train_loop(ds, init, one, root / "deg_r1");
  const Checkpoint cc = meta_train_loop(ds, init, common, root / "deg_common");
  EvalOptions eo;
  eo.n_episodes = 100;
  eo.seed = 4;
  eo.mode = EvalMode::kTanoHard;
  const EvalReport r1 = evaluate_model(c1.model, ds, eo);
  eo.mode = EvalMode::kTanoBlend;
  const EvalReport r1b = evaluate_model(c1.model, ds, eo);
  eo.mode = EvalMode::kCommon;
  const EvalReport rc = evaluate_model(cc.model, ds, eo);
  const bool same_model = model_hash(c1.model) == model_hash(cc.model);
  const bool same_acc = r1.accuracies == rc.accuracies && r1b.accuracies == rc.accuracies;
  pass &= same_model && same_acc;
  notes.push_back(std::string("R=1 ") + (same_model ? "model hash equal" : "model hash DIFFERS") + ", " +
                  (same_acc ? "episode accuracies identical" : "episode accuracies DIFFER"));

  // Untrained network on 5-way 1-shot novel episodes.
  Model fresh = init_model(4, 12);
  fresh.worker_domains = {0, 1, 2, 3};
  EvalOptions uo;
  uo.n_episodes = kEvalEpisodes;
  uo.seed = 6;
  uo.mode = EvalMode::kTanoHard;
  const EvalReport ru = evaluate_model(fresh, ds, uo);
  const bool chance = std::abs(ru.mean - 20.0) <= ru.half_width;
  pass &= chance;
  notes.push_back("untrained " + fmt("%.2f", ru.mean) + " +- " + fmt("%.2f", ru.half_width) +
                  (chance ? " covers 20" : " excludes 20"));

  // Standard few-shot protocol on one domain.
  TrainConfig st = tc;
  st.protocol = Protocol::kStandard;
  st.holdout = 2;
  const Checkpoint cs = meta_train_loop(ds, init, st, root / "deg_standard");
  EvalOptions so;
  so.protocol = Protocol::kStandard;
  so.holdout = 2;
  so.mode = EvalMode::kTanoHard;
  so.n_episodes = 50;
  so.seed = 8;
  const EvalReport rs = evaluate_model(cs.model, ds, so);
  const bool standard_ok = cs.model.num_domains() == 1 && rs.per_domain.size() == 1 &&
                           rs.per_domain[0].domain == 2 && std::isfinite(rs.mean);
  pass &= standard_ok;
  notes.push_back("standard protocol on D2: " + fmt("%.2f", rs.mean) + "% over 50 episodes");
  set_log_level(LogLevel::kWarning);

  Outcome o;
  o.pass = pass;
  for (std::size_t i = 0; i < notes.size(); ++i) o.detail += (i ? "; " : "") + notes[i];
  return o;
}

}  // namespace
}  // namespace tano

int main(int argc, char** argv) {
  using namespace tano;
  CLI::App app{"TANO acceptance suite"};
  std::string out = (fs::temp_directory_path() / "tano_acceptance").string();
  std::vector<int> only;
  app.add_option("--out", out, "Working directory");
  app.add_option("--only", only, "Run only these criteria (1-9)");
  CLI11_PARSE(app, argc, argv);
  auto wanted = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };

  const fs::path root = out;
  fs::create_directories(root);
  set_log_level(LogLevel::kWarning);
  const auto t0 = Clock::now();
  std::vector<std::pair<int, Outcome>> results;
  auto record = [&](int n, const char* title, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::printf("criterion %d %s: %s | %s\n", n, title, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    results.push_back({n, o});
  };

  if (wanted(1)) record(1, "numerics", criterion_numerics);
  if (wanted(2)) record(2, "normalization oracle", criterion_bn_oracle);

  const bool need_intra = wanted(3) || wanted(4) || wanted(5) || wanted(6) || wanted(8);
  std::optional<ExperimentResult> intra, multi, outd;
  std::optional<Dataset> data;
  const fs::path intra_root = root / "intra";
  std::string intra_error, multi_error, out_error;
  if (need_intra) {
    try {
      ExperimentConfig c;
      c.out_dir = intra_root;
      c.pretrain = acceptance_pretrain_config();
      c.train = acceptance_train_config();
      c.modes = {EvalMode::kTanoHard, EvalMode::kTanoBlend, EvalMode::kCommon, EvalMode::kAdaBN,
                 EvalMode::kOracle};
      c.eval_episodes = kEvalEpisodes;
      c.eval_queries = kEvalQueries;
      c.seeds = kSeeds;
      intra = run_logged(c, "intra-domain");
      data = read_dataset(intra_root / "data");
    } catch (const std::exception& e) {
      intra_error = e.what();
    }
  }
  auto need = [](const auto& opt, const std::string& err) {
    if (!opt) throw std::runtime_error("experiment failed: " + err);
  };
  if (wanted(3)) {
    record(3, "sphere invariants", [&] {
      need(intra, intra_error);
      return criterion_sphere(load_checkpoint(intra_root / "seed_0" / "tano").model, *data);
    });
  }
  if (wanted(4)) record(4, "intra-domain ordering", [&] {
      need(intra, intra_error);
      return criterion_intra(*intra);
    });
  if (wanted(5)) {
    try {
      ExperimentConfig c;
      c.out_dir = root / "multi";
      c.data_dir = intra_root / "data";
      c.pretrain = acceptance_pretrain_config();
      c.train = acceptance_train_config();
      c.modes = {EvalMode::kMulti};
      c.eval_episodes = kEvalEpisodes;
      c.eval_queries = kEvalQueries;
      c.seeds = {kSeeds.front()};
      if (intra) multi = run_logged(c, "multi-model");
    } catch (const std::exception& e) {
      multi_error = e.what();
    }
    record(5, "cross-domain matrix", [&] {
      need(intra, intra_error);
      need(multi, multi_error);
      return criterion_cross_domain(*multi, summary(*intra, EvalMode::kTanoHard).per_seed.front());
    });
  }
  if (wanted(6)) record(6, "coordinator quality", [&] {
      need(intra, intra_error);
      return criterion_coordinator(*intra, *data, intra_root);
    });
  if (wanted(7)) {
    try {
      ExperimentConfig c;
      c.out_dir = root / "out";
      c.pretrain = acceptance_pretrain_config();
      c.train = acceptance_train_config();
      c.train.protocol = Protocol::kOut;
      c.train.holdout = kOutHoldout;
      if (fs::exists(intra_root / "data" / "manifest.json")) c.data_dir = intra_root / "data";
      c.modes = {EvalMode::kTanoBlend, EvalMode::kTanoHard, EvalMode::kCommon, EvalMode::kAdaBN};
      c.eval_episodes = kEvalEpisodes;
      c.eval_queries = kEvalQueries;
      c.seeds = {kSeeds.front()};
      outd = run_logged(c, "out-of-domain");
    } catch (const std::exception& e) {
      out_error = e.what();
    }
    record(7, "out-of-domain", [&] {
      need(outd, out_error);
      return criterion_out_of_domain(*outd);
    });
  }
  if (wanted(8)) record(8, "determinism and formats", [&] { return criterion_determinism(root, intra_root); });
  if (wanted(9)) record(9, "degeneracies", [&] { return criterion_degeneracies(root); });

  std::size_t passed = 0;
  std::printf("\nsummary (%.0f s):\n", seconds_since(t0));
  for (const auto& [n, o] : results) {
    std::printf("  criterion %d: %s\n", n, o.pass ? "PASS" : "FAIL");
    passed += o.pass;
  }
  std::printf("%zu/%zu criteria passed\n", passed, results.size());
  return passed == results.size() ? 0 : 1;
}
