// Copyright 2026 The TANO Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "tano/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "config_json.hpp"
#include "tano/error.hpp"
#include "tano/evaluation.hpp"
#include "tano/log.hpp"
#include "tano/metric.hpp"
#include "tano/ops.hpp"

namespace tano {

Model Model::clone() const {
  Model m;
  m.encoder = encoder.clone();
  m.coordinator = coordinator.clone();
  m.bank = bank.clone();
  m.worker_domains = worker_domains;
  m.centroids = centroids;
  m.home_domain = home_domain;
  return m;
}

std::vector<Tensor*> Model::parameters() {
  std::vector<Tensor*> out = encoder.parameters();
  for (Tensor* t : coordinator.parameters()) out.push_back(t);
  for (std::size_t r = 0; r < bank.size(); ++r) {
    for (auto& l : bank.worker(r).layers) {
      out.push_back(&l.gamma);
      out.push_back(&l.beta);
    }
  }
  return out;
}

Model init_model(std::size_t num_domains, std::uint64_t seed) {
  const Rng root(seed);
  Model m;
  m.encoder = encoder_init(root.derive(kStreamInit, 0).seed());
  m.coordinator = coordinator_init(kEmbeddingDim, num_domains, root.derive(kStreamInit, 1).seed());
  m.bank = make_bank(num_domains);
  return m;
}

std::string baseline_name(Baseline b) {
  switch (b) {
    case Baseline::kNone: return "none";
    case Baseline::kCommon: return "common";
    case Baseline::kMulti: return "multi";
  }
  return "none";
}

Baseline parse_baseline(const std::string& s) {
  if (s == "none") return Baseline::kNone;
  if (s == "common") return Baseline::kCommon;
  if (s == "multi") return Baseline::kMulti;
  throw ValidationError("unknown baseline '" + s + "' (expected none, common or multi)");
}

std::string checkpoint_kind_name(CheckpointKind k) {
  switch (k) {
    case CheckpointKind::kPretrain: return "pretrain";
    case CheckpointKind::kMeta: return "meta";
    case CheckpointKind::kMulti: return "multi";
  }
  return "meta";
}

void TrainConfig::validate() const {
  if (n_way < 2) throw ValidationError("ways must be >= 2");
  if (n_shot < 1 || n_query < 1) throw ValidationError("shots and queries must be >= 1");
  if (epochs < 1 || episodes_per_epoch < 1) throw ValidationError("epochs and episodes >= 1");
  if (!(lr0 > 0.0) || !(lr_min >= 0.0) || lr_min > lr0) {
    throw ValidationError("learning rates must satisfy 0 <= lr_min <= lr0, lr0 > 0");
  }
  for (double v : v_r) {
    if (!(v > 0.0)) throw ValidationError("every v_r must be positive");
  }
  if (!(coord_weight >= 0.0)) throw ValidationError("coordinator weight must be >= 0");
  if (!(bn_momentum >= 0.0 && bn_momentum <= 1.0)) throw ValidationError("BN momentum in [0, 1]");
  if (!(bn_epsilon > 0.0)) throw ValidationError("BN epsilon must be positive");
  if (workers < 1) throw ValidationError("workers must be >= 1");
  if (val_episodes < 1) throw ValidationError("validation episodes must be >= 1");
  if (protocol == Protocol::kOut && !holdout) {
    throw ValidationError("the out-of-domain protocol needs a holdout domain");
  }
}

void PretrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("pretraining epochs must be >= 1");
  if (!(lr > 0.0)) throw ValidationError("pretraining learning rate must be positive");
  if (batch_size < 2) throw ValidationError("pretraining batch size must be >= 2");
  if (holdout && domain) throw ValidationError("pretraining takes a holdout or a single domain, not both");
}

double cosine_lr(std::size_t t, std::size_t total, double lr0, double lr_min) {
  if (total == 0 || t >= total) return t >= total ? lr_min : lr0;
  const double phase = std::numbers::pi * static_cast<double>(t) / static_cast<double>(total);
  return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(phase));
}

namespace {

void require_finite_grads(const std::vector<Tensor*>& params, const std::string& context) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->has_grad()) continue;
    for (double g : params[i]->grad()) {
      if (!std::isfinite(g)) {
        throw NumericError("non-finite gradient in parameter " + std::to_string(i) + " " +
                           context);
      }
    }
  }
}

void sgd(const std::vector<Tensor*>& params, double lr) {
  for (Tensor* p : params) {
    if (!p->has_grad()) continue;
    auto d = p->mutable_data();
    auto g = p->grad();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] -= lr * g[i];
    p->zero_grad();
  }
}

void worker_params(GroupWorker& w, std::vector<Tensor*>& out) {
  for (auto& l : w.layers) {
    out.push_back(&l.gamma);
    out.push_back(&l.beta);
  }
}

// Copies values of `src` into `dst`, keeping dst's tensor identities.
void assign_worker(GroupWorker& dst, const GroupWorker& src) {
  for (std::size_t j = 0; j < dst.layers.size(); ++j) {
    auto& d = dst.layers[j];
    const auto& s = src.layers[j];
    std::copy(s.gamma.data().begin(), s.gamma.data().end(), d.gamma.mutable_data().begin());
    std::copy(s.beta.data().begin(), s.beta.data().end(), d.beta.mutable_data().begin());
    d.running_mean = s.running_mean;
    d.running_var = s.running_var;
  }
}

std::size_t label_worker(const Model& model, std::size_t label) {
  return model.num_domains() == 1 ? model.bank.global_index() : label;
}

std::size_t resolve_workers(const TrainConfig& c, std::size_t train_domains) {
  if (c.baseline == Baseline::kCommon || c.protocol == Protocol::kStandard) return 1;
  return c.pseudo_labels ? c.workers : train_domains;
}

}  // namespace

Episode training_episode(const Dataset& dataset, const TrainConfig& config, std::uint64_t t) {
  const auto domains =
      protocol_domains(config.protocol, dataset.manifest.num_domains(), config.holdout, false);
  Rng rng = Rng(config.seed).derive(kStreamTrainEpisode, t);
  return sample_episode(dataset, Split::kBase, domains, config.n_way, config.n_shot,
                        config.n_query, rng);
}

EpisodeForward episode_forward(const Model& model, const Tensor& support, const Tensor& query,
                               const Episode& episode, std::size_t label,
                               const TrainConfig& config) {
  const std::size_t r_count = model.num_domains();
  if (label >= r_count) {
    throw ValidationError("episode label " + std::to_string(label) + " outside " +
                          std::to_string(r_count) + " workers");
  }
  double v = 1.0;
  if (!config.v_r.empty()) {
    if (config.v_r.size() != r_count) {
      throw ValidationError("v_r has " + std::to_string(config.v_r.size()) + " entries for " +
                            std::to_string(r_count) + " workers");
    }
    v = config.v_r[label];
  }
  EpisodeForward f;
  const GroupWorker& global = model.bank.global();
  EncodeResult g = encode(support, model.encoder, global, BnMode::kTrain);
  DomainWeights dw = coordinate(g.embedding, model.coordinator);
  f.w_hat = dw.w_hat;
  f.global_stats = std::move(g.stats);

  const GroupWorker& worker = model.bank.worker(label_worker(model, label));
  Tensor both = ops::concat_rows(support, query);
  EncodeResult e = encode(both, model.encoder, worker, BnMode::kTrain);
  f.label_stats = std::move(e.stats);
  const std::size_t ns = support.dim(0);
  Tensor protos = compute_prototypes(ops::slice_rows(e.embedding, 0, ns), episode.support_labels,
                                     episode.n_way, episode.n_shot);
  f.query_logits = classify_query(ops::slice_rows(e.embedding, ns, e.embedding.dim(0)), protos);
  f.query_loss = ops::cross_entropy(f.query_logits, episode.query_labels);
  f.coord_loss = coordinator_loss(dw, label);
  f.loss = episode_loss(f.query_logits, episode.query_labels, f.coord_loss, v, config.coord_weight);
  return f;
}

StepMetrics meta_train_step(Model& model, const Dataset& dataset, const Episode& episode,
                            std::size_t label, const TrainConfig& config, double lr) {
  const Tensor support = load_images(dataset, episode.support);
  const Tensor query = load_images(dataset, episode.query);
  const std::size_t lw = label_worker(model, label);
  const std::size_t gi = model.bank.global_index();

  std::vector<Tensor*> params = model.encoder.parameters();
  for (Tensor* t : model.coordinator.parameters()) params.push_back(t);
  worker_params(model.bank.worker(gi), params);
  if (lw != gi) worker_params(model.bank.worker(lw), params);
  for (Tensor* p : params) p->zero_grad();

  StepMetrics m;
  EpisodeForward f;
  {
    GradientTape tape;
    f = episode_forward(model, support, query, episode, label, config);
    m.loss = f.loss.item();
    if (!std::isfinite(m.loss)) {
      throw NumericError("non-finite episode loss; replay episode: " + episode_json(episode));
    }
    tape.backward(f.loss);
  }
  require_finite_grads(params, "on episode " + episode_json(episode));
  m.query_loss = f.query_loss.item();
  m.coord_loss = f.coord_loss.item();
  m.accuracy = accuracy_percent(f.query_logits, episode.query_labels);
  m.w_hat = f.w_hat;
  sgd(params, lr);

  if (lw == gi) {
    apply_running_updates(model.bank.worker(gi), f.label_stats);
    // A one-domain bank ties its domain worker to the global worker.
    assign_worker(model.bank.worker(0), model.bank.worker(gi));
  } else {
    apply_running_updates(model.bank.worker(lw), f.label_stats);
    apply_running_updates(model.bank.worker(gi), f.global_stats);
  }
  return m;
}

PretrainResult pretrain_backbone(const Dataset& ds, const PretrainConfig& config) {
  config.validate();
  const std::size_t nd = ds.manifest.num_domains();
  if (config.holdout && *config.holdout >= nd) throw ValidationError("holdout domain out of range");
  if (config.domain && *config.domain >= nd) throw ValidationError("pretraining domain out of range");
  std::vector<std::size_t> domains;
  for (std::size_t d = 0; d < nd; ++d) {
    if (config.holdout && d == *config.holdout) continue;
    if (config.domain && d != *config.domain) continue;
    domains.push_back(d);
  }
  const std::vector<std::size_t> base = ds.manifest.classes_in(Split::kBase);
  if (base.empty() || domains.empty()) throw ValidationError("pretraining needs base classes");
  const std::size_t nb = base.size();
  const std::size_t num_classes = domains.size() * nb;

  std::vector<ImageRef> refs;
  std::vector<int> labels;
  for (std::size_t di = 0; di < domains.size(); ++di) {
    for (std::size_t ci = 0; ci < nb; ++ci) {
      for (std::size_t i = 0; i < ds.manifest.per_class; ++i) {
        refs.push_back({static_cast<std::uint32_t>(domains[di]),
                        static_cast<std::uint32_t>(base[ci]), static_cast<std::uint32_t>(i)});
        labels.push_back(static_cast<int>(di * nb + ci));
      }
    }
  }

  Model model = init_model(1, config.seed);
  const Rng root(config.seed);
  Rng head_rng = root.derive(kStreamInit, 2);
  const double a = std::sqrt(6.0 / static_cast<double>(kEmbeddingDim + num_classes));
  std::vector<double> wdata(kEmbeddingDim * num_classes);
  for (double& v : wdata) v = head_rng.uniform(-a, a);
  Tensor head_w = Tensor::parameter({kEmbeddingDim, num_classes}, std::move(wdata));
  Tensor head_b = Tensor::parameter({num_classes}, std::vector<double>(num_classes, 0.0));

  GroupWorker& global = model.bank.global();
  std::vector<Tensor*> params = model.encoder.parameters();
  worker_params(global, params);
  params.push_back(&head_w);
  params.push_back(&head_b);

  PretrainResult result;
  result.num_classes = num_classes;
  std::optional<double> initial;
  std::size_t diverged = 0;
  std::vector<std::size_t> order(refs.size());
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng = root.derive(kStreamPretrain, epoch);
    std::shuffle(order.begin(), order.end(), rng.engine());
    double loss_sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<ImageRef> batch;
      std::vector<int> y;
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(refs[order[i]]);
        y.push_back(labels[order[i]]);
      }
      const Tensor images = load_images(ds, batch);
      double loss_value = 0.0;
      EncodeResult e;
      {
        GradientTape tape;
        e = encode(images, model.encoder, global, BnMode::kTrain);
        Tensor logits = ops::add_row_bias(ops::matmul(e.embedding, head_w), head_b);
        Tensor loss = ops::cross_entropy(logits, y);
        loss_value = loss.item();
        if (!std::isfinite(loss_value)) {
          throw NumericError("pretraining diverged: non-finite loss in epoch " +
                             std::to_string(epoch + 1));
        }
        const auto pred = predict(logits);
        for (std::size_t i = 0; i < y.size(); ++i) hits += pred[i] == y[i];
        tape.backward(loss);
      }
      require_finite_grads(params, "during pretraining");
      if (!initial) initial = loss_value;
      loss_sum += loss_value * static_cast<double>(end - start);
      sgd(params, config.lr);
      apply_running_updates(global, e.stats);
    }
    const double mean_loss = loss_sum / static_cast<double>(order.size());
    result.epoch_loss.push_back(mean_loss);
    result.epoch_accuracy.push_back(100.0 * static_cast<double>(hits) /
                                    static_cast<double>(order.size()));
    log_info("pretrain epoch " + std::to_string(epoch + 1) + ": loss " +
             std::to_string(mean_loss) + ", accuracy " +
             std::to_string(result.epoch_accuracy.back()) + "%");
    diverged = mean_loss > 10.0 * *initial ? diverged + 1 : 0;
    if (diverged >= 3) {
      throw NumericError("pretraining diverged: loss " + std::to_string(mean_loss) +
                         " exceeded 10x the initial " + std::to_string(*initial) +
                         " for 3 consecutive epochs");
    }
  }
  assign_worker(model.bank.worker(0), global);
  result.checkpoint.kind = CheckpointKind::kPretrain;
  result.checkpoint.model = std::move(model);
  result.checkpoint.pretrain = config;
  result.checkpoint.epoch = config.epochs;
  for (std::size_t e = 0; e < config.epochs; ++e) {
    result.checkpoint.history.push_back(
        {e + 1, result.epoch_loss[e], result.epoch_accuracy[e], 0.0, config.lr});
  }
  return result;
}

std::vector<std::vector<double>> task_features(const Model& model, const Dataset& dataset,
                                               const std::vector<Episode>& episodes) {
  Embedder embedder(model, dataset);
  std::vector<std::vector<double>> out;
  out.reserve(episodes.size());
  const std::size_t gi = model.bank.global_index();
  for (const auto& e : episodes) {
    Tensor emb = embedder.embed(gi, e.support);
    Tensor pooled = ops::mean_rows(emb);
    out.emplace_back(pooled.data().begin(), pooled.data().end());
  }
  return out;
}

namespace {

EvalOptions validation_options(const TrainConfig& c) {
  EvalOptions o;
  o.protocol = c.protocol;
  o.holdout = c.holdout;
  o.mode = EvalMode::kTanoHard;
  o.n_episodes = c.val_episodes;
  o.seed = c.seed;
  o.n_way = c.n_way;
  o.n_shot = c.n_shot;
  o.n_query = c.n_query;
  o.split = Split::kVal;
  o.meta_test = false;
  o.stream = kStreamValEpisode;
  return o;
}

std::string epoch_dir_name(std::size_t e) {
  std::string s = std::to_string(e);
  return "epoch_" + std::string(s.size() < 3 ? 3 - s.size() : 0, '0') + s;
}

Checkpoint train_multi(const Dataset& ds, const std::function<Model(std::size_t)>& init_for,
                       const TrainConfig& config, const std::filesystem::path& out,
                       ProgressFn progress) {
  Checkpoint ckpt;
  ckpt.kind = CheckpointKind::kMulti;
  ckpt.config = config;
  const auto domains =
      protocol_domains(config.protocol, ds.manifest.num_domains(), config.holdout, false);
  for (std::size_t d : domains) {
    TrainConfig c = config;
    c.protocol = Protocol::kStandard;
    c.holdout = d;
    c.baseline = Baseline::kNone;
    c.pseudo_labels = false;
    c.v_r.clear();
    log_info("training single-domain model for domain " + std::to_string(d));
    Checkpoint member = meta_train_loop(ds, init_for(d), c,
                                        out / "members" / ("d" + std::to_string(d)), nullptr,
                                        progress);
    ckpt.members.push_back(std::move(member.model));
  }
  ckpt.epoch = config.epochs;
  save_checkpoint(ckpt, out);
  return ckpt;
}

}  // namespace

Checkpoint meta_train_loop(const Dataset& ds, const Model& init, const TrainConfig& config,
                           const std::filesystem::path& out, const Checkpoint* resume,
                           ProgressFn progress) {
  config.validate();
  if (config.baseline == Baseline::kMulti) {
    if (resume) throw ValidationError("resuming a multi-model baseline is not supported");
    return train_multi(ds, [&](std::size_t) { return init.clone(); }, config, out, progress);
  }
  const auto domains =
      protocol_domains(config.protocol, ds.manifest.num_domains(), config.holdout, false);
  const std::size_t r_count = resolve_workers(config, domains.size());
  if (!config.v_r.empty() && config.v_r.size() != r_count) {
    throw ValidationError("v_r needs one weight per worker (" + std::to_string(r_count) + ")");
  }
  const std::size_t total = config.epochs * config.episodes_per_epoch;

  Checkpoint state;
  Model model;
  if (resume) {
    if (resume->kind != CheckpointKind::kMeta || !resume->current) {
      throw ValidationError("resume needs an epoch checkpoint of a meta-training run");
    }
    if (train_config_json(resume->config) != train_config_json(config)) {
      throw ValidationError("resume configuration differs from the original run");
    }
    state = *resume;
    state.model = resume->model.clone();
    model = resume->current->clone();
    state.current.reset();
  } else {
    model.encoder = init.encoder.clone();
    GroupWorker proto = init.bank.global().clone();
    for (auto& l : proto.layers) {
      l.epsilon = config.bn_epsilon;
      l.momentum = config.bn_momentum;
    }
    model.bank = GroupWorkerBank(r_count, proto);
    model.coordinator = coordinator_init(kEmbeddingDim, r_count,
                                         Rng(config.seed).derive(kStreamInit, 1).seed());
    if (config.protocol == Protocol::kStandard) model.home_domain = config.holdout.value_or(0);

    state.kind = CheckpointKind::kMeta;
    state.config = config;
    if (config.pseudo_labels && r_count > 1) {
      std::vector<Episode> episodes;
      episodes.reserve(total);
      for (std::size_t t = 0; t < total; ++t) episodes.push_back(training_episode(ds, config, t));
      const auto features = task_features(init, ds, episodes);
      KMeansResult km = kmeans(features, r_count, Rng(config.seed).derive(kStreamKMeans, 0).seed());
      state.pseudo_labels = km.labels;
      model.centroids = km.centroids;
      std::vector<std::size_t> truth;
      for (const auto& e : episodes) truth.push_back(e.domain);
      std::vector<std::size_t> table(r_count * ds.manifest.num_domains(), 0);
      for (std::size_t t = 0; t < total; ++t) {
        ++table[km.labels[t] * ds.manifest.num_domains() + truth[t]];
      }
      for (std::size_t r = 0; r < r_count; ++r) {
        auto row = table.begin() + r * ds.manifest.num_domains();
        model.worker_domains.push_back(static_cast<std::size_t>(
            std::max_element(row, row + ds.manifest.num_domains()) - row));
      }
      log_info("k-means pseudo labels: purity " +
               std::to_string(cluster_purity(km.labels, truth)));
    } else if (r_count > 1) {
      model.worker_domains = domains;
    } else if (domains.size() == 1) {
      model.worker_domains = domains;
    }
    const double acc0 = evaluate_model(model, ds, validation_options(config)).mean;
    state.history.push_back({0, 0.0, 0.0, acc0, config.lr0});
    state.best_val_accuracy = acc0;
    state.best_epoch = 0;
    state.model = model.clone();
    if (progress) progress(state.history.back());
  }

  for (std::size_t epoch = state.epoch; epoch < config.epochs; ++epoch) {
    double loss_sum = 0.0, acc_sum = 0.0, lr = config.lr0;
    for (std::size_t i = 0; i < config.episodes_per_epoch; ++i) {
      const std::size_t t = epoch * config.episodes_per_epoch + i;
      Episode ep = training_episode(ds, config, t);
      std::size_t label = 0;
      if (r_count > 1) {
        if (config.pseudo_labels) {
          label = state.pseudo_labels.at(t);
          ep.pseudo_domain = label;
        } else {
          label = static_cast<std::size_t>(
              std::find(domains.begin(), domains.end(), ep.domain) - domains.begin());
        }
      }
      lr = cosine_lr(t, total, config.lr0, config.lr_min);
      const StepMetrics m = meta_train_step(model, ds, ep, label, config, lr);
      loss_sum += m.loss;
      acc_sum += m.accuracy;
      state.next_step = t + 1;
    }
    const double n = static_cast<double>(config.episodes_per_epoch);
    EpochRecord rec{epoch + 1, loss_sum / n, acc_sum / n,
                    evaluate_model(model, ds, validation_options(config)).mean, lr};
    state.history.push_back(rec);
    if (rec.val_accuracy > state.best_val_accuracy) {
      state.best_val_accuracy = rec.val_accuracy;
      state.best_epoch = epoch + 1;
      state.model = model.clone();
    }
    state.epoch = epoch + 1;
    log_info("epoch " + std::to_string(epoch + 1) + ": loss " + std::to_string(rec.train_loss) +
             ", train acc " + std::to_string(rec.train_accuracy) + "%, val acc " +
             std::to_string(rec.val_accuracy) + "%");
    if (progress) progress(rec);
    if (config.keep_epoch_checkpoints) {
      Checkpoint snap = state;
      snap.current = model.clone();
      save_checkpoint(snap, out / "epochs" / epoch_dir_name(epoch + 1));
    }
  }
  state.current.reset();
  save_checkpoint(state, out);
  return state;
}

Checkpoint train_multi_models(const Dataset& ds, const PretrainConfig& pretrain,
                              const TrainConfig& config, const std::filesystem::path& out,
                              ProgressFn progress) {
  config.validate();
  if (config.baseline != Baseline::kMulti) {
    throw ValidationError("train_multi_models needs the multi baseline");
  }
  auto init_for = [&](std::size_t d) {
    PretrainConfig p = pretrain;
    p.holdout.reset();
    p.domain = d;
    log_info("pretraining single-domain backbone for domain " + std::to_string(d));
    PretrainResult r = pretrain_backbone(ds, p);
    save_checkpoint(r.checkpoint, out / "members" / ("pretrain_d" + std::to_string(d)));
    return std::move(r.checkpoint.model);
  };
  return train_multi(ds, init_for, config, out, progress);
}

}  // namespace tano
