// Copyright 2026 The TANO Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "tano/evaluation.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <sstream>

#include "config_json.hpp"
#include "tano/blob.hpp"
#include "tano/coordinator.hpp"
#include "tano/error.hpp"
#include "tano/log.hpp"
#include "tano/metric.hpp"
#include "tano/ops.hpp"

namespace tano {

using nlohmann::json;

std::string eval_mode_name(EvalMode m) {
  switch (m) {
    case EvalMode::kTanoHard: return "tano-hard";
    case EvalMode::kTanoBlend: return "tano-blend";
    case EvalMode::kCommon: return "common";
    case EvalMode::kMulti: return "multi";
    case EvalMode::kAdaBN: return "adabn";
    case EvalMode::kOracle: return "tano-oracle";
  }
  return "tano-hard";
}

EvalMode parse_eval_mode(const std::string& s) {
  for (EvalMode m : report_mode_order()) {
    if (eval_mode_name(m) == s) return m;
  }
  throw ValidationError("unknown mode '" + s +
                        "' (expected tano-hard, tano-blend, common, multi, adabn or tano-oracle)");
}

const std::vector<EvalMode>& report_mode_order() {
  static const std::vector<EvalMode> order = {EvalMode::kTanoHard, EvalMode::kTanoBlend,
                                              EvalMode::kCommon,   EvalMode::kMulti,
                                              EvalMode::kAdaBN,    EvalMode::kOracle};
  return order;
}

ConfidenceInterval confidence_interval(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 2) throw ValidationError("confidence interval needs at least 2 values");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double s = std::sqrt(ss / static_cast<double>(n - 1));
  return {mean, 1.96 * s / std::sqrt(static_cast<double>(n))};
}

std::string EvalReport::to_json() const {
  json j;
  j["protocol"] = protocol;
  j["mode"] = mode;
  j["episodes"] = n_episodes;
  j["mean"] = mean;
  j["ci95_half_width"] = half_width;
  j["coordinator_accuracy"] = coordinator_accuracy ? json(*coordinator_accuracy) : json(nullptr);
  j["config_hash"] = config_hash;
  json pd = json::array();
  for (const auto& d : per_domain) {
    pd.push_back({{"domain", d.domain},
                  {"episodes", d.episodes},
                  {"mean", d.mean},
                  {"ci95_half_width", d.half_width}});
  }
  j["per_domain"] = pd;
  j["accuracies"] = accuracies;
  j["episode_domains"] = episode_domains;
  return j.dump(2);
}

Tensor Embedder::embed(std::size_t worker, std::span<const ImageRef> refs) {
  const std::size_t per_worker = dataset_.blobs.size() * dataset_.manifest.per_class;
  std::vector<ImageRef> missing;
  std::vector<std::size_t> missing_keys;
  for (const auto& r : refs) {
    const std::size_t key = worker * per_worker + image_key(dataset_, r);
    if (!cache_.count(key) &&
        std::find(missing_keys.begin(), missing_keys.end(), key) == missing_keys.end()) {
      missing.push_back(r);
      missing_keys.push_back(key);
    }
  }
  constexpr std::size_t kChunk = 128;
  for (std::size_t start = 0; start < missing.size(); start += kChunk) {
    const std::size_t end = std::min(missing.size(), start + kChunk);
    std::span<const ImageRef> chunk(missing.data() + start, end - start);
    Tensor emb = embed_with(model_.bank.worker(worker), chunk);
    auto d = emb.data();
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      cache_[missing_keys[start + i]].assign(d.begin() + i * kEmbeddingDim,
                                             d.begin() + (i + 1) * kEmbeddingDim);
    }
  }
  std::vector<double> out;
  out.reserve(refs.size() * kEmbeddingDim);
  for (const auto& r : refs) {
    const auto& v = cache_.at(worker * per_worker + image_key(dataset_, r));
    out.insert(out.end(), v.begin(), v.end());
  }
  return Tensor({refs.size(), kEmbeddingDim}, std::move(out));
}

Tensor Embedder::embed_with(const GroupWorker& worker, std::span<const ImageRef> refs) const {
  return encode(load_images(dataset_, refs), model_.encoder, worker, BnMode::kEval).embedding;
}

namespace {

double episode_accuracy(const Tensor& support, const Tensor& query, const Episode& e) {
  Tensor protos = compute_prototypes(support, e.support_labels, e.n_way, e.n_shot);
  return accuracy_percent(classify_query(query, protos), e.query_labels);
}

std::vector<ImageRef> pool_of(const Episode& e) {
  std::vector<ImageRef> pool = e.support;
  pool.insert(pool.end(), e.query.begin(), e.query.end());
  return pool;
}

double accuracy_with(const Embedder& embedder, const GroupWorker& worker, const Episode& e) {
  const auto pool = pool_of(e);
  Tensor emb = embedder.embed_with(worker, pool);
  const std::size_t ns = e.support.size();
  return episode_accuracy(ops::slice_rows(emb, 0, ns), ops::slice_rows(emb, ns, pool.size()), e);
}

std::optional<std::size_t> worker_for_domain(const Model& model, std::size_t domain) {
  for (std::size_t r = 0; r < model.worker_domains.size(); ++r) {
    if (model.worker_domains[r] == domain) return r;
  }
  return std::nullopt;
}

json options_json(const EvalOptions& o) {
  return {{"protocol", protocol_name(o.protocol)},
          {"holdout", o.holdout ? json(*o.holdout) : json(nullptr)},
          {"mode", eval_mode_name(o.mode)},
          {"episodes", o.n_episodes},
          {"seed", o.seed},
          {"ways", o.n_way},
          {"shots", o.n_shot},
          {"queries", o.n_query},
          {"split", split_name(o.split)},
          {"meta_test", o.meta_test},
          {"blend_k", o.blend_k},
          {"variance", o.variance == VarianceBlend::kLinear ? "linear" : "mixture"},
          {"stream", o.stream},
          {"only_domain", o.only_domain ? json(*o.only_domain) : json(nullptr)}};
}

std::vector<std::size_t> eval_domains(const Dataset& ds, const EvalOptions& o) {
  if (o.only_domain) {
    if (*o.only_domain >= ds.manifest.num_domains()) throw ValidationError("domain out of range");
    return {*o.only_domain};
  }
  return protocol_domains(o.protocol, ds.manifest.num_domains(), o.holdout, o.meta_test);
}

void hash_doubles(std::uint64_t& h, std::span<const double> v) {
  h = fnv1a64(std::span(reinterpret_cast<const std::uint8_t*>(v.data()), v.size() * sizeof(double)), h);
}

// Aggregates per-episode accuracies into a report.
EvalReport make_report(const EvalOptions& o, std::vector<double> accs,
                       std::vector<std::size_t> domains, std::size_t coord_hits,
                       std::size_t coord_total, const std::string& model_digest) {
  EvalReport r;
  r.protocol = protocol_name(o.protocol);
  r.mode = eval_mode_name(o.mode);
  r.n_episodes = accs.size();
  const ConfidenceInterval ci = confidence_interval(accs);
  r.mean = ci.mean;
  r.half_width = ci.half_width;
  std::vector<std::size_t> seen = domains;
  std::sort(seen.begin(), seen.end());
  seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
  for (std::size_t d : seen) {
    std::vector<double> a;
    for (std::size_t i = 0; i < accs.size(); ++i) {
      if (domains[i] == d) a.push_back(accs[i]);
    }
    DomainAccuracy da{d, a.size(), 0.0, 0.0};
    if (a.size() >= 2) {
      const ConfidenceInterval c = confidence_interval(a);
      da.mean = c.mean;
      da.half_width = c.half_width;
    } else {
      da.mean = a[0];
    }
    r.per_domain.push_back(da);
  }
  if (coord_total > 0) {
    r.coordinator_accuracy = 100.0 * static_cast<double>(coord_hits) / static_cast<double>(coord_total);
  }
  std::uint64_t h = fnv1a64(std::span(reinterpret_cast<const std::uint8_t*>(model_digest.data()),
                                      model_digest.size()));
  const std::string oj = options_json(o).dump();
  h = fnv1a64(std::span(reinterpret_cast<const std::uint8_t*>(oj.data()), oj.size()), h);
  r.config_hash = hex64(h);
  r.accuracies = std::move(accs);
  r.episode_domains = std::move(domains);
  return r;
}

void check_episode_counts(const EvalOptions& o) {
  if (o.n_episodes < 2) throw ValidationError("evaluation needs at least 2 episodes");
}

}  // namespace

std::string model_hash(const Model& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  Model& m = const_cast<Model&>(model);
  for (Tensor* t : m.parameters()) hash_doubles(h, t->data());
  for (std::size_t r = 0; r < model.bank.size(); ++r) {
    for (const auto& l : model.bank.worker(r).layers) {
      hash_doubles(h, l.running_mean);
      hash_doubles(h, l.running_var);
    }
  }
  return hex64(h);
}

EpisodeOutcome run_episode(const Model& model, Embedder& embedder, const Dataset& ds,
                           const Episode& e, const EvalOptions& o) {
  (void)ds;
  const std::size_t gi = model.bank.global_index();
  const std::size_t ns = e.support.size();
  EpisodeOutcome out;
  switch (o.mode) {
    case EvalMode::kCommon:
      out.accuracy = episode_accuracy(embedder.embed(gi, e.support), embedder.embed(gi, e.query), e);
      return out;
    case EvalMode::kAdaBN: {
      const auto pool = pool_of(e);
      GroupWorker adapted =
          adabn_adapt_worker(load_images(ds, pool), model.encoder, model.bank.global());
      out.accuracy = accuracy_with(embedder, adapted, e);
      return out;
    }
    case EvalMode::kOracle: {
      const auto r = worker_for_domain(model, e.domain);
      if (!r) {
        throw ValidationError("oracle mode: no worker serves domain " + std::to_string(e.domain));
      }
      out.chosen_worker = *r;
      out.accuracy = episode_accuracy(embedder.embed(*r, e.support), embedder.embed(*r, e.query), e);
      return out;
    }
    case EvalMode::kTanoHard:
    case EvalMode::kTanoBlend: {
      const DomainWeights dw = coordinate(embedder.embed(gi, e.support), model.coordinator);
      const std::size_t r_count = model.num_domains();
      if (o.mode == EvalMode::kTanoHard) {
        const WorkerSelection s = select_worker(dw, 1, SelectMode::kHard);
        out.chosen_worker = s.index;
        out.accuracy =
            episode_accuracy(embedder.embed(s.index, e.support), embedder.embed(s.index, e.query), e);
        return out;
      }
      const std::size_t k = o.blend_k == 0 ? r_count : o.blend_k;
      const WorkerSelection s = select_worker(dw, k, SelectMode::kBlend);
      out.chosen_worker = s.index;
      GroupWorker blended = blend_workers(model.bank, s.weights, o.variance);
      out.accuracy = accuracy_with(embedder, blended, e);
      (void)ns;
      return out;
    }
    case EvalMode::kMulti:
      throw ValidationError("multi mode needs a multi-model checkpoint");
  }
  return out;
}

EvalReport evaluate_model(const Model& model, const Dataset& ds, const EvalOptions& o) {
  check_episode_counts(o);
  if (o.mode == EvalMode::kMulti) throw ValidationError("multi mode needs a multi-model checkpoint");
  const auto domains = eval_domains(ds, o);
  Embedder embedder(model, ds);
  const Rng root(o.seed);
  std::vector<double> accs;
  std::vector<std::size_t> eds;
  std::size_t hits = 0, total = 0;
  const bool tano = o.mode == EvalMode::kTanoHard || o.mode == EvalMode::kTanoBlend;
  for (std::size_t i = 0; i < o.n_episodes; ++i) {
    Rng rng = root.derive(o.stream, i);
    const Episode e = sample_episode(ds, o.split, domains, o.n_way, o.n_shot, o.n_query, rng);
    const EpisodeOutcome out = run_episode(model, embedder, ds, e, o);
    accs.push_back(out.accuracy);
    eds.push_back(e.domain);
    if (tano && out.chosen_worker && *out.chosen_worker < model.worker_domains.size() &&
        model.num_domains() > 1) {
      ++total;
      hits += model.worker_domains[*out.chosen_worker] == e.domain;
    }
  }
  return make_report(o, std::move(accs), std::move(eds), hits, total, model_hash(model));
}

EvalReport evaluate_episodes(const Checkpoint& ckpt, const Dataset& ds, const EvalOptions& o) {
  if (o.mode != EvalMode::kMulti) {
    if (ckpt.kind == CheckpointKind::kMulti) {
      throw ValidationError("mode " + eval_mode_name(o.mode) + " needs a single-model checkpoint");
    }
    return evaluate_model(ckpt.model, ds, o);
  }
  check_episode_counts(o);
  if (ckpt.kind != CheckpointKind::kMulti) {
    throw ValidationError("multi mode needs a checkpoint trained with --baseline multi");
  }
  const auto domains = eval_domains(ds, o);
  std::vector<std::unique_ptr<Embedder>> embedders;
  std::string digest;
  for (const auto& m : ckpt.members) {
    embedders.push_back(std::make_unique<Embedder>(m, ds));
    digest += model_hash(m);
  }
  EvalOptions common = o;
  common.mode = EvalMode::kCommon;
  const Rng root(o.seed);
  std::vector<double> accs;
  std::vector<std::size_t> eds;
  for (std::size_t i = 0; i < o.n_episodes; ++i) {
    Rng rng = root.derive(o.stream, i);
    const Episode e = sample_episode(ds, o.split, domains, o.n_way, o.n_shot, o.n_query, rng);
    std::optional<std::size_t> member;
    for (std::size_t k = 0; k < ckpt.members.size(); ++k) {
      if (ckpt.members[k].home_domain == e.domain) member = k;
    }
    if (!member) {
      throw ValidationError("multi mode: no single-domain model was trained on domain " +
                            std::to_string(e.domain));
    }
    accs.push_back(run_episode(ckpt.members[*member], *embedders[*member], ds, e, common).accuracy);
    eds.push_back(e.domain);
  }
  return make_report(o, std::move(accs), std::move(eds), 0, 0, digest);
}

// ---------------------------------------------------------------------------

namespace {

std::string fixed(double v, int prec = 2) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  const std::vector<std::uint8_t> bytes(text.begin(), text.end());
  write_file_bytes(p, bytes);
}

bool needs_tano(EvalMode m) {
  return m == EvalMode::kTanoHard || m == EvalMode::kTanoBlend || m == EvalMode::kOracle;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  if (cfg.seeds.empty()) throw ValidationError("experiment needs at least one seed");
  if (cfg.modes.empty()) throw ValidationError("experiment needs at least one mode");
  cfg.train.validate();
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) throw FormatError("cannot create " + cfg.out_dir.string());

  Dataset ds;
  try {
    if (cfg.data_dir) {
      ds = read_dataset(*cfg.data_dir);
    } else {
      ds = generate_synthetic_domains(cfg.data);
      write_dataset(ds, cfg.out_dir / "data");
    }
  } catch (const Error& e) {
    throw Error(e.kind(), std::string("stage data: ") + e.what());
  }

  std::vector<EvalMode> modes;
  for (EvalMode m : report_mode_order()) {
    if (std::find(cfg.modes.begin(), cfg.modes.end(), m) != cfg.modes.end()) modes.push_back(m);
  }
  const bool want_tano = std::any_of(modes.begin(), modes.end(), needs_tano);
  const bool want_common = std::any_of(modes.begin(), modes.end(), [](EvalMode m) {
    return m == EvalMode::kCommon || m == EvalMode::kAdaBN;
  });
  const bool want_multi = std::find(modes.begin(), modes.end(), EvalMode::kMulti) != modes.end();

  ExperimentResult result;
  result.domains = protocol_domains(cfg.train.protocol, ds.manifest.num_domains(),
                                    cfg.train.holdout, true);
  std::vector<ModeSummary> summaries;
  std::vector<std::string> row_labels;
  for (EvalMode m : modes) summaries.push_back({m, {}, {}, {}});

  for (std::size_t si = 0; si < cfg.seeds.size(); ++si) {
    const std::uint64_t seed = cfg.seeds[si];
    const fs::path dir = cfg.out_dir / ("seed_" + std::to_string(seed));
    auto stage = [&](const std::string& name, auto&& fn) {
      try {
        return fn();
      } catch (const Error& e) {
        throw Error(e.kind(), "stage " + name + " (replay seed " + std::to_string(seed) +
                                  "): " + e.what());
      }
    };
    PretrainConfig pc = cfg.pretrain;
    pc.seed = seed;
    if (cfg.train.protocol == Protocol::kOut) pc.holdout = cfg.train.holdout;
    const Checkpoint pre = stage("pretrain", [&] {
      PretrainResult r = pretrain_backbone(ds, pc);
      save_checkpoint(r.checkpoint, dir / "pretrain");
      return r.checkpoint;
    });
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    Checkpoint tano_ckpt, common_ckpt, multi_ckpt;
    if (want_tano) {
      tano_ckpt = stage("meta-train", [&] {
        TrainConfig c = tc;
        c.baseline = Baseline::kNone;
        return meta_train_loop(ds, pre.model, c, dir / "tano");
      });
      result.checkpoint_hashes.push_back(checkpoint_hash(dir / "tano"));
    }
    if (want_common) {
      common_ckpt = stage("meta-train common", [&] {
        TrainConfig c = tc;
        c.baseline = Baseline::kCommon;
        c.pseudo_labels = false;
        return meta_train_loop(ds, pre.model, c, dir / "common");
      });
      result.checkpoint_hashes.push_back(checkpoint_hash(dir / "common"));
    }
    if (want_multi) {
      multi_ckpt = stage("meta-train multi", [&] {
        TrainConfig c = tc;
        c.baseline = Baseline::kMulti;
        return train_multi_models(ds, pc, c, dir / "multi");
      });
      result.checkpoint_hashes.push_back(checkpoint_hash(dir / "multi"));
    }
    for (auto& s : summaries) {
      EvalOptions o;
      o.protocol = tc.protocol;
      o.holdout = tc.holdout;
      o.mode = s.mode;
      o.n_episodes = cfg.eval_episodes;
      o.seed = seed;
      o.n_way = tc.n_way;
      o.n_shot = tc.n_shot;
      o.n_query = cfg.eval_queries;
      const Checkpoint& ck = s.mode == EvalMode::kMulti                               ? multi_ckpt
                             : (s.mode == EvalMode::kCommon || s.mode == EvalMode::kAdaBN) ? common_ckpt
                                                                                          : tano_ckpt;
      s.per_seed.push_back(stage("evaluate " + eval_mode_name(s.mode),
                                 [&] { return evaluate_episodes(ck, ds, o); }));
    }
    if (want_multi && si == 0) {
      for (const Model& m : multi_ckpt.members) {
        row_labels.push_back("model D" + std::to_string(m.home_domain.value_or(0)));
        std::vector<ConfidenceInterval> row;
        for (std::size_t d = 0; d < ds.manifest.num_domains(); ++d) {
          EvalOptions o;
          o.mode = EvalMode::kCommon;
          o.only_domain = d;
          o.n_episodes = cfg.eval_episodes;
          o.seed = seed;
          o.n_way = tc.n_way;
          o.n_shot = tc.n_shot;
          o.n_query = cfg.eval_queries;
          const EvalReport r = evaluate_model(m, ds, o);
          row.push_back({r.mean, r.half_width});
        }
        result.cross_domain.push_back(row);
      }
    }
  }

  for (auto& s : summaries) {
    std::vector<double> all;
    for (const auto& r : s.per_seed) all.insert(all.end(), r.accuracies.begin(), r.accuracies.end());
    s.pooled = confidence_interval(all);
    for (std::size_t d : result.domains) {
      std::vector<double> a;
      for (const auto& r : s.per_seed) {
        for (std::size_t i = 0; i < r.accuracies.size(); ++i) {
          if (r.episode_domains[i] == d) a.push_back(r.accuracies[i]);
        }
      }
      s.per_domain.push_back(a.size() >= 2 ? confidence_interval(a)
                                           : ConfidenceInterval{a.empty() ? 0.0 : a[0], 0.0});
    }
  }
  result.modes = summaries;

  json j;
  j["protocol"] = protocol_name(cfg.train.protocol);
  j["holdout"] = cfg.train.holdout ? json(*cfg.train.holdout) : json(nullptr);
  j["seeds"] = cfg.seeds;
  j["eval_episodes"] = cfg.eval_episodes;
  j["eval_queries"] = cfg.eval_queries;
  j["train_config"] = to_json_value(cfg.train);
  j["pretrain_config"] = to_json_value(cfg.pretrain);
  j["domains"] = result.domains;
  json mj = json::array();
  for (const auto& s : summaries) {
    json row;
    row["mode"] = eval_mode_name(s.mode);
    row["mean"] = s.pooled.mean;
    row["ci95_half_width"] = s.pooled.half_width;
    json pd = json::array();
    for (std::size_t i = 0; i < result.domains.size(); ++i) {
      pd.push_back({{"domain", result.domains[i]},
                    {"mean", s.per_domain[i].mean},
                    {"ci95_half_width", s.per_domain[i].half_width}});
    }
    row["per_domain"] = pd;
    json seeds = json::array();
    for (const auto& r : s.per_seed) {
      seeds.push_back({{"mean", r.mean},
                       {"ci95_half_width", r.half_width},
                       {"coordinator_accuracy",
                        r.coordinator_accuracy ? json(*r.coordinator_accuracy) : json(nullptr)},
                       {"config_hash", r.config_hash}});
    }
    row["per_seed"] = seeds;
    mj.push_back(row);
  }
  j["modes"] = mj;
  json cd = json::array();
  for (const auto& row : result.cross_domain) {
    json r = json::array();
    for (const auto& c : row) r.push_back({{"mean", c.mean}, {"ci95_half_width", c.half_width}});
    cd.push_back(r);
  }
  j["cross_domain"] = cd;
  j["checkpoint_hashes"] = result.checkpoint_hashes;
  result.report_json = j.dump(2) + "\n";

  std::ostringstream t;
  t << "protocol " << protocol_name(cfg.train.protocol) << ", seeds " << cfg.seeds.size() << ", "
    << cfg.eval_episodes << " episodes per seed\n";
  t << std::left << std::setw(12) << "mode";
  for (std::size_t d : result.domains) t << std::right << std::setw(16) << ("D" + std::to_string(d));
  t << std::right << std::setw(18) << "mean" << "\n";
  for (const auto& s : summaries) {
    t << std::left << std::setw(12) << eval_mode_name(s.mode);
    for (const auto& c : s.per_domain) {
      t << std::right << std::setw(16) << (fixed(c.mean) + " +- " + fixed(c.half_width));
    }
    t << std::right << std::setw(18) << (fixed(s.pooled.mean) + " +- " + fixed(s.pooled.half_width))
      << "\n";
  }
  if (!result.cross_domain.empty()) {
    t << "\ncross-domain (row: trained on, column: evaluated on)\n" << std::left << std::setw(12) << "";
    for (std::size_t d = 0; d < ds.manifest.num_domains(); ++d) {
      t << std::right << std::setw(10) << ("D" + std::to_string(d));
    }
    t << "\n";
    for (std::size_t i = 0; i < result.cross_domain.size(); ++i) {
      t << std::left << std::setw(12) << row_labels[i];
      for (const auto& c : result.cross_domain[i]) t << std::right << std::setw(10) << fixed(c.mean);
      t << "\n";
    }
  }
  result.report_text = t.str();

  write_text(cfg.out_dir / "report.json", result.report_json);
  write_text(cfg.out_dir / "report.txt", result.report_text);
  return result;
}

// ---------------------------------------------------------------------------

std::string AnalysisReport::to_json() const {
  json j;
  json ls = json::array();
  for (const auto& l : layers) {
    ls.push_back({{"layer", l.layer},
                  {"max_sphere_residual_matched", l.max_sphere_residual_matched},
                  {"gap_global", l.gap_global},
                  {"gap_matched", l.gap_matched}});
  }
  j["layers"] = ls;
  j["residuals"] = residuals;
  j["pre_mean"] = pre_mean;
  j["pre_var"] = pre_var;
  j["matched_accuracy"] = matched_accuracy;
  j["mismatched_accuracy"] = mismatched_accuracy;
  j["source_domain"] = source_domain;
  j["target_domain"] = target_domain;
  return j.dump(2);
}

namespace {

constexpr std::size_t kAnalysisItems = 4;

// Base-split images of one domain, kAnalysisItems per class.
std::vector<ImageRef> domain_batch(const Dataset& ds, std::size_t d) {
  std::vector<ImageRef> refs;
  const std::size_t items = std::min(kAnalysisItems, ds.manifest.per_class);
  for (std::size_t c : ds.manifest.classes_in(Split::kBase)) {
    for (std::size_t i = 0; i < items; ++i) {
      refs.push_back({static_cast<std::uint32_t>(d), static_cast<std::uint32_t>(c),
                      static_cast<std::uint32_t>(i)});
    }
  }
  return refs;
}

// Max relative sphere residual over channels of every layer, train mode.
std::vector<double> layer_residuals(const Tensor& images, const EncoderWeights& w,
                                    const GroupWorker& worker) {
  const EncodeResult r = encode(images, w, worker, BnMode::kTrain, true);
  std::vector<double> out;
  for (std::size_t l = 0; l < r.post_norm.size(); ++l) {
    const auto& layer = worker.layers[l];
    auto gamma = layer.gamma.data();
    auto beta = layer.beta.data();
    double worst = 0.0;
    for (std::size_t c = 0; c < gamma.size(); ++c) {
      const auto z = channel_values(r.post_norm[l], c);
      worst = std::max(worst, sphere_residual_relative(z, gamma[c], beta[c], r.stats[l].var[c],
                                                       layer.epsilon));
    }
    out.push_back(worst);
  }
  return out;
}

// Per layer, per channel mean of the conv output standardized by the
// worker's running statistics.
std::vector<std::vector<double>> standardized_means(const Tensor& images, const EncoderWeights& w,
                                                    const GroupWorker& worker) {
  const EncodeResult r = encode(images, w, worker, BnMode::kEval, true);
  std::vector<std::vector<double>> out;
  for (std::size_t l = 0; l < r.pre_norm.size(); ++l) {
    const auto& layer = worker.layers[l];
    std::vector<double> means;
    for (std::size_t c = 0; c < layer.running_mean.size(); ++c) {
      const auto z = channel_values(r.pre_norm[l], c);
      const double inv = 1.0 / std::sqrt(layer.running_var[c] + layer.epsilon);
      double acc = 0.0;
      for (double v : z) acc += (v - layer.running_mean[c]) * inv;
      means.push_back(acc / static_cast<double>(z.size()));
    }
    out.push_back(std::move(means));
  }
  return out;
}

// Mean over channels of the cross-domain standard deviation.
double spread(const std::vector<std::vector<double>>& per_domain) {
  if (per_domain.size() < 2) return 0.0;
  const std::size_t channels = per_domain[0].size();
  double total = 0.0;
  for (std::size_t c = 0; c < channels; ++c) {
    double mean = 0.0;
    for (const auto& d : per_domain) mean += d[c];
    mean /= static_cast<double>(per_domain.size());
    double ss = 0.0;
    for (const auto& d : per_domain) ss += (d[c] - mean) * (d[c] - mean);
    total += std::sqrt(ss / static_cast<double>(per_domain.size()));
  }
  return total / static_cast<double>(channels);
}

}  // namespace

AnalysisReport emit_analysis_report(const Model& model, const Dataset& ds, std::uint64_t seed,
                                    std::size_t n_episodes) {
  if (n_episodes < 2) throw ValidationError("analysis needs at least 2 episodes");
  const std::size_t nd = ds.manifest.num_domains();
  const std::size_t gi = model.bank.global_index();
  AnalysisReport rep;

  std::vector<Tensor> batches;
  std::vector<ImageRef> all;
  for (std::size_t d = 0; d < nd; ++d) {
    const auto refs = domain_batch(ds, d);
    all.insert(all.end(), refs.begin(), refs.end());
    batches.push_back(load_images(ds, refs));
  }
  const Tensor pooled = load_images(ds, all);

  // Residuals: each domain worker on its own domain, the global worker on all.
  std::vector<std::vector<double>> per_worker;
  for (std::size_t r = 0; r < model.bank.size(); ++r) {
    if (r == gi) {
      per_worker.push_back(layer_residuals(pooled, model.encoder, model.bank.worker(r)));
    } else if (r < model.worker_domains.size() && model.worker_domains[r] < nd) {
      per_worker.push_back(
          layer_residuals(batches[model.worker_domains[r]], model.encoder, model.bank.worker(r)));
    }
  }

  // Raw pre-normalization statistics under the global worker.
  rep.pre_mean.assign(kNumBnLayers, {});
  rep.pre_var.assign(kNumBnLayers, {});
  std::vector<std::vector<std::vector<double>>> g_means, m_means;  // [domain][layer][channel]
  for (std::size_t d = 0; d < nd; ++d) {
    const EncodeResult r = encode(batches[d], model.encoder, model.bank.global(), BnMode::kEval, true);
    for (std::size_t l = 0; l < kNumBnLayers; ++l) {
      const BatchStats s = compute_batch_stats(r.pre_norm[l]);
      rep.pre_mean[l].push_back(s.mean);
      rep.pre_var[l].push_back(s.var);
    }
    g_means.push_back(standardized_means(batches[d], model.encoder, model.bank.global()));
    const auto w = worker_for_domain(model, d);
    m_means.push_back(standardized_means(batches[d], model.encoder,
                                         w ? model.bank.worker(*w) : model.bank.global()));
  }

  rep.residuals.assign(kNumBnLayers, {});
  for (std::size_t l = 0; l < kNumBnLayers; ++l) {
    LayerGeometry g;
    g.layer = l;
    for (const auto& w : per_worker) {
      rep.residuals[l].push_back(w[l]);
      g.max_sphere_residual_matched = std::max(g.max_sphere_residual_matched, w[l]);
    }
    std::vector<std::vector<double>> gl, ml;
    for (std::size_t d = 0; d < nd; ++d) {
      gl.push_back(g_means[d][l]);
      ml.push_back(m_means[d][l]);
    }
    g.gap_global = spread(gl);
    g.gap_matched = spread(ml);
    rep.layers.push_back(g);
  }

  // Matched versus swapped running statistics on target-domain episodes.
  rep.source_domain = 0;
  rep.target_domain = nd > 1 ? 1 : 0;
  const auto src = worker_for_domain(model, rep.source_domain);
  const auto tgt = worker_for_domain(model, rep.target_domain);
  const GroupWorker& matched = tgt ? model.bank.worker(*tgt) : model.bank.global();
  GroupWorker swapped = matched.clone();
  const GroupWorker& source = src ? model.bank.worker(*src) : model.bank.global();
  for (std::size_t l = 0; l < swapped.layers.size(); ++l) {
    swapped.layers[l].running_mean = source.layers[l].running_mean;
    swapped.layers[l].running_var = source.layers[l].running_var;
  }
  Embedder embedder(model, ds);
  const Rng root(seed);
  const std::vector<std::size_t> domains = {rep.target_domain};
  double acc_m = 0.0, acc_s = 0.0;
  for (std::size_t i = 0; i < n_episodes; ++i) {
    Rng rng = root.derive(kStreamTestEpisode, i);
    const Episode e = sample_episode(ds, Split::kNovel, domains, 5, 1, 15, rng);
    acc_m += accuracy_with(embedder, matched, e);
    acc_s += accuracy_with(embedder, swapped, e);
  }
  rep.matched_accuracy = acc_m / static_cast<double>(n_episodes);
  rep.mismatched_accuracy = acc_s / static_cast<double>(n_episodes);
  return rep;
}

}  // namespace tano
