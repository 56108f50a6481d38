// Copyright 2026 The TANO Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "tano/tano.h"

#include <json.hpp>

#include <cstdlib>
#include <cstring>
#include <new>
#include <optional>
#include <string>

#include "config_json.hpp"
#include "tano/data.hpp"
#include "tano/error.hpp"
#include "tano/evaluation.hpp"
#include "tano/log.hpp"
#include "tano/training.hpp"

struct tano_dataset {
  tano::Dataset dataset;
};

struct tano_checkpoint {
  tano::Checkpoint checkpoint;
};

namespace {

using nlohmann::json;
using tano::ValidationError;

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

template <typename Fn>
tano_status guard(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return TANO_OK;
  } catch (const tano::Error& e) {
    g_last_error = e.what();
    return static_cast<tano_status>(static_cast<int>(e.kind()));
  } catch (const json::exception& e) {
    g_last_error = std::string("invalid option: ") + e.what();
    return TANO_ERR_VALIDATION;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return TANO_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return TANO_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (!p) throw ValidationError(std::string(what) + " must not be null");
}

json parse_object(const char* text, const std::string& what) {
  if (!text || !*text) return json::object();
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw ValidationError(what + " options must be a JSON object");
  }
  return j;
}

// Copies the keys of `user` over `defaults`, rejecting unknown keys.
json overlay(json defaults, const json& user, const std::string& what) {
  for (const auto& [k, v] : user.items()) {
    if (!defaults.contains(k)) throw ValidationError("unknown " + what + " option '" + k + "'");
    defaults[k] = v;
  }
  return defaults;
}

tano::TrainConfig train_config(const json& user) {
  const json j = overlay(tano::to_json_value(tano::TrainConfig{}), user, "training");
  if (j.at("optimizer") != "sgd") throw ValidationError("the only optimizer is sgd");
  tano::TrainConfig c = tano::train_config_from_json(j);
  c.validate();
  return c;
}

tano::PretrainConfig pretrain_config(const json& user) {
  const json j = overlay(tano::to_json_value(tano::PretrainConfig{}), user, "pretraining");
  tano::PretrainConfig c = tano::pretrain_config_from_json(j);
  c.validate();
  return c;
}

json generate_defaults() {
  const tano::GenerateOptions g;
  return {{"num_domains", g.num_domains},
          {"num_classes", g.num_classes},
          {"per_class", g.per_class},
          {"seed", g.seed},
          {"domains", json::array()}};
}

tano::GenerateOptions generate_options(const json& user) {
  const json j = overlay(generate_defaults(), user, "dataset");
  tano::GenerateOptions g;
  g.num_domains = j.at("num_domains").get<std::size_t>();
  g.num_classes = j.at("num_classes").get<std::size_t>();
  g.per_class = j.at("per_class").get<std::size_t>();
  g.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& d : j.at("domains")) g.domains.push_back(tano::parse_domain_spec(d.dump()));
  if (!g.domains.empty() && !user.contains("num_domains")) g.num_domains = g.domains.size();
  return g;
}

tano::EvalOptions eval_options(const json& user) {
  const tano::EvalOptions d;
  const json defaults = {{"protocol", tano::protocol_name(d.protocol)},
                         {"holdout", nullptr},
                         {"mode", tano::eval_mode_name(d.mode)},
                         {"episodes", d.n_episodes},
                         {"seed", d.seed},
                         {"ways", d.n_way},
                         {"shots", d.n_shot},
                         {"queries", d.n_query},
                         {"split", tano::split_name(d.split)},
                         {"blend_k", d.blend_k},
                         {"variance", "linear"},
                         {"domain", nullptr}};
  const json j = overlay(defaults, user, "evaluation");
  tano::EvalOptions o;
  o.protocol = tano::parse_protocol(j.at("protocol").get<std::string>());
  if (!j.at("holdout").is_null()) o.holdout = j.at("holdout").get<std::size_t>();
  o.mode = tano::parse_eval_mode(j.at("mode").get<std::string>());
  o.n_episodes = j.at("episodes").get<std::size_t>();
  o.seed = j.at("seed").get<std::uint64_t>();
  o.n_way = j.at("ways").get<std::size_t>();
  o.n_shot = j.at("shots").get<std::size_t>();
  o.n_query = j.at("queries").get<std::size_t>();
  o.split = tano::parse_split(j.at("split").get<std::string>());
  o.blend_k = j.at("blend_k").get<std::size_t>();
  const std::string v = j.at("variance").get<std::string>();
  if (v == "linear") {
    o.variance = tano::VarianceBlend::kLinear;
  } else if (v == "mixture") {
    o.variance = tano::VarianceBlend::kMixture;
  } else {
    throw ValidationError("variance must be linear or mixture");
  }
  if (!j.at("domain").is_null()) o.only_domain = j.at("domain").get<std::size_t>();
  if (o.n_way < 2) throw ValidationError("ways must be >= 2");
  if (o.n_shot < 1 || o.n_query < 1) throw ValidationError("shots and queries must be >= 1");
  return o;
}

json record_json(const tano::EpochRecord& r) {
  return {{"epoch", r.epoch},
          {"train_loss", r.train_loss},
          {"train_accuracy", r.train_accuracy},
          {"val_accuracy", r.val_accuracy},
          {"lr", r.lr}};
}

}  // namespace

extern "C" {

const char* tano_version(void) { return "1.0.0"; }

const char* tano_last_error(void) { return g_last_error.c_str(); }

void tano_set_log_level(tano_log_level level) {
  switch (level) {
    case TANO_LOG_QUIET: tano::set_log_level(tano::LogLevel::kQuiet); break;
    case TANO_LOG_WARNING: tano::set_log_level(tano::LogLevel::kWarning); break;
    case TANO_LOG_INFO: tano::set_log_level(tano::LogLevel::kInfo); break;
  }
}

void tano_string_free(char* s) { std::free(s); }

tano_status tano_dataset_generate(const char* options_json, const char* out_dir) {
  return guard([&] {
    require(out_dir, "out_dir");
    const auto opts = generate_options(parse_object(options_json, "dataset"));
    tano::write_dataset(tano::generate_synthetic_domains(opts), out_dir);
  });
}

tano_status tano_dataset_open(const char* dir, tano_dataset** out) {
  return guard([&] {
    require(dir, "dir");
    require(out, "out");
    *out = nullptr;
    auto* ds = new tano_dataset{tano::read_dataset(dir)};
    *out = ds;
  });
}

void tano_dataset_free(tano_dataset* ds) { delete ds; }

tano_status tano_dataset_info(const tano_dataset* ds, char** info_json) {
  return guard([&] {
    require(ds, "dataset");
    require(info_json, "info_json");
    const auto& m = ds->dataset.manifest;
    json splits;
    for (tano::Split s : {tano::Split::kBase, tano::Split::kVal, tano::Split::kNovel}) {
      splits[tano::split_name(s)] = m.classes_in(s);
    }
    const json j = {{"domains", m.num_domains()},
                    {"classes", m.num_classes()},
                    {"per_class", m.per_class},
                    {"seed", m.seed},
                    {"splits", splits}};
    *info_json = dup_string(j.dump(2));
  });
}

tano_status tano_checkpoint_open(const char* dir, tano_checkpoint** out) {
  return guard([&] {
    require(dir, "dir");
    require(out, "out");
    *out = nullptr;
    auto* c = new tano_checkpoint{tano::load_checkpoint(dir)};
    *out = c;
  });
}

void tano_checkpoint_free(tano_checkpoint* ckpt) { delete ckpt; }

tano_status tano_checkpoint_info(const tano_checkpoint* ckpt, char** info_json) {
  return guard([&] {
    require(ckpt, "checkpoint");
    require(info_json, "info_json");
    const auto& c = ckpt->checkpoint;
    json history = json::array();
    for (const auto& r : c.history) history.push_back(record_json(r));
    json homes = json::array();
    for (const auto& m : c.members) homes.push_back(m.home_domain.value_or(0));
    const json j = {{"kind", tano::checkpoint_kind_name(c.kind)},
                    {"config", tano::to_json_value(c.config)},
                    {"pretrain", tano::to_json_value(c.pretrain)},
                    {"epoch", c.epoch},
                    {"best_epoch", c.best_epoch},
                    {"best_val_accuracy", c.best_val_accuracy},
                    {"num_domains", c.model.num_domains()},
                    {"worker_domains", c.model.worker_domains},
                    {"member_domains", homes},
                    {"history", history},
                    {"model_hash", c.kind == tano::CheckpointKind::kMulti
                                       ? json(nullptr)
                                       : json(tano::model_hash(c.model))}};
    *info_json = dup_string(j.dump(2));
  });
}

tano_status tano_checkpoint_hash(const char* dir, char** hex) {
  return guard([&] {
    require(dir, "dir");
    require(hex, "hex");
    *hex = dup_string(tano::checkpoint_hash(dir));
  });
}

tano_status tano_pretrain(const tano_dataset* ds, const char* options_json, const char* out_dir,
                          char** summary_json) {
  return guard([&] {
    require(ds, "dataset");
    require(out_dir, "out_dir");
    const auto cfg = pretrain_config(parse_object(options_json, "pretraining"));
    const tano::PretrainResult r = tano::pretrain_backbone(ds->dataset, cfg);
    tano::save_checkpoint(r.checkpoint, out_dir);
    if (summary_json) {
      const json j = {{"epoch_loss", r.epoch_loss},
                      {"epoch_accuracy", r.epoch_accuracy},
                      {"num_classes", r.num_classes},
                      {"hash", tano::checkpoint_hash(out_dir)}};
      *summary_json = dup_string(j.dump(2));
    }
  });
}

tano_status tano_meta_train(const tano_dataset* ds, const tano_checkpoint* init,
                            const char* options_json, const char* out_dir, const char* resume_dir,
                            tano_progress_fn progress, void* user) {
  return guard([&] {
    require(ds, "dataset");
    require(out_dir, "out_dir");
    std::optional<tano::Checkpoint> resume;
    tano::TrainConfig cfg;
    if (resume_dir) {
      resume = tano::load_checkpoint(resume_dir);
      const json user_opts = parse_object(options_json, "training");
      cfg = user_opts.empty() ? resume->config : train_config(user_opts);
    } else {
      cfg = train_config(parse_object(options_json, "training"));
    }
    tano::Model start;
    if (init) {
      if (init->checkpoint.kind == tano::CheckpointKind::kMulti) {
        throw ValidationError("a multi-model checkpoint cannot initialize training");
      }
      start = init->checkpoint.model.clone();
    } else {
      start = tano::init_model(1, cfg.seed);
    }
    tano::ProgressFn fn;
    if (progress) {
      fn = [progress, user](const tano::EpochRecord& r) {
        progress(record_json(r).dump().c_str(), user);
      };
    }
    tano::meta_train_loop(ds->dataset, start, cfg, out_dir, resume ? &*resume : nullptr, fn);
  });
}

tano_status tano_evaluate(const tano_dataset* ds, const tano_checkpoint* ckpt,
                          const char* options_json, char** report_json) {
  return guard([&] {
    require(ds, "dataset");
    require(ckpt, "checkpoint");
    require(report_json, "report_json");
    const auto opts = eval_options(parse_object(options_json, "evaluation"));
    const tano::EvalReport r = tano::evaluate_episodes(ckpt->checkpoint, ds->dataset, opts);
    *report_json = dup_string(r.to_json());
  });
}

tano_status tano_analyze(const tano_dataset* ds, const tano_checkpoint* ckpt, uint64_t seed,
                         size_t episodes, char** report_json) {
  return guard([&] {
    require(ds, "dataset");
    require(ckpt, "checkpoint");
    require(report_json, "report_json");
    if (ckpt->checkpoint.kind == tano::CheckpointKind::kMulti) {
      throw ValidationError("analysis needs a single-model checkpoint");
    }
    const auto r = tano::emit_analysis_report(ckpt->checkpoint.model, ds->dataset, seed, episodes);
    *report_json = dup_string(r.to_json());
  });
}

tano_status tano_run_experiment(const char* options_json, char** report_text) {
  return guard([&] {
    const json user = parse_object(options_json, "experiment");
    const tano::ExperimentConfig d;
    json modes = json::array();
    for (auto m : d.modes) modes.push_back(tano::eval_mode_name(m));
    const json defaults = {{"out_dir", nullptr},       {"data_dir", nullptr},
                           {"data", json::object()},   {"pretrain", json::object()},
                           {"train", json::object()},  {"modes", modes},
                           {"eval_episodes", d.eval_episodes},
                           {"eval_queries", d.eval_queries},
                           {"seeds", d.seeds}};
    const json j = overlay(defaults, user, "experiment");
    if (j.at("out_dir").is_null()) throw ValidationError("experiment needs out_dir");
    tano::ExperimentConfig cfg;
    cfg.out_dir = j.at("out_dir").get<std::string>();
    if (!j.at("data_dir").is_null()) cfg.data_dir = j.at("data_dir").get<std::string>();
    cfg.data = generate_options(j.at("data"));
    cfg.pretrain = pretrain_config(j.at("pretrain"));
    cfg.train = train_config(j.at("train"));
    cfg.modes.clear();
    for (const auto& m : j.at("modes")) cfg.modes.push_back(tano::parse_eval_mode(m.get<std::string>()));
    cfg.eval_episodes = j.at("eval_episodes").get<std::size_t>();
    cfg.eval_queries = j.at("eval_queries").get<std::size_t>();
    cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    const tano::ExperimentResult r = tano::run_experiment(cfg);
    if (report_text) *report_text = dup_string(r.report_text);
  });
}

}  // extern "C"
