// Copyright 2026 The TANO Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Command-line front end over the C API.

#include <malloc.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include "tano/tano.h"

namespace {

using nlohmann::json;

constexpr int kExitValidation = 2;
constexpr int kExitFormat = 4;

struct DatasetDeleter {
  void operator()(tano_dataset* p) const { tano_dataset_free(p); }
};
struct CheckpointDeleter {
  void operator()(tano_checkpoint* p) const { tano_checkpoint_free(p); }
};
struct StringDeleter {
  void operator()(char* p) const { tano_string_free(p); }
};
using DatasetPtr = std::unique_ptr<tano_dataset, DatasetDeleter>;
using CheckpointPtr = std::unique_ptr<tano_checkpoint, CheckpointDeleter>;
using StringPtr = std::unique_ptr<char, StringDeleter>;

// Thrown to unwind with a status already reported by the library.
struct Failure {
  int code;
};

void check(tano_status s) {
  if (s != TANO_OK) {
    std::fprintf(stderr, "error: %s\n", tano_last_error());
    throw Failure{static_cast<int>(s)};
  }
}

DatasetPtr open_dataset(const std::string& dir) {
  tano_dataset* ds = nullptr;
  check(tano_dataset_open(dir.c_str(), &ds));
  return DatasetPtr(ds);
}

CheckpointPtr open_checkpoint(const std::string& dir) {
  tano_checkpoint* c = nullptr;
  check(tano_checkpoint_open(dir.c_str(), &c));
  return CheckpointPtr(c);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) {
    std::fprintf(stderr, "error: cannot write %s\n", path.c_str());
    throw Failure{kExitFormat};
  }
}

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) {
    std::fprintf(stderr, "error: cannot read %s\n", path.c_str());
    throw Failure{kExitFormat};
  }
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

// Registers an option that writes into `j[key]` only when given.
template <typename T>
CLI::Option* opt(CLI::App* app, const std::string& flag, json& j, const std::string& key,
                 const std::string& help) {
  return app->add_option_function<T>(
      flag, [&j, key](const T& v) { j[key] = v; }, help);
}

CLI::Option* on_off(CLI::App* app, const std::string& flag, json& j, const std::string& key,
                    const std::string& help) {
  return app
      ->add_option_function<std::string>(
          flag, [&j, key](const std::string& v) { j[key] = v == "on"; }, help)
      ->check(CLI::IsMember({"on", "off"}));
}

// Seeds are mandatory unless a person is at the terminal.
void require_seed(const json& j, const char* command) {
  if (!j.contains("seed") && !isatty(STDIN_FILENO)) {
    std::fprintf(stderr, "error: %s needs --seed when not run interactively\n", command);
    throw Failure{kExitValidation};
  }
}

void print_progress(const char* record, void* user) {
  if (*static_cast<bool*>(user)) return;
  const json r = json::parse(record);
  std::fprintf(stderr, "epoch %3zu  loss %.4f  train %.2f%%  val %.2f%%  lr %.6f\n",
               r["epoch"].get<std::size_t>(), r["train_loss"].get<double>(),
               r["train_accuracy"].get<double>(), r["val_accuracy"].get<double>(),
               r["lr"].get<double>());
}

}  // namespace

int main(int argc, char** argv) {
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 64 << 20);
  mallopt(M_TOP_PAD, 16 << 20);

  CLI::App app{"Task-aware normalization for few-shot learning across domains"};
  app.require_subcommand(1);
  bool quiet = false, verbose = false;
  app.add_flag("-q,--quiet", quiet, "Only print errors");
  app.add_flag("-v,--verbose", verbose, "Print progress details");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Render the synthetic multi-domain dataset");
  std::string gen_out;
  json gen_opts = json::object();
  gen->add_option("--out", gen_out, "Output directory")->required();
  opt<std::uint64_t>(gen, "--seed", gen_opts, "seed", "Random seed");
  opt<std::size_t>(gen, "--domains", gen_opts, "num_domains", "Number of domains (default 4)");
  opt<std::size_t>(gen, "--classes", gen_opts, "num_classes", "Classes per domain (default 20)");
  opt<std::size_t>(gen, "--per-class", gen_opts, "per_class", "Images per class (default 50)");

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "Pretrain the encoder on base classes");
  std::string pre_data, pre_out;
  json pre_opts = json::object();
  pre->add_option("--data", pre_data, "Dataset directory")->required();
  pre->add_option("--out", pre_out, "Checkpoint directory")->required();
  opt<std::size_t>(pre, "--epochs", pre_opts, "epochs", "Epochs (default 10)");
  opt<double>(pre, "--lr", pre_opts, "lr", "Learning rate (default 0.01)");
  opt<std::size_t>(pre, "--batch-size", pre_opts, "batch_size", "Batch size (default 64)");
  opt<std::size_t>(pre, "--holdout", pre_opts, "holdout", "Domain excluded from pretraining");
  opt<std::uint64_t>(pre, "--seed", pre_opts, "seed", "Random seed");

  // meta-train
  auto* meta = app.add_subcommand("meta-train", "Episodic training of the task-aware model");
  std::string meta_data, meta_init, meta_out, meta_resume;
  json meta_opts = json::object();
  meta->add_option("--data", meta_data, "Dataset directory")->required();
  meta->add_option("--init", meta_init, "Pretrained checkpoint (fresh model when absent)");
  meta->add_option("--out", meta_out, "Checkpoint directory")->required();
  meta->add_option("--resume", meta_resume, "Epoch checkpoint to continue from");
  opt<std::string>(meta, "--protocol", meta_opts, "protocol", "standard, intra or out")
      ->check(CLI::IsMember({"standard", "intra", "out"}));
  opt<std::size_t>(meta, "--holdout", meta_opts, "holdout", "Held-out domain");
  opt<std::size_t>(meta, "--ways", meta_opts, "ways", "Classes per episode (default 5)");
  opt<std::size_t>(meta, "--shots", meta_opts, "shots", "Support images per class (default 1)");
  opt<std::size_t>(meta, "--queries", meta_opts, "queries", "Query images per class (default 15)");
  opt<std::size_t>(meta, "--epochs", meta_opts, "epochs", "Epochs (default 40)");
  opt<std::size_t>(meta, "--episodes", meta_opts, "episodes_per_epoch", "Episodes per epoch (default 100)");
  opt<double>(meta, "--lr", meta_opts, "lr0", "Initial learning rate (default 0.001)");
  opt<double>(meta, "--lr-min", meta_opts, "lr_min", "Final learning rate (default 0)");
  opt<std::size_t>(meta, "--workers", meta_opts, "workers", "Workers under pseudo labels (default 4)");
  on_off(meta, "--pseudo-labels", meta_opts, "pseudo_labels", "k-means domain labels (on|off)");
  opt<std::vector<double>>(meta, "--v-r", meta_opts, "v_r", "Per-worker loss weights");
  opt<double>(meta, "--coord-weight", meta_opts, "coord_weight", "Coordinator loss weight (default 1)");
  opt<std::size_t>(meta, "--val-episodes", meta_opts, "val_episodes", "Validation episodes (default 100)");
  opt<std::string>(meta, "--baseline", meta_opts, "baseline", "none, common or multi")
      ->check(CLI::IsMember({"none", "common", "multi"}));
  opt<std::uint64_t>(meta, "--seed", meta_opts, "seed", "Random seed");

  // eval
  auto* ev = app.add_subcommand("eval", "Episodic evaluation of a checkpoint");
  std::string ev_ckpt, ev_data, ev_json;
  json ev_opts = json::object();
  ev->add_option("--ckpt", ev_ckpt, "Checkpoint directory")->required();
  ev->add_option("--data", ev_data, "Dataset directory")->required();
  ev->add_option("--json", ev_json, "Write the report here");
  opt<std::string>(ev, "--protocol", ev_opts, "protocol", "standard, intra or out")
      ->check(CLI::IsMember({"standard", "intra", "out"}));
  opt<std::size_t>(ev, "--holdout", ev_opts, "holdout", "Held-out domain");
  opt<std::string>(ev, "--mode", ev_opts, "mode",
                   "tano-hard, tano-blend, common, multi, adabn or tano-oracle");
  opt<std::size_t>(ev, "--episodes", ev_opts, "episodes", "Episodes (default 300)");
  opt<std::size_t>(ev, "--ways", ev_opts, "ways", "Classes per episode (default 5)");
  opt<std::size_t>(ev, "--shots", ev_opts, "shots", "Support images per class (default 1)");
  opt<std::size_t>(ev, "--queries", ev_opts, "queries", "Query images per class (default 15)");
  opt<std::string>(ev, "--split", ev_opts, "split", "base, val or novel (default novel)");
  opt<std::size_t>(ev, "--blend-k", ev_opts, "blend_k", "Workers blended (0 = all)");
  opt<std::string>(ev, "--variance", ev_opts, "variance", "linear or mixture");
  opt<std::size_t>(ev, "--domain", ev_opts, "domain", "Evaluate a single domain");
  opt<std::uint64_t>(ev, "--seed", ev_opts, "seed", "Random seed");

  // analyze
  auto* an = app.add_subcommand("analyze", "Normalization geometry of a trained model");
  std::string an_ckpt, an_data, an_json;
  json an_opts = json::object();
  std::size_t an_episodes = 100;
  an->add_option("--ckpt", an_ckpt, "Checkpoint directory")->required();
  an->add_option("--data", an_data, "Dataset directory")->required();
  an->add_option("--json", an_json, "Write the report here");
  an->add_option("--episodes", an_episodes, "Episodes for the swap test (default 100)");
  opt<std::uint64_t>(an, "--seed", an_opts, "seed", "Random seed");

  // run
  auto* run = app.add_subcommand("run", "Full pipeline: data, pretraining, training, evaluation");
  std::string run_config, run_out;
  std::optional<std::uint64_t> run_seed;
  run->add_option("--config", run_config, "Experiment options (JSON file)");
  run->add_option("--out", run_out, "Output directory")->required();
  run->add_option("--seed", run_seed, "Single seed (overrides the config's seeds)");

  // hash
  auto* hash = app.add_subcommand("hash", "Content hash of a checkpoint directory");
  std::string hash_dir;
  hash->add_option("dir", hash_dir, "Checkpoint directory")->required();

  // info
  auto* info = app.add_subcommand("info", "Describe a dataset or checkpoint");
  std::string info_data, info_ckpt;
  info->add_option("--data", info_data, "Dataset directory");
  info->add_option("--ckpt", info_ckpt, "Checkpoint directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  tano_set_log_level(quiet ? TANO_LOG_QUIET : verbose ? TANO_LOG_INFO : TANO_LOG_WARNING);

  try {
    if (*gen) {
      require_seed(gen_opts, "gen-data");
      check(tano_dataset_generate(gen_opts.dump().c_str(), gen_out.c_str()));
      if (!quiet) std::printf("dataset written to %s\n", gen_out.c_str());
    } else if (*pre) {
      require_seed(pre_opts, "pretrain");
      auto ds = open_dataset(pre_data);
      char* summary = nullptr;
      check(tano_pretrain(ds.get(), pre_opts.dump().c_str(), pre_out.c_str(), &summary));
      StringPtr s(summary);
      if (!quiet) {
        const json j = json::parse(summary);
        const auto& loss = j["epoch_loss"];
        const auto& acc = j["epoch_accuracy"];
        for (std::size_t e = 0; e < loss.size(); ++e) {
          std::printf("epoch %3zu  loss %.4f  accuracy %.2f%%\n", e + 1, loss[e].get<double>(),
                      acc[e].get<double>());
        }
        std::printf("checkpoint %s  hash %s\n", pre_out.c_str(),
                    j["hash"].get<std::string>().c_str());
      }
    } else if (*meta) {
      if (meta_resume.empty()) require_seed(meta_opts, "meta-train");
      auto ds = open_dataset(meta_data);
      CheckpointPtr init;
      if (!meta_init.empty()) init = open_checkpoint(meta_init);
      check(tano_meta_train(ds.get(), init.get(),
                            meta_opts.empty() ? nullptr : meta_opts.dump().c_str(),
                            meta_out.c_str(), meta_resume.empty() ? nullptr : meta_resume.c_str(),
                            print_progress, &quiet));
      char* h = nullptr;
      check(tano_checkpoint_hash(meta_out.c_str(), &h));
      StringPtr hs(h);
      if (!quiet) std::printf("checkpoint %s  hash %s\n", meta_out.c_str(), h);
    } else if (*ev) {
      require_seed(ev_opts, "eval");
      auto ds = open_dataset(ev_data);
      auto ck = open_checkpoint(ev_ckpt);
      char* report = nullptr;
      check(tano_evaluate(ds.get(), ck.get(), ev_opts.dump().c_str(), &report));
      StringPtr rs(report);
      if (!ev_json.empty()) write_text(ev_json, std::string(report) + "\n");
      if (!quiet) {
        const json j = json::parse(report);
        std::printf("%s %s: %.2f +- %.2f over %zu episodes\n",
                    j["mode"].get<std::string>().c_str(), j["protocol"].get<std::string>().c_str(),
                    j["mean"].get<double>(), j["ci95_half_width"].get<double>(),
                    j["episodes"].get<std::size_t>());
        for (const auto& d : j["per_domain"]) {
          std::printf("  domain %zu: %.2f +- %.2f (%zu episodes)\n", d["domain"].get<std::size_t>(),
                      d["mean"].get<double>(), d["ci95_half_width"].get<double>(),
                      d["episodes"].get<std::size_t>());
        }
        if (!j["coordinator_accuracy"].is_null()) {
          std::printf("  coordinator accuracy: %.2f%%\n", j["coordinator_accuracy"].get<double>());
        }
        std::printf("  config hash %s\n", j["config_hash"].get<std::string>().c_str());
      }
    } else if (*an) {
      require_seed(an_opts, "analyze");
      auto ds = open_dataset(an_data);
      auto ck = open_checkpoint(an_ckpt);
      char* report = nullptr;
      check(tano_analyze(ds.get(), ck.get(), an_opts.value("seed", std::uint64_t{0}), an_episodes,
                         &report));
      StringPtr rs(report);
      if (!an_json.empty()) write_text(an_json, std::string(report) + "\n");
      if (!quiet) {
        const json j = json::parse(report);
        for (const auto& l : j["layers"]) {
          std::printf("layer %zu  sphere residual %.3e  gap global %.4f  gap matched %.4f\n",
                      l["layer"].get<std::size_t>(), l["max_sphere_residual_matched"].get<double>(),
                      l["gap_global"].get<double>(), l["gap_matched"].get<double>());
        }
        std::printf("matched statistics %.2f%%  swapped statistics %.2f%%\n",
                    j["matched_accuracy"].get<double>(), j["mismatched_accuracy"].get<double>());
      }
    } else if (*run) {
      json cfg = json::object();
      if (!run_config.empty()) {
        cfg = json::parse(read_text(run_config), nullptr, false);
        if (cfg.is_discarded() || !cfg.is_object()) {
          std::fprintf(stderr, "error: %s is not a JSON object\n", run_config.c_str());
          return kExitFormat;
        }
      }
      if (run_seed) cfg["seeds"] = json::array({*run_seed});
      if (!cfg.contains("seeds") && !isatty(STDIN_FILENO)) {
        std::fprintf(stderr, "error: run needs --seed or seeds in the config when not run interactively\n");
        return kExitValidation;
      }
      cfg["out_dir"] = run_out;
      char* text = nullptr;
      check(tano_run_experiment(cfg.dump().c_str(), &text));
      StringPtr ts(text);
      if (!quiet) std::fputs(text, stdout);
    } else if (*hash) {
      char* h = nullptr;
      check(tano_checkpoint_hash(hash_dir.c_str(), &h));
      StringPtr hs(h);
      std::printf("%s\n", h);
    } else if (*info) {
      if (info_data.empty() == info_ckpt.empty()) {
        std::fprintf(stderr, "error: info needs exactly one of --data or --ckpt\n");
        return kExitValidation;
      }
      char* text = nullptr;
      if (!info_data.empty()) {
        auto ds = open_dataset(info_data);
        check(tano_dataset_info(ds.get(), &text));
      } else {
        auto ck = open_checkpoint(info_ckpt);
        check(tano_checkpoint_info(ck.get(), &text));
      }
      StringPtr ts(text);
      std::printf("%s\n", text);
    }
  } catch (const Failure& f) {
    return f.code;
  }
  return 0;
}
