// Copyright 2026 The TANO Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include <json.hpp>

#include <map>
#include <string>

#include "config_json.hpp"
#include "tano/blob.hpp"
#include "tano/error.hpp"
#include "tano/training.hpp"

namespace tano {

using nlohmann::json;

inline constexpr std::uint32_t kCheckpointFormatVersion = 2;

json to_json_value(const TrainConfig& c) {
  json j;
  j["protocol"] = protocol_name(c.protocol);
  j["holdout"] = c.holdout ? json(*c.holdout) : json(nullptr);
  j["ways"] = c.n_way;
  j["shots"] = c.n_shot;
  j["queries"] = c.n_query;
  j["epochs"] = c.epochs;
  j["episodes_per_epoch"] = c.episodes_per_epoch;
  j["lr0"] = c.lr0;
  j["lr_min"] = c.lr_min;
  j["v_r"] = c.v_r;
  j["coord_weight"] = c.coord_weight;
  j["bn_momentum"] = c.bn_momentum;
  j["bn_epsilon"] = c.bn_epsilon;
  j["seed"] = c.seed;
  j["workers"] = c.workers;
  j["pseudo_labels"] = c.pseudo_labels;
  j["val_episodes"] = c.val_episodes;
  j["baseline"] = baseline_name(c.baseline);
  j["optimizer"] = "sgd";
  return j;
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.protocol = parse_protocol(j.at("protocol").get<std::string>());
  if (!j.at("holdout").is_null()) c.holdout = j.at("holdout").get<std::size_t>();
  c.n_way = j.at("ways").get<std::size_t>();
  c.n_shot = j.at("shots").get<std::size_t>();
  c.n_query = j.at("queries").get<std::size_t>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.episodes_per_epoch = j.at("episodes_per_epoch").get<std::size_t>();
  c.lr0 = j.at("lr0").get<double>();
  c.lr_min = j.at("lr_min").get<double>();
  c.v_r = j.at("v_r").get<std::vector<double>>();
  c.coord_weight = j.at("coord_weight").get<double>();
  c.bn_momentum = j.at("bn_momentum").get<double>();
  c.bn_epsilon = j.at("bn_epsilon").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.workers = j.at("workers").get<std::size_t>();
  c.pseudo_labels = j.at("pseudo_labels").get<bool>();
  c.val_episodes = j.at("val_episodes").get<std::size_t>();
  c.baseline = parse_baseline(j.at("baseline").get<std::string>());
  return c;
}

json to_json_value(const PretrainConfig& c) {
  return {{"epochs", c.epochs},
          {"lr", c.lr},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"holdout", c.holdout ? json(*c.holdout) : json(nullptr)},
          {"domain", c.domain ? json(*c.domain) : json(nullptr)}};
}

PretrainConfig pretrain_config_from_json(const json& j) {
  PretrainConfig c;
  c.epochs = j.at("epochs").get<std::size_t>();
  c.lr = j.at("lr").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  if (!j.at("holdout").is_null()) c.holdout = j.at("holdout").get<std::size_t>();
  if (!j.at("domain").is_null()) c.domain = j.at("domain").get<std::size_t>();
  return c;
}

std::string train_config_json(const TrainConfig& c) { return to_json_value(c).dump(); }

namespace {

struct BlobEntry {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

BlobHeader header_for(const Shape& s) {
  BlobHeader h;
  h.version = kBlobVersionF64;
  auto u = [](std::size_t v) { return static_cast<std::uint32_t>(v); };
  switch (s.size()) {
    case 1: h.count = u(s[0]); h.channels = h.height = h.width = 1; break;
    case 2: h.count = u(s[0]); h.channels = u(s[1]); h.height = h.width = 1; break;
    case 4: h.count = u(s[0]); h.channels = u(s[1]); h.height = u(s[2]); h.width = u(s[3]); break;
    default: throw ValidationError("checkpoint tensors must have rank 1, 2 or 4");
  }
  return h;
}

void add_tensor(std::vector<BlobEntry>& blobs, std::string name, const Tensor& t) {
  blobs.push_back({std::move(name), t.shape(), {t.data().begin(), t.data().end()}});
}

void add_vector(std::vector<BlobEntry>& blobs, std::string name, const std::vector<double>& v) {
  blobs.push_back({std::move(name), {v.size()}, v});
}

json model_json(const Model& m, const std::string& prefix, std::vector<BlobEntry>& blobs) {
  json j;
  j["prefix"] = prefix;
  j["num_domains"] = m.num_domains();
  j["worker_domains"] = m.worker_domains;
  j["home_domain"] = m.home_domain ? json(*m.home_domain) : json(nullptr);
  for (std::size_t k = 0; k < m.encoder.kernels.size(); ++k) {
    add_tensor(blobs, prefix + "enc_k" + std::to_string(k), m.encoder.kernels[k]);
  }
  const auto& c = m.coordinator;
  add_tensor(blobs, prefix + "coord_w1", c.w1);
  add_tensor(blobs, prefix + "coord_b1", c.b1);
  add_tensor(blobs, prefix + "coord_w2", c.w2);
  add_tensor(blobs, prefix + "coord_b2", c.b2);
  json bn = json::array();
  for (std::size_t r = 0; r < m.bank.size(); ++r) {
    json layers = json::array();
    const GroupWorker& w = m.bank.worker(r);
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
      const auto& p = w.layers[l];
      const std::string base = prefix + "w" + std::to_string(r) + "_l" + std::to_string(l) + "_";
      add_tensor(blobs, base + "gamma", p.gamma);
      add_tensor(blobs, base + "beta", p.beta);
      add_vector(blobs, base + "mean", p.running_mean);
      add_vector(blobs, base + "var", p.running_var);
      layers.push_back({{"epsilon", p.epsilon}, {"momentum", p.momentum}});
    }
    bn.push_back(layers);
  }
  j["bn"] = bn;
  if (!m.centroids.empty()) {
    std::vector<double> flat;
    for (const auto& row : m.centroids) flat.insert(flat.end(), row.begin(), row.end());
    blobs.push_back({prefix + "centroids", {m.centroids.size(), m.centroids[0].size()}, flat});
  }
  j["has_centroids"] = !m.centroids.empty();
  return j;
}

json history_json(const std::vector<EpochRecord>& h) {
  json a = json::array();
  for (const auto& r : h) {
    a.push_back({{"epoch", r.epoch},
                 {"train_loss", r.train_loss},
                 {"train_accuracy", r.train_accuracy},
                 {"val_accuracy", r.val_accuracy},
                 {"lr", r.lr}});
  }
  return a;
}

class BlobReader {
 public:
  BlobReader(const std::filesystem::path& dir, const json& entries) : dir_(dir) {
    for (const auto& e : entries) {
      const auto name = e.at("name").get<std::string>();
      shapes_[name] = e.at("shape").get<Shape>();
      digests_[name] = e.at("digest").get<std::string>();
    }
  }

  std::vector<double> values(const std::string& name, Shape* shape = nullptr) const {
    auto it = shapes_.find(name);
    if (it == shapes_.end()) throw FormatError("checkpoint is missing tensor '" + name + "'");
    const auto path = dir_ / "blobs" / (name + ".tano");
    BlobHeader h;
    const auto bytes = read_file_bytes(path);
    auto v = decode_blob_f64(bytes, &h, path.string());
    if (hex64(fnv1a64(bytes)) != digests_.at(name)) {
      throw FormatError(path.string() + ": content digest disagrees with manifest");
    }
    if (v.size() != shape_numel(it->second)) {
      throw FormatError(path.string() + ": payload size disagrees with manifest at byte offset 8");
    }
    if (shape) *shape = it->second;
    return v;
  }

  Tensor parameter(const std::string& name) const {
    Shape s;
    auto v = values(name, &s);
    return Tensor::parameter(s, std::move(v));
  }

 private:
  std::filesystem::path dir_;
  std::map<std::string, Shape> shapes_;
  std::map<std::string, std::string> digests_;
};

Model model_from_json(const json& j, const BlobReader& blobs) {
  Model m;
  const std::string prefix = j.at("prefix").get<std::string>();
  const std::size_t r_count = j.at("num_domains").get<std::size_t>();
  m.worker_domains = j.at("worker_domains").get<std::vector<std::size_t>>();
  if (!j.at("home_domain").is_null()) m.home_domain = j.at("home_domain").get<std::size_t>();
  for (std::size_t k = 0; k < kNumBnLayers; ++k) {
    m.encoder.kernels.push_back(blobs.parameter(prefix + "enc_k" + std::to_string(k)));
  }
  m.coordinator.w1 = blobs.parameter(prefix + "coord_w1");
  m.coordinator.b1 = blobs.parameter(prefix + "coord_b1");
  m.coordinator.w2 = blobs.parameter(prefix + "coord_w2");
  m.coordinator.b2 = blobs.parameter(prefix + "coord_b2");
  const json& bn = j.at("bn");
  if (bn.size() != r_count + 1) throw FormatError("checkpoint bank size disagrees with num_domains");
  m.bank = make_bank(r_count);
  for (std::size_t r = 0; r <= r_count; ++r) {
    GroupWorker& w = m.bank.worker(r);
    if (bn[r].size() != kNumBnLayers) throw FormatError("checkpoint worker has wrong layer count");
    for (std::size_t l = 0; l < kNumBnLayers; ++l) {
      auto& p = w.layers[l];
      const std::string base = prefix + "w" + std::to_string(r) + "_l" + std::to_string(l) + "_";
      p.gamma = blobs.parameter(base + "gamma");
      p.beta = blobs.parameter(base + "beta");
      p.running_mean = blobs.values(base + "mean");
      p.running_var = blobs.values(base + "var");
      p.epsilon = bn[r][l].at("epsilon").get<double>();
      p.momentum = bn[r][l].at("momentum").get<double>();
      try {
        p.validate();
      } catch (const ValidationError& e) {
        throw FormatError(std::string("checkpoint BN layer invalid: ") + e.what());
      }
      if (p.channels() != kLayerChannels[l]) throw FormatError("checkpoint BN width mismatch");
    }
  }
  for (std::size_t k = 0; k < kNumBnLayers; ++k) {
    const Shape& s = m.encoder.kernels[k].shape();
    const std::size_t in = k == 0 ? kImageChannels : kLayerChannels[k - 1];
    if (s != Shape{kLayerChannels[k], in, 3, 3}) throw FormatError("checkpoint kernel shape mismatch");
  }
  if (m.coordinator.w1.shape() != Shape{kEmbeddingDim, kCoordinatorHidden} ||
      m.coordinator.w2.shape() != Shape{kCoordinatorHidden, r_count}) {
    throw FormatError("checkpoint coordinator shape mismatch");
  }
  if (j.at("has_centroids").get<bool>()) {
    Shape s;
    auto flat = blobs.values(prefix + "centroids", &s);
    if (s.size() != 2) throw FormatError("checkpoint centroids must be a matrix");
    for (std::size_t r = 0; r < s[0]; ++r) {
      m.centroids.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(r * s[1]),
                               flat.begin() + static_cast<std::ptrdiff_t>((r + 1) * s[1]));
    }
  }
  return m;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir / "blobs", ec);
  if (ec) throw FormatError("cannot create " + (dir / "blobs").string() + ": " + ec.message());
  std::vector<BlobEntry> blobs;
  json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["kind"] = checkpoint_kind_name(ckpt.kind);
  j["config"] = to_json_value(ckpt.config);
  j["pretrain"] = to_json_value(ckpt.pretrain);
  j["epoch"] = ckpt.epoch;
  j["best_epoch"] = ckpt.best_epoch;
  j["best_val_accuracy"] = ckpt.best_val_accuracy;
  j["history"] = history_json(ckpt.history);
  j["pseudo_labels"] = ckpt.pseudo_labels;
  j["rng"] = {{"seed", ckpt.config.seed}, {"next_step", ckpt.next_step}};
  json models = json::array();
  if (ckpt.kind == CheckpointKind::kMulti) {
    for (std::size_t i = 0; i < ckpt.members.size(); ++i) {
      models.push_back(model_json(ckpt.members[i], "m" + std::to_string(i) + "_", blobs));
    }
  } else {
    models.push_back(model_json(ckpt.model, "", blobs));
  }
  j["models"] = models;
  j["current"] = ckpt.current ? model_json(*ckpt.current, "cur_", blobs) : json(nullptr);
  json entries = json::array();
  for (const auto& b : blobs) {
    const auto bytes = encode_blob_f64(header_for(b.shape), b.values);
    entries.push_back({{"name", b.name}, {"shape", b.shape}, {"digest", hex64(fnv1a64(bytes))}});
    write_file_bytes(dir / "blobs" / (b.name + ".tano"), bytes);
  }
  j["blobs"] = entries;
  const std::string text = j.dump(2) + "\n";
  write_file_bytes(dir / "manifest.json",
                   std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const auto bytes = read_file_bytes(dir / "manifest.json");
  Checkpoint ckpt;
  try {
    const json j = json::parse(bytes.begin(), bytes.end());
    const auto version = j.at("format_version").get<std::uint32_t>();
    if (version != kCheckpointFormatVersion) {
      throw FormatError("unsupported checkpoint format_version " + std::to_string(version));
    }
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "pretrain") {
      ckpt.kind = CheckpointKind::kPretrain;
    } else if (kind == "meta") {
      ckpt.kind = CheckpointKind::kMeta;
    } else if (kind == "multi") {
      ckpt.kind = CheckpointKind::kMulti;
    } else {
      throw FormatError("unknown checkpoint kind '" + kind + "'");
    }
    ckpt.config = train_config_from_json(j.at("config"));
    ckpt.pretrain = pretrain_config_from_json(j.at("pretrain"));
    ckpt.epoch = j.at("epoch").get<std::size_t>();
    ckpt.best_epoch = j.at("best_epoch").get<std::size_t>();
    ckpt.best_val_accuracy = j.at("best_val_accuracy").get<double>();
    for (const auto& r : j.at("history")) {
      ckpt.history.push_back({r.at("epoch").get<std::size_t>(), r.at("train_loss").get<double>(),
                              r.at("train_accuracy").get<double>(),
                              r.at("val_accuracy").get<double>(), r.at("lr").get<double>()});
    }
    ckpt.pseudo_labels = j.at("pseudo_labels").get<std::vector<std::size_t>>();
    ckpt.next_step = j.at("rng").at("next_step").get<std::uint64_t>();
    const BlobReader reader(dir, j.at("blobs"));
    const json& models = j.at("models");
    if (ckpt.kind == CheckpointKind::kMulti) {
      for (const auto& m : models) ckpt.members.push_back(model_from_json(m, reader));
      if (ckpt.members.empty()) throw FormatError("multi checkpoint without members");
    } else {
      if (models.size() != 1) throw FormatError("checkpoint must hold exactly one model");
      ckpt.model = model_from_json(models[0], reader);
    }
    if (!j.at("current").is_null()) ckpt.current = model_from_json(j.at("current"), reader);
  } catch (const json::exception& e) {
    throw FormatError((dir / "manifest.json").string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw FormatError((dir / "manifest.json").string() + ": " + e.what());
  }
  return ckpt;
}

std::string checkpoint_hash(const std::filesystem::path& dir) {
  const auto manifest = read_file_bytes(dir / "manifest.json");
  std::uint64_t h = fnv1a64(manifest);
  try {
    const json j = json::parse(manifest.begin(), manifest.end());
    for (const auto& e : j.at("blobs")) {
      const auto bytes = read_file_bytes(dir / "blobs" / (e.at("name").get<std::string>() + ".tano"));
      h = fnv1a64(bytes, h);
    }
  } catch (const json::exception& e) {
    throw FormatError((dir / "manifest.json").string() + ": " + e.what());
  }
  return hex64(h);
}

}  // namespace tano
