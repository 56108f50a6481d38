// Copyright 2026 The TANO Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "tano/data.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "tano/blob.hpp"
#include "tano/error.hpp"

namespace tano {

using nlohmann::json;

namespace {

constexpr std::size_t kSide = 16;
constexpr std::size_t kSupersample = 4;
constexpr std::size_t kValClasses = 5;
constexpr std::size_t kNovelClasses = 5;

// Shape membership in normalized coordinates, x right and y down in [-1, 1].
bool inside(std::size_t kind, double x, double y) {
  const double ax = std::abs(x), ay = std::abs(y);
  const double r = std::hypot(x, y);
  switch (kind) {
    case 0:  // circle
      return r < 0.6;
    case 1:  // square
      return std::max(ax, ay) < 0.5;
    case 2:  // triangle
      return y > -0.55 && y < 0.5 && ax < (y + 0.55) * 0.62;
    case 3:  // plus
      return (ax < 0.18 && ay < 0.62) || (ay < 0.18 && ax < 0.62);
    case 4:  // ring
      return r > 0.36 && r < 0.62;
    case 5:  // hbars
      return ax < 0.6 && ay < 0.6 && std::fmod(y + 0.6, 0.48) < 0.24;
    case 6:  // vbars
      return ax < 0.6 && ay < 0.6 && std::fmod(x + 0.6, 0.48) < 0.24;
    case 7:  // diamond
      return ax + ay < 0.68;
    case 8:  // xcross
      return (std::abs(x - y) < 0.26 || std::abs(x + y) < 0.26) && std::max(ax, ay) < 0.58;
    case 9:  // frame
      return std::max(ax, ay) < 0.6 && std::max(ax, ay) > 0.36;
    case 10:  // hexagon
      return ay < 0.52 && ax * 0.866 + ay * 0.5 < 0.56;
    case 11:  // semicircle
      return r < 0.66 && y < 0.12;
    case 12:  // lshape
      return (x > -0.5 && x < -0.14 && ay < 0.6) || (y > 0.24 && y < 0.6 && ax < 0.5);
    case 13:  // tshape
      return (y > -0.6 && y < -0.24 && ax < 0.6) || (ax < 0.18 && ay < 0.6);
    case 14:  // crescent
      return r < 0.62 && std::hypot(x - 0.3, y) > 0.44;
    case 15:  // dots4
      return std::hypot(ax - 0.36, ay - 0.36) < 0.21;
    case 16:  // hellipse
      return (x / 0.66) * (x / 0.66) + (y / 0.3) * (y / 0.3) < 1.0;
    case 17:  // vellipse
      return (x / 0.3) * (x / 0.3) + (y / 0.66) * (y / 0.66) < 1.0;
    case 18: {  // star
      const double a = std::atan2(y, x);
      const double c = std::cos(2.5 * a);
      return r < 0.26 + 0.38 * c * c;
    }
    case 19:  // checker
      return std::max(ax, ay) < 0.6 && ((x > 0) == (y > 0));
    default:
      return false;
  }
}

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

std::vector<float> render_class(const DomainSpec& d, std::size_t kind, std::size_t count, Rng rng) {
  std::vector<float> out(count * Dataset::kImageFloats);
  for (std::size_t n = 0; n < count; ++n) {
    const double tx = rng.uniform(-0.15, 0.15), ty = rng.uniform(-0.15, 0.15);
    const double s = rng.uniform(0.75, 1.0);
    const double th = rng.uniform(-0.25, 0.25);
    const double brightness = rng.uniform(-0.04, 0.04);
    const double ct = std::cos(th), st = std::sin(th);
    float* img = out.data() + n * Dataset::kImageFloats;
    for (std::size_t py = 0; py < kSide; ++py) {
      for (std::size_t px = 0; px < kSide; ++px) {
        std::size_t hits = 0;
        for (std::size_t sy = 0; sy < kSupersample; ++sy) {
          for (std::size_t sx = 0; sx < kSupersample; ++sx) {
            const double u = ((px + (sx + 0.5) / kSupersample) / kSide) * 2.0 - 1.0 - tx;
            const double v = ((py + (sy + 0.5) / kSupersample) / kSide) * 2.0 - 1.0 - ty;
            const double x = (ct * u + st * v) / s;
            const double y = (-st * u + ct * v) / s;
            hits += inside(kind, x, y);
          }
        }
        const double cov = static_cast<double>(hits) / (kSupersample * kSupersample);
        double bg_mod = 1.0;
        if (d.background == Background::kGradient) {
          bg_mod = 0.7 + 0.6 * static_cast<double>(px) / (kSide - 1);
        }
        double checker = 0.0;
        if (d.background == Background::kChecker) {
          checker = ((px / 4 + py / 4) % 2 == 0) ? 0.08 : -0.08;
        }
        const bool salt = d.noise == NoiseKind::kSaltPepper && rng.uniform(0.0, 1.0) < d.noise_level;
        const double salt_value = salt ? (rng.uniform(0.0, 1.0) < 0.5 ? 0.0 : 1.0) : 0.0;
        for (std::size_t c = 0; c < 3; ++c) {
          const double bg = d.color_mean[c] * bg_mod + checker;
          double v = bg + cov * d.color_scale[c] + brightness;
          if (d.noise == NoiseKind::kGaussian) v += rng.normal(0.0, d.noise_level);
          if (salt) v = salt_value;
          if (d.inverted) v = 1.0 - v;
          img[(c * kSide + py) * kSide + px] = static_cast<float>(clamp01(v));
        }
      }
    }
  }
  return out;
}

std::string background_name(Background b) {
  switch (b) {
    case Background::kFlat: return "flat";
    case Background::kGradient: return "gradient";
    case Background::kChecker: return "checker";
  }
  return "flat";
}

Background parse_background(const std::string& s) {
  if (s == "flat") return Background::kFlat;
  if (s == "gradient") return Background::kGradient;
  if (s == "checker") return Background::kChecker;
  throw FormatError("unknown background style '" + s + "'");
}

json domain_to_json(const DomainSpec& d) {
  return {{"id", d.id},
          {"color_mean", d.color_mean},
          {"color_scale", d.color_scale},
          {"background", background_name(d.background)},
          {"noise", {{"kind", d.noise == NoiseKind::kGaussian ? "gaussian" : "salt_pepper"},
                     {"level", d.noise_level}}},
          {"polarity_inverted", d.inverted}};
}

DomainSpec domain_from_json(const json& j) {
  DomainSpec d;
  d.id = j.at("id").get<std::size_t>();
  d.color_mean = j.at("color_mean").get<std::array<double, 3>>();
  d.color_scale = j.at("color_scale").get<std::array<double, 3>>();
  d.background = parse_background(j.at("background").get<std::string>());
  const std::string kind = j.at("noise").at("kind").get<std::string>();
  if (kind == "gaussian") {
    d.noise = NoiseKind::kGaussian;
  } else if (kind == "salt_pepper") {
    d.noise = NoiseKind::kSaltPepper;
  } else {
    throw FormatError("unknown noise kind '" + kind + "'");
  }
  d.noise_level = j.at("noise").at("level").get<double>();
  d.inverted = j.at("polarity_inverted").get<bool>();
  return d;
}

std::string blob_name(std::size_t d, std::size_t c) {
  return "d" + std::to_string(d) + "_c" + std::to_string(c) + ".tano";
}

}  // namespace

std::string domain_spec_json(const DomainSpec& d) { return domain_to_json(d).dump(); }

DomainSpec parse_domain_spec(const std::string& json_text) {
  try {
    json j = json::parse(json_text);
    if (!j.contains("id")) j["id"] = 0;
    return domain_from_json(j);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad domain style: ") + e.what());
  }
}

std::vector<DomainSpec> default_domains(std::size_t count) {
  std::vector<DomainSpec> base = {
      {0, {0.56, 0.50, 0.44}, {0.40, 0.20, 0.00}, Background::kFlat, NoiseKind::kGaussian, 0.06, false},
      {1, {0.44, 0.56, 0.50}, {0.00, 0.40, 0.20}, Background::kGradient, NoiseKind::kGaussian, 0.06, false},
      {2, {0.50, 0.44, 0.56}, {0.20, 0.00, 0.40}, Background::kChecker, NoiseKind::kSaltPepper, 0.04, false},
      {3, {0.44, 0.44, 0.56}, {0.20, 0.40, 0.00}, Background::kFlat, NoiseKind::kGaussian, 0.06, true},
  };
  std::vector<DomainSpec> out;
  for (std::size_t r = 0; r < count; ++r) {
    DomainSpec d = base[r % base.size()];
    d.id = r;
    if (r >= base.size()) {
      // Rotate the colour channels and vary contrast for extra domains.
      const std::size_t shift = (r / base.size()) % 3;
      std::rotate(d.color_mean.begin(), d.color_mean.begin() + shift, d.color_mean.end());
      std::rotate(d.color_scale.begin(), d.color_scale.begin() + shift, d.color_scale.end());
      for (double& v : d.color_scale) v *= 0.8;
    }
    out.push_back(d);
  }
  return out;
}

const std::vector<std::string>& shape_kinds() {
  static const std::vector<std::string> kinds = {
      "circle",  "square",   "triangle", "plus",     "ring",       "hbars",    "vbars",
      "diamond", "xcross",   "frame",    "hexagon",  "semicircle", "lshape",   "tshape",
      "crescent", "dots4",   "hellipse", "vellipse", "star",       "checker"};
  return kinds;
}

std::string split_name(Split s) {
  switch (s) {
    case Split::kBase: return "base";
    case Split::kVal: return "val";
    case Split::kNovel: return "novel";
  }
  return "base";
}

Split parse_split(const std::string& s) {
  if (s == "base") return Split::kBase;
  if (s == "val") return Split::kVal;
  if (s == "novel") return Split::kNovel;
  throw FormatError("unknown split '" + s + "'");
}

std::vector<std::size_t> DatasetManifest::classes_in(Split s) const {
  std::vector<std::size_t> out;
  for (const auto& c : classes) {
    if (c.split == s) out.push_back(c.class_id);
  }
  return out;
}

std::span<const float> Dataset::image(std::size_t domain, std::size_t cls, std::size_t item) const {
  if (domain >= manifest.num_domains() || cls >= manifest.num_classes() ||
      item >= manifest.per_class) {
    throw ValidationError("image (" + std::to_string(domain) + ", " + std::to_string(cls) +
                          ", " + std::to_string(item) + ") out of range");
  }
  const auto& blob = blobs[blob_index(domain, cls)];
  return std::span<const float>(blob).subspan(item * kImageFloats, kImageFloats);
}

Dataset generate_synthetic_domains(const GenerateOptions& o) {
  const auto& kinds = shape_kinds();
  if (o.num_classes > kinds.size()) {
    throw ValidationError("requested " + std::to_string(o.num_classes) + " classes but only " +
                          std::to_string(kinds.size()) + " shape kinds exist");
  }
  if (o.num_classes < kValClasses + kNovelClasses + 5) {
    throw ValidationError("need at least 15 classes for 5 base, 5 val and 5 novel classes");
  }
  if (o.num_domains == 0) throw ValidationError("need at least one domain");
  if (o.per_class == 0) throw ValidationError("need at least one image per class");
  Dataset ds;
  if (!o.domains.empty() && o.domains.size() != o.num_domains) {
    throw ValidationError("got " + std::to_string(o.domains.size()) + " domain styles for " +
                          std::to_string(o.num_domains) + " domains");
  }
  ds.manifest.domains = o.domains.empty() ? default_domains(o.num_domains) : o.domains;
  for (std::size_t r = 0; r < ds.manifest.domains.size(); ++r) {
    auto& d = ds.manifest.domains[r];
    d.id = r;
    if (d.noise_level < 0.0 || (d.noise == NoiseKind::kSaltPepper && d.noise_level > 1.0)) {
      throw ValidationError("domain " + std::to_string(r) + ": noise level out of range");
    }
  }
  ds.manifest.per_class = o.per_class;
  ds.manifest.seed = o.seed;
  const std::size_t n_base = o.num_classes - kValClasses - kNovelClasses;
  for (std::size_t c = 0; c < o.num_classes; ++c) {
    const Split s = c < n_base ? Split::kBase
                    : c < n_base + kValClasses ? Split::kVal
                                               : Split::kNovel;
    ds.manifest.classes.push_back({c, kinds[c], s});
  }
  const Rng root(o.seed);
  ds.blobs.resize(o.num_domains * o.num_classes);
  for (std::size_t d = 0; d < o.num_domains; ++d) {
    for (std::size_t c = 0; c < o.num_classes; ++c) {
      const std::size_t b = ds.blob_index(d, c);
      ds.blobs[b] = render_class(ds.manifest.domains[d], c, o.per_class,
                                 root.derive(kStreamGenerate, b));
    }
  }
  return ds;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir / "blobs", ec);
  if (ec) throw FormatError("cannot create " + (dir / "blobs").string() + ": " + ec.message());
  const auto& m = ds.manifest;
  json j;
  j["format_version"] = m.format_version;
  j["seed"] = m.seed;
  j["image"] = {{"channels", 3}, {"height", kSide}, {"width", kSide}};
  j["per_class"] = m.per_class;
  j["domains"] = json::array();
  for (const auto& d : m.domains) j["domains"].push_back(domain_to_json(d));
  j["classes"] = json::array();
  for (const auto& c : m.classes) {
    j["classes"].push_back(
        {{"class_id", c.class_id}, {"shape_kind", c.shape_kind}, {"split", split_name(c.split)}});
  }
  json counts = json::array();
  for (std::size_t d = 0; d < m.num_domains(); ++d) {
    counts.push_back(std::vector<std::size_t>(m.num_classes(), m.per_class));
  }
  j["counts"] = counts;
  // FNV-1a of every blob file, so payload corruption is caught on read.
  json digests = json::array();
  for (std::size_t d = 0; d < m.num_domains(); ++d) {
    std::vector<std::string> row;
    for (std::size_t c = 0; c < m.num_classes(); ++c) {
      BlobHeader h{kBlobVersionF32, static_cast<std::uint32_t>(m.per_class), 3, kSide, kSide};
      const auto bytes = encode_blob_f32(h, ds.blobs[ds.blob_index(d, c)]);
      write_file_bytes(dir / "blobs" / blob_name(d, c), bytes);
      row.push_back(hex64(fnv1a64(bytes)));
    }
    digests.push_back(row);
  }
  j["digests"] = digests;
  const std::string text = j.dump(2) + "\n";
  write_file_bytes(dir / "manifest.json",
                   std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Dataset read_dataset(const std::filesystem::path& dir) {
  const auto bytes = read_file_bytes(dir / "manifest.json");
  Dataset ds;
  auto& m = ds.manifest;
  std::vector<std::vector<std::string>> digests;
  try {
    const json j = json::parse(bytes.begin(), bytes.end());
    m.format_version = j.at("format_version").get<std::uint32_t>();
    if (m.format_version != kDatasetFormatVersion) {
      throw FormatError("unsupported dataset format_version " +
                        std::to_string(m.format_version));
    }
    m.seed = j.at("seed").get<std::uint64_t>();
    m.per_class = j.at("per_class").get<std::size_t>();
    const auto& img = j.at("image");
    if (img.at("channels").get<std::size_t>() != 3 || img.at("height").get<std::size_t>() != kSide ||
        img.at("width").get<std::size_t>() != kSide) {
      throw FormatError("dataset images must be 3 x 16 x 16");
    }
    for (const auto& d : j.at("domains")) m.domains.push_back(domain_from_json(d));
    for (const auto& c : j.at("classes")) {
      m.classes.push_back({c.at("class_id").get<std::size_t>(),
                           c.at("shape_kind").get<std::string>(),
                           parse_split(c.at("split").get<std::string>())});
    }
    const auto counts = j.at("counts").get<std::vector<std::vector<std::size_t>>>();
    if (counts.size() != m.num_domains()) throw FormatError("counts do not cover every domain");
    for (const auto& row : counts) {
      if (row.size() != m.num_classes()) throw FormatError("counts do not cover every class");
      for (std::size_t n : row) {
        if (n != m.per_class) throw FormatError("unequal per-class counts are not supported");
      }
    }
    digests = j.at("digests").get<std::vector<std::vector<std::string>>>();
    if (digests.size() != m.num_domains()) throw FormatError("digests do not cover every domain");
    for (const auto& row : digests) {
      if (row.size() != m.num_classes()) throw FormatError("digests do not cover every class");
    }
  } catch (const json::exception& e) {
    throw FormatError((dir / "manifest.json").string() + ": " + e.what());
  }
  for (std::size_t c = 0; c < m.num_classes(); ++c) {
    if (m.classes[c].class_id != c) throw FormatError("class ids must be 0..C-1 in order");
  }
  ds.blobs.resize(m.num_domains() * m.num_classes());
  for (std::size_t d = 0; d < m.num_domains(); ++d) {
    for (std::size_t c = 0; c < m.num_classes(); ++c) {
      const auto path = dir / "blobs" / blob_name(d, c);
      BlobHeader h;
      const auto bytes = read_file_bytes(path);
      auto values = decode_blob_f32(bytes, &h, path.string());
      if (hex64(fnv1a64(bytes)) != digests[d][c]) {
        throw FormatError(path.string() + ": content digest disagrees with manifest");
      }
      if (h.count != m.per_class || h.channels != 3 || h.height != kSide || h.width != kSide) {
        throw FormatError(path.string() + ": header disagrees with manifest at byte offset 8");
      }
      ds.blobs[ds.blob_index(d, c)] = std::move(values);
    }
  }
  return ds;
}

std::array<double, 3> channel_means(std::span<const float> image) {
  std::array<double, 3> out{};
  const std::size_t plane = kSide * kSide;
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) s += image[c * plane + i];
    out[c] = s / static_cast<double>(plane);
  }
  return out;
}

std::string protocol_name(Protocol p) {
  switch (p) {
    case Protocol::kStandard: return "standard";
    case Protocol::kIntra: return "intra";
    case Protocol::kOut: return "out";
  }
  return "intra";
}

Protocol parse_protocol(const std::string& s) {
  if (s == "standard") return Protocol::kStandard;
  if (s == "intra") return Protocol::kIntra;
  if (s == "out") return Protocol::kOut;
  throw ValidationError("unknown protocol '" + s + "' (expected standard, intra or out)");
}

std::vector<std::size_t> protocol_domains(Protocol protocol, std::size_t num_domains,
                                          std::optional<std::size_t> holdout, bool meta_test) {
  if (num_domains == 0) throw ValidationError("dataset has no domains");
  if (holdout && *holdout >= num_domains) {
    throw ValidationError("holdout domain " + std::to_string(*holdout) + " outside [0, " +
                          std::to_string(num_domains) + ")");
  }
  std::vector<std::size_t> out;
  switch (protocol) {
    case Protocol::kStandard:
      out.push_back(holdout.value_or(0));
      break;
    case Protocol::kIntra:
      for (std::size_t r = 0; r < num_domains; ++r) out.push_back(r);
      break;
    case Protocol::kOut:
      if (!holdout) throw ValidationError("the out-of-domain protocol needs a holdout domain");
      if (num_domains < 2) throw ValidationError("the out-of-domain protocol needs >= 2 domains");
      if (meta_test) {
        out.push_back(*holdout);
      } else {
        for (std::size_t r = 0; r < num_domains; ++r) {
          if (r != *holdout) out.push_back(r);
        }
      }
      break;
  }
  return out;
}

Episode sample_episode(const Dataset& ds, Split split, std::span<const std::size_t> domains,
                       std::size_t n_way, std::size_t n_shot, std::size_t n_query, Rng& rng) {
  if (domains.empty()) throw ValidationError("no admissible domain to sample from");
  if (n_way < 2 || n_shot < 1 || n_query < 1) {
    throw ValidationError("episodes need n_way >= 2, n_shot >= 1, n_query >= 1");
  }
  std::vector<std::size_t> pool = ds.manifest.classes_in(split);
  if (pool.size() < n_way) {
    throw ValidationError("split '" + split_name(split) + "' has " + std::to_string(pool.size()) +
                          " classes, fewer than n_way = " + std::to_string(n_way));
  }
  if (ds.manifest.per_class < n_shot + n_query) {
    throw ValidationError("classes hold " + std::to_string(ds.manifest.per_class) +
                          " images, fewer than n_shot + n_query = " +
                          std::to_string(n_shot + n_query));
  }
  Episode e;
  e.domain = domains[rng.uniform_index(domains.size())];
  if (e.domain >= ds.manifest.num_domains()) throw ValidationError("domain out of range");
  e.n_way = n_way;
  e.n_shot = n_shot;
  e.n_query = n_query;
  for (std::size_t i = 0; i < n_way; ++i) {
    const std::size_t j = i + rng.uniform_index(pool.size() - i);
    std::swap(pool[i], pool[j]);
    e.classes.push_back(pool[i]);
  }
  std::vector<std::uint32_t> items(ds.manifest.per_class);
  for (std::size_t label = 0; label < n_way; ++label) {
    std::iota(items.begin(), items.end(), 0u);
    for (std::size_t i = 0; i < n_shot + n_query; ++i) {
      const std::size_t j = i + rng.uniform_index(items.size() - i);
      std::swap(items[i], items[j]);
    }
    const auto d = static_cast<std::uint32_t>(e.domain);
    const auto c = static_cast<std::uint32_t>(e.classes[label]);
    for (std::size_t i = 0; i < n_shot; ++i) {
      e.support.push_back({d, c, items[i]});
      e.support_labels.push_back(static_cast<int>(label));
    }
    for (std::size_t i = 0; i < n_query; ++i) {
      e.query.push_back({d, c, items[n_shot + i]});
      e.query_labels.push_back(static_cast<int>(label));
    }
  }
  return e;
}

Tensor load_images(const Dataset& ds, std::span<const ImageRef> refs) {
  std::vector<double> data(refs.size() * Dataset::kImageFloats);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    auto img = ds.image(refs[i].domain, refs[i].cls, refs[i].item);
    std::copy(img.begin(), img.end(), data.begin() + i * Dataset::kImageFloats);
  }
  return Tensor({refs.size(), 3, kSide, kSide}, std::move(data));
}

std::size_t image_key(const Dataset& ds, const ImageRef& ref) {
  return ds.blob_index(ref.domain, ref.cls) * ds.manifest.per_class + ref.item;
}

std::string episode_json(const Episode& e) {
  auto refs = [](const std::vector<ImageRef>& v) {
    json a = json::array();
    for (const auto& r : v) a.push_back({r.domain, r.cls, r.item});
    return a;
  };
  json j = {{"domain", e.domain},
            {"n_way", e.n_way},
            {"n_shot", e.n_shot},
            {"n_query", e.n_query},
            {"classes", e.classes},
            {"support", refs(e.support)},
            {"query", refs(e.query)}};
  if (e.pseudo_domain) j["pseudo_domain"] = *e.pseudo_domain;
  return j.dump();
}

// ---------------------------------------------------------------------------

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

struct Run {
  std::vector<std::size_t> labels;
  std::vector<std::vector<double>> centroids;
  double inertia = 0.0;
  std::vector<double> history;
  std::size_t iterations = 0;
};

Run lloyd(const std::vector<std::vector<double>>& pts, std::size_t k, std::size_t max_iter,
          Rng rng) {
  const std::size_t n = pts.size();
  Run run;
  // k-means++ seeding.
  run.centroids.push_back(pts[rng.uniform_index(n)]);
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = sq_dist(pts[i], run.centroids[0]);
  while (run.centroids.size() < k) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t pick = 0;
    if (total > 0.0) {
      double u = rng.uniform(0.0, total);
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        if (u < d2[i]) {
          pick = i;
          break;
        }
        u -= d2[i];
      }
    } else {
      pick = rng.uniform_index(n);
    }
    run.centroids.push_back(pts[pick]);
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(pts[i], run.centroids.back()));
  }

  run.labels.assign(n, std::numeric_limits<std::size_t>::max());
  const std::size_t dim = pts[0].size();
  for (std::size_t it = 0; it < max_iter; ++it) {
    bool changed = false;
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = nearest_centroid(pts[i], run.centroids);
      if (c != run.labels[i]) changed = true;
      run.labels[i] = c;
      inertia += sq_dist(pts[i], run.centroids[c]);
    }
    run.history.push_back(inertia);
    run.inertia = inertia;
    run.iterations = it + 1;
    if (!changed && it > 0) break;
    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[run.labels[i]];
      for (std::size_t j = 0; j < dim; ++j) sums[run.labels[i]][j] += pts[i][j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // Re-seed at the point farthest from its own centroid.
        std::size_t far = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d = sq_dist(pts[i], run.centroids[run.labels[i]]);
          if (d > best) {
            best = d;
            far = i;
          }
        }
        run.centroids[c] = pts[far];
        continue;
      }
      for (std::size_t j = 0; j < dim; ++j) {
        run.centroids[c][j] = sums[c][j] / static_cast<double>(counts[c]);
      }
    }
  }
  return run;
}

}  // namespace

std::size_t nearest_centroid(std::span<const double> x,
                             const std::vector<std::vector<double>>& centroids) {
  if (centroids.empty()) throw ValidationError("nearest_centroid: no centroids");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    if (centroids[c].size() != x.size()) {
      throw DimensionError("nearest_centroid: feature and centroid widths differ");
    }
    const double d = sq_dist(x, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

KMeansResult kmeans(const std::vector<std::vector<double>>& points, std::size_t k,
                    std::uint64_t seed, std::size_t restarts, std::size_t max_iter) {
  if (k == 0) throw ValidationError("kmeans: k must be positive");
  if (points.size() < k) {
    throw ValidationError("kmeans: " + std::to_string(points.size()) + " points for k = " +
                          std::to_string(k));
  }
  if (restarts == 0 || max_iter == 0) throw ValidationError("kmeans: restarts and iterations > 0");
  const std::size_t dim = points[0].size();
  for (const auto& p : points) {
    if (p.size() != dim) throw DimensionError("kmeans: points have differing widths");
    for (double v : p) {
      if (!std::isfinite(v)) throw NumericError("kmeans: non-finite feature");
    }
  }
  const Rng root(seed);
  Run best;
  bool have = false;
  for (std::size_t r = 0; r < restarts; ++r) {
    Run run = lloyd(points, k, max_iter, root.derive(kStreamKMeans, r));
    if (!have || run.inertia < best.inertia) {
      best = std::move(run);
      have = true;
    }
  }
  KMeansResult out;
  out.labels = std::move(best.labels);
  out.centroids = std::move(best.centroids);
  out.inertia = best.inertia;
  out.history = std::move(best.history);
  out.iterations = best.iterations;
  return out;
}

double cluster_purity(std::span<const std::size_t> clusters, std::span<const std::size_t> truth) {
  if (clusters.size() != truth.size() || clusters.empty()) {
    throw ValidationError("cluster_purity: label lists must be non-empty and equal length");
  }
  const std::size_t kc = *std::max_element(clusters.begin(), clusters.end()) + 1;
  const std::size_t kt = *std::max_element(truth.begin(), truth.end()) + 1;
  std::vector<std::size_t> table(kc * kt, 0);
  for (std::size_t i = 0; i < clusters.size(); ++i) ++table[clusters[i] * kt + truth[i]];
  std::size_t hit = 0;
  for (std::size_t c = 0; c < kc; ++c) {
    hit += *std::max_element(table.begin() + c * kt, table.begin() + (c + 1) * kt);
  }
  return static_cast<double>(hit) / static_cast<double>(clusters.size());
}

double matched_agreement(std::span<const std::size_t> clusters,
                         std::span<const std::size_t> truth, std::size_t k) {
  if (clusters.size() != truth.size() || clusters.empty()) {
    throw ValidationError("matched_agreement: label lists must be non-empty and equal length");
  }
  const std::size_t kt = *std::max_element(truth.begin(), truth.end()) + 1;
  const std::size_t kc = std::max(k, *std::max_element(clusters.begin(), clusters.end()) + 1);
  const std::size_t m = std::max(kc, kt);
  if (m > 8) throw ValidationError("matched_agreement: exhaustive matching supports k <= 8");
  std::vector<std::size_t> table(m * m, 0);
  for (std::size_t i = 0; i < clusters.size(); ++i) ++table[clusters[i] * m + truth[i]];
  std::vector<std::size_t> perm(m);
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t best = 0;
  do {
    std::size_t hit = 0;
    for (std::size_t c = 0; c < m; ++c) hit += table[c * m + perm[c]];
    best = std::max(best, hit);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / static_cast<double>(clusters.size());
}

}  // namespace tano
