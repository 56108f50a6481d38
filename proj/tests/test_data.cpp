// Copyright 2026 The TANO Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <map>
#include <set>

#include "tano/blob.hpp"
#include "tano/data.hpp"
#include "tano/error.hpp"
#include "tano/rng.hpp"

namespace tano {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("tano_test_" + name);
  fs::remove_all(p);
  return p;
}

const Dataset& small_dataset() {
  static const Dataset ds = generate_synthetic_domains({4, 20, 20, 11});
  return ds;
}

TEST(Rng, DeriveIsDeterministicAndIndependent) {
  Rng root(5);
  Rng a = root.derive(kStreamTrainEpisode, 3), b = root.derive(kStreamTrainEpisode, 3);
  Rng c = root.derive(kStreamTrainEpisode, 4), d = root.derive(kStreamValEpisode, 3);
  const auto x = a.engine()();
  EXPECT_EQ(x, b.engine()());
  EXPECT_NE(x, c.engine()());
  EXPECT_NE(x, d.engine()());
}

TEST(Blob, RoundTripF32AndF64) {
  BlobHeader h{kBlobVersionF32, 2, 1, 1, 3};
  const std::vector<float> f = {1.5f, -2.0f, 0.25f, 7.0f, 8.0f, 9.0f};
  const auto bytes = encode_blob_f32(h, f);
  EXPECT_EQ(bytes.size(), kBlobHeaderBytes + 6 * 4);
  EXPECT_EQ(std::memcmp(bytes.data(), "TANO", 4), 0);
  BlobHeader back;
  EXPECT_EQ(decode_blob_f32(bytes, &back, "x"), f);
  EXPECT_EQ(back.count, 2u);
  EXPECT_EQ(back.width, 3u);
  const auto wide = decode_blob_f64(bytes, &back, "x");
  EXPECT_EQ(wide[0], 1.5);

  BlobHeader h2{kBlobVersionF64, 1, 1, 1, 2};
  const std::vector<double> d = {0.1, -1e300};
  const auto b2 = encode_blob_f64(h2, d);
  EXPECT_EQ(decode_blob_f64(b2, &back, "y"), d);
  EXPECT_THROW(decode_blob_f32(b2, &back, "y"), FormatError);
}

TEST(Blob, RejectsCorruption) {
  BlobHeader h{kBlobVersionF32, 1, 1, 1, 4};
  const std::vector<float> f = {1, 2, 3, 4};
  auto bytes = encode_blob_f32(h, f);
  BlobHeader out;
  auto truncated = bytes;
  truncated.resize(truncated.size() - 3);
  EXPECT_THROW(decode_blob_f32(truncated, &out, "t"), FormatError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(decode_blob_f32(trailing, &out, "t"), FormatError);
  auto magic = bytes;
  magic[0] = 'X';
  try {
    decode_blob_f32(magic, &out, "t");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("offset 0"), std::string::npos) << e.what();
  }
  auto version = bytes;
  version[4] = 9;
  EXPECT_THROW(decode_blob_f32(version, &out, "t"), FormatError);
  EXPECT_THROW(decode_blob_f32(std::vector<std::uint8_t>(10), &out, "t"), FormatError);
}

TEST(Generate, SplitsAndShapes) {
  const Dataset& ds = small_dataset();
  EXPECT_EQ(ds.manifest.num_domains(), 4u);
  EXPECT_EQ(ds.manifest.num_classes(), 20u);
  EXPECT_EQ(ds.manifest.classes_in(Split::kBase).size(), 10u);
  EXPECT_EQ(ds.manifest.classes_in(Split::kVal), (std::vector<std::size_t>{10, 11, 12, 13, 14}));
  EXPECT_EQ(ds.manifest.classes_in(Split::kNovel), (std::vector<std::size_t>{15, 16, 17, 18, 19}));
  EXPECT_EQ(ds.blobs.size(), 80u);
  EXPECT_EQ(ds.blobs[0].size(), 20u * Dataset::kImageFloats);
  for (const auto& b : ds.blobs)
    for (float v : b) {
      ASSERT_GE(v, 0.0f);
      ASSERT_LE(v, 1.0f);
    }
}

TEST(Generate, DeterministicPerSeed) {
  const Dataset a = generate_synthetic_domains({4, 20, 3, 2});
  const Dataset b = generate_synthetic_domains({4, 20, 3, 2});
  const Dataset c = generate_synthetic_domains({4, 20, 3, 3});
  EXPECT_EQ(a.blobs, b.blobs);
  EXPECT_NE(a.blobs, c.blobs);
}

TEST(Generate, RejectsTooFewClasses) {
  EXPECT_THROW(generate_synthetic_domains({4, 12, 3, 0}), ValidationError);
  EXPECT_THROW(generate_synthetic_domains({4, 21, 3, 0}), ValidationError);
  EXPECT_THROW(generate_synthetic_domains({0, 20, 3, 0}), ValidationError);
}

// A nearest-centroid classifier on per-image channel means separates domains.
TEST(Generate, DomainsAreSeparableByChannelMeans) {
  const Dataset& ds = small_dataset();
  const std::size_t nd = 4, nc = 20, per = ds.manifest.per_class;
  std::vector<std::vector<double>> centroids(nd, std::vector<double>(3, 0.0));
  std::vector<std::pair<std::size_t, std::array<double, 3>>> feats;
  for (std::size_t d = 0; d < nd; ++d)
    for (std::size_t c = 0; c < nc; ++c)
      for (std::size_t i = 0; i < per; ++i) {
        const auto m = channel_means(ds.image(d, c, i));
        feats.push_back({d, m});
        for (int k = 0; k < 3; ++k) centroids[d][k] += m[k] / static_cast<double>(nc * per);
      }
  std::size_t hits = 0;
  for (const auto& [d, m] : feats) {
    hits += nearest_centroid(std::span<const double>(m.data(), 3), centroids) == d;
  }
  EXPECT_GE(static_cast<double>(hits) / static_cast<double>(feats.size()), 0.95);
}

TEST(Dataset, WriteReadRoundTripIsBitwise) {
  const Dataset ds = generate_synthetic_domains({4, 20, 2, 5});
  const fs::path dir = scratch("dataset_rt");
  write_dataset(ds, dir);
  const Dataset back = read_dataset(dir);
  EXPECT_EQ(back.blobs, ds.blobs);
  EXPECT_EQ(back.manifest.seed, 5u);
  const fs::path dir2 = scratch("dataset_rt2");
  write_dataset(back, dir2);
  for (const auto& e : fs::directory_iterator(dir / "blobs")) {
    EXPECT_EQ(read_file_bytes(e.path()), read_file_bytes(dir2 / "blobs" / e.path().filename()));
  }
  EXPECT_EQ(read_file_bytes(dir / "manifest.json"), read_file_bytes(dir2 / "manifest.json"));
}

TEST(Dataset, CorruptFilesAreFormatErrors) {
  const Dataset ds = generate_synthetic_domains({4, 20, 2, 5});
  const fs::path dir = scratch("dataset_bad");
  write_dataset(ds, dir);
  const fs::path blob = dir / "blobs" / "d1_c3.tano";
  auto bytes = read_file_bytes(blob);
  bytes.resize(bytes.size() / 2);
  write_file_bytes(blob, bytes);
  EXPECT_THROW(read_dataset(dir), FormatError);

  const fs::path dir2 = scratch("dataset_bad_manifest");
  write_dataset(ds, dir2);
  const std::string junk = "{\"format_version\": 1,";
  write_file_bytes(dir2 / "manifest.json",
                   std::vector<std::uint8_t>(junk.begin(), junk.end()));
  EXPECT_THROW(read_dataset(dir2), FormatError);
  EXPECT_THROW(read_dataset(scratch("missing")), FormatError);

  // A flipped payload byte keeps the layout valid; the digest catches it.
  const fs::path dir3 = scratch("dataset_flipped");
  write_dataset(ds, dir3);
  auto flipped = read_file_bytes(dir3 / "blobs" / "d0_c0.tano");
  flipped[40] ^= 0x01;
  write_file_bytes(dir3 / "blobs" / "d0_c0.tano", flipped);
  EXPECT_THROW(read_dataset(dir3), FormatError);
}

TEST(Episodes, ProtocolDomains) {
  EXPECT_EQ(protocol_domains(Protocol::kIntra, 4, std::nullopt, true),
            (std::vector<std::size_t>{0, 1, 2, 3}));
  EXPECT_EQ(protocol_domains(Protocol::kOut, 4, 2, false), (std::vector<std::size_t>{0, 1, 3}));
  EXPECT_EQ(protocol_domains(Protocol::kOut, 4, 2, true), (std::vector<std::size_t>{2}));
  EXPECT_EQ(protocol_domains(Protocol::kStandard, 4, std::nullopt, true),
            (std::vector<std::size_t>{0}));
  EXPECT_THROW(protocol_domains(Protocol::kOut, 4, std::nullopt, true), ValidationError);
  EXPECT_THROW(protocol_domains(Protocol::kIntra, 4, 7, true), ValidationError);
}

TEST(Episodes, StructureAndDisjointness) {
  const Dataset& ds = small_dataset();
  const std::vector<std::size_t> domains = {0, 1, 2, 3};
  Rng root(3);
  std::map<std::size_t, int> domain_counts;
  for (std::size_t t = 0; t < 200; ++t) {
    Rng rng = root.derive(kStreamTestEpisode, t);
    const Episode e = sample_episode(ds, Split::kNovel, domains, 5, 2, 3, rng);
    ++domain_counts[e.domain];
    ASSERT_EQ(e.support.size(), 10u);
    ASSERT_EQ(e.query.size(), 15u);
    const std::set<std::size_t> cls(e.classes.begin(), e.classes.end());
    EXPECT_EQ(cls.size(), 5u);
    for (std::size_t c : e.classes) EXPECT_GE(c, 15u);
    std::set<std::size_t> keys;
    for (std::size_t i = 0; i < e.support.size(); ++i) {
      EXPECT_EQ(e.support[i].domain, e.domain);
      EXPECT_EQ(e.support_labels[i], static_cast<int>(i / 2));
      EXPECT_EQ(e.support[i].cls, e.classes[i / 2]);
      keys.insert(image_key(ds, e.support[i]));
    }
    for (std::size_t i = 0; i < e.query.size(); ++i) {
      EXPECT_EQ(e.query_labels[i], static_cast<int>(i / 3));
      keys.insert(image_key(ds, e.query[i]));
    }
    EXPECT_EQ(keys.size(), 25u);
  }
  for (std::size_t d = 0; d < 4; ++d) EXPECT_GT(domain_counts[d], 25);
}

TEST(Episodes, SameRngSameEpisode) {
  const Dataset& ds = small_dataset();
  const std::vector<std::size_t> domains = {1, 3};
  Rng a = Rng(4).derive(kStreamTrainEpisode, 9), b = Rng(4).derive(kStreamTrainEpisode, 9);
  EXPECT_EQ(episode_json(sample_episode(ds, Split::kBase, domains, 5, 1, 4, a)),
            episode_json(sample_episode(ds, Split::kBase, domains, 5, 1, 4, b)));
}

TEST(Episodes, RejectsImpossibleRequests) {
  const Dataset& ds = small_dataset();
  const std::vector<std::size_t> domains = {0};
  Rng rng(1);
  EXPECT_THROW(sample_episode(ds, Split::kNovel, domains, 6, 1, 1, rng), ValidationError);
  EXPECT_THROW(sample_episode(ds, Split::kNovel, domains, 5, 10, 11, rng), ValidationError);
  const std::vector<std::size_t> bad = {9};
  EXPECT_THROW(sample_episode(ds, Split::kNovel, bad, 5, 1, 1, rng), ValidationError);
}

TEST(Episodes, LoadImagesStacks) {
  const Dataset& ds = small_dataset();
  const std::vector<ImageRef> refs = {{2, 4, 1}, {0, 0, 0}};
  Tensor t = load_images(ds, refs);
  EXPECT_EQ(t.shape(), (Shape{2, 3, 16, 16}));
  EXPECT_EQ(t.data()[5], static_cast<double>(ds.image(2, 4, 1)[5]));
  EXPECT_EQ(t.data()[768 + 7], static_cast<double>(ds.image(0, 0, 0)[7]));
}

TEST(KMeans, RecoversSeparatedClusters) {
  Rng rng(2);
  std::vector<std::vector<double>> pts;
  std::vector<std::size_t> truth;
  const double centers[3][2] = {{0, 0}, {10, 0}, {0, 10}};
  for (std::size_t i = 0; i < 90; ++i) {
    const std::size_t c = i % 3;
    pts.push_back({centers[c][0] + rng.normal(0, 0.5), centers[c][1] + rng.normal(0, 0.5)});
    truth.push_back((c + 1) % 3);
  }
  const KMeansResult r = kmeans(pts, 3, 7);
  EXPECT_DOUBLE_EQ(matched_agreement(r.labels, truth, 3), 1.0);
  EXPECT_DOUBLE_EQ(cluster_purity(r.labels, truth), 1.0);
  for (std::size_t i = 1; i < r.history.size(); ++i) EXPECT_LE(r.history[i], r.history[i - 1] + 1e-9);
  EXPECT_EQ(r.centroids.size(), 3u);
  const KMeansResult again = kmeans(pts, 3, 7);
  EXPECT_EQ(again.labels, r.labels);
}

TEST(KMeans, HandlesDuplicatePointsAndValidatesK) {
  std::vector<std::vector<double>> pts(6, std::vector<double>{1.0, 1.0});
  pts.push_back({5.0, 5.0});
  const KMeansResult r = kmeans(pts, 3, 1);
  EXPECT_EQ(r.labels.size(), 7u);
  EXPECT_THROW(kmeans(pts, 0, 1), ValidationError);
  EXPECT_THROW(kmeans(pts, 8, 1), ValidationError);
}

TEST(KMeans, MatchedAgreementUsesBestPermutation) {
  const std::vector<std::size_t> clusters = {0, 0, 1, 1, 2, 2};
  const std::vector<std::size_t> truth = {2, 2, 0, 0, 1, 0};
  EXPECT_NEAR(matched_agreement(clusters, truth, 3), 5.0 / 6.0, 1e-15);
  EXPECT_NEAR(cluster_purity(clusters, truth), 5.0 / 6.0, 1e-15);
}

TEST(KMeans, NearestCentroidTiesToLowestIndex) {
  const std::vector<std::vector<double>> c = {{0.0}, {2.0}};
  const std::vector<double> x = {1.0};
  EXPECT_EQ(nearest_centroid(x, c), 0u);
}

}  // namespace
}  // namespace tano
