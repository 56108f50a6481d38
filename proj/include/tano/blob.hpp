// Copyright 2026 The TANO Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

// TANO binary tensor blobs.
//
// Layout (little endian): "TANO", u32 version, u32 count, u32 C, u32 H,
// u32 W, then count * C * H * W values. Version 1 stores 32-bit floats,
// version 2 stores 64-bit doubles.
namespace tano {

inline constexpr std::uint32_t kBlobVersionF32 = 1;
inline constexpr std::uint32_t kBlobVersionF64 = 2;
inline constexpr std::size_t kBlobHeaderBytes = 24;

struct BlobHeader {
  std::uint32_t version = kBlobVersionF32;
  std::uint32_t count = 0;
  std::uint32_t channels = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(count) * channels * height * width;
  }
};

std::vector<std::uint8_t> encode_blob_f32(const BlobHeader& header, std::span<const float> values);
std::vector<std::uint8_t> encode_blob_f64(const BlobHeader& header, std::span<const double> values);

/// Parses a version-1 blob. Throws FormatError with the byte offset of the
/// first problem.
std::vector<float> decode_blob_f32(std::span<const std::uint8_t> bytes, BlobHeader* header,
                                   const std::string& name);
/// Parses a version-1 or version-2 blob, widening floats to double.
std::vector<double> decode_blob_f64(std::span<const std::uint8_t> bytes, BlobHeader* header,
                                    const std::string& name);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

}  // namespace tano
