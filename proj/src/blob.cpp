// Copyright 2026 The TANO Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "tano/blob.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "tano/error.hpp"

namespace tano {
namespace {

static_assert(std::endian::native == std::endian::little,
              "blob I/O assumes a little-endian host");

constexpr char kMagic[4] = {'T', 'A', 'N', 'O'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[off + i]) << (8 * i);
  return v;
}

std::vector<std::uint8_t> header_bytes(const BlobHeader& h) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u32(out, h.version);
  put_u32(out, h.count);
  put_u32(out, h.channels);
  put_u32(out, h.height);
  put_u32(out, h.width);
  return out;
}

[[noreturn]] void fail(const std::string& name, std::size_t offset, const std::string& what) {
  throw FormatError(name + ": " + what + " at byte offset " + std::to_string(offset));
}

BlobHeader parse_header(std::span<const std::uint8_t> b, const std::string& name) {
  if (b.size() < 4) fail(name, b.size(), "truncated magic");
  if (std::memcmp(b.data(), kMagic, 4) != 0) fail(name, 0, "bad magic (expected \"TANO\")");
  if (b.size() < kBlobHeaderBytes) fail(name, b.size(), "truncated header");
  BlobHeader h;
  h.version = get_u32(b, 4);
  if (h.version != kBlobVersionF32 && h.version != kBlobVersionF64) {
    fail(name, 4, "unsupported version " + std::to_string(h.version));
  }
  h.count = get_u32(b, 8);
  h.channels = get_u32(b, 12);
  h.height = get_u32(b, 16);
  h.width = get_u32(b, 20);
  const std::size_t elem = h.version == kBlobVersionF32 ? 4 : 8;
  const std::size_t expected = kBlobHeaderBytes + h.numel() * elem;
  if (b.size() < expected) fail(name, b.size(), "truncated payload, expected " +
                                                  std::to_string(expected) + " bytes");
  if (b.size() > expected) fail(name, expected, "trailing bytes after payload");
  return h;
}

}  // namespace

std::vector<std::uint8_t> encode_blob_f32(const BlobHeader& header, std::span<const float> values) {
  BlobHeader h = header;
  h.version = kBlobVersionF32;
  if (values.size() != h.numel()) throw ValidationError("blob payload does not match header");
  std::vector<std::uint8_t> out = header_bytes(h);
  const std::size_t off = out.size();
  out.resize(off + values.size() * sizeof(float));
  std::memcpy(out.data() + off, values.data(), values.size() * sizeof(float));
  return out;
}

std::vector<std::uint8_t> encode_blob_f64(const BlobHeader& header, std::span<const double> values) {
  BlobHeader h = header;
  h.version = kBlobVersionF64;
  if (values.size() != h.numel()) throw ValidationError("blob payload does not match header");
  std::vector<std::uint8_t> out = header_bytes(h);
  const std::size_t off = out.size();
  out.resize(off + values.size() * sizeof(double));
  std::memcpy(out.data() + off, values.data(), values.size() * sizeof(double));
  return out;
}

std::vector<float> decode_blob_f32(std::span<const std::uint8_t> bytes, BlobHeader* header,
                                   const std::string& name) {
  const BlobHeader h = parse_header(bytes, name);
  if (h.version != kBlobVersionF32) fail(name, 4, "expected version 1 (float32) payload");
  std::vector<float> out(h.numel());
  std::memcpy(out.data(), bytes.data() + kBlobHeaderBytes, out.size() * sizeof(float));
  if (header) *header = h;
  return out;
}

std::vector<double> decode_blob_f64(std::span<const std::uint8_t> bytes, BlobHeader* header,
                                    const std::string& name) {
  const BlobHeader h = parse_header(bytes, name);
  std::vector<double> out(h.numel());
  if (h.version == kBlobVersionF64) {
    std::memcpy(out.data(), bytes.data() + kBlobHeaderBytes, out.size() * sizeof(double));
  } else {
    std::vector<float> f(h.numel());
    std::memcpy(f.data(), bytes.data() + kBlobHeaderBytes, f.size() * sizeof(float));
    for (std::size_t i = 0; i < f.size(); ++i) out[i] = f[i];
  }
  if (header) *header = h;
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw FormatError("read failure on " + path.string());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failure on " + path.string());
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

}  // namespace tano
