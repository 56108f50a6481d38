// Copyright 2026 The TANO Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "gemm.hpp"

#include <algorithm>
#include <cstring>
#include <vector>

namespace tano::detail {
namespace {

// GCC vector extension; lowers to AVX-512, AVX2 or SSE pairs as available.
typedef double v8d __attribute__((vector_size(64)));

constexpr std::size_t kLanes = 8;
constexpr std::size_t kMr = 8;
constexpr std::size_t kNr = 16;
constexpr std::size_t kKc = 256;
constexpr std::size_t kNc = 512;

inline v8d load(const double* p) {
  v8d v;
  std::memcpy(&v, p, sizeof(v));
  return v;
}

// Packed operands: A block as kc columns of kMr values, B panel as kc rows of
// kNr values. Padding is zero so edge tiles run the same arithmetic.
void pack_a(bool trans, const double* a, std::size_t m, std::size_t k,
            std::size_t i0, std::size_t rows, std::size_t p0, std::size_t kc,
            double* dst) {
  for (std::size_t p = 0; p < kc; ++p) {
    for (std::size_t r = 0; r < kMr; ++r) {
      double v = 0.0;
      if (r < rows) {
        v = trans ? a[(p0 + p) * m + i0 + r] : a[(i0 + r) * k + p0 + p];
      }
      dst[p * kMr + r] = v;
    }
  }
}

void pack_b(bool trans, const double* b, std::size_t n, std::size_t k,
            std::size_t j0, std::size_t cols, std::size_t p0, std::size_t kc,
            double* dst) {
  if (!trans) {
    for (std::size_t p = 0; p < kc; ++p) {
      const double* src = b + (p0 + p) * n + j0;
      double* row = dst + p * kNr;
      std::memcpy(row, src, cols * sizeof(double));
      std::fill(row + cols, row + kNr, 0.0);
    }
    return;
  }
  for (std::size_t p = 0; p < kc; ++p) {
    double* row = dst + p * kNr;
    for (std::size_t j = 0; j < kNr; ++j) {
      row[j] = j < cols ? b[(j0 + j) * k + p0 + p] : 0.0;
    }
  }
}

// C tile (rows x cols) = or += packed A * packed B over kc. Accumulators are
// spelled out so they stay in registers.
inline void micro_kernel(std::size_t kc, const double* ap, const double* bp,
                         double* c, std::size_t ldc, std::size_t rows,
                         std::size_t cols, bool add) {
  static_assert(kMr == 8 && kNr == 16);
  v8d c00 = {}, c01 = {};
  v8d c10 = {}, c11 = {};
  v8d c20 = {}, c21 = {};
  v8d c30 = {}, c31 = {};
  v8d c40 = {}, c41 = {};
  v8d c50 = {}, c51 = {};
  v8d c60 = {}, c61 = {};
  v8d c70 = {}, c71 = {};
  for (std::size_t p = 0; p < kc; ++p, ap += kMr, bp += kNr) {
    const v8d b0 = load(bp);
    const v8d b1 = load(bp + kLanes);
    const v8d a0 = v8d{} + ap[0];
    c00 += a0 * b0;
    c01 += a0 * b1;
    const v8d a1 = v8d{} + ap[1];
    c10 += a1 * b0;
    c11 += a1 * b1;
    const v8d a2 = v8d{} + ap[2];
    c20 += a2 * b0;
    c21 += a2 * b1;
    const v8d a3 = v8d{} + ap[3];
    c30 += a3 * b0;
    c31 += a3 * b1;
    const v8d a4 = v8d{} + ap[4];
    c40 += a4 * b0;
    c41 += a4 * b1;
    const v8d a5 = v8d{} + ap[5];
    c50 += a5 * b0;
    c51 += a5 * b1;
    const v8d a6 = v8d{} + ap[6];
    c60 += a6 * b0;
    c61 += a6 * b1;
    const v8d a7 = v8d{} + ap[7];
    c70 += a7 * b0;
    c71 += a7 * b1;
  }
  double tile[kMr][kNr];
  std::memcpy(tile[0], &c00, sizeof(v8d));
  std::memcpy(tile[0] + kLanes, &c01, sizeof(v8d));
  std::memcpy(tile[1], &c10, sizeof(v8d));
  std::memcpy(tile[1] + kLanes, &c11, sizeof(v8d));
  std::memcpy(tile[2], &c20, sizeof(v8d));
  std::memcpy(tile[2] + kLanes, &c21, sizeof(v8d));
  std::memcpy(tile[3], &c30, sizeof(v8d));
  std::memcpy(tile[3] + kLanes, &c31, sizeof(v8d));
  std::memcpy(tile[4], &c40, sizeof(v8d));
  std::memcpy(tile[4] + kLanes, &c41, sizeof(v8d));
  std::memcpy(tile[5], &c50, sizeof(v8d));
  std::memcpy(tile[5] + kLanes, &c51, sizeof(v8d));
  std::memcpy(tile[6], &c60, sizeof(v8d));
  std::memcpy(tile[6] + kLanes, &c61, sizeof(v8d));
  std::memcpy(tile[7], &c70, sizeof(v8d));
  std::memcpy(tile[7] + kLanes, &c71, sizeof(v8d));
  for (std::size_t r = 0; r < rows; ++r) {
    double* crow = c + r * ldc;
    if (add) {
      for (std::size_t j = 0; j < cols; ++j) crow[j] += tile[r][j];
    } else {
      for (std::size_t j = 0; j < cols; ++j) crow[j] = tile[r][j];
    }
  }
}

}  // namespace

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, const double* a, const double* b, double* c,
          bool accumulate) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate) std::fill(c, c + m * n, 0.0);
    return;
  }
  thread_local std::vector<double> apack;
  thread_local std::vector<double> bpack;
  const std::size_t m_blocks = (m + kMr - 1) / kMr;
  for (std::size_t p0 = 0; p0 < k; p0 += kKc) {
    const std::size_t kc = std::min(kKc, k - p0);
    const bool add = accumulate || p0 > 0;
    apack.resize(m_blocks * kc * kMr);
    for (std::size_t ib = 0; ib < m_blocks; ++ib) {
      const std::size_t i0 = ib * kMr;
      pack_a(trans_a, a, m, k, i0, std::min(kMr, m - i0), p0, kc,
             apack.data() + ib * kc * kMr);
    }
    for (std::size_t jc = 0; jc < n; jc += kNc) {
      const std::size_t nc = std::min(kNc, n - jc);
      const std::size_t n_panels = (nc + kNr - 1) / kNr;
      bpack.resize(n_panels * kc * kNr);
      for (std::size_t jp = 0; jp < n_panels; ++jp) {
        const std::size_t j0 = jc + jp * kNr;
        pack_b(trans_b, b, n, k, j0, std::min(kNr, n - j0), p0, kc,
               bpack.data() + jp * kc * kNr);
      }
      for (std::size_t ib = 0; ib < m_blocks; ++ib) {
        const std::size_t i0 = ib * kMr;
        const std::size_t rows = std::min(kMr, m - i0);
        for (std::size_t jp = 0; jp < n_panels; ++jp) {
          const std::size_t j0 = jc + jp * kNr;
          micro_kernel(kc, apack.data() + ib * kc * kMr,
                       bpack.data() + jp * kc * kNr, c + i0 * n + j0, n, rows,
                       std::min(kNr, n - j0), add);
        }
      }
    }
  }
}

}  // namespace tano::detail
