// Copyright 2026 The TANO Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

namespace tano::detail {

// Row-major C[M x N] (+)= op(A) * op(B).
//
// Every output element is accumulated over k in ascending order regardless of
// M and N, so a row or column computed inside a large product is bitwise equal
// to the same row or column computed alone.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, const double* a, const double* b, double* c,
          bool accumulate);

}  // namespace tano::detail
