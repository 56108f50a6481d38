// Copyright 2026 The TANO Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "tano/ops.hpp"
#include "tano/tensor.hpp"

namespace tano::test {

inline Tensor random_tensor(Shape shape, std::mt19937_64& gen, double lo = -1.0, double hi = 1.0,
                            bool param = true) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = u(gen);
  return param ? Tensor::parameter(std::move(shape), std::move(v))
               : Tensor(std::move(shape), std::move(v));
}

inline constexpr double kGradNoiseFloor = 1e-10;

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  // Entries whose stencil straddles a kink (ReLU or max-pool switch).
  std::size_t kinks = 0;
  // Worst entry.
  std::size_t param = 0, index = 0;
  double analytic = 0.0, numeric = 0.0;
};

/// Compares reverse-mode gradients of the scalar `loss()` with central
/// differences on up to `samples` entries of every parameter. An entry whose
/// central difference at h disagrees with the one at h / 10 sits within h of
/// a non-differentiable point; it is counted in `kinks` and not compared.
inline GradCheck gradcheck(const std::function<Tensor()>& loss, const std::vector<Tensor*>& params,
                           std::size_t samples = 20, double h = 1e-5, std::uint64_t seed = 7) {
  for (Tensor* p : params) p->zero_grad();
  double level = 0.0;
  {
    GradientTape tape;
    Tensor l = loss();
    level = std::abs(l.item());
    tape.backward(l);
  }
  std::vector<std::vector<double>> analytic;
  for (Tensor* p : params) {
    // Parameters off the loss path carry no gradient buffer: exactly zero.
    if (p->has_grad()) {
      analytic.emplace_back(p->grad().begin(), p->grad().end());
    } else {
      analytic.emplace_back(p->numel(), 0.0);
    }
  }

  // Roundoff of a central difference: a few ulps of the loss over 2h.
  const double noise =
      std::max(kGradNoiseFloor, 8.0 * std::numeric_limits<double>::epsilon() * level / h);
  auto central = [&](Tensor& p, std::size_t i, double step) {
    const double orig = p.data()[i];
    p.mutable_data()[i] = orig + step;
    const double up = loss().item();
    p.mutable_data()[i] = orig - step;
    const double down = loss().item();
    p.mutable_data()[i] = orig;
    return (up - down) / (2.0 * step);
  };

  std::mt19937_64 gen(seed);
  GradCheck out;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = *params[pi];
    const std::size_t n = p.numel();
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), gen);
    idx.resize(std::min(n, samples));
    for (std::size_t i : idx) {
      const double numeric = central(p, i, h);
      const double a = analytic[pi][i];
      ++out.checked;
      // Both within roundoff of zero: a mathematically zero gradient.
      if (std::abs(a) < noise && std::abs(numeric) < noise) continue;
      const double rel = std::abs(a - numeric) / (std::abs(a) + std::abs(numeric) + 1e-12);
      if (rel > 1e-6) {
        const double fine = central(p, i, h / 10.0);
        if (std::abs(fine - numeric) > 1e-5 * std::abs(numeric) + 10.0 * noise) {
          ++out.kinks;
          continue;
        }
      }
      if (rel > out.max_rel_error) {
        out.max_rel_error = rel;
        out.param = pi;
        out.index = i;
        out.analytic = a;
        out.numeric = numeric;
      }
    }
  }
  return out;
}

/// Weighted sum with fixed random weights, so every output entry matters.
inline Tensor probe(const Tensor& y, std::uint64_t seed = 3) {
  std::mt19937_64 gen(seed);
  Tensor w = random_tensor(y.shape(), gen, -1.0, 1.0, false);
  return ops::sum(ops::mul(y, w));
}

/// Per-element batch normalization over axes (n, h, w), written as plain
/// loops: biased variance, then gamma * (z - mean) / sqrt(var + eps) + beta.
inline std::vector<double> naive_bn(const std::vector<double>& z, std::size_t n, std::size_t c,
                                    std::size_t s, const std::vector<double>& gamma,
                                    const std::vector<double>& beta, double eps,
                                    std::vector<double>* mean_out = nullptr,
                                    std::vector<double>* var_out = nullptr) {
  std::vector<double> out(z.size());
  for (std::size_t ch = 0; ch < c; ++ch) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < s; ++k) mean += z[(i * c + ch) * s + k];
    mean /= static_cast<double>(n * s);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < s; ++k) {
        const double d = z[(i * c + ch) * s + k] - mean;
        var += d * d;
      }
    var /= static_cast<double>(n * s);
    if (mean_out) mean_out->push_back(mean);
    if (var_out) var_out->push_back(var);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < s; ++k) {
        const std::size_t at = (i * c + ch) * s + k;
        out[at] = gamma[ch] * (z[at] - mean) / std::sqrt(var + eps) + beta[ch];
      }
  }
  return out;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = a.size() == b.size() ? 0.0 : INFINITY;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

}  // namespace tano::test
