// Copyright 2026 The TANO Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "tano/coordinator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "tano/error.hpp"
#include "tano/ops.hpp"

namespace tano {

CoordinatorWeights CoordinatorWeights::clone() const {
  return {w1.clone(), b1.clone(), w2.clone(), b2.clone()};
}

std::vector<Tensor*> CoordinatorWeights::parameters() { return {&w1, &b1, &w2, &b2}; }

CoordinatorWeights coordinator_init(std::size_t input_dim, std::size_t num_domains,
                                    std::uint64_t seed) {
  if (input_dim == 0 || num_domains == 0) {
    throw ValidationError("coordinator needs a positive input width and domain count");
  }
  std::mt19937_64 gen(seed);
  auto glorot = [&gen](std::size_t in, std::size_t out) {
    const double a = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-a, a);
    std::vector<double> v(in * out);
    for (double& x : v) x = dist(gen);
    return Tensor::parameter({in, out}, std::move(v));
  };
  CoordinatorWeights w;
  w.w1 = glorot(input_dim, kCoordinatorHidden);
  w.b1 = Tensor::parameter({kCoordinatorHidden}, std::vector<double>(kCoordinatorHidden));
  w.w2 = glorot(kCoordinatorHidden, num_domains);
  w.b2 = Tensor::parameter({num_domains}, std::vector<double>(num_domains));
  return w;
}

DomainWeights DomainWeights::from_probabilities(std::vector<double> w, std::string source) {
  if (w.empty()) throw ValidationError("domain weights need at least one entry");
  double total = 0.0;
  for (double v : w) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("domain weight outside [0, 1]");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ValidationError("domain weights must sum to 1");
  DomainWeights d;
  std::vector<double> logits(w.size());
  for (std::size_t r = 0; r < w.size(); ++r) {
    logits[r] = w[r] > 0.0 ? std::log(w[r]) : -1e300;
  }
  d.logits = Tensor({1, w.size()}, std::move(logits));
  d.w_hat = std::move(w);
  d.source = std::move(source);
  return d;
}

DomainWeights coordinate(const Tensor& support_embeddings, const CoordinatorWeights& weights) {
  if (support_embeddings.rank() != 2 || support_embeddings.dim(0) == 0) {
    throw ValidationError("coordinate needs a non-empty support set, got " +
                          shape_str(support_embeddings.shape()));
  }
  Tensor pooled = ops::mean_rows(support_embeddings);
  Tensor h = ops::relu(ops::add_row_bias(ops::matmul(pooled, weights.w1), weights.b1));
  DomainWeights d;
  d.logits = ops::add_row_bias(ops::matmul(h, weights.w2), weights.b2);
  Tensor p = ops::softmax(d.logits, 1);
  d.w_hat.assign(p.data().begin(), p.data().end());
  return d;
}

WorkerSelection select_worker(const DomainWeights& w, std::size_t k, SelectMode mode) {
  const std::size_t r_count = w.w_hat.size();
  if (k < 1 || k > r_count) {
    throw ValidationError("select_worker: k = " + std::to_string(k) + " outside [1, " +
                          std::to_string(r_count) + "]");
  }
  std::vector<std::size_t> order(r_count);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return w.w_hat[a] > w.w_hat[b]; });
  WorkerSelection s;
  s.mode = mode;
  s.index = order[0];
  s.weights.assign(r_count, 0.0);
  if (mode == SelectMode::kHard) {
    s.k = 1;
    s.weights[s.index] = 1.0;
    return s;
  }
  s.k = k;
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) total += w.w_hat[order[i]];
  if (!(total > 0.0)) {
    for (std::size_t i = 0; i < k; ++i) s.weights[order[i]] = 1.0 / static_cast<double>(k);
  } else {
    for (std::size_t i = 0; i < k; ++i) s.weights[order[i]] = w.w_hat[order[i]] / total;
  }
  return s;
}

Tensor coordinator_loss(const DomainWeights& w_hat, std::span<const double> w) {
  const std::size_t r_count = w_hat.w_hat.size();
  if (w.size() != r_count) {
    throw DimensionError("coordinator_loss: label has " + std::to_string(w.size()) +
                         " entries for " + std::to_string(r_count) + " domains");
  }
  std::size_t ones = 0;
  for (double v : w) {
    if (v == 1.0) {
      ++ones;
    } else if (v != 0.0) {
      throw ValidationError("coordinator_loss: label must be one-hot");
    }
  }
  if (ones != 1) throw ValidationError("coordinator_loss: label must be one-hot");
  if (r_count == 1) {
    // softmax over one domain is identically 1.
    return ops::scale(ops::sum(w_hat.logits), 0.0);
  }
  return ops::cross_entropy(w_hat.logits, Tensor({1, r_count}, {w.begin(), w.end()}));
}

Tensor coordinator_loss(const DomainWeights& w_hat, std::size_t label) {
  std::vector<double> w(w_hat.w_hat.size(), 0.0);
  if (label >= w.size()) {
    throw ValidationError("coordinator_loss: label " + std::to_string(label) +
                          " outside " + std::to_string(w.size()) + " domains");
  }
  w[label] = 1.0;
  return coordinator_loss(w_hat, w);
}

}  // namespace tano
