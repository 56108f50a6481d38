// Copyright 2026 The TANO Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "tano/normalization.hpp"

#include <cmath>
#include <string>

#include "autograd.hpp"
#include "tano/error.hpp"
#include "tano/log.hpp"

namespace tano {
namespace {

// z viewed as [N, C, S] with S = H * W (or 1 for rank-2 input).
struct ChannelLayout {
  std::size_t n;
  std::size_t c;
  std::size_t s;
};

ChannelLayout layout_of(const Tensor& z) {
  if (z.rank() != 2 && z.rank() != 4) {
    throw DimensionError("batch norm expects N x C or N x C x H x W, got " +
                         shape_str(z.shape()));
  }
  const std::size_t s = z.rank() == 4 ? z.dim(2) * z.dim(3) : 1;
  return {z.dim(0), z.dim(1), s};
}

void check_channels(const ChannelLayout& l, const BNLayerParams& p) {
  if (p.channels() != l.c || p.gamma.numel() != l.c || p.beta.numel() != l.c) {
    throw DimensionError("batch norm: input has " + std::to_string(l.c) +
                         " channels, parameters have " + std::to_string(p.channels()));
  }
}

// y = gamma * (z - mean) * inv + beta with constant statistics.
Tensor normalize_constant(const Tensor& z, const BNLayerParams& p,
                          std::span<const double> mean, std::span<const double> var) {
  const ChannelLayout l = layout_of(z);
  check_channels(l, p);
  std::vector<double> inv(l.c);
  for (std::size_t c = 0; c < l.c; ++c) inv[c] = 1.0 / std::sqrt(var[c] + p.epsilon);
  auto zd = z.data();
  auto g = p.gamma.data();
  auto b = p.beta.data();
  std::vector<double> out(zd.size());
  for (std::size_t n = 0; n < l.n; ++n) {
    for (std::size_t c = 0; c < l.c; ++c) {
      const std::size_t base = (n * l.c + c) * l.s;
      const double mu = mean[c], k = inv[c], gc = g[c], bc = b[c];
      for (std::size_t i = 0; i < l.s; ++i) {
        out[base + i] = gc * ((zd[base + i] - mu) * k) + bc;
      }
    }
  }
  std::vector<double> mu(mean.begin(), mean.end());
  return detail::finish(
      z.shape(), std::move(out), {&z, &p.gamma, &p.beta},
      [l, inv, mu = std::move(mu)](detail::Node& self) {
        const auto& zd = self.parents[0]->data;
        const auto& gd = self.parents[1]->data;
        double* gz = detail::grad_of(self, 0);
        double* gg = detail::grad_of(self, 1);
        double* gb = detail::grad_of(self, 2);
        for (std::size_t n = 0; n < l.n; ++n) {
          for (std::size_t c = 0; c < l.c; ++c) {
            const std::size_t base = (n * l.c + c) * l.s;
            for (std::size_t i = 0; i < l.s; ++i) {
              const double dy = self.grad[base + i];
              if (gz) gz[base + i] += dy * gd[c] * inv[c];
              if (gg) gg[c] += dy * (zd[base + i] - mu[c]) * inv[c];
              if (gb) gb[c] += dy;
            }
          }
        }
      });
}

}  // namespace

BNLayerParams BNLayerParams::identity(std::size_t channels, double epsilon,
                                      double momentum) {
  BNLayerParams p;
  p.gamma = Tensor::parameter({channels}, std::vector<double>(channels, 1.0));
  p.beta = Tensor::parameter({channels}, std::vector<double>(channels, 0.0));
  p.running_mean.assign(channels, 0.0);
  p.running_var.assign(channels, 1.0);
  p.epsilon = epsilon;
  p.momentum = momentum;
  return p;
}

BNLayerParams BNLayerParams::clone() const {
  BNLayerParams p = *this;
  p.gamma = gamma.clone();
  p.beta = beta.clone();
  return p;
}

void BNLayerParams::validate() const {
  const std::size_t c = running_mean.size();
  if (running_var.size() != c || gamma.numel() != c || beta.numel() != c) {
    throw DimensionError("BN parameters have inconsistent channel counts");
  }
  if (!(epsilon >= 0.0)) throw ValidationError("BN epsilon must be non-negative");
  if (!(momentum >= 0.0 && momentum <= 1.0)) {
    throw ValidationError("BN momentum must lie in [0, 1]");
  }
  for (double v : running_var) {
    if (!(v >= 0.0)) throw ValidationError("BN running variance must be >= 0");
  }
}

GroupWorker GroupWorker::clone() const {
  GroupWorker w;
  w.index = index;
  w.layers.reserve(layers.size());
  for (const auto& l : layers) w.layers.push_back(l.clone());
  return w;
}

GroupWorkerBank::GroupWorkerBank(std::size_t num_domains,
                                 std::span<const std::size_t> layer_channels,
                                 double epsilon, double momentum) {
  if (num_domains == 0) throw ValidationError("a worker bank needs at least one domain");
  GroupWorker proto;
  for (std::size_t c : layer_channels) {
    proto.layers.push_back(BNLayerParams::identity(c, epsilon, momentum));
  }
  *this = GroupWorkerBank(num_domains, proto);
}

GroupWorkerBank::GroupWorkerBank(std::size_t num_domains, const GroupWorker& prototype) {
  if (num_domains == 0) throw ValidationError("a worker bank needs at least one domain");
  workers_.reserve(num_domains + 1);
  for (std::size_t r = 0; r <= num_domains; ++r) {
    workers_.push_back(prototype.clone());
    workers_.back().index = r;
  }
}

std::size_t GroupWorkerBank::num_layers() const {
  return workers_.empty() ? 0 : workers_.front().layers.size();
}

GroupWorker& GroupWorkerBank::worker(std::size_t r) {
  if (r >= workers_.size()) {
    throw ValidationError("worker index " + std::to_string(r) + " outside bank of " +
                          std::to_string(workers_.size()));
  }
  return workers_[r];
}

const GroupWorker& GroupWorkerBank::worker(std::size_t r) const {
  return const_cast<GroupWorkerBank*>(this)->worker(r);
}

GroupWorkerBank GroupWorkerBank::clone() const {
  GroupWorkerBank b;
  b.workers_.reserve(workers_.size());
  for (const auto& w : workers_) b.workers_.push_back(w.clone());
  return b;
}

BatchStats compute_batch_stats(const Tensor& z) {
  const ChannelLayout l = layout_of(z);
  const std::size_t m = l.n * l.s;
  if (m == 0) throw DimensionError("batch statistics of an empty batch");
  auto zd = z.data();
  BatchStats st;
  st.m = m;
  st.mean.assign(l.c, 0.0);
  st.var.assign(l.c, 0.0);
  for (std::size_t n = 0; n < l.n; ++n) {
    for (std::size_t c = 0; c < l.c; ++c) {
      const double* p = zd.data() + (n * l.c + c) * l.s;
      double s = 0.0;
      for (std::size_t i = 0; i < l.s; ++i) s += p[i];
      st.mean[c] += s;
    }
  }
  for (double& v : st.mean) v /= static_cast<double>(m);
  for (std::size_t n = 0; n < l.n; ++n) {
    for (std::size_t c = 0; c < l.c; ++c) {
      const double* p = zd.data() + (n * l.c + c) * l.s;
      const double mu = st.mean[c];
      double s = 0.0;
      for (std::size_t i = 0; i < l.s; ++i) s += (p[i] - mu) * (p[i] - mu);
      st.var[c] += s;
    }
  }
  for (double& v : st.var) v /= static_cast<double>(m);
  return st;
}

Tensor bn_apply(const Tensor& z, const BNLayerParams& params, BnMode mode,
                BatchStats* batch_stats) {
  if (mode == BnMode::kEval) {
    return normalize_constant(z, params, params.running_mean, params.running_var);
  }
  const ChannelLayout l = layout_of(z);
  check_channels(l, params);
  BatchStats st = compute_batch_stats(z);
  std::vector<double> inv(l.c);
  for (std::size_t c = 0; c < l.c; ++c) {
    inv[c] = 1.0 / std::sqrt(st.var[c] + params.epsilon);
  }
  auto zd = z.data();
  auto g = params.gamma.data();
  auto b = params.beta.data();
  std::vector<double> xhat(zd.size());
  std::vector<double> out(zd.size());
  for (std::size_t n = 0; n < l.n; ++n) {
    for (std::size_t c = 0; c < l.c; ++c) {
      const std::size_t base = (n * l.c + c) * l.s;
      for (std::size_t i = 0; i < l.s; ++i) {
        const double xh = (zd[base + i] - st.mean[c]) * inv[c];
        xhat[base + i] = xh;
        out[base + i] = g[c] * xh + b[c];
      }
    }
  }
  if (batch_stats) *batch_stats = st;
  const std::size_t m = st.m;
  return detail::finish(
      z.shape(), std::move(out), {&z, &params.gamma, &params.beta},
      [l, m, inv = std::move(inv), xhat = std::move(xhat)](detail::Node& self) {
        const auto& gd = self.parents[1]->data;
        double* gz = detail::grad_of(self, 0);
        double* gg = detail::grad_of(self, 1);
        double* gb = detail::grad_of(self, 2);
        std::vector<double> sum_dy(l.c, 0.0), sum_dy_xhat(l.c, 0.0);
        for (std::size_t n = 0; n < l.n; ++n) {
          for (std::size_t c = 0; c < l.c; ++c) {
            const std::size_t base = (n * l.c + c) * l.s;
            double a = 0.0, bsum = 0.0;
            for (std::size_t i = 0; i < l.s; ++i) {
              a += self.grad[base + i];
              bsum += self.grad[base + i] * xhat[base + i];
            }
            sum_dy[c] += a;
            sum_dy_xhat[c] += bsum;
          }
        }
        for (std::size_t c = 0; c < l.c; ++c) {
          if (gg) gg[c] += sum_dy_xhat[c];
          if (gb) gb[c] += sum_dy[c];
        }
        if (!gz) return;
        const double inv_m = 1.0 / static_cast<double>(m);
        for (std::size_t n = 0; n < l.n; ++n) {
          for (std::size_t c = 0; c < l.c; ++c) {
            const std::size_t base = (n * l.c + c) * l.s;
            const double k = gd[c] * inv[c];
            const double mdy = sum_dy[c] * inv_m, mdyx = sum_dy_xhat[c] * inv_m;
            for (std::size_t i = 0; i < l.s; ++i) {
              gz[base + i] += k * (self.grad[base + i] - mdy - xhat[base + i] * mdyx);
            }
          }
        }
      });
}

Tensor bn_apply(const Tensor& z, const BNLayerParams& params, const BatchStats& stats) {
  if (stats.mean.size() != params.channels() || stats.var.size() != params.channels()) {
    throw DimensionError("batch norm: statistics do not match parameter channels");
  }
  return normalize_constant(z, params, stats.mean, stats.var);
}

void update_running_stats(BNLayerParams& params, const BatchStats& stats) {
  if (stats.mean.size() != params.channels() || stats.var.size() != params.channels()) {
    throw DimensionError("running-stat update: statistics do not match parameter channels");
  }
  const double mo = params.momentum;
  for (std::size_t c = 0; c < params.channels(); ++c) {
    params.running_mean[c] = (1.0 - mo) * params.running_mean[c] + mo * stats.mean[c];
    params.running_var[c] = (1.0 - mo) * params.running_var[c] + mo * stats.var[c];
  }
}

GroupWorker blend_workers(const GroupWorkerBank& bank, std::span<const double> weights,
                          VarianceBlend variance) {
  const std::size_t r_count = bank.num_domains();
  if (weights.size() != r_count) {
    throw ValidationError("blend_workers: " + std::to_string(weights.size()) +
                          " weights for " + std::to_string(r_count) + " domain workers");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0 && w <= 1.0)) {
      throw ValidationError("blend_workers: weight outside [0, 1]");
    }
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ValidationError("blend_workers: weights sum to " + std::to_string(total) +
                          ", expected 1");
  }
  GroupWorker out;
  out.index = GroupWorker::kTransient;
  const std::size_t layers = bank.num_layers();
  for (std::size_t j = 0; j < layers; ++j) {
    const BNLayerParams& ref = bank.worker(0).layers[j];
    const std::size_t c_count = ref.channels();
    std::vector<double> gamma(c_count, 0.0), beta(c_count, 0.0), mean(c_count, 0.0),
        var(c_count, 0.0), second(c_count, 0.0);
    for (std::size_t r = 0; r < r_count; ++r) {
      const double w = weights[r];
      if (w == 0.0) continue;
      const BNLayerParams& p = bank.worker(r).layers[j];
      auto g = p.gamma.data();
      auto b = p.beta.data();
      for (std::size_t c = 0; c < c_count; ++c) {
        gamma[c] += w * g[c];
        beta[c] += w * b[c];
        mean[c] += w * p.running_mean[c];
        var[c] += w * p.running_var[c];
        second[c] += w * (p.running_var[c] + p.running_mean[c] * p.running_mean[c]);
      }
    }
    if (variance == VarianceBlend::kMixture) {
      for (std::size_t c = 0; c < c_count; ++c) {
        var[c] = std::max(0.0, second[c] - mean[c] * mean[c]);
      }
    }
    BNLayerParams p;
    p.gamma = Tensor({c_count}, std::move(gamma));
    p.beta = Tensor({c_count}, std::move(beta));
    p.running_mean = std::move(mean);
    p.running_var = std::move(var);
    p.epsilon = ref.epsilon;
    p.momentum = ref.momentum;
    out.layers.push_back(std::move(p));
  }
  return out;
}

BNLayerParams adabn_adapt(const BNLayerParams& params, const Tensor& target_batch) {
  const BatchStats st = compute_batch_stats(target_batch);
  if (st.mean.size() != params.channels()) {
    throw DimensionError("adabn_adapt: target batch channels do not match parameters");
  }
  if (st.m < 32) {
    log_warning("AdaBN adaptation from only " + std::to_string(st.m) +
                " values per channel");
  }
  BNLayerParams out = params.clone();
  out.running_mean = st.mean;
  out.running_var = st.var;
  return out;
}

double sphere_residual(std::span<const double> z_normalized, double gamma, double beta,
                       double var, double epsilon) {
  if (gamma == 0.0) throw ValidationError("sphere_residual: gamma = 0 collapses the sphere");
  double sq = 0.0;
  for (double v : z_normalized) {
    const double u = (v - beta) / gamma;
    sq += u * u;
  }
  const double m = static_cast<double>(z_normalized.size());
  const double target = var + epsilon > 0.0 ? m * var / (var + epsilon) : 0.0;
  return std::abs(sq - target);
}

double sphere_residual_relative(std::span<const double> z_normalized, double gamma,
                                double beta, double var, double epsilon) {
  const double res = sphere_residual(z_normalized, gamma, beta, var, epsilon);
  const double m = static_cast<double>(z_normalized.size());
  const double target = var + epsilon > 0.0 ? m * var / (var + epsilon) : 0.0;
  return target > 0.0 ? res / target : res;
}

std::vector<double> channel_values(const Tensor& z, std::size_t c) {
  const ChannelLayout l = layout_of(z);
  if (c >= l.c) throw DimensionError("channel index out of range");
  auto zd = z.data();
  std::vector<double> out;
  out.reserve(l.n * l.s);
  for (std::size_t n = 0; n < l.n; ++n) {
    const double* p = zd.data() + (n * l.c + c) * l.s;
    out.insert(out.end(), p, p + l.s);
  }
  return out;
}

}  // namespace tano
