// Copyright 2026 The TANO Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "tano/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "autograd.hpp"
#include "gemm.hpp"
#include "tano/error.hpp"

namespace tano::ops {
namespace {

using detail::Node;
using detail::finish;
using detail::grad_of;
using detail::wants_grad;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " +
                         std::to_string(rank) + ", got " + shape_str(t.shape()));
  }
}

// Softmax-family ops view a tensor as `outer` independent lanes of length
// `len`, with elements `stride` apart.
struct Lanes {
  std::size_t outer;
  std::size_t len;
  std::size_t stride;
  std::size_t base(std::size_t lane) const {
    return stride == 1 ? lane * len : lane;
  }
};

Lanes lanes_for(const Tensor& x, std::size_t axis, const char* op) {
  const Shape& s = x.shape();
  Lanes l{};
  if (s.size() == 1 && axis == 0) {
    l = {1, s[0], 1};
  } else if (s.size() == 2 && axis == 1) {
    l = {s[0], s[1], 1};
  } else if (s.size() == 2 && axis == 0) {
    l = {s[1], s[0], s[1]};
  } else {
    throw DimensionError(std::string(op) + ": unsupported axis " +
                         std::to_string(axis) + " for shape " + shape_str(s));
  }
  if (l.len == 0) {
    throw DimensionError(std::string(op) + ": empty axis in shape " +
                         shape_str(s));
  }
  return l;
}

std::vector<double> softmax_values(std::span<const double> x, const Lanes& l) {
  std::vector<double> y(x.size());
  for (std::size_t o = 0; o < l.outer; ++o) {
    const std::size_t b = l.base(o);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < l.len; ++i) mx = std::max(mx, x[b + i * l.stride]);
    double z = 0.0;
    for (std::size_t i = 0; i < l.len; ++i) {
      const double e = std::exp(x[b + i * l.stride] - mx);
      y[b + i * l.stride] = e;
      z += e;
    }
    for (std::size_t i = 0; i < l.len; ++i) y[b + i * l.stride] /= z;
  }
  return y;
}

std::vector<double> log_softmax_values(std::span<const double> x,
                                       const Lanes& l) {
  std::vector<double> y(x.size());
  for (std::size_t o = 0; o < l.outer; ++o) {
    const std::size_t b = l.base(o);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < l.len; ++i) mx = std::max(mx, x[b + i * l.stride]);
    double z = 0.0;
    for (std::size_t i = 0; i < l.len; ++i) z += std::exp(x[b + i * l.stride] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t i = 0; i < l.len; ++i) {
      y[b + i * l.stride] = x[b + i * l.stride] - lse;
    }
  }
  return y;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto ad = a.data();
  auto bd = b.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
  return finish(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (double* g = grad_of(self, p)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  auto ad = a.data();
  auto bd = b.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] - bd[i];
  return finish(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    if (double* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (double* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto ad = a.data();
  auto bd = b.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  return finish(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    const auto& ad = self.parents[0]->data;
    const auto& bd = self.parents[1]->data;
    if (double* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bd[i];
    }
    if (double* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * ad[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] * factor;
  return finish(x.shape(), std::move(out), {&x}, [factor](Node& self) {
    if (double* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * factor;
    }
  });
}

Tensor square(const Tensor& x) {
  auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] * xd[i];
  return finish(x.shape(), std::move(out), {&x}, [](Node& self) {
    const auto& xd = self.parents[0]->data;
    if (double* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += 2.0 * xd[i] * self.grad[i];
    }
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return finish(Shape{}, {s}, {&x}, [](Node& self) {
    if (double* g = grad_of(self, 0)) {
      const std::size_t n = self.parents[0]->data.size();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
    }
  });
}

Tensor mean(const Tensor& x) {
  const std::size_t n = x.numel();
  if (n == 0) throw DimensionError("mean of an empty tensor");
  double s = 0.0;
  for (double v : x.data()) s += v;
  return finish(Shape{}, {s / static_cast<double>(n)}, {&x}, [n](Node& self) {
    if (double* g = grad_of(self, 0)) {
      const double d = self.grad[0] / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) g[i] += d;
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n);
  detail::gemm(false, false, m, n, k, a.data().data(), b.data().data(),
               out.data(), false);
  return finish({m, n}, std::move(out), {&a, &b}, [m, k, n](Node& self) {
    const double* ad = self.parents[0]->data.data();
    const double* bd = self.parents[1]->data.data();
    if (double* g = grad_of(self, 0)) {
      detail::gemm(false, true, m, k, n, self.grad.data(), bd, g, true);
    }
    if (double* g = grad_of(self, 1)) {
      detail::gemm(true, false, k, n, m, ad, self.grad.data(), g, true);
    }
  });
}

Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
  require_rank(x, 2, "add_row_bias");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (bias.numel() != n) {
    throw DimensionError("add_row_bias: bias " + shape_str(bias.shape()) +
                         " does not match " + shape_str(x.shape()));
  }
  auto xd = x.data();
  auto bd = bias.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xd[i * n + j] + bd[j];
  }
  return finish(x.shape(), std::move(out), {&x, &bias}, [m, n](Node& self) {
    if (double* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < m * n; ++i) g[i] += self.grad[i];
    }
    if (double* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
      }
    }
  });
}

Tensor mean_rows(const Tensor& x) {
  require_rank(x, 2, "mean_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (m == 0) throw DimensionError("mean_rows: no rows");
  auto xd = x.data();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j] += xd[i * n + j];
  }
  for (double& v : out) v /= static_cast<double>(m);
  return finish({1, n}, std::move(out), {&x}, [m, n](Node& self) {
    if (double* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          g[i * n + j] += self.grad[j] / static_cast<double>(m);
        }
      }
    }
  });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  if (x.rank() == 0 || begin > end || end > x.dim(0)) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") out of range for " +
                         shape_str(x.shape()));
  }
  const std::size_t row = x.dim(0) == 0 ? 0 : x.numel() / x.dim(0);
  Shape s = x.shape();
  s[0] = end - begin;
  auto xd = x.data();
  std::vector<double> out(xd.begin() + begin * row, xd.begin() + end * row);
  return finish(std::move(s), std::move(out), {&x},
                [begin, row](Node& self) {
                  if (double* g = grad_of(self, 0)) {
                    for (std::size_t i = 0; i < self.grad.size(); ++i) {
                      g[begin * row + i] += self.grad[i];
                    }
                  }
                });
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  if (a.rank() == 0 || a.rank() != b.rank() ||
      !std::equal(a.shape().begin() + 1, a.shape().end(), b.shape().begin() + 1)) {
    throw DimensionError("concat_rows: incompatible shapes " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  Shape s = a.shape();
  s[0] += b.dim(0);
  std::vector<double> out;
  out.reserve(a.numel() + b.numel());
  out.insert(out.end(), a.data().begin(), a.data().end());
  out.insert(out.end(), b.data().begin(), b.data().end());
  const std::size_t na = a.numel();
  return finish(std::move(s), std::move(out), {&a, &b}, [na](Node& self) {
    if (double* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < na; ++i) g[i] += self.grad[i];
    }
    if (double* g = grad_of(self, 1)) {
      for (std::size_t i = na; i < self.grad.size(); ++i) g[i - na] += self.grad[i];
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) +
                         " as " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return finish(std::move(shape), std::move(out), {&x}, [](Node& self) {
    if (double* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor relu(const Tensor& x) {
  auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] > 0.0 ? xd[i] : 0.0;
  return finish(x.shape(), std::move(out), {&x}, [](Node& self) {
    const auto& xd = self.parents[0]->data;
    if (double* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        if (xd[i] > 0.0) g[i] += self.grad[i];
      }
    }
  });
}

Tensor max_pool2(const Tensor& x) {
  require_rank(x, 4, "max_pool2");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h == 0 || w == 0) throw DimensionError("max_pool2: empty spatial dims");
  const std::size_t ho = (h + 1) / 2, wo = (w + 1) / 2;
  auto xd = x.data();
  std::vector<double> out(n * c * ho * wo);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const double* src = xd.data() + plane * h * w;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_at = (2 * oy) * w + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t y = 2 * oy + dy, xx = 2 * ox + dx;
            if (y >= h || xx >= w) continue;  // -inf padding
            const double v = src[y * w + xx];
            if (v > best) {
              best = v;
              best_at = y * w + xx;
            }
          }
        }
        const std::size_t o = plane * ho * wo + oy * wo + ox;
        out[o] = best;
        argmax[o] = plane * h * w + best_at;
      }
    }
  }
  return finish({n, c, ho, wo}, std::move(out), {&x},
                [argmax = std::move(argmax)](Node& self) {
                  if (double* g = grad_of(self, 0)) {
                    for (std::size_t i = 0; i < self.grad.size(); ++i) {
                      g[argmax[i]] += self.grad[i];
                    }
                  }
                });
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride,
              std::size_t padding) {
  require_rank(input, 4, "conv2d");
  require_rank(kernel, 4, "conv2d");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2),
                    w = input.dim(3);
  const std::size_t o = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(1) != c) {
    throw DimensionError("conv2d: kernel " + shape_str(kernel.shape()) +
                         " does not match input " + shape_str(input.shape()));
  }
  if (stride < 1) throw ValidationError("conv2d: stride must be >= 1");
  if (kh > h + 2 * padding || kw > w + 2 * padding) {
    throw DimensionError("conv2d: kernel " + shape_str(kernel.shape()) +
                         " larger than padded input " + shape_str(input.shape()));
  }
  const std::size_t ho = (h + 2 * padding - kh) / stride + 1;
  const std::size_t wo = (w + 2 * padding - kw) / stride + 1;
  const std::size_t ckk = c * kh * kw;
  const std::size_t hw = ho * wo;
  const bool record = wants_grad({&input, &kernel});

  const std::size_t cols_total = n * hw;

  // col[(ci, ky, kx), (b, oy, ox)]: one column per output pixel of the batch.
  auto xd = input.data();
  std::vector<double> col(ckk * cols_total);
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        double* dst = col.data() + ((ci * kh + ky) * kw + kx) * cols_total;
        for (std::size_t b = 0; b < n; ++b) {
          const double* img = xd.data() + (b * c + ci) * h * w;
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const long y = static_cast<long>(oy * stride + ky) - static_cast<long>(padding);
            const bool row_in = y >= 0 && y < static_cast<long>(h);
            if (stride == 1) {
              // Valid output columns map onto one contiguous input run.
              const long x0 = static_cast<long>(kx) - static_cast<long>(padding);
              const long lo = std::max(0L, -x0);
              const long hi = std::min(static_cast<long>(wo), static_cast<long>(w) - x0);
              if (!row_in || hi <= lo) {
                std::fill_n(dst, wo, 0.0);
              } else {
                std::fill_n(dst, lo, 0.0);
                std::copy_n(img + static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x0 + lo),
                            hi - lo, dst + lo);
                std::fill(dst + hi, dst + wo, 0.0);
              }
              dst += wo;
              continue;
            }
            for (std::size_t ox = 0; ox < wo; ++ox) {
              const long xx = static_cast<long>(ox * stride + kx) - static_cast<long>(padding);
              *dst++ = (row_in && xx >= 0 && xx < static_cast<long>(w))
                           ? img[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(xx)]
                           : 0.0;
            }
          }
        }
      }
    }
  }

  std::vector<double> flat(o * cols_total);
  detail::gemm(false, false, o, cols_total, ckk, kernel.data().data(), col.data(),
               flat.data(), false);
  std::vector<double> out(n * o * hw);
  for (std::size_t oi = 0; oi < o; ++oi) {
    for (std::size_t b = 0; b < n; ++b) {
      std::copy_n(flat.data() + oi * cols_total + b * hw, hw,
                  out.data() + (b * o + oi) * hw);
    }
  }
  if (!record) return Tensor({n, o, ho, wo}, std::move(out));

  return finish(
      {n, o, ho, wo}, std::move(out), {&input, &kernel},
      [=, col = std::move(col)](Node& self) {
        double* gk = grad_of(self, 1);
        double* gx = grad_of(self, 0);
        std::vector<double> dflat(o * cols_total);
        for (std::size_t b = 0; b < n; ++b) {
          for (std::size_t oi = 0; oi < o; ++oi) {
            std::copy_n(self.grad.data() + (b * o + oi) * hw, hw,
                        dflat.data() + oi * cols_total + b * hw);
          }
        }
        if (gk) {
          detail::gemm(false, true, o, ckk, cols_total, dflat.data(), col.data(), gk,
                       true);
        }
        if (!gx) return;
        std::vector<double> dcol(ckk * cols_total);
        detail::gemm(true, false, ckk, cols_total, o, self.parents[1]->data.data(),
                     dflat.data(), dcol.data(), false);
        for (std::size_t ci = 0; ci < c; ++ci) {
          for (std::size_t ky = 0; ky < kh; ++ky) {
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const double* src = dcol.data() + ((ci * kh + ky) * kw + kx) * cols_total;
              for (std::size_t b = 0; b < n; ++b) {
                double* img = gx + (b * c + ci) * h * w;
                for (std::size_t oy = 0; oy < ho; ++oy) {
                  const long y = static_cast<long>(oy * stride + ky) - static_cast<long>(padding);
                  if (y < 0 || y >= static_cast<long>(h)) {
                    src += wo;
                    continue;
                  }
                  for (std::size_t ox = 0; ox < wo; ++ox, ++src) {
                    const long xx = static_cast<long>(ox * stride + kx) - static_cast<long>(padding);
                    if (xx < 0 || xx >= static_cast<long>(w)) continue;
                    img[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(xx)] += *src;
                  }
                }
              }
            }
          }
        }
      });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const Lanes l = lanes_for(x, axis, "softmax");
  std::vector<double> y = softmax_values(x.data(), l);
  std::vector<double> saved = wants_grad({&x}) ? y : std::vector<double>{};
  return finish(x.shape(), std::move(y), {&x},
                [l, saved = std::move(saved)](Node& self) {
                  double* g = grad_of(self, 0);
                  if (!g) return;
                  for (std::size_t o = 0; o < l.outer; ++o) {
                    const std::size_t b = l.base(o);
                    double dot = 0.0;
                    for (std::size_t i = 0; i < l.len; ++i) {
                      const std::size_t at = b + i * l.stride;
                      dot += self.grad[at] * saved[at];
                    }
                    for (std::size_t i = 0; i < l.len; ++i) {
                      const std::size_t at = b + i * l.stride;
                      g[at] += saved[at] * (self.grad[at] - dot);
                    }
                  }
                });
}

Tensor log_softmax(const Tensor& x, std::size_t axis) {
  const Lanes l = lanes_for(x, axis, "log_softmax");
  std::vector<double> y = log_softmax_values(x.data(), l);
  return finish(x.shape(), std::move(y), {&x}, [l](Node& self) {
    double* g = grad_of(self, 0);
    if (!g) return;
    for (std::size_t o = 0; o < l.outer; ++o) {
      const std::size_t b = l.base(o);
      double total = 0.0;
      for (std::size_t i = 0; i < l.len; ++i) total += self.grad[b + i * l.stride];
      for (std::size_t i = 0; i < l.len; ++i) {
        const std::size_t at = b + i * l.stride;
        g[at] += self.grad[at] - std::exp(self.data[at]) * total;
      }
    }
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets) {
  require_rank(logits, 2, "cross_entropy");
  const std::size_t rows = logits.dim(0), classes = logits.dim(1);
  if (classes < 2) throw ValidationError("cross_entropy: need at least 2 classes");
  if (rows == 0) throw DimensionError("cross_entropy: empty batch");
  if (targets.size() != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(rows) + " rows");
  }
  for (int t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= classes) {
      throw ValidationError("cross_entropy: class index " + std::to_string(t) +
                            " outside [0, " + std::to_string(classes) + ")");
    }
  }
  const Lanes l{rows, classes, 1};
  std::vector<double> logp = log_softmax_values(logits.data(), l);
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) loss -= logp[r * classes + targets[r]];
  loss /= static_cast<double>(rows);
  std::vector<int> tgt(targets.begin(), targets.end());
  return finish(Shape{}, {loss}, {&logits},
                [rows, classes, logp = std::move(logp), tgt = std::move(tgt)](Node& self) {
                  double* g = grad_of(self, 0);
                  if (!g) return;
                  const double s = self.grad[0] / static_cast<double>(rows);
                  for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t c = 0; c < classes; ++c) {
                      const double p = std::exp(logp[r * classes + c]);
                      const double onehot = static_cast<int>(c) == tgt[r] ? 1.0 : 0.0;
                      g[r * classes + c] += s * (p - onehot);
                    }
                  }
                });
}

Tensor cross_entropy(const Tensor& logits, const Tensor& target_dist) {
  require_rank(logits, 2, "cross_entropy");
  require_same_shape(logits, target_dist, "cross_entropy");
  const std::size_t rows = logits.dim(0), classes = logits.dim(1);
  if (rows == 0) throw DimensionError("cross_entropy: empty batch");
  auto td = target_dist.data();
  for (double v : td) {
    if (!(v >= 0.0)) throw ValidationError("cross_entropy: negative target mass");
  }
  const Lanes l{rows, classes, 1};
  std::vector<double> logp = log_softmax_values(logits.data(), l);
  double loss = 0.0;
  for (std::size_t i = 0; i < logp.size(); ++i) {
    if (td[i] != 0.0) loss -= td[i] * logp[i];
  }
  loss /= static_cast<double>(rows);
  std::vector<double> t(td.begin(), td.end());
  return finish(Shape{}, {loss}, {&logits},
                [rows, classes, logp = std::move(logp), t = std::move(t)](Node& self) {
                  double* g = grad_of(self, 0);
                  if (!g) return;
                  const double s = self.grad[0] / static_cast<double>(rows);
                  for (std::size_t r = 0; r < rows; ++r) {
                    double mass = 0.0;
                    for (std::size_t c = 0; c < classes; ++c) mass += t[r * classes + c];
                    for (std::size_t c = 0; c < classes; ++c) {
                      const std::size_t i = r * classes + c;
                      g[i] += s * (std::exp(logp[i]) * mass - t[i]);
                    }
                  }
                });
}

Tensor neg_sq_distance(const Tensor& queries, const Tensor& prototypes) {
  require_rank(queries, 2, "neg_sq_distance");
  require_rank(prototypes, 2, "neg_sq_distance");
  if (queries.dim(1) != prototypes.dim(1)) {
    throw DimensionError("neg_sq_distance: embedding dims differ " +
                         shape_str(queries.shape()) + " vs " +
                         shape_str(prototypes.shape()));
  }
  const std::size_t nq = queries.dim(0), np = prototypes.dim(0), d = queries.dim(1);
  auto q = queries.data();
  auto p = prototypes.data();
  std::vector<double> out(nq * np);
  for (std::size_t i = 0; i < nq; ++i) {
    for (std::size_t c = 0; c < np; ++c) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = q[i * d + k] - p[c * d + k];
        s += diff * diff;
      }
      out[i * np + c] = -s;
    }
  }
  return finish({nq, np}, std::move(out), {&queries, &prototypes},
                [nq, np, d](Node& self) {
                  const auto& q = self.parents[0]->data;
                  const auto& p = self.parents[1]->data;
                  double* gq = grad_of(self, 0);
                  double* gp = grad_of(self, 1);
                  for (std::size_t i = 0; i < nq; ++i) {
                    for (std::size_t c = 0; c < np; ++c) {
                      const double g = self.grad[i * np + c];
                      if (g == 0.0) continue;
                      for (std::size_t k = 0; k < d; ++k) {
                        const double diff = q[i * d + k] - p[c * d + k];
                        if (gq) gq[i * d + k] -= 2.0 * g * diff;
                        if (gp) gp[c * d + k] += 2.0 * g * diff;
                      }
                    }
                  }
                });
}

}  // namespace tano::ops
