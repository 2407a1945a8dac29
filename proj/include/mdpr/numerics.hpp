/* Copyright 2026 The MDPR Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mdpr/error.hpp"
#include "mdpr/tensor.hpp"

namespace mdpr {

inline constexpr double kKlFloor = 1e-12;

inline void softmax(std::span<const double> logits, std::span<double> out) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] /= sum;
}

inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  softmax(logits, out);
  return out;
}

inline std::vector<double> log_softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - mx);
  const double lse = mx + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

// Cosine similarity; zero-norm inputs give 0.
inline double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

// Accumulates d cos(a,b) * upstream into da and db (either may be empty).
inline void cosine_backward(std::span<const double> a, std::span<const double> b,
                            double upstream, std::span<double> da,
                            std::span<double> db) {
  const double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) return;
  const double c = dot(a, b) / (na * nb);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!da.empty()) da[i] += upstream * (b[i] / (na * nb) - c * a[i] / (na * na));
    if (!db.empty()) db[i] += upstream * (a[i] / (na * nb) - c * b[i] / (nb * nb));
  }
}

struct AttentionResult {
  std::vector<double> context;       // d, concatenated per-head contexts
  std::vector<double> weights;       // V, mean over heads (pre-dropout)
  std::vector<double> head_weights;  // H x V, per-head softmax rows
};

// Multi-head scaled dot-product attention of a single query over a pool of
// `pool` rows stored contiguously in keys/values (pool x d). Head h uses the
// column slice [h*d/H, (h+1)*d/H). When keep_scale is non-empty (H x V) the
// context uses weights multiplied elementwise by it (inverted dropout); the
// returned weights are always the undropped ones.
inline AttentionResult attend(std::span<const double> query,
                              std::span<const double> keys,
                              std::span<const double> values, std::size_t pool,
                              std::size_t heads,
                              std::span<const double> keep_scale = {}) {
  const std::size_t d = query.size();
  if (heads == 0 || d % heads != 0)
    throw ConfigError("head count " + std::to_string(heads) +
                      " does not divide feature dimension " + std::to_string(d));
  if (pool == 0) throw EmptyPoolError("attention over an empty prompt pool");
  if (keys.size() != pool * d || values.size() != pool * d)
    throw ShapeError("attention keys/values must be pool x d");

  const std::size_t dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  AttentionResult r;
  r.context.assign(d, 0.0);
  r.weights.assign(pool, 0.0);
  r.head_weights.assign(heads * pool, 0.0);
  std::vector<double> logits(pool);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    for (std::size_t v = 0; v < pool; ++v)
      logits[v] = scale * dot(query.subspan(off, dh), keys.subspan(v * d + off, dh));
    std::span<double> a(r.head_weights.data() + h * pool, pool);
    softmax(logits, a);
    for (std::size_t v = 0; v < pool; ++v) {
      r.weights[v] += a[v] / static_cast<double>(heads);
      const double w = keep_scale.empty() ? a[v] : a[v] * keep_scale[h * pool + v];
      axpy(w, values.subspan(v * d + off, dh),
           std::span<double>(r.context).subspan(off, dh));
    }
  }
  return r;
}

// Backward of attend(). d_weights is the gradient w.r.t. the head-mean
// weights (may be empty). Gradients are accumulated into dq/dkeys/dvalues.
inline void attend_backward(std::span<const double> query,
                            std::span<const double> keys,
                            std::span<const double> values, std::size_t pool,
                            std::size_t heads,
                            std::span<const double> head_weights,
                            std::span<const double> keep_scale,
                            std::span<const double> d_context,
                            std::span<const double> d_weights,
                            std::span<double> dq, std::span<double> dkeys,
                            std::span<double> dvalues) {
  const std::size_t d = query.size();
  const std::size_t dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<double> da(pool), dlogit(pool);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    const double* a = head_weights.data() + h * pool;
    const auto dctx = d_context.subspan(off, dh);
    double mean_da = 0.0;
    for (std::size_t v = 0; v < pool; ++v) {
      const double keep = keep_scale.empty() ? 1.0 : keep_scale[h * pool + v];
      axpy(a[v] * keep, dctx, dvalues.subspan(v * d + off, dh));
      da[v] = keep * dot(dctx, values.subspan(v * d + off, dh));
      if (!d_weights.empty()) da[v] += d_weights[v] / static_cast<double>(heads);
      mean_da += a[v] * da[v];
    }
    for (std::size_t v = 0; v < pool; ++v) dlogit[v] = a[v] * (da[v] - mean_da);
    for (std::size_t v = 0; v < pool; ++v) {
      axpy(scale * dlogit[v], keys.subspan(v * d + off, dh), dq.subspan(off, dh));
      axpy(scale * dlogit[v], query.subspan(off, dh), dkeys.subspan(v * d + off, dh));
    }
  }
}

struct AttentionOutput {
  std::vector<double> context;
  std::vector<double> weights;
};

// Attention with no learned projections: query 1 x d, keys/values V x d.
inline AttentionOutput scaled_dot_product_attention(std::span<const double> query,
                                                    const Tensor& keys,
                                                    const Tensor& values,
                                                    std::size_t heads) {
  if (keys.rank() != 2 || values.rank() != 2 || keys.shape() != values.shape() ||
      keys.extent(1) != query.size())
    throw ShapeError("keys and values must both be V x d with d = query length");
  auto r = attend(query, keys.values(), values.values(), keys.extent(0), heads);
  return {std::move(r.context), std::move(r.weights)};
}

namespace detail {
inline void check_distribution(std::span<const double> p, const char* name) {
  double s = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw ValidationError(std::string(name) + " has a negative or NaN entry");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-6)
    throw ValidationError(std::string(name) + " does not sum to 1 (sum=" +
                          std::to_string(s) + ")");
}
}  // namespace detail

// KL(p || q) with 0 ln 0 = 0 and q clamped below by kKlFloor.
inline double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size())
    throw ShapeError("kl_divergence: length mismatch " + std::to_string(p.size()) +
                     " vs " + std::to_string(q.size()));
  detail::check_distribution(p, "p");
  detail::check_distribution(q, "q");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    acc += p[i] * std::log(p[i] / std::max(q[i], kKlFloor));
  }
  return acc;
}

// One named parameter block for grad_check: values are perturbed in place and
// restored, analytic holds the gradient to verify.
struct ParamBlock {
  std::string name;
  std::span<double> values;
  std::span<const double> analytic;
};

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> params;
  double max_rel_error = 0.0;
  double step = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

// TwoPoint: (f(x+h) - f(x-h)) / 2h.
// FourthOrder: (-f(x+2h) + 8f(x+h) - 8f(x-h) + f(x-2h)) / 12h.
enum class Stencil { TwoPoint, FourthOrder };

// Verifies analytic gradients against central finite differences.
inline GradCheckReport grad_check(const std::function<double()>& objective,
                                  std::span<const ParamBlock> params, double step,
                                  double tolerance, Stencil stencil = Stencil::TwoPoint) {
  if (!(step > 0.0) || !(tolerance > 0.0))
    throw ConfigError("grad_check step and tolerance must be positive");
  GradCheckReport report;
  report.step = step;
  report.tolerance = tolerance;
  auto eval = [&](const std::string& name) {
    const double f = objective();
    if (!std::isfinite(f)) throw NumericError("grad_check: non-finite objective at " + name);
    return f;
  };
  for (const ParamBlock& block : params) {
    if (block.values.size() != block.analytic.size())
      throw ShapeError("grad_check: gradient size mismatch for " + block.name);
    GradCheckEntry entry;
    entry.name = block.name;
    for (std::size_t i = 0; i < block.values.size(); ++i) {
      const double saved = block.values[i];
      auto at = [&](double offset) {
        block.values[i] = saved + offset;
        return eval(block.name);
      };
      double numeric = 0.0;
      if (stencil == Stencil::TwoPoint) {
        const double up = at(step), down = at(-step);
        numeric = (up - down) / (2.0 * step);
      } else {
        const double up2 = at(2.0 * step), up = at(step), down = at(-step),
                     down2 = at(-2.0 * step);
        numeric = (8.0 * (up - down) - (up2 - down2)) / (12.0 * step);
      }
      block.values[i] = saved;
      const double err = relative_error(block.analytic[i], numeric);
      if (i == 0 || err > entry.max_rel_error) {
        entry.max_rel_error = err;
        entry.worst_index = i;
        entry.analytic_at_worst = block.analytic[i];
        entry.numeric_at_worst = numeric;
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.params.push_back(std::move(entry));
  }
  report.passed = report.max_rel_error <= tolerance;
  return report;
}

}  // namespace mdpr
