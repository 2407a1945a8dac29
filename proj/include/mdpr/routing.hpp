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
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mdpr/error.hpp"
#include "mdpr/numerics.hpp"
#include "mdpr/rng.hpp"
#include "mdpr/tensor.hpp"

namespace mdpr {

enum class Similarity { Cosine, Dot };

inline constexpr double kScaleMin = 1.0;
inline constexpr double kScaleMax = 100.0;
inline constexpr double kInitialScale = 10.0;
inline constexpr std::size_t kContextTokens = 16;

// Trainable routing parameters shared by every class: C-MHA projections
// (row-vector convention, x W + b), the distillation projection and the
// semantic temperature.
struct RouterParams {
  std::size_t heads = 8;
  double dropout = 0.1;
  Similarity similarity = Similarity::Cosine;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor proj, proj_bias;
  Tensor scale;  // shape {1}

  std::size_t dim() const { return wq.extent(0); }
  std::size_t proj_dim() const { return proj.extent(1); }

  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    f("Wq", self.wq); f("bq", self.bq);
    f("Wk", self.wk); f("bk", self.bk);
    f("Wv", self.wv); f("bv", self.bv);
    f("Wo", self.wo); f("bo", self.bo);
    f("Proj", self.proj); f("bProj", self.proj_bias);
    f("s", self.scale);
  }
  template <typename F> void for_each(F&& f) { visit(*this, std::forward<F>(f)); }
  template <typename F> void for_each(F&& f) const { visit(*this, std::forward<F>(f)); }

  std::size_t trainable_count() const {
    std::size_t n = 0;
    for_each([&](const char*, const Tensor& t) { n += t.size(); });
    return n;
  }

  RouterParams zeros() const {
    RouterParams g = *this;
    g.for_each([](const char*, Tensor& t) { t.fill(0.0); });
    return g;
  }

  void clamp_scale() { scale[0] = std::clamp(scale[0], kScaleMin, kScaleMax); }
};

// CoOp-style base branch: learnable context vectors whose mean offsets every
// frozen class anchor. The base temperature is stored but not trained.
struct BaseBranchParams {
  Tensor context;  // kContextTokens x d
  Tensor scale;    // shape {1}

  std::size_t trainable_count() const { return context.size(); }
  BaseBranchParams zeros() const {
    return {zeros_like(context), zeros_like(scale)};
  }
};

// Uniform draws every projection from U(-1/sqrt(d), 1/sqrt(d)). Identity
// starts Wv and Wo at I, so the initial routed feature is the attention-
// weighted mean of the class's prompt features.
enum class ValueInit { Uniform, Identity };

inline RouterParams init_router(std::size_t d, std::size_t pool_size, std::size_t heads,
                                std::size_t proj_dim, std::uint64_t seed,
                                double dropout = 0.1,
                                ValueInit value_init = ValueInit::Identity) {
  if (heads == 0 || d % heads != 0)
    throw ConfigError("head count " + std::to_string(heads) +
                      " does not divide feature dimension " + std::to_string(d));
  if (pool_size == 0) throw EmptyPoolError("router needs a nonempty prompt pool");
  if (proj_dim == 0) throw ConfigError("projection dimension must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0,1)");
  RouterParams p;
  p.heads = heads;
  p.dropout = dropout;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  Engine engine(derive_seed(seed, {0x524f55544552ULL}));
  std::uniform_real_distribution<double> uniform(-bound, bound);
  auto matrix = [&](std::size_t rows, std::size_t cols) {
    Tensor t({rows, cols});
    for (double& v : t.values()) v = uniform(engine);
    return t;
  };
  p.wq = matrix(d, d); p.bq = Tensor({d});
  p.wk = matrix(d, d); p.bk = Tensor({d});
  p.wv = matrix(d, d); p.bv = Tensor({d});
  p.wo = matrix(d, d); p.bo = Tensor({d});
  p.proj = matrix(d, proj_dim); p.proj_bias = Tensor({proj_dim});
  if (value_init == ValueInit::Identity)
    for (Tensor* w : {&p.wv, &p.wo}) {
      w->fill(0.0);
      for (std::size_t i = 0; i < d; ++i) (*w)(i, i) = 1.0;
    }
  p.scale = Tensor::scalar(kInitialScale);
  return p;
}

inline BaseBranchParams init_base_branch(std::size_t d, std::uint64_t seed,
                                         double scale = kInitialScale) {
  BaseBranchParams b;
  b.context = Tensor({kContextTokens, d});
  Engine engine(derive_seed(seed, {0x42415345ULL}));
  std::normal_distribution<double> normal(0.0, 0.02);
  for (double& v : b.context.values()) v = normal(engine);
  b.scale = Tensor::scalar(scale);
  return b;
}

// Keys and values of every class pool, projected once per parameter state.
struct PoolProjection {
  Tensor keys;    // C x V x d
  Tensor values;  // C x V x d
};

inline PoolProjection project_pool(const RouterParams& p, const Tensor& pool) {
  if (pool.rank() != 3 || pool.extent(2) != p.dim())
    throw ShapeError("prompt pool must be C x V x d with d=" + std::to_string(p.dim()));
  const std::size_t rows = pool.extent(0) * pool.extent(1), d = p.dim();
  PoolProjection out{Tensor(pool.shape()), Tensor(pool.shape())};
  for (std::size_t r = 0; r < rows; ++r) {
    std::span<const double> f(pool.data() + r * d, d);
    affine(f, p.wk, p.bk.values(), std::span<double>(out.keys.data() + r * d, d));
    affine(f, p.wv, p.bv.values(), std::span<double>(out.values.data() + r * d, d));
  }
  return out;
}

inline void project_pool_backward(const RouterParams& p, const Tensor& pool,
                                  const PoolProjection& d_proj, RouterParams& grads) {
  const std::size_t rows = pool.extent(0) * pool.extent(1), d = p.dim();
  for (std::size_t r = 0; r < rows; ++r) {
    std::span<const double> f(pool.data() + r * d, d);
    affine_backward(f, p.wk, std::span<const double>(d_proj.keys.data() + r * d, d), grads.wk,
                    grads.bk.values(), {});
    affine_backward(f, p.wv, std::span<const double>(d_proj.values.data() + r * d, d),
                    grads.wv, grads.bv.values(), {});
  }
}

// Inverted-dropout keep scales (C x H x V) drawn from a seed: 0 for dropped
// weights, 1/(1-rate) for kept ones.
inline Tensor dropout_keep(std::size_t classes, std::size_t heads, std::size_t pool,
                           double rate, std::uint64_t seed) {
  Tensor keep({classes, heads, pool}, 1.0);
  if (rate <= 0.0) return keep;
  const double kept = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < keep.size(); ++i)
    keep[i] = unit_interval(derive_seed(seed, {i})) < rate ? 0.0 : kept;
  return keep;
}

struct RoutingOutput {
  Tensor routed;   // f_rb, C x d
  Tensor weights;  // W_r, C x V
};

// Intermediates kept for the backward pass.
struct RoutingTrace {
  std::vector<double> query;
  Tensor head_weights;  // C x H x V
  Tensor contexts;      // C x d
};

inline RoutingOutput route(const RouterParams& p, std::span<const double> image,
                           const PoolProjection& pool, const Tensor* keep,
                           RoutingTrace* trace = nullptr) {
  const std::size_t d = p.dim();
  if (image.size() != d) throw ShapeError("image feature has the wrong dimension");
  const std::size_t C = pool.keys.extent(0), V = pool.keys.extent(1), H = p.heads;
  if (V == 0) throw EmptyPoolError("empty prompt pool");
  std::vector<double> query(d);
  affine(image, p.wq, p.bq.values(), query);
  RoutingOutput out{Tensor({C, d}), Tensor({C, V})};
  if (trace) {
    trace->head_weights = Tensor({C, H, V});
    trace->contexts = Tensor({C, d});
  }
  for (std::size_t c = 0; c < C; ++c) {
    std::span<const double> scale;
    if (keep) scale = std::span<const double>(keep->data() + c * H * V, H * V);
    auto r = attend(query, pool.keys.row(c), pool.values.row(c), V, H, scale);
    affine(r.context, p.wo, p.bo.values(), out.routed.row(c));
    std::copy(r.weights.begin(), r.weights.end(), out.weights.row(c).begin());
    if (trace) {
      std::copy(r.head_weights.begin(), r.head_weights.end(), trace->head_weights.row(c).begin());
      std::copy(r.context.begin(), r.context.end(), trace->contexts.row(c).begin());
    }
  }
  if (trace) trace->query = std::move(query);
  return out;
}

// Backward of route(): accumulates parameter gradients for Wq/bq/Wo/bo and the
// gradients w.r.t. the projected pool into d_pool.
inline void route_backward(const RouterParams& p, std::span<const double> image,
                           const PoolProjection& pool, const Tensor* keep,
                           const RoutingTrace& trace, const Tensor& d_routed,
                           const Tensor& d_weights, RouterParams& grads,
                           PoolProjection& d_pool) {
  const std::size_t d = p.dim(), C = pool.keys.extent(0), V = pool.keys.extent(1),
                    H = p.heads;
  std::vector<double> dq(d, 0.0), dctx(d);
  for (std::size_t c = 0; c < C; ++c) {
    std::fill(dctx.begin(), dctx.end(), 0.0);
    affine_backward(trace.contexts.row(c), p.wo, d_routed.row(c), grads.wo, grads.bo.values(),
                    dctx);
    std::span<const double> scale;
    if (keep) scale = std::span<const double>(keep->data() + c * H * V, H * V);
    attend_backward(trace.query, pool.keys.row(c), pool.values.row(c), V, H,
                    trace.head_weights.row(c), scale, dctx, d_weights.row(c), dq,
                    d_pool.keys.row(c), d_pool.values.row(c));
  }
  affine_backward(image, p.wq, dq, grads.wq, grads.bq.values(), {});
}

// C-MHA over raw prompt features: query from the image, keys = values = the
// class's prompt pool, shared parameters for every class. With a dropout seed
// the context uses dropped attention weights; the returned W_r never does.
inline RoutingOutput c_mha_forward(const RouterParams& p, std::span<const double> image,
                                   const Tensor& pool,
                                   std::optional<std::uint64_t> dropout_seed = std::nullopt) {
  if (pool.rank() != 3) throw ShapeError("prompt pool must be C x V x d");
  const PoolProjection projected = project_pool(p, pool);
  if (dropout_seed && p.dropout > 0.0) {
    const Tensor keep =
        dropout_keep(pool.extent(0), p.heads, pool.extent(1), p.dropout, *dropout_seed);
    return route(p, image, projected, &keep);
  }
  return route(p, image, projected, nullptr);
}

inline double similarity(Similarity kind, std::span<const double> a, std::span<const double> b) {
  return kind == Similarity::Cosine ? cosine(a, b) : dot(a, b);
}

// s * sim(f_rb[c], f_ib) per class. Zero-norm routed rows score 0 and are
// counted in *zero_norm when given.
inline std::vector<double> semantic_logits(const Tensor& routed, std::span<const double> image,
                                           double scale, Similarity kind = Similarity::Cosine,
                                           std::size_t* zero_norm = nullptr) {
  if (routed.rank() != 2 || routed.extent(1) != image.size())
    throw ShapeError("routed features must be C x d with d = image length");
  std::vector<double> logits(routed.extent(0));
  for (std::size_t c = 0; c < logits.size(); ++c) {
    if (zero_norm && norm(routed.row(c)) == 0.0) ++*zero_norm;
    logits[c] = scale * similarity(kind, routed.row(c), image);
  }
  return logits;
}

inline void semantic_logits_backward(const Tensor& routed, std::span<const double> image,
                                     double scale, Similarity kind,
                                     std::span<const double> d_logits, Tensor& d_routed,
                                     double& d_scale) {
  for (std::size_t c = 0; c < routed.extent(0); ++c) {
    const double g = d_logits[c];
    if (g == 0.0) continue;
    d_scale += g * similarity(kind, routed.row(c), image);
    if (kind == Similarity::Cosine)
      cosine_backward(routed.row(c), image, g * scale, d_routed.row(c), {});
    else
      axpy(g * scale, image, d_routed.row(c));
  }
}

inline std::vector<double> context_mean(const BaseBranchParams& base) {
  const std::size_t n = base.context.extent(0), d = base.context.extent(1);
  std::vector<double> m(d, 0.0);
  for (std::size_t k = 0; k < n; ++k) axpy(1.0 / static_cast<double>(n), base.context.row(k), m);
  return m;
}

// s_base * cos(f_ib, normalize(anchor_c + mean(ctx))).
inline std::vector<double> base_logits(const BaseBranchParams& base,
                                       std::span<const double> image, const Tensor& anchors) {
  if (anchors.rank() != 2 || anchors.extent(1) != image.size() ||
      base.context.extent(1) != image.size())
    throw ShapeError("base branch dimensions disagree with the image feature");
  const auto m = context_mean(base);
  std::vector<double> prompt(image.size()), logits(anchors.extent(0));
  for (std::size_t c = 0; c < logits.size(); ++c) {
    for (std::size_t i = 0; i < prompt.size(); ++i) prompt[i] = anchors(c, i) + m[i];
    logits[c] = base.scale[0] * cosine(image, prompt);
  }
  return logits;
}

inline void base_logits_backward(const BaseBranchParams& base, std::span<const double> image,
                                 const Tensor& anchors, std::span<const double> d_logits,
                                 BaseBranchParams& grads) {
  const auto m = context_mean(base);
  const std::size_t d = image.size(), n = base.context.extent(0);
  std::vector<double> prompt(d), d_mean(d, 0.0);
  for (std::size_t c = 0; c < anchors.extent(0); ++c) {
    if (d_logits[c] == 0.0) continue;
    for (std::size_t i = 0; i < d; ++i) prompt[i] = anchors(c, i) + m[i];
    grads.scale[0] += d_logits[c] * cosine(image, prompt);
    cosine_backward(image, prompt, d_logits[c] * base.scale[0], {}, d_mean);
  }
  for (std::size_t k = 0; k < n; ++k) axpy(1.0 / static_cast<double>(n), d_mean, grads.context.row(k));
}

}  // namespace mdpr
