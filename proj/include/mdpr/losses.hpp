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
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mdpr/error.hpp"
#include "mdpr/numerics.hpp"
#include "mdpr/tensor.hpp"

namespace mdpr {

struct LossWeights {
  double base = 1.0;
  double sem = 1.0;
  double pa = 0.1;
  double ka = 0.01;
  double kl_temperature = 2.0;
  double tau = 1.0;              // logit-adjustment strength of the compensated CE
  std::size_t warmup_epochs = 5;
  bool compensate_base = false;  // L_base is plain CE unless set

  void validate() const {
    for (double w : {base, sem, pa, ka, tau})
      if (!std::isfinite(w) || w < 0.0) throw ConfigError("loss weights must be finite and >= 0");
    if (!(kl_temperature > 0.0) || !std::isfinite(kl_temperature))
      throw ConfigError("KL temperature must be positive");
  }
};

// Cross-entropy on logits shifted by tau * ln(n_c / N). With tau = 0 this is
// plain cross-entropy. When d_logits is non-empty the gradient w.r.t. the
// unadjusted logits, times `weight`, is accumulated into it.
inline double compensated_ce(std::span<const double> logits, std::size_t label,
                             std::span<const double> log_prior, double tau,
                             std::span<double> d_logits = {}, double weight = 1.0) {
  if (label >= logits.size()) throw ValidationError("label outside [0, C)");
  std::vector<double> adjusted(logits.begin(), logits.end());
  if (tau != 0.0)
    for (std::size_t c = 0; c < adjusted.size(); ++c) adjusted[c] += tau * log_prior[c];
  const auto logp = log_softmax(adjusted);
  if (!d_logits.empty())
    for (std::size_t c = 0; c < adjusted.size(); ++c)
      d_logits[c] += weight * (std::exp(logp[c]) - (c == label ? 1.0 : 0.0));
  return -logp[label];
}

// ln(n_c / N) for strictly positive counts.
inline std::vector<double> log_class_prior(std::span<const std::size_t> counts) {
  if (counts.empty()) throw ValidationError("class counts are empty");
  double total = 0.0;
  for (std::size_t n : counts) {
    if (n == 0) throw ValidationError("class counts must be >= 1 for compensation");
    total += static_cast<double>(n);
  }
  std::vector<double> out;
  out.reserve(counts.size());
  for (std::size_t n : counts) out.push_back(std::log(static_cast<double>(n) / total));
  return out;
}

inline double compensated_ce(std::span<const double> logits, std::size_t label,
                             std::span<const std::size_t> counts, double tau) {
  if (counts.size() != logits.size()) throw ShapeError("counts and logits differ in length");
  const auto prior = log_class_prior(counts);
  return compensated_ce(logits, label, prior, tau);
}

inline double cross_entropy(std::span<const double> logits, std::size_t label) {
  return compensated_ce(logits, label, std::span<const double>{}, 0.0);
}

// Mean over classes of 1 - cos(W_r[c], M[c]). A zero W_r row scores cosine 0
// and is counted in *zero_rows. When d_weights is given (same shape as
// weights) the gradient times `scale` is accumulated into it.
inline double prior_alignment_loss(const Tensor& weights, const Tensor& prior,
                                   Tensor* d_weights = nullptr, double scale = 1.0,
                                   std::size_t* zero_rows = nullptr) {
  if (weights.rank() != 2 || weights.shape() != prior.shape())
    throw ShapeError("W_r and M must both be C x V");
  const std::size_t C = weights.extent(0);
  double loss = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    if (norm(prior.row(c)) == 0.0) throw ValidationError("prior matrix row is all zero");
    if (zero_rows && norm(weights.row(c)) == 0.0) ++*zero_rows;
    loss += 1.0 - cosine(weights.row(c), prior.row(c));
    if (d_weights)
      cosine_backward(weights.row(c), prior.row(c), -scale / static_cast<double>(C),
                      d_weights->row(c), {});
  }
  return loss / static_cast<double>(C);
}

// Destinations for knowledge-alignment gradients; routed may be empty.
struct KnowledgeAlignmentGrads {
  std::span<double> routed;  // d
  Tensor* proj = nullptr;    // d x p
  std::span<double> proj_bias;
};

// T^2 * KL(softmax(Proj(f_avg)/T) || softmax(Proj(f_rb)/T)). The averaged
// feature is a fixed input; the projection receives gradient through both
// arguments. Gradients times `scale` are accumulated into *grads.
inline double knowledge_alignment_loss(std::span<const double> routed,
                                       std::span<const double> averaged, const Tensor& proj,
                                       std::span<const double> proj_bias, double temperature,
                                       KnowledgeAlignmentGrads* grads = nullptr,
                                       double scale = 1.0) {
  if (routed.size() != proj.extent(0) || averaged.size() != proj.extent(0) ||
      proj_bias.size() != proj.extent(1))
    throw ShapeError("knowledge alignment inputs disagree with the projection shape");
  if (!(temperature > 0.0)) throw ValidationError("KL temperature must be positive");
  const std::size_t p = proj.extent(1);
  std::vector<double> zs(p), zt(p);
  affine(routed, proj, proj_bias, zs);
  affine(averaged, proj, proj_bias, zt);
  for (std::size_t i = 0; i < p; ++i) {
    zs[i] /= temperature;
    zt[i] /= temperature;
  }
  const auto log_q = log_softmax(zs);
  const auto log_p = log_softmax(zt);
  double kl = 0.0;
  for (std::size_t i = 0; i < p; ++i) kl += std::exp(log_p[i]) * (log_p[i] - log_q[i]);
  const double T2 = temperature * temperature;
  if (grads) {
    // d/dzs = T (q - p); d/dzt = T p (ln p - ln q - KL), both w.r.t. unscaled logits.
    std::vector<double> d_student(p), d_teacher(p);
    for (std::size_t i = 0; i < p; ++i) {
      const double pi = std::exp(log_p[i]), qi = std::exp(log_q[i]);
      d_student[i] = scale * temperature * (qi - pi);
      d_teacher[i] = scale * temperature * pi * (log_p[i] - log_q[i] - kl);
    }
    affine_backward(routed, proj, d_student, *grads->proj, grads->proj_bias, grads->routed);
    affine_backward(averaged, proj, d_teacher, *grads->proj, grads->proj_bias, {});
  }
  return T2 * kl;
}

// target * min(1, epoch / warmup_epochs); target when warmup_epochs == 0.
inline double warmup_weight(std::size_t epoch, std::size_t warmup_epochs, double target) {
  if (warmup_epochs == 0) return target;
  return target * std::min(1.0, static_cast<double>(epoch) / static_cast<double>(warmup_epochs));
}

struct LossComponents {
  double base = 0.0, sem = 0.0, pa = 0.0, ka = 0.0;

  friend bool operator==(const LossComponents&, const LossComponents&) = default;
};

struct EffectiveWeights {
  double base, sem, pa, ka;
};

inline EffectiveWeights effective_weights(const LossWeights& w, std::size_t epoch) {
  return {w.base, warmup_weight(epoch, w.warmup_epochs, w.sem), w.pa,
          warmup_weight(epoch, w.warmup_epochs, w.ka)};
}

inline double total_loss(const LossComponents& parts, const LossWeights& w, std::size_t epoch) {
  const std::pair<const char*, double> named[] = {
      {"L_base", parts.base}, {"L_sem", parts.sem}, {"L_pa", parts.pa}, {"L_ka", parts.ka}};
  for (const auto& [name, value] : named)
    if (!std::isfinite(value)) throw NumericError(std::string("non-finite loss component ") + name);
  const auto e = effective_weights(w, epoch);
  return e.base * parts.base + e.sem * parts.sem + e.pa * parts.pa + e.ka * parts.ka;
}

}  // namespace mdpr
