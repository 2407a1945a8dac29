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

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mdpr/bundle.hpp"
#include "mdpr/knowledge_base.hpp"
#include "mdpr/losses.hpp"
#include "mdpr/routing.hpp"
#include "mdpr/tensor.hpp"

namespace mdpr {

// Everything a checkpoint holds: the trainable router and base branch.
struct ModelParams {
  RouterParams router;
  BaseBranchParams base;

  ModelParams zeros() const { return {router.zeros(), base.zeros()}; }
  std::size_t trainable_count() const {
    return router.trainable_count() + base.trainable_count();
  }
};

inline ModelParams init_model(std::size_t d, std::size_t pool_size, std::size_t heads,
                              std::size_t proj_dim, double dropout, std::uint64_t seed,
                              Similarity similarity = Similarity::Cosine,
                              double base_scale = kInitialScale,
                              ValueInit value_init = ValueInit::Identity) {
  ModelParams m{init_router(d, pool_size, heads, proj_dim, derive_seed(seed, {1}), dropout,
                            value_init),
                init_base_branch(d, derive_seed(seed, {2}), base_scale)};
  m.router.similarity = similarity;
  return m;
}

// Fixed inputs of the training objective.
struct ObjectiveInputs {
  const KnowledgeBase* kb = nullptr;
  const Tensor* anchors = nullptr;      // C x d
  std::vector<double> log_prior;        // ln(n_c / N) of the training split
  LossWeights weights;
};

struct BatchLoss {
  LossComponents parts;
  EffectiveWeights effective{};
  double total = 0.0;
  std::size_t zero_norm_routed = 0;
};

// Mean-over-batch L_base, L_sem and L_ka; L_pa over the classes present in
// the batch using each class's batch-mean routing weights. With `grads` the
// gradient of the weighted total is accumulated into it. `dropout_seed`
// enables training-mode attention dropout.
inline BatchLoss batch_objective(const ModelParams& params, const Tensor& features,
                                 std::span<const std::size_t> labels,
                                 std::span<const std::size_t> rows,
                                 const ObjectiveInputs& in, std::size_t epoch,
                                 std::optional<std::uint64_t> dropout_seed,
                                 ModelParams* grads) {
  const KnowledgeBase& kb = *in.kb;
  const RouterParams& router = params.router;
  const std::size_t B = rows.size(), C = kb.num_classes(), V = kb.pool_size(),
                    d = router.dim(), H = router.heads;
  if (B == 0) throw ValidationError("empty batch");
  const double inv_b = 1.0 / static_cast<double>(B);
  const double s = router.scale[0];
  const LossWeights& w = in.weights;

  BatchLoss out;
  out.effective = effective_weights(w, epoch);
  const auto& eff = out.effective;
  const bool need_router = w.sem != 0.0 || w.pa != 0.0 || w.ka != 0.0;

  const PoolProjection pool = project_pool(router, kb.prompt_features);
  std::vector<RoutingTrace> traces(B);
  std::vector<RoutingOutput> routed(B);
  std::vector<Tensor> keeps(B);
  std::vector<std::vector<double>> d_sem(B, std::vector<double>(C, 0.0));
  Tensor weight_sum({C, V});
  std::vector<std::size_t> present(C, 0);

  for (std::size_t b = 0; b < B; ++b) {
    const auto x = features.row(rows[b]);
    const std::size_t y = labels[rows[b]];

    std::vector<double> d_base(C, 0.0);
    const auto zb = base_logits(params.base, x, *in.anchors);
    out.parts.base += inv_b * compensated_ce(zb, y, in.log_prior,
                                             w.compensate_base ? w.tau : 0.0,
                                             grads ? std::span<double>(d_base)
                                                   : std::span<double>{},
                                             eff.base * inv_b);
    if (grads) base_logits_backward(params.base, x, *in.anchors, d_base, grads->base);

    if (!need_router) continue;
    const Tensor* keep = nullptr;
    if (dropout_seed && router.dropout > 0.0) {
      keeps[b] = dropout_keep(C, H, V, router.dropout, derive_seed(*dropout_seed, {b}));
      keep = &keeps[b];
    }
    routed[b] = route(router, x, pool, keep, grads ? &traces[b] : nullptr);
    const auto zs = semantic_logits(routed[b].routed, x, s, router.similarity,
                                    &out.zero_norm_routed);
    out.parts.sem += inv_b * compensated_ce(zs, y, in.log_prior, w.tau,
                                            grads ? std::span<double>(d_sem[b])
                                                  : std::span<double>{},
                                            eff.sem * inv_b);
    axpy(1.0, routed[b].weights.row(y), weight_sum.row(y));
    ++present[y];
  }

  if (need_router) {
    // Prior alignment over present classes.
    std::vector<std::size_t> classes;
    for (std::size_t c = 0; c < C; ++c)
      if (present[c]) classes.push_back(c);
    Tensor mean_w({classes.size(), V}), prior_rows({classes.size(), V});
    for (std::size_t i = 0; i < classes.size(); ++i) {
      axpy(1.0 / static_cast<double>(present[classes[i]]), weight_sum.row(classes[i]),
           mean_w.row(i));
      std::copy_n(kb.prior.row(classes[i]).begin(), V, prior_rows.row(i).begin());
    }
    Tensor d_mean_w({classes.size(), V});
    out.parts.pa = prior_alignment_loss(mean_w, prior_rows, grads ? &d_mean_w : nullptr, eff.pa);

    PoolProjection d_pool;
    if (grads) d_pool = {zeros_like(pool.keys), zeros_like(pool.values)};
    std::vector<std::size_t> slot(C, 0);
    for (std::size_t i = 0; i < classes.size(); ++i) slot[classes[i]] = i;

    for (std::size_t b = 0; b < B; ++b) {
      const auto x = features.row(rows[b]);
      const std::size_t y = labels[rows[b]];
      Tensor d_routed({C, d});
      Tensor d_weights({C, V});
      KnowledgeAlignmentGrads ka_grads;
      if (grads)
        ka_grads = {d_routed.row(y), &grads->router.proj, grads->router.proj_bias.values()};
      out.parts.ka += inv_b * knowledge_alignment_loss(
                                  routed[b].routed.row(y), kb.averaged_features.row(y),
                                  router.proj, router.proj_bias.values(), w.kl_temperature,
                                  grads ? &ka_grads : nullptr, eff.ka * inv_b);
      if (!grads) continue;
      semantic_logits_backward(routed[b].routed, x, s, router.similarity, d_sem[b], d_routed,
                               grads->router.scale[0]);
      axpy(1.0 / static_cast<double>(present[y]), d_mean_w.row(slot[y]), d_weights.row(y));
      route_backward(router, x, pool, keeps[b].empty() ? nullptr : &keeps[b], traces[b],
                     d_routed, d_weights, grads->router, d_pool);
    }
    if (grads) project_pool_backward(router, kb.prompt_features, d_pool, grads->router);
  }

  out.total = total_loss(out.parts, w, epoch);
  return out;
}

// Base and routing logits for one image in evaluation mode.
struct BranchLogits {
  std::vector<double> base;
  std::vector<double> routing;
};

inline BranchLogits branch_logits(const ModelParams& params, std::span<const double> image,
                                  const PoolProjection& pool, const Tensor& anchors) {
  BranchLogits out;
  out.base = base_logits(params.base, image, anchors);
  const auto r = route(params.router, image, pool, nullptr);
  out.routing = semantic_logits(r.routed, image, params.router.scale[0],
                                params.router.similarity);
  return out;
}

inline constexpr int kCheckpointFormatVersion = 1;
inline constexpr const char* kCheckpointFile = "checkpoint.json";

struct CheckpointInfo {
  std::size_t epoch = 0;
  std::string config_hash;
};

inline void save_checkpoint(const std::filesystem::path& dir, const ModelParams& params,
                            const CheckpointInfo& info) {
  Bundle bundle;
  bundle.d = params.router.dim();
  bundle.provenance = "MDPR checkpoint";
  params.router.for_each(
      [&](const char* name, const Tensor& t) { bundle.add(name, t, DType::F64); });
  bundle.add("ctx", params.base.context, DType::F64);
  bundle.add("s_base", params.base.scale, DType::F64);
  write_bundle(dir, bundle, "checkpoint.bin");
  nlohmann::json j = {{"format_version", kCheckpointFormatVersion},
                      {"epoch", info.epoch},
                      {"optimizer_moments", false},
                      {"config_hash", info.config_hash},
                      {"heads", params.router.heads},
                      {"dropout", params.router.dropout},
                      {"semantic_similarity",
                       params.router.similarity == Similarity::Cosine ? "cosine" : "dot"}};
  write_text_file(dir / kCheckpointFile, j.dump(2) + "\n");
}

inline ModelParams load_checkpoint(const std::filesystem::path& dir,
                                   CheckpointInfo* info = nullptr) {
  const auto path = dir / kCheckpointFile;
  if (!std::filesystem::exists(path))
    throw LoadError("no " + std::string(kCheckpointFile) + " in " + dir.string());
  const auto j = read_json_file(path);
  ModelParams m;
  try {
    if (j.at("format_version").get<int>() != kCheckpointFormatVersion)
      throw LoadError("unsupported checkpoint format_version");
    m.router.heads = j.at("heads").get<std::size_t>();
    m.router.dropout = j.at("dropout").get<double>();
    const auto sim = j.at("semantic_similarity").get<std::string>();
    if (sim != "cosine" && sim != "dot") throw LoadError("unknown semantic_similarity " + sim);
    m.router.similarity = sim == "cosine" ? Similarity::Cosine : Similarity::Dot;
    if (info) {
      info->epoch = j.at("epoch").get<std::size_t>();
      info->config_hash = j.at("config_hash").get<std::string>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string(kCheckpointFile) + ": " + e.what());
  }
  const Bundle bundle = read_bundle(dir);
  m.router.for_each([&](const char* name, Tensor& t) { t = bundle.get(name); });
  m.base.context = bundle.get("ctx");
  m.base.scale = bundle.get("s_base");
  const std::size_t d = m.router.wq.rank() == 2 ? m.router.wq.extent(0) : 0;
  const Shape square{d, d}, vec{d};
  if (d == 0 || m.router.wq.shape() != square || m.router.wk.shape() != square ||
      m.router.wv.shape() != square || m.router.wo.shape() != square ||
      m.router.bq.shape() != vec || m.router.bk.shape() != vec || m.router.bv.shape() != vec ||
      m.router.bo.shape() != vec || m.router.proj.rank() != 2 ||
      m.router.proj.extent(0) != d || m.router.proj_bias.shape() != Shape{m.router.proj.extent(1)} ||
      m.router.scale.shape() != Shape{1} || m.base.context.rank() != 2 ||
      m.base.context.extent(1) != d || m.base.scale.shape() != Shape{1})
    throw IntegrityError("checkpoint tensor shapes are inconsistent");
  if (m.router.heads == 0 || d % m.router.heads != 0)
    throw IntegrityError("checkpoint head count does not divide d");
  return m;
}

}  // namespace mdpr
