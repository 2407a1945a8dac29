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

#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"
#include "mdpr/data.hpp"
#include "mdpr/evaluation.hpp"
#include "mdpr/knowledge_base.hpp"
#include "mdpr/training.hpp"

namespace mdpr {

struct AblationRow {
  std::string name;
  double beta = 0.0;
  LossWeights weights;
  std::size_t pool_size = 0;
  EvalReport report;
};

struct AblationTable {
  std::vector<AblationRow> module_rows;     // base, base+sem, base+sem+reg
  std::vector<AblationRow> knowledge_rows;  // All, w/o GA .. w/o DF
};

inline AblationRow run_variant(const std::string& name, TrainConfig config, LossWeights weights,
                               double beta, const LongTailDataset& ds, const KnowledgeBase& kb,
                               const Tensor& anchors) {
  config.loss = weights;
  config.beta = beta;
  config.eval_every = 0;
  const auto trained = train(config, ds, kb, anchors);
  return {name, beta, weights, kb.pool_size(), evaluate(trained.params, ds, kb, anchors, beta)};
}

// Base only is scored with pure base logits (beta = 0).
inline std::vector<AblationRow> run_module_ablation(const TrainConfig& config,
                                                    const LongTailDataset& ds,
                                                    const KnowledgeBase& kb,
                                                    const Tensor& anchors) {
  LossWeights base = config.loss;
  base.sem = base.pa = base.ka = 0.0;
  LossWeights sem = config.loss;
  sem.pa = sem.ka = 0.0;
  return {run_variant("base", config, base, 0.0, ds, kb, anchors),
          run_variant("base+sem", config, sem, config.beta, ds, kb, anchors),
          run_variant("base+sem+reg", config, config.loss, config.beta, ds, kb, anchors)};
}

// Full model trained on the complete pool and on each pool with one
// dimension removed.
inline std::vector<AblationRow> run_knowledge_ablation(const TrainConfig& config,
                                                       const LongTailDataset& ds,
                                                       const KnowledgeBase& kb,
                                                       const Tensor& anchors) {
  std::vector<AblationRow> rows;
  rows.push_back(run_variant("All", config, config.loss, config.beta, ds, kb, anchors));
  for (Dimension dim : kAllDimensions) {
    const KnowledgeBase reduced = without_dimension(kb, dim, anchors);
    rows.push_back(run_variant("w/o " + std::string(dimension_label(dim)), config, config.loss,
                               config.beta, ds, reduced, anchors));
  }
  return rows;
}

inline AblationTable run_ablation(const TrainConfig& config, const LongTailDataset& ds,
                                  const FeatureProvider& provider,
                                  const std::vector<std::string>& class_names) {
  const KnowledgeBase kb = build_knowledge_base(provider, class_names, ds);
  const Tensor anchors = provider.anchors();
  return {run_module_ablation(config, ds, kb, anchors),
          run_knowledge_ablation(config, ds, kb, anchors)};
}

inline nlohmann::json ablation_json(const std::vector<AblationRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json j;
    j["name"] = r.name;
    j["beta"] = r.beta;
    j["inference"] = r.beta == 0.0 ? "base logits only" : "fused logits";
    j["lambda_sem"] = r.weights.sem;
    j["lambda_pa"] = r.weights.pa;
    j["lambda_ka"] = r.weights.ka;
    j["pool_size"] = r.pool_size;
    j["report"] = report_json(r.report);
    out.push_back(std::move(j));
  }
  return out;
}

inline std::string ablation_text(const std::vector<AblationRow>& rows) {
  std::string out = table_header();
  for (const auto& r : rows) out += table_row(r.name, r.report);
  return out;
}

}  // namespace mdpr
