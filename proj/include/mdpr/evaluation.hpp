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
#include <cstdio>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mdpr/data.hpp"
#include "mdpr/error.hpp"
#include "mdpr/knowledge_base.hpp"
#include "mdpr/model.hpp"
#include "mdpr/tensor.hpp"

namespace mdpr {

// (1 - beta) * base + beta * routing.
inline std::vector<double> fuse_logits(std::span<const double> base,
                                       std::span<const double> routing, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0))
    throw ValidationError("fusion beta must lie in [0,1], got " + std::to_string(beta));
  if (base.size() != routing.size()) throw ShapeError("fused logits differ in length");
  std::vector<double> out(base.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = (1.0 - beta) * base[i] + beta * routing[i];
  return out;
}

inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

// Accuracies are percentages. Group accuracies are absent when the group has
// no classes (or no test samples).
struct EvalReport {
  double overall = 0.0;
  std::optional<double> many, medium, few;
  std::vector<double> per_class;          // C
  std::vector<std::size_t> per_class_count;
  Tensor confusion;                       // C x C, rows = true class
  std::size_t samples = 0;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

// Builds a report from predictions; used directly by tests with hand-made
// predictions and by evaluate().
inline EvalReport make_report(std::span<const std::size_t> labels,
                              std::span<const std::size_t> predictions,
                              std::span<const ShotGroup> groups) {
  if (labels.empty()) throw ValidationError("evaluation needs a nonempty test split");
  if (labels.size() != predictions.size()) throw ShapeError("labels and predictions differ");
  const std::size_t C = groups.size();
  EvalReport r;
  r.samples = labels.size();
  r.per_class.assign(C, 0.0);
  r.per_class_count.assign(C, 0);
  r.confusion = Tensor({C, C});
  std::size_t correct = 0;
  std::size_t group_total[3] = {0, 0, 0}, group_correct[3] = {0, 0, 0};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::size_t y = labels[i], p = predictions[i];
    if (y >= C || p >= C) throw ValidationError("label or prediction outside [0, C)");
    r.confusion(y, p) += 1.0;
    ++r.per_class_count[y];
    const auto g = static_cast<std::size_t>(groups[y]);
    ++group_total[g];
    if (y == p) {
      ++correct;
      ++group_correct[g];
      r.per_class[y] += 1.0;
    }
  }
  for (std::size_t c = 0; c < C; ++c)
    if (r.per_class_count[c]) r.per_class[c] *= 100.0 / static_cast<double>(r.per_class_count[c]);
  r.overall = 100.0 * static_cast<double>(correct) / static_cast<double>(labels.size());
  auto group_acc = [&](ShotGroup g) -> std::optional<double> {
    const auto i = static_cast<std::size_t>(g);
    if (group_total[i] == 0) return std::nullopt;
    return 100.0 * static_cast<double>(group_correct[i]) / static_cast<double>(group_total[i]);
  };
  r.many = group_acc(ShotGroup::Many);
  r.medium = group_acc(ShotGroup::Medium);
  r.few = group_acc(ShotGroup::Few);
  return r;
}

inline std::vector<std::size_t> predict(const ModelParams& params, const Tensor& features,
                                        const KnowledgeBase& kb, const Tensor& anchors,
                                        double beta) {
  if (!(beta >= 0.0 && beta <= 1.0))
    throw ValidationError("fusion beta must lie in [0,1], got " + std::to_string(beta));
  const PoolProjection pool = project_pool(params.router, kb.prompt_features);
  std::vector<std::size_t> out;
  out.reserve(features.extent(0));
  for (std::size_t i = 0; i < features.extent(0); ++i) {
    const auto x = features.row(i);
    if (beta == 0.0) {
      out.push_back(argmax(base_logits(params.base, x, anchors)));
      continue;
    }
    const auto logits = branch_logits(params, x, pool, anchors);
    out.push_back(argmax(fuse_logits(logits.base, logits.routing, beta)));
  }
  return out;
}

// Fused-logit inference over the test split; groups come from the training counts.
inline EvalReport evaluate(const ModelParams& params, const LongTailDataset& ds,
                           const KnowledgeBase& kb, const Tensor& anchors, double beta) {
  if (ds.test_size() == 0) throw ValidationError("evaluation needs a nonempty test split");
  const auto predictions = predict(params, ds.test_features, kb, anchors, beta);
  return make_report(ds.test_labels, predictions, ds.groups);
}

// Mean per-class accuracy over the given classes (test splits are balanced,
// so this equals their pooled accuracy).
inline double subset_accuracy(const EvalReport& r, std::span<const std::size_t> classes) {
  double correct = 0.0, total = 0.0;
  for (std::size_t c : classes) {
    correct += r.per_class[c] * static_cast<double>(r.per_class_count[c]) / 100.0;
    total += static_cast<double>(r.per_class_count[c]);
  }
  return total > 0.0 ? 100.0 * correct / total : 0.0;
}

inline nlohmann::json report_json(const EvalReport& r) {
  auto opt = [](const std::optional<double>& v) -> nlohmann::json {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  nlohmann::json j;
  j["overall"] = r.overall;
  j["many"] = opt(r.many);
  j["medium"] = opt(r.medium);
  j["few"] = opt(r.few);
  j["per_class"] = r.per_class;
  j["per_class_count"] = r.per_class_count;
  j["samples"] = r.samples;
  std::vector<std::vector<double>> conf;
  for (std::size_t i = 0; i < r.confusion.extent(0); ++i)
    conf.emplace_back(r.confusion.row(i).begin(), r.confusion.row(i).end());
  j["confusion"] = conf;
  return j;
}

// One row per variant, columns name/All/Many/Med/Few; absent groups print "-".
inline std::string table_header() { return "name\tAll\tMany\tMed\tFew\n"; }

inline std::string table_row(const std::string& name, const EvalReport& r) {
  auto cell = [](const std::optional<double>& v) {
    if (!v) return std::string("-");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", *v);
    return std::string(buf);
  };
  return name + "\t" + cell(r.overall) + "\t" + cell(r.many) + "\t" + cell(r.medium) + "\t" +
         cell(r.few) + "\n";
}

}  // namespace mdpr
