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
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mdpr/bundle.hpp"
#include "mdpr/data.hpp"
#include "mdpr/encoders.hpp"
#include "mdpr/error.hpp"
#include "mdpr/numerics.hpp"
#include "mdpr/prompts.hpp"
#include "mdpr/tensor.hpp"

namespace mdpr {

// Offline class knowledge: C x V prompt records with their features, the
// per-class averaged feature, the prior alignment matrix and the zero-shot
// confusion counts that chose the DF targets. Immutable once built.
struct KnowledgeBase {
  std::vector<std::string> class_names;
  std::vector<Dimension> dimensions;               // V entries, storage order
  std::vector<std::vector<PromptRecord>> prompts;  // C x V
  Tensor prompt_features;                          // C x V x d
  Tensor averaged_features;                        // C x d
  Tensor prior;                                    // C x V
  Tensor confusion;                                // C x C counts
  std::vector<std::size_t> confusable;             // C
  std::string provenance;

  std::size_t num_classes() const { return class_names.size(); }
  std::size_t pool_size() const { return dimensions.size(); }
  std::size_t dim() const { return prompt_features.extent(2); }
};

struct PriorStats {
  double mean = 0.0;
  double std = 0.0;  // population
  double median = 0.0;
};

// Zero-shot prediction: nearest class anchor by cosine, ties to the lowest id.
inline std::size_t zero_shot_predict(std::span<const double> image, const Tensor& anchors) {
  std::size_t best = 0;
  double best_score = -2.0;
  for (std::size_t c = 0; c < anchors.extent(0); ++c) {
    const double s = cosine(image, anchors.row(c));
    if (s > best_score) {
      best_score = s;
      best = c;
    }
  }
  return best;
}

inline Tensor zero_shot_confusion(const FeatureProvider& provider, const LongTailDataset& ds) {
  if (ds.train_size() == 0) throw ValidationError("zero-shot confusion needs training samples");
  const std::size_t C = provider.num_classes();
  const Tensor anchors = provider.anchors();
  Tensor K({C, C});
  for (std::size_t i = 0; i < ds.train_size(); ++i) {
    const std::size_t y = ds.train_labels[i];
    if (y >= C) throw ValidationError("dataset label outside [0, C)");
    K(y, zero_shot_predict(ds.train_features.row(i), anchors)) += 1.0;
  }
  return K;
}

// argmax over c' != c of K[c,c'] (lowest id on ties); a class that is never
// confused falls back to its nearest other anchor.
inline std::vector<std::size_t> confusable_targets(const Tensor& confusion,
                                                   const Tensor& anchors) {
  const std::size_t C = confusion.extent(0);
  if (C < 2) throw ValidationError("DF targets need at least two classes");
  std::vector<std::size_t> out(C);
  for (std::size_t c = 0; c < C; ++c) {
    std::optional<std::size_t> best;
    for (std::size_t o = 0; o < C; ++o) {
      if (o == c || confusion(c, o) <= 0.0) continue;
      if (!best || confusion(c, o) > confusion(c, *best)) best = o;
    }
    if (!best) {
      double best_sim = -2.0;
      for (std::size_t o = 0; o < C; ++o) {
        if (o == c) continue;
        const double s = cosine(anchors.row(c), anchors.row(o));
        if (s > best_sim) {
          best_sim = s;
          best = o;
        }
      }
    }
    out[c] = *best;
  }
  return out;
}

inline std::vector<std::vector<PromptRecord>> render_prompt_pool(
    const std::vector<std::string>& class_names, const std::vector<std::size_t>& confusable,
    std::size_t word_count = kDefaultWordCount) {
  std::vector<std::vector<PromptRecord>> prompts(class_names.size());
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    for (Dimension dim : kAllDimensions) {
      PromptRecord r;
      r.class_id = c;
      r.dimension = dim;
      r.word_count = word_count;
      std::optional<std::string_view> other;
      if (dim == Dimension::DF) {
        r.confusable = confusable.at(c);
        other = class_names.at(*r.confusable);
      }
      r.text = render_prompt(dim, class_names[c], other, word_count);
      prompts[c].push_back(std::move(r));
    }
  }
  return prompts;
}

// Recomputes averaged features and the prior matrix from prompt features.
inline void derive_kb_tensors(KnowledgeBase& kb, const Tensor& anchors) {
  const std::size_t C = kb.prompt_features.extent(0), V = kb.prompt_features.extent(1),
                    d = kb.prompt_features.extent(2);
  kb.averaged_features = Tensor({C, d});
  kb.prior = Tensor({C, V});
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t v = 0; v < V; ++v) {
      std::span<const double> f(&kb.prompt_features(c, v, 0), d);
      axpy(1.0 / static_cast<double>(V), f, kb.averaged_features.row(c));
      kb.prior(c, v) = cosine(f, anchors.row(c));
    }
  }
}

inline KnowledgeBase build_knowledge_base(const FeatureProvider& provider,
                                          const std::vector<std::string>& class_names,
                                          const LongTailDataset& ds,
                                          std::size_t word_count = kDefaultWordCount) {
  const std::size_t C = provider.num_classes(), d = provider.dim();
  if (class_names.size() != C)
    throw ValidationError("expected " + std::to_string(C) + " class names, got " +
                          std::to_string(class_names.size()));
  KnowledgeBase kb;
  kb.class_names = class_names;
  kb.dimensions.assign(kAllDimensions.begin(), kAllDimensions.end());
  kb.confusion = zero_shot_confusion(provider, ds);
  const Tensor anchors = provider.anchors();
  kb.confusable = confusable_targets(kb.confusion, anchors);
  kb.prompts = render_prompt_pool(class_names, kb.confusable, word_count);
  kb.prompt_features = Tensor({C, kNumDimensions, d});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t v = 0; v < kNumDimensions; ++v) {
      const auto f = provider.encode_text(kb.prompts[c][v]);
      std::copy(f.begin(), f.end(), &kb.prompt_features(c, v, 0));
    }
  derive_kb_tensors(kb, anchors);
  kb.provenance = "built from zero-shot confusion over " + std::to_string(ds.train_size()) +
                  " training samples";
  return kb;
}

// Knowledge base with one dimension's slice removed; averaged features and
// the prior are recomputed over the remaining dimensions. Confusion and DF
// targets are kept as they were.
inline KnowledgeBase without_dimension(const KnowledgeBase& kb, Dimension removed,
                                       const Tensor& anchors) {
  auto it = std::find(kb.dimensions.begin(), kb.dimensions.end(), removed);
  if (it == kb.dimensions.end())
    throw ValidationError("knowledge base has no " + std::string(dimension_label(removed)) +
                          " dimension");
  if (kb.pool_size() < 2) throw ValidationError("cannot remove the only dimension");
  const auto skip = static_cast<std::size_t>(it - kb.dimensions.begin());
  const std::size_t C = kb.num_classes(), V = kb.pool_size() - 1, d = kb.dim();
  KnowledgeBase out = kb;
  out.dimensions.erase(out.dimensions.begin() + static_cast<std::ptrdiff_t>(skip));
  out.prompt_features = Tensor({C, V, d});
  for (std::size_t c = 0; c < C; ++c) {
    out.prompts[c].erase(out.prompts[c].begin() + static_cast<std::ptrdiff_t>(skip));
    for (std::size_t v = 0, src = 0; src < kb.pool_size(); ++src) {
      if (src == skip) continue;
      std::copy_n(&kb.prompt_features(c, src, 0), d, &out.prompt_features(c, v, 0));
      ++v;
    }
  }
  derive_kb_tensors(out, anchors);
  out.provenance = kb.provenance + "; without " + std::string(dimension_label(removed));
  return out;
}

inline PriorStats prior_stats(const Tensor& prior) {
  if (prior.empty()) throw ValidationError("prior matrix is empty");
  std::vector<double> v(prior.values().begin(), prior.values().end());
  const double n = static_cast<double>(v.size());
  PriorStats s;
  for (double x : v) s.mean += x;
  s.mean /= n;
  for (double x : v) s.std += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(s.std / n);
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  s.median = v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
  return s;
}

inline PriorStats prior_stats(const KnowledgeBase& kb) { return prior_stats(kb.prior); }

inline constexpr int kKbFormatVersion = 1;
inline constexpr const char* kKbFile = "kb.json";

inline void save_kb(const KnowledgeBase& kb, const std::filesystem::path& dir) {
  Bundle bundle;
  bundle.d = kb.dim();
  bundle.provenance = kb.provenance;
  bundle.add("f_p", kb.prompt_features, DType::F64);
  bundle.add("f_avg", kb.averaged_features, DType::F64);
  bundle.add("M", kb.prior, DType::F64);
  bundle.add("K", kb.confusion, DType::F64);
  write_bundle(dir, bundle, "kb.bin");

  nlohmann::json j;
  j["format_version"] = kKbFormatVersion;
  j["class_names"] = kb.class_names;
  std::vector<std::string> labels;
  for (Dimension d : kb.dimensions) labels.emplace_back(dimension_label(d));
  j["dim_labels"] = labels;
  j["prompts"] = nlohmann::json::array();
  for (const auto& row : kb.prompts) {
    nlohmann::json jr = nlohmann::json::array();
    for (const auto& r : row) {
      nlohmann::json jp = {{"dimension", std::string(dimension_label(r.dimension))},
                           {"text", r.text},
                           {"word_count", r.word_count}};
      if (r.confusable) jp["confusable"] = *r.confusable;
      jr.push_back(std::move(jp));
    }
    j["prompts"].push_back(std::move(jr));
  }
  j["confusable"] = kb.confusable;
  j["provenance"] = kb.provenance;
  write_text_file(dir / kKbFile, j.dump(2) + "\n");
}

inline KnowledgeBase load_kb(const std::filesystem::path& dir) {
  const auto path = dir / kKbFile;
  if (!std::filesystem::exists(path)) throw LoadError("no " + std::string(kKbFile) + " in " + dir.string());
  const nlohmann::json j = read_json_file(path);
  auto field = [&](const char* name) -> const nlohmann::json& {
    if (!j.contains(name)) throw LoadError(std::string(kKbFile) + " is missing field '" + name + "'");
    return j[name];
  };
  KnowledgeBase kb;
  try {
    if (field("format_version").get<int>() != kKbFormatVersion)
      throw LoadError("unsupported kb.json format_version");
    kb.class_names = field("class_names").get<std::vector<std::string>>();
    for (const auto& l : field("dim_labels").get<std::vector<std::string>>())
      kb.dimensions.push_back(parse_dimension(l));
    kb.confusable = field("confusable").get<std::vector<std::size_t>>();
    kb.provenance = field("provenance").get<std::string>();
    const auto& prompts = field("prompts");
    for (std::size_t c = 0; c < prompts.size(); ++c) {
      std::vector<PromptRecord> row;
      for (const auto& jp : prompts[c]) {
        PromptRecord r;
        r.class_id = c;
        r.dimension = parse_dimension(jp.at("dimension").get<std::string>());
        r.text = jp.at("text").get<std::string>();
        r.word_count = jp.at("word_count").get<std::size_t>();
        if (jp.contains("confusable")) r.confusable = jp["confusable"].get<std::size_t>();
        row.push_back(std::move(r));
      }
      kb.prompts.push_back(std::move(row));
    }
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string(kKbFile) + ": " + e.what());
  } catch (const ValidationError& e) {
    throw LoadError(std::string(kKbFile) + ": " + e.what());
  }

  const Bundle bundle = read_bundle(dir);
  kb.prompt_features = bundle.get("f_p");
  kb.averaged_features = bundle.get("f_avg");
  kb.prior = bundle.get("M");
  kb.confusion = bundle.get("K");

  const std::size_t C = kb.class_names.size(), V = kb.dimensions.size();
  if (kb.prompt_features.rank() != 3 || kb.prompt_features.extent(0) != C ||
      kb.prompt_features.extent(1) != V)
    throw IntegrityError("f_p shape " + shape_string(kb.prompt_features.shape()) +
                         " disagrees with kb.json");
  const std::size_t d = kb.prompt_features.extent(2);
  if (kb.averaged_features.shape() != Shape{C, d} || kb.prior.shape() != Shape{C, V} ||
      kb.confusion.shape() != Shape{C, C} || kb.confusable.size() != C ||
      kb.prompts.size() != C)
    throw IntegrityError("knowledge base tensors disagree with kb.json");
  for (const auto& row : kb.prompts)
    if (row.size() != V) throw IntegrityError("prompt row length disagrees with dim_labels");
  return kb;
}

}  // namespace mdpr
