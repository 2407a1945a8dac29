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
#include <filesystem>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mdpr/bundle.hpp"
#include "mdpr/encoders.hpp"
#include "mdpr/error.hpp"
#include "mdpr/rng.hpp"
#include "mdpr/tensor.hpp"

namespace mdpr {

// Exponential long-tail profile n_c = floor(n_max * IR^(-c/(C-1))).
inline std::vector<std::size_t> longtail_counts(std::size_t n_max, std::size_t num_classes,
                                                double imbalance_ratio) {
  if (num_classes == 0) throw ValidationError("long-tail profile needs at least one class");
  if (!(imbalance_ratio >= 1.0)) throw ValidationError("imbalance ratio must be >= 1");
  std::vector<std::size_t> counts(num_classes, n_max);
  if (num_classes > 1 && imbalance_ratio > 1.0) {
    for (std::size_t c = 0; c < num_classes; ++c) {
      const double exponent = -static_cast<double>(c) / static_cast<double>(num_classes - 1);
      const double n = static_cast<double>(n_max) * std::pow(imbalance_ratio, exponent);
      // Guard exact integers such as 500/100 = 5 against pow() rounding down.
      counts[c] = static_cast<std::size_t>(std::floor(n * (1.0 + 1e-12)));
    }
  }
  if (counts.back() < 1)
    throw ValidationError("long-tail profile leaves the last class with no samples");
  return counts;
}

enum class ShotGroup { Many, Medium, Few };

inline const char* shot_group_name(ShotGroup g) {
  switch (g) {
    case ShotGroup::Many: return "Many";
    case ShotGroup::Medium: return "Medium";
    case ShotGroup::Few: return "Few";
  }
  return "?";
}

inline ShotGroup shot_group(std::size_t count) {
  if (count > 100) return ShotGroup::Many;
  if (count >= 20) return ShotGroup::Medium;
  return ShotGroup::Few;
}

inline std::vector<ShotGroup> assign_shot_groups(std::span<const std::size_t> counts) {
  std::vector<ShotGroup> groups;
  groups.reserve(counts.size());
  for (std::size_t n : counts) groups.push_back(shot_group(n));
  return groups;
}

struct LongTailSpec {
  std::size_t num_classes = 20;
  std::size_t n_max = 100;
  double imbalance_ratio = 100.0;
  std::size_t test_per_class = 50;
  std::uint64_t seed = 0;

  void validate() const {
    if (num_classes == 0) throw ConfigError("dataset needs at least one class");
    if (!(imbalance_ratio >= 1.0)) throw ConfigError("imbalance ratio must be >= 1");
    if (static_cast<double>(n_max) / imbalance_ratio < 1.0)
      throw ConfigError("n_max / IR must be at least 1");
  }
};

struct LongTailDataset {
  std::vector<std::size_t> train_counts;
  std::vector<ShotGroup> groups;
  Tensor train_features;                 // N x d, grouped by class in class order
  std::vector<std::size_t> train_labels;
  Tensor test_features;                  // M x d
  std::vector<std::size_t> test_labels;
  std::uint64_t seed = 0;

  std::size_t num_classes() const { return train_counts.size(); }
  std::size_t dim() const { return train_features.extent(1); }
  std::size_t train_size() const { return train_labels.size(); }
  std::size_t test_size() const { return test_labels.size(); }
};

namespace detail {
inline Tensor stack_rows(const std::vector<std::vector<double>>& rows, std::size_t d) {
  if (rows.empty()) throw ValidationError("cannot stack an empty row set");
  Tensor out({rows.size(), d});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != d) throw ShapeError("feature row has the wrong dimension");
    std::copy(rows[i].begin(), rows[i].end(), out.row(i).begin());
  }
  return out;
}
}  // namespace detail

// Train split follows longtail_counts; the balanced test split takes indices
// after the training ones so file-backed providers consume disjoint rows and
// synthetic ones draw from a separate seed stream.
inline LongTailDataset make_dataset(const LongTailSpec& spec, const FeatureProvider& provider) {
  spec.validate();
  if (provider.num_classes() < spec.num_classes)
    throw ValidationError("feature provider covers only " +
                          std::to_string(provider.num_classes()) + " classes");
  LongTailDataset ds;
  ds.seed = spec.seed;
  ds.train_counts = longtail_counts(spec.n_max, spec.num_classes, spec.imbalance_ratio);
  ds.groups = assign_shot_groups(ds.train_counts);
  std::vector<std::vector<double>> train, test;
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    for (std::size_t i = 0; i < ds.train_counts[c]; ++i) {
      train.push_back(provider.encode_image({c, Split::Train, i}));
      ds.train_labels.push_back(c);
    }
    for (std::size_t i = 0; i < spec.test_per_class; ++i) {
      test.push_back(provider.encode_image({c, Split::Test, ds.train_counts[c] + i}));
      ds.test_labels.push_back(c);
    }
  }
  ds.train_features = detail::stack_rows(train, provider.dim());
  if (!test.empty()) ds.test_features = detail::stack_rows(test, provider.dim());
  return ds;
}

// Seeded permutation of training indices for one epoch.
inline std::vector<std::size_t> epoch_order(const LongTailDataset& ds, std::size_t epoch,
                                            std::uint64_t salt = 0) {
  std::vector<std::size_t> order(ds.train_size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Engine engine(derive_seed(ds.seed, {0x5348554646ULL, salt, epoch}));
  std::shuffle(order.begin(), order.end(), engine);
  return order;
}

// Moves the last 10% (at least one) of each class's training samples into a
// validation set that replaces the test split. A class never loses its last
// training sample, so single-sample classes contribute no validation rows.
inline LongTailDataset split_validation(const LongTailDataset& ds) {
  LongTailDataset out;
  out.seed = ds.seed;
  const std::size_t C = ds.num_classes(), d = ds.dim();
  out.train_counts.assign(C, 0);
  std::vector<std::vector<double>> train, val;
  std::size_t row = 0;
  for (std::size_t c = 0; c < C; ++c) {
    const std::size_t n = ds.train_counts[c];
    std::size_t held = std::max<std::size_t>(1, n / 10);
    if (held >= n) held = n - 1;
    for (std::size_t i = 0; i < n; ++i, ++row) {
      if (ds.train_labels[row] != c)
        throw ValidationError("training samples must be grouped by class");
      auto r = ds.train_features.row(row);
      if (i < n - held) {
        train.emplace_back(r.begin(), r.end());
        out.train_labels.push_back(c);
        ++out.train_counts[c];
      } else {
        val.emplace_back(r.begin(), r.end());
        out.test_labels.push_back(c);
      }
    }
  }
  out.groups = assign_shot_groups(out.train_counts);
  out.train_features = detail::stack_rows(train, d);
  if (val.empty()) throw ValidationError("validation split is empty");
  out.test_features = detail::stack_rows(val, d);
  return out;
}

inline constexpr const char* kSplitFile = "split.json";

// Bundle tensors for a dataset: train rows first, then test rows.
inline void add_dataset_tensors(Bundle& bundle, const LongTailDataset& ds) {
  const std::size_t d = ds.dim(), n = ds.train_size(), m = ds.test_size();
  Tensor features({n + m, d});
  Tensor labels({n + m});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(ds.train_features.row(i).begin(), ds.train_features.row(i).end(),
              features.row(i).begin());
    labels[i] = static_cast<double>(ds.train_labels[i]);
  }
  for (std::size_t i = 0; i < m; ++i) {
    std::copy(ds.test_features.row(i).begin(), ds.test_features.row(i).end(),
              features.row(n + i).begin());
    labels[n + i] = static_cast<double>(ds.test_labels[i]);
  }
  bundle.add("image_features", std::move(features));
  bundle.add("image_labels", std::move(labels));
}

inline nlohmann::json split_json(const LongTailDataset& ds) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["train_counts"] = ds.train_counts;
  std::vector<std::string> groups;
  for (auto g : ds.groups) groups.emplace_back(shot_group_name(g));
  j["groups"] = groups;
  j["seed"] = ds.seed;
  j["num_train"] = ds.train_size();
  j["num_test"] = ds.test_size();
  return j;
}

inline void export_dataset(const std::filesystem::path& dir, const LongTailDataset& ds) {
  Bundle bundle;
  bundle.d = ds.dim();
  bundle.provenance = "long-tailed dataset export";
  add_dataset_tensors(bundle, ds);
  write_bundle(dir, bundle, "images.bin");
  write_text_file(dir / kSplitFile, split_json(ds).dump(2) + "\n");
}

// Rebuilds a dataset from image_features/image_labels and split.json.
inline LongTailDataset import_dataset(const Bundle& bundle, const nlohmann::json& split) {
  LongTailDataset ds;
  std::size_t num_train = 0, num_test = 0;
  try {
    ds.train_counts = split.at("train_counts").get<std::vector<std::size_t>>();
    ds.seed = split.at("seed").get<std::uint64_t>();
    num_train = split.at("num_train").get<std::size_t>();
    num_test = split.at("num_test").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string(kSplitFile) + ": " + e.what());
  }
  ds.groups = assign_shot_groups(ds.train_counts);
  const Tensor& features = bundle.get("image_features");
  const Tensor& labels = bundle.get("image_labels");
  if (features.rank() != 2 || labels.size() != features.extent(0) ||
      features.extent(0) != num_train + num_test)
    throw IntegrityError("image tensors disagree with split.json row counts");
  if (std::accumulate(ds.train_counts.begin(), ds.train_counts.end(), std::size_t{0}) !=
      num_train)
    throw IntegrityError("split.json train_counts do not sum to num_train");
  const std::size_t d = features.extent(1);
  auto take = [&](std::size_t begin, std::size_t count, Tensor& out,
                  std::vector<std::size_t>& out_labels) {
    if (count == 0) return;
    out = Tensor({count, d});
    for (std::size_t i = 0; i < count; ++i) {
      std::copy(features.row(begin + i).begin(), features.row(begin + i).end(),
                out.row(i).begin());
      const double l = labels[begin + i];
      if (l < 0 || l >= static_cast<double>(ds.train_counts.size()) || l != std::floor(l))
        throw IntegrityError("image label out of range");
      out_labels.push_back(static_cast<std::size_t>(l));
    }
  };
  take(0, num_train, ds.train_features, ds.train_labels);
  take(num_train, num_test, ds.test_features, ds.test_labels);
  for (std::size_t i = 0, row = 0; i < ds.train_counts.size(); ++i)
    for (std::size_t k = 0; k < ds.train_counts[i]; ++k, ++row)
      if (ds.train_labels[row] != i)
        throw IntegrityError("training rows are not grouped by class as split.json declares");
  return ds;
}

inline LongTailDataset import_dataset(const std::filesystem::path& dir) {
  return import_dataset(read_bundle(dir), read_json_file(dir / kSplitFile));
}

}  // namespace mdpr
