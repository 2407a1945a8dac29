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
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "mdpr/bundle.hpp"
#include "mdpr/data.hpp"
#include "mdpr/encoders.hpp"
#include "mdpr/error.hpp"
#include "mdpr/knowledge_base.hpp"

namespace mdpr {

inline constexpr const char* kWorldFile = "world.json";

inline std::vector<std::string> synthetic_class_names(std::size_t num_classes) {
  std::vector<std::string> names;
  for (std::size_t c = 0; c < num_classes; ++c) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "class-%03zu", c);
    names.emplace_back(buf);
  }
  return names;
}

// A feature provider with its dataset and class names, as stored on disk.
struct World {
  std::unique_ptr<FileFeatureProvider> provider;
  LongTailDataset dataset;
  std::vector<std::string> class_names;
};

// Writes a FeatureBundle (anchors, the C x V prompt pool from kb, train and
// test images) plus split.json and world.json.
inline void export_world(const std::filesystem::path& dir, const FeatureProvider& provider,
                         const LongTailDataset& ds, const KnowledgeBase& kb,
                         const nlohmann::json& provenance = {}) {
  Bundle bundle;
  bundle.d = provider.dim();
  bundle.provenance = provenance.is_null() ? std::string("feature export") : provenance.dump();
  bundle.add("class_anchors", provider.anchors());
  bundle.add("prompt_pool", kb.prompt_features);
  add_dataset_tensors(bundle, ds);
  write_bundle(dir, bundle);
  write_text_file(dir / kSplitFile, split_json(ds).dump(2) + "\n");
  nlohmann::json w;
  w["format_version"] = 1;
  w["class_names"] = kb.class_names;
  w["confusable"] = kb.confusable;
  w["provenance"] = provenance;
  write_text_file(dir / kWorldFile, w.dump(2) + "\n");
}

inline World load_world(const std::filesystem::path& dir) {
  const Bundle bundle = read_bundle(dir);
  World world;
  world.provider = std::make_unique<FileFeatureProvider>(bundle);
  world.dataset = import_dataset(bundle, read_json_file(dir / kSplitFile));
  const auto meta = read_json_file(dir / kWorldFile);
  try {
    world.class_names = meta.at("class_names").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string(kWorldFile) + ": " + e.what());
  }
  if (world.class_names.size() != world.provider->num_classes() ||
      world.dataset.num_classes() != world.provider->num_classes())
    throw IntegrityError("world.json, split.json and class_anchors disagree on C");
  return world;
}

}  // namespace mdpr
