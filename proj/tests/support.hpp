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

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>
#include <vector>

#include <unistd.h>

#include "mdpr/mdpr.hpp"

namespace mdpr::testing {

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<unsigned> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("mdpr-" + tag + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << bytes;
}

// C=3, V=5, d=8, H=2, p=4 with a batch of four samples.
struct TinyInstance {
  std::unique_ptr<SyntheticWorld> world;
  LongTailDataset ds;
  KnowledgeBase kb;
  Tensor anchors;
  ModelParams params;
  std::vector<std::size_t> rows;
};

inline TinyInstance make_tiny_instance(std::uint64_t seed = 5) {
  TinyInstance t;
  SyntheticWorldSpec ws;
  ws.num_classes = 3;
  ws.dim = 8;
  ws.seed = seed;
  t.world = make_synthetic_world(ws);
  LongTailSpec ls;
  ls.num_classes = 3;
  ls.n_max = 10;
  ls.imbalance_ratio = 2;
  ls.test_per_class = 2;
  ls.seed = seed;
  t.ds = make_dataset(ls, *t.world);
  t.kb = build_knowledge_base(*t.world, synthetic_class_names(3), t.ds);
  t.anchors = t.world->anchors();
  t.params = init_model(8, 5, 2, 4, 0.0, seed * 7 + 1, Similarity::Cosine, kInitialScale,
                        ValueInit::Uniform);
  t.rows = {0, 3, 9, 14};
  return t;
}

inline constexpr double kGradStep = 2e-3;
inline constexpr double kGradTolerance = 1e-4;

// Finite-difference check of batch_objective's gradient for every trainable
// tensor. Epoch 10 is past the warm-up.
inline GradCheckReport check_objective_gradient(TinyInstance& t, const LossWeights& weights,
                                                std::size_t epoch = 10,
                                                double step = kGradStep,
                                                Stencil stencil = Stencil::FourthOrder) {
  ObjectiveInputs in{&t.kb, &t.anchors, log_class_prior(t.ds.train_counts), weights};
  ModelParams g = t.params.zeros();
  batch_objective(t.params, t.ds.train_features, t.ds.train_labels, t.rows, in, epoch,
                  std::nullopt, &g);
  auto objective = [&] {
    return batch_objective(t.params, t.ds.train_features, t.ds.train_labels, t.rows, in, epoch,
                           std::nullopt, nullptr)
        .total;
  };
  std::vector<Tensor*> grads;
  g.router.for_each([&](const char*, Tensor& x) { grads.push_back(&x); });
  std::vector<ParamBlock> blocks;
  std::size_t k = 0;
  t.params.router.for_each(
      [&](const char* name, Tensor& x) { blocks.push_back({name, x.values(), grads[k++]->values()}); });
  blocks.push_back({"ctx", t.params.base.context.values(), g.base.context.values()});
  return grad_check(objective, blocks, step, kGradTolerance, stencil);
}

inline LossWeights only(double base, double sem, double pa, double ka) {
  LossWeights w;
  w.base = base;
  w.sem = sem;
  w.pa = pa;
  w.ka = ka;
  return w;
}

}  // namespace mdpr::testing
