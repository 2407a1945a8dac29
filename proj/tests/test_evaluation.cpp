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

#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "support.hpp"

namespace mdpr {
namespace {

using testing::make_tiny_instance;

TEST(Fusion, Endpoints) {
  const std::vector<double> base{2.0, 0.0, -1.3}, routing{0.0, 2.0, 4.1};
  EXPECT_EQ(fuse_logits(base, routing, 0.0), base);
  EXPECT_EQ(fuse_logits(base, routing, 1.0), routing);
  const auto half = fuse_logits(std::vector<double>{2, 0}, std::vector<double>{0, 2}, 0.5);
  EXPECT_EQ(half, (std::vector<double>{1, 1}));
  EXPECT_THROW(fuse_logits(base, routing, 1.5), ValidationError);
  EXPECT_THROW(fuse_logits(base, routing, -0.1), ValidationError);
}

TEST(Fusion, ConvexAndArgmaxStable) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> base(6), routing(6);
    for (auto& v : base) v = n(rng);
    for (auto& v : routing) v = n(rng);
    const bool agree = argmax(base) == argmax(routing);
    for (double beta : {0.0, 0.1, 0.5, 0.77, 1.0}) {
      const auto f = fuse_logits(base, routing, beta);
      for (std::size_t c = 0; c < 6; ++c) {
        EXPECT_GE(f[c], std::min(base[c], routing[c]) - 1e-12);
        EXPECT_LE(f[c], std::max(base[c], routing[c]) + 1e-12);
      }
      if (agree) EXPECT_EQ(argmax(f), argmax(base));
    }
  }
}

TEST(Argmax, TiesGoToTheLowestIndex) {
  EXPECT_EQ(argmax(std::vector<double>{1, 3, 3, 0}), 1u);
}

TEST(Report, HandCountedTwoClassExample) {
  std::vector<std::size_t> labels(20), preds(20);
  for (std::size_t i = 0; i < 20; ++i) {
    labels[i] = i < 10 ? 0 : 1;
    preds[i] = 0;
  }
  const std::vector<ShotGroup> groups{ShotGroup::Many, ShotGroup::Few};
  const auto r = make_report(labels, preds, groups);
  EXPECT_EQ(r.overall, 50.0);
  EXPECT_EQ(r.many, 100.0);
  EXPECT_EQ(r.few, 0.0);
  EXPECT_FALSE(r.medium.has_value());
  EXPECT_EQ(r.per_class, (std::vector<double>{100.0, 0.0}));
  EXPECT_EQ(r.confusion(1, 0), 10.0);
  EXPECT_EQ(r.samples, 20u);
}

TEST(Report, PerfectPredictionsAndAbsentFewGroup) {
  const std::vector<std::size_t> labels{0, 1, 2, 2};
  const std::vector<ShotGroup> groups =
      assign_shot_groups(std::vector<std::size_t>{150, 60, 25});
  const auto r = make_report(labels, labels, groups);
  EXPECT_EQ(r.overall, 100.0);
  EXPECT_EQ(r.many, 100.0);
  EXPECT_EQ(r.medium, 100.0);
  EXPECT_FALSE(r.few.has_value());
  EXPECT_EQ(report_json(r)["few"], nullptr);
  EXPECT_EQ(table_row("x", r), "x\t100.00\t100.00\t100.00\t-\n");
  EXPECT_THROW(make_report(std::vector<std::size_t>{}, std::vector<std::size_t>{}, groups),
               ValidationError);
}

TEST(Report, OverallIsTheWeightedMeanOfGroups) {
  std::mt19937_64 rng(2);
  const std::vector<std::size_t> counts{300, 150, 80, 40, 19, 5};
  const auto groups = assign_shot_groups(counts);
  std::vector<std::size_t> labels, preds;
  for (std::size_t c = 0; c < 6; ++c)
    for (std::size_t i = 0; i < 7 + c; ++i) {
      labels.push_back(c);
      preds.push_back(rng() % 3 == 0 ? (c + 1) % 6 : c);
    }
  const auto r = make_report(labels, preds, groups);
  double weighted = 0.0;
  std::size_t n_many = 0, n_med = 0, n_few = 0;
  for (std::size_t c = 0; c < 6; ++c) {
    const std::size_t n = 7 + c;
    (groups[c] == ShotGroup::Many ? n_many : groups[c] == ShotGroup::Medium ? n_med : n_few) += n;
  }
  weighted = (*r.many * n_many + *r.medium * n_med + *r.few * n_few) / labels.size();
  EXPECT_NEAR(r.overall, weighted, 1e-9);
}

TEST(Evaluate, BetaZeroUsesOnlyBaseLogits) {
  auto t = make_tiny_instance();
  const auto r0 = evaluate(t.params, t.ds, t.kb, t.anchors, 0.0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < t.ds.test_size(); ++i)
    correct += argmax(base_logits(t.params.base, t.ds.test_features.row(i), t.anchors)) ==
               t.ds.test_labels[i];
  EXPECT_DOUBLE_EQ(r0.overall, 100.0 * correct / t.ds.test_size());
  EXPECT_THROW(evaluate(t.params, t.ds, t.kb, t.anchors, 1.5), ValidationError);
  LongTailDataset empty = t.ds;
  empty.test_labels.clear();
  EXPECT_THROW(evaluate(t.params, empty, t.kb, t.anchors, 0.5), ValidationError);
}

TEST(Ablation, RowCountsAndVariants) {
  auto t = make_tiny_instance();
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 8;
  c.heads = 2;
  c.proj_dim = 4;
  const auto table = run_ablation(c, t.ds, *t.world, synthetic_class_names(3));
  ASSERT_EQ(table.module_rows.size(), 3u);
  ASSERT_EQ(table.knowledge_rows.size(), 6u);
  EXPECT_EQ(table.module_rows[0].name, "base");
  EXPECT_EQ(table.module_rows[0].beta, 0.0);
  EXPECT_EQ(table.module_rows[0].weights.sem, 0.0);
  EXPECT_EQ(table.module_rows[1].weights.pa, 0.0);
  EXPECT_EQ(table.module_rows[2].weights.pa, c.loss.pa);
  const char* names[] = {"All", "w/o GA", "w/o FA", "w/o FT", "w/o CI", "w/o DF"};
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(table.knowledge_rows[i].name, names[i]);
    EXPECT_EQ(table.knowledge_rows[i].pool_size, i == 0 ? 5u : 4u);
  }
  const auto text = ablation_text(table.knowledge_rows);
  EXPECT_EQ(text.substr(0, table_header().size()), table_header());
  EXPECT_EQ(ablation_json(table.module_rows)[0]["inference"], "base logits only");
}

}  // namespace
}  // namespace mdpr
