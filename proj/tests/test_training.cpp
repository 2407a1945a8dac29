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

#include <cmath>
#include <limits>
#include <numbers>

#include <gtest/gtest.h>

#include "support.hpp"

namespace mdpr {
namespace {

using testing::make_tiny_instance;
using testing::TempDir;

TrainConfig tiny_config() {
  TrainConfig c;
  c.epochs = 7;
  c.batch_size = 4;
  c.heads = 2;
  c.proj_dim = 4;
  c.seed = 3;
  return c;
}

TEST(Schedule, CosineEndpoints) {
  EXPECT_EQ(cosine_learning_rate(0, 99, 1e-3), 1e-3);
  EXPECT_LT(cosine_learning_rate(99, 99, 1e-3), 1e-6 * 1e-3);
  EXPECT_NEAR(cosine_learning_rate(50, 100, 1e-3),
              0.5e-3 * (1.0 + std::cos(std::numbers::pi * 0.5)), 1e-18);
  EXPECT_EQ(cosine_learning_rate(0, 0, 1e-3), 1e-3);
}

TEST(AdamWTest, FirstStepMovesByLearningRateAndDecaysMultiplicatively) {
  AdamW opt;
  Tensor p({2}, std::vector<double>{1.0, -2.0});
  const Tensor g({2}, std::vector<double>{0.5, -3.0});
  opt.begin_step();
  opt.update("p", p, g, 0.1, 0.01);
  // Bias-corrected first step is sign(g) * lr / (1 + eps / |g|).
  EXPECT_NEAR(p[0], 1.0 * (1 - 0.001) - 0.1, 1e-7);
  EXPECT_NEAR(p[1], -2.0 * (1 - 0.001) + 0.1, 1e-7);
}

TEST(TrainConfigTest, Validation) {
  auto c = tiny_config();
  c.beta = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  c.epochs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Train, HistoryShapeAndWarmupWiring) {
  auto t = make_tiny_instance();
  auto c = tiny_config();
  c.loss.sem = 0.8;
  c.loss.ka = 0.02;
  const auto r = train(c, t.ds, t.kb, t.anchors);
  ASSERT_EQ(r.history.size(), 7u);
  EXPECT_EQ(r.history[0].lambda_sem, 0.0);
  EXPECT_EQ(r.history[0].lambda_ka, 0.0);
  EXPECT_NEAR(r.history[2].lambda_sem, 0.8 * 0.4, 1e-15);
  EXPECT_EQ(r.history[5].lambda_sem, 0.8);
  EXPECT_EQ(r.history[6].lambda_ka, 0.02);
  EXPECT_LT(r.history.back().learning_rate, 1e-6 * c.learning_rate);
  for (const auto& rec : r.history) {
    EXPECT_TRUE(std::isfinite(rec.total));
    EXPECT_GE(rec.semantic_scale, kScaleMin);
    EXPECT_LE(rec.semantic_scale, kScaleMax);
  }
  const auto lines = history_jsonl(r.history);
  EXPECT_EQ(std::count(lines.begin(), lines.end(), '\n'), 7);
}

TEST(Train, BitwiseDeterministic) {
  auto t = make_tiny_instance();
  const auto a = train(tiny_config(), t.ds, t.kb, t.anchors);
  const auto b = train(tiny_config(), t.ds, t.kb, t.anchors);
  EXPECT_EQ(a.history, b.history);
  EXPECT_EQ(a.params.router.wq, b.params.router.wq);
  EXPECT_EQ(a.params.base.context, b.params.base.context);
  auto other = tiny_config();
  other.seed = 4;
  EXPECT_NE(train(other, t.ds, t.kb, t.anchors).history, a.history);
}

TEST(Train, KnowledgeBaseIsNeverModified) {
  auto t = make_tiny_instance();
  const KnowledgeBase before = t.kb;
  train(tiny_config(), t.ds, t.kb, t.anchors);
  EXPECT_EQ(t.kb.prompt_features, before.prompt_features);
  EXPECT_EQ(t.kb.averaged_features, before.averaged_features);
  EXPECT_EQ(t.kb.prior, before.prior);
  EXPECT_EQ(t.kb.confusion, before.confusion);
}

TEST(Train, ScaleIsNotDecayedAndBaseScaleIsFixed) {
  auto t = make_tiny_instance();
  auto c = tiny_config();
  c.loss = testing::only(1, 0, 0, 0);
  c.weight_decay = 0.5;
  const auto r = train(c, t.ds, t.kb, t.anchors);
  EXPECT_EQ(r.params.router.scale[0], kInitialScale);
  EXPECT_EQ(r.params.base.scale[0], kInitialScale);
}

TEST(Train, NonFiniteLossAbortsWithLastGoodParameters) {
  auto t = make_tiny_instance();
  auto c = tiny_config();
  ModelParams start = init_model(8, 5, 2, 4, 0.1, 1);
  start.base.context(0, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    train(c, t.ds, t.kb, t.anchors, start);
    FAIL() << "expected TrainingAborted";
  } catch (const TrainingAborted& e) {
    EXPECT_NE(std::string(e.what()).find("L_base"), std::string::npos);
    EXPECT_TRUE(e.history().empty());
    EXPECT_TRUE(std::isnan(e.last_good().base.context(0, 0)));
  }
}

TEST(Train, MismatchedInputsRejected) {
  auto t = make_tiny_instance();
  EXPECT_THROW(train(tiny_config(), t.ds, t.kb, Tensor({3, 4}, 0.5)), ValidationError);
  EXPECT_THROW(train(tiny_config(), t.ds, t.kb, t.anchors, init_model(16, 5, 2, 4, 0.1, 1)),
               ValidationError);
}

// The recorded total uses warmed-up weights, so epochs are compared on the
// objective at the target weights.
double target_objective(const EpochRecord& r, const LossWeights& w) {
  return w.base * r.parts.base + w.sem * r.parts.sem + w.pa * r.parts.pa + w.ka * r.parts.ka;
}

TEST(Train, DefaultBenchmarkLossDecreases) {
  SyntheticWorldSpec ws;
  const auto world = make_synthetic_world(ws);
  LongTailSpec ls;
  const auto ds = make_dataset(ls, *world);
  const auto kb = build_knowledge_base(*world, synthetic_class_names(ws.num_classes), ds);
  TrainConfig c;
  const auto r = train(c, ds, kb, *world);
  EXPECT_LT(target_objective(r.history.back(), c.loss),
            target_objective(r.history.front(), c.loss));
  EXPECT_LT(r.history.back().parts.base, r.history.front().parts.base);
  EXPECT_LT(r.history.back().parts.sem, r.history.front().parts.sem);
}

TEST(Checkpoint, RoundTripPreservesEvaluation) {
  TempDir dir;
  auto t = make_tiny_instance();
  const auto r = train(tiny_config(), t.ds, t.kb, t.anchors);
  save_checkpoint(dir.path(), r.params, {7, "abc"});
  CheckpointInfo info;
  const auto loaded = load_checkpoint(dir.path(), &info);
  EXPECT_EQ(info.epoch, 7u);
  EXPECT_EQ(info.config_hash, "abc");
  EXPECT_EQ(loaded.router.wq, r.params.router.wq);
  EXPECT_EQ(loaded.router.scale, r.params.router.scale);
  EXPECT_EQ(loaded.base.context, r.params.base.context);
  EXPECT_EQ(evaluate(loaded, t.ds, t.kb, t.anchors, 0.5),
            evaluate(r.params, t.ds, t.kb, t.anchors, 0.5));
  const auto manifest = read_json_file(dir / "manifest.json");
  std::vector<std::string> names;
  for (const auto& e : manifest["tensors"]) names.push_back(e["name"]);
  EXPECT_EQ(names, (std::vector<std::string>{"Wq", "bq", "Wk", "bk", "Wv", "bv", "Wo", "bo",
                                             "Proj", "bProj", "s", "ctx", "s_base"}));
  EXPECT_EQ(read_json_file(dir / kCheckpointFile)["optimizer_moments"], false);
}

TEST(Checkpoint, MissingOrInconsistent) {
  TempDir dir;
  EXPECT_THROW(load_checkpoint(dir.path()), LoadError);
  auto t = make_tiny_instance();
  save_checkpoint(dir.path(), t.params, {});
  auto j = read_json_file(dir / kCheckpointFile);
  j["heads"] = 3;
  write_text_file(dir / kCheckpointFile, j.dump());
  EXPECT_THROW(load_checkpoint(dir.path()), IntegrityError);
}

TEST(TuneGrid, GridSizesAndSelection) {
  EXPECT_EQ(stage1_sem_grid().size(), 4u);
  EXPECT_EQ(stage2_pa_grid().size() * stage2_ka_grid().size() * stage2_temperature_grid().size(),
            75u);
  auto t = make_tiny_instance();
  auto c = tiny_config();
  c.epochs = 1;
  const auto r = tune_grid(c, t.ds, t.kb, t.anchors);
  ASSERT_EQ(r.rows.size(), 79u);
  double best1 = -1.0, best2 = -1.0;
  double best_sem = 0.0;
  const GridRow* chosen = nullptr;
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(r.rows[i].stage, 1);
    EXPECT_EQ(r.rows[i].weights.pa, 0.0);
    EXPECT_EQ(r.rows[i].weights.ka, 0.0);
    EXPECT_EQ(r.rows[i].weights.sem, stage1_sem_grid()[i]);
    if (r.rows[i].validation.overall > best1) {
      best1 = r.rows[i].validation.overall;
      best_sem = r.rows[i].weights.sem;
    }
  }
  for (std::size_t i = 4; i < r.rows.size(); ++i) {
    EXPECT_EQ(r.rows[i].stage, 2);
    EXPECT_EQ(r.rows[i].weights.sem, best_sem);
    if (r.rows[i].validation.overall > best2) {
      best2 = r.rows[i].validation.overall;
      chosen = &r.rows[i];
    }
  }
  ASSERT_NE(chosen, nullptr);
  EXPECT_EQ(r.best.sem, best_sem);
  EXPECT_EQ(r.best.pa, chosen->weights.pa);
  EXPECT_EQ(r.best.ka, chosen->weights.ka);
  EXPECT_EQ(r.best.kl_temperature, chosen->weights.kl_temperature);
}

}  // namespace
}  // namespace mdpr
