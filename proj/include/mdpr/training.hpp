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
#include <algorithm>
#include <filesystem>
#include <map>
#include <span>
#include <string_view>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mdpr/data.hpp"
#include "mdpr/error.hpp"
#include "mdpr/evaluation.hpp"
#include "mdpr/knowledge_base.hpp"
#include "mdpr/losses.hpp"
#include "mdpr/model.hpp"

namespace mdpr {

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  LossWeights loss;
  double beta = 0.5;
  std::uint64_t seed = 0;
  std::size_t eval_every = 0;  // 0 disables per-epoch test evaluation
  std::size_t heads = 8;
  std::size_t proj_dim = 128;
  double dropout = 0.1;
  Similarity similarity = Similarity::Cosine;
  double base_scale = kInitialScale;  // s_base, fixed during training
  ValueInit value_init = ValueInit::Identity;

  void validate() const {
    if (epochs == 0) throw ConfigError("epochs must be >= 1");
    if (batch_size == 0) throw ConfigError("batch size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be >= 0");
    if (!(beta >= 0.0 && beta <= 1.0))
      throw ConfigError("fusion beta must lie in [0,1], got " + std::to_string(beta));
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0,1)");
    if (!(base_scale > 0.0) || !std::isfinite(base_scale))
      throw ConfigError("base temperature must be positive");
    loss.validate();
  }
};

// Cosine annealing from lr at step 0 to 0 at step total.
inline double cosine_learning_rate(std::size_t step, std::size_t total, double lr) {
  if (total == 0) return lr;
  return 0.5 * lr *
         (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total)));
}

// Adam with decoupled weight decay (p *= 1 - lr * wd before the moment step).
class AdamW {
 public:
  AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void begin_step() { ++t_; }
  std::size_t steps() const { return t_; }

  void update(const std::string& name, Tensor& param, const Tensor& grad, double lr,
              double weight_decay) {
    auto& [m, v] = moments_[name];
    if (m.empty()) {
      m.assign(param.size(), 0.0);
      v.assign(param.size(), 0.0);
    }
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < param.size(); ++i) {
      const double g = grad[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      param[i] *= 1.0 - lr * weight_decay;
      param[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }

 private:
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments_;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double total = 0.0;
  LossComponents parts;
  double learning_rate = 0.0;  // at the epoch's last step
  double lambda_sem = 0.0;     // effective (warmed-up) weights
  double lambda_ka = 0.0;
  double semantic_scale = 0.0;
  std::optional<double> test_overall;
  std::optional<double> test_few;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

using TrainHistory = std::vector<EpochRecord>;

struct TrainResult {
  ModelParams params;
  TrainHistory history;
};

// Raised when a batch produces a non-finite loss; carries the parameters
// from before that batch.
class TrainingAborted : public NumericError {
 public:
  TrainingAborted(const std::string& what, ModelParams last_good, TrainHistory history)
      : NumericError(what), last_good_(std::move(last_good)), history_(std::move(history)) {}
  const ModelParams& last_good() const { return last_good_; }
  const TrainHistory& history() const { return history_; }

 private:
  ModelParams last_good_;
  TrainHistory history_;
};

inline std::size_t batches_per_epoch(std::size_t n, std::size_t batch) {
  return (n + batch - 1) / batch;
}

inline bool all_finite(const ModelParams& g) {
  bool ok = g.base.context.all_finite();
  g.router.for_each([&](const char*, const Tensor& t) { ok = ok && t.all_finite(); });
  return ok;
}

// End-to-end training of router and base branch. Knowledge-base tensors are
// read-only inputs.
// Training from given starting parameters (e.g. a loaded checkpoint).
inline TrainResult train(const TrainConfig& config, const LongTailDataset& ds,
                         const KnowledgeBase& kb, const Tensor& anchors, ModelParams params) {
  config.validate();
  if (ds.train_size() == 0) throw ValidationError("training split is empty");
  if (kb.dim() != ds.dim() || anchors.extent(1) != ds.dim())
    throw ValidationError("knowledge base, anchors and dataset disagree on d");
  if (kb.num_classes() != ds.num_classes() || anchors.extent(0) != ds.num_classes())
    throw ValidationError("knowledge base, anchors and dataset disagree on C");

  if (params.router.dim() != ds.dim() || params.base.context.extent(1) != ds.dim())
    throw ValidationError("starting parameters disagree with the dataset on d");
  ObjectiveInputs inputs{&kb, &anchors, log_class_prior(ds.train_counts), config.loss};
  AdamW optimizer;
  const std::size_t per_epoch = batches_per_epoch(ds.train_size(), config.batch_size);
  const std::size_t total_steps = config.epochs * per_epoch;
  const std::size_t last_step = total_steps - 1;
  TrainHistory history;

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = epoch_order(ds, epoch, config.seed);
    EpochRecord rec;
    rec.epoch = epoch;
    const auto eff = effective_weights(config.loss, epoch);
    rec.lambda_sem = eff.sem;
    rec.lambda_ka = eff.ka;
    for (std::size_t b = 0; b < per_epoch; ++b, ++step) {
      const std::size_t begin = b * config.batch_size;
      const std::size_t end = std::min(begin + config.batch_size, order.size());
      std::span<const std::size_t> rows(order.data() + begin, end - begin);
      ModelParams grads = params.zeros();
      BatchLoss loss;
      try {
        loss = batch_objective(params, ds.train_features, ds.train_labels, rows, inputs, epoch,
                               derive_seed(config.seed, {3, epoch, b}), &grads);
      } catch (const NumericError& e) {
        throw TrainingAborted(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                                  " batch " + std::to_string(b),
                              params, history);
      }
      if (!all_finite(grads))
        throw TrainingAborted("non-finite gradient at epoch " + std::to_string(epoch), params,
                              history);

      const double lr = cosine_learning_rate(step, last_step, config.learning_rate);
      optimizer.begin_step();
      params.router.for_each([&](const char* name, Tensor& t) {
        const Tensor* g = nullptr;
        grads.router.for_each([&](const char* gname, const Tensor& gt) {
          if (std::string_view(gname) == name) g = &gt;
        });
        const bool is_scale = std::string_view(name) == "s";
        optimizer.update(name, t, *g, lr, is_scale ? 0.0 : config.weight_decay);
      });
      optimizer.update("ctx", params.base.context, grads.base.context, lr, config.weight_decay);
      params.router.clamp_scale();

      const double frac = static_cast<double>(rows.size()) / static_cast<double>(ds.train_size());
      rec.total += frac * loss.total;
      rec.parts.base += frac * loss.parts.base;
      rec.parts.sem += frac * loss.parts.sem;
      rec.parts.pa += frac * loss.parts.pa;
      rec.parts.ka += frac * loss.parts.ka;
      rec.learning_rate = lr;
    }
    rec.semantic_scale = params.router.scale[0];
    if (config.eval_every && ds.test_size() &&
        ((epoch + 1) % config.eval_every == 0 || epoch + 1 == config.epochs)) {
      const auto report = evaluate(params, ds, kb, anchors, config.beta);
      rec.test_overall = report.overall;
      rec.test_few = report.few;
    }
    history.push_back(rec);
  }
  return {std::move(params), std::move(history)};
}

inline TrainResult train(const TrainConfig& config, const LongTailDataset& ds,
                         const KnowledgeBase& kb, const Tensor& anchors) {
  config.validate();
  return train(config, ds, kb, anchors,
               init_model(ds.dim(), kb.pool_size(), config.heads, config.proj_dim,
                          config.dropout, config.seed, config.similarity, config.base_scale,
                          config.value_init));
}

inline TrainResult train(const TrainConfig& config, const LongTailDataset& ds,
                         const KnowledgeBase& kb, const FeatureProvider& provider) {
  return train(config, ds, kb, provider.anchors());
}

inline nlohmann::json epoch_json(const EpochRecord& r) {
  nlohmann::json j = {{"epoch", r.epoch},
                      {"total", r.total},
                      {"L_base", r.parts.base},
                      {"L_sem", r.parts.sem},
                      {"L_pa", r.parts.pa},
                      {"L_ka", r.parts.ka},
                      {"lr", r.learning_rate},
                      {"lambda_sem", r.lambda_sem},
                      {"lambda_ka", r.lambda_ka},
                      {"s", r.semantic_scale}};
  j["test_overall"] = r.test_overall ? nlohmann::json(*r.test_overall) : nlohmann::json(nullptr);
  j["test_few"] = r.test_few ? nlohmann::json(*r.test_few) : nlohmann::json(nullptr);
  return j;
}

// One JSON object per line, one line per epoch.
inline std::string history_jsonl(const TrainHistory& history) {
  std::string out;
  for (const auto& r : history) out += epoch_json(r).dump() + "\n";
  return out;
}

struct GridRow {
  int stage = 1;
  LossWeights weights;
  EvalReport validation;
};

struct TuneResult {
  LossWeights best;
  std::vector<GridRow> rows;
};

inline const std::vector<double>& stage1_sem_grid() {
  static const std::vector<double> g = {0.1, 0.5, 1.0, 2.0};
  return g;
}
inline const std::vector<double>& stage2_pa_grid() {
  static const std::vector<double> g = {0.01, 0.05, 0.1, 0.5, 1.0};
  return g;
}
inline const std::vector<double>& stage2_ka_grid() {
  static const std::vector<double> g = {0.001, 0.005, 0.01, 0.05, 0.1};
  return g;
}
inline const std::vector<double>& stage2_temperature_grid() {
  static const std::vector<double> g = {1.0, 2.0, 5.0};
  return g;
}

// Two-stage search on a validation split carved from the training data.
// Stage 1 sweeps lambda_sem with the regularizers off; stage 2 sweeps
// (lambda_pa, lambda_ka, T) at the chosen lambda_sem. Grids are visited in
// ascending lexicographic order and only a strictly better validation
// accuracy replaces the incumbent, so ties keep the smaller setting.
inline TuneResult tune_grid(const TrainConfig& config, const LongTailDataset& ds,
                            const KnowledgeBase& kb, const Tensor& anchors) {
  const LongTailDataset split = split_validation(ds);
  TuneResult result;
  auto run = [&](int stage, const LossWeights& w) {
    TrainConfig c = config;
    c.loss = w;
    c.eval_every = 0;
    const auto trained = train(c, split, kb, anchors);
    result.rows.push_back({stage, w, evaluate(trained.params, split, kb, anchors, c.beta)});
    return result.rows.back().validation.overall;
  };

  LossWeights best = config.loss;
  best.pa = 0.0;
  best.ka = 0.0;
  double best_acc = -1.0;
  for (double sem : stage1_sem_grid()) {
    LossWeights w = best;
    w.sem = sem;
    w.pa = 0.0;
    w.ka = 0.0;
    const double acc = run(1, w);
    if (acc > best_acc) {
      best_acc = acc;
      best.sem = sem;
    }
  }
  best_acc = -1.0;
  LossWeights stage2 = best;
  for (double pa : stage2_pa_grid())
    for (double ka : stage2_ka_grid())
      for (double T : stage2_temperature_grid()) {
        LossWeights w = best;
        w.pa = pa;
        w.ka = ka;
        w.kl_temperature = T;
        const double acc = run(2, w);
        if (acc > best_acc) {
          best_acc = acc;
          stage2 = w;
        }
      }
  result.best = stage2;
  return result;
}

}  // namespace mdpr
