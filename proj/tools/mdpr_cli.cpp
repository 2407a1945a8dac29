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

// Command-line front end: gen-world, build-kb, train, eval, ablate, tune and
// kb-stats. Exit codes: 0 success, 1 configuration/validation/load error,
// 2 numeric or integrity error.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "CLI11.hpp"
#include "mdpr/mdpr.hpp"

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace {

using namespace mdpr;

// Every recognized key with its default, in the order written to config.ini.
const std::vector<std::pair<std::string, std::string>>& config_defaults() {
  static const std::vector<std::pair<std::string, std::string>> d = [] {
    const SyntheticWorldSpec w;
    const LongTailSpec l;
    const TrainConfig t;
    auto s = [](double v) {
      char buf[32];
      const auto r = std::to_chars(buf, buf + sizeof buf, v);
      return std::string(buf, r.ptr);
    };
    auto u = [](std::size_t v) { return std::to_string(v); };
    return std::vector<std::pair<std::string, std::string>>{
        {"run.seed", "0"},
        {"world.classes", u(w.num_classes)},
        {"world.dim", u(w.dim)},
        {"world.pair_correlation", s(w.pair_correlation)},
        {"world.image_noise", s(w.image_noise)},
        {"world.text_noise", s(w.text_noise)},
        {"world.dimension_signal", s(w.dimension_signal)},
        {"world.differential_repulsion", s(w.differential_repulsion)},
        {"world.noise_std", s(w.noise_std)},
        {"data.n_max", u(l.n_max)},
        {"data.ir", s(l.imbalance_ratio)},
        {"data.test_per_class", u(l.test_per_class)},
        {"train.epochs", u(t.epochs)},
        {"train.batch", u(t.batch_size)},
        {"train.learning_rate", s(t.learning_rate)},
        {"train.weight_decay", s(t.weight_decay)},
        {"train.beta", s(t.beta)},
        {"train.heads", u(t.heads)},
        {"train.proj_dim", u(t.proj_dim)},
        {"train.dropout", s(t.dropout)},
        {"train.similarity", "cosine"},
        {"train.base_scale", s(t.base_scale)},
        {"train.value_init", "identity"},
        {"train.eval_every", u(t.eval_every)},
        {"loss.lambda_base", s(t.loss.base)},
        {"loss.lambda_sem", s(t.loss.sem)},
        {"loss.lambda_pa", s(t.loss.pa)},
        {"loss.lambda_ka", s(t.loss.ka)},
        {"loss.kl_temp", s(t.loss.kl_temperature)},
        {"loss.tau", s(t.loss.tau)},
        {"loss.warmup_epochs", u(t.loss.warmup_epochs)},
        {"loss.compensate_base", "false"},
    };
  }();
  return d;
}

struct RunConfig {
  pt::ptree tree;
  std::uint64_t seed = 0;
  SyntheticWorldSpec world;
  LongTailSpec data;
  TrainConfig train;

  std::string ini() const {
    std::ostringstream out;
    pt::write_ini(out, tree);
    return out.str();
  }
  std::string hash() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(ini())));
    return buf;
  }
};

template <typename T>
T get(const pt::ptree& tree, const std::string& key) {
  try {
    return tree.get<T>(key);
  } catch (const pt::ptree_error&) {
    throw ConfigError("invalid value '" + tree.get<std::string>(key) + "' for " + key);
  }
}

std::size_t get_count(const pt::ptree& tree, const std::string& key) {
  const auto v = get<long long>(tree, key);
  if (v < 0) throw ConfigError(key + " must be nonnegative");
  return static_cast<std::size_t>(v);
}

RunConfig resolve(const std::string& config_path,
                  const std::map<std::string, std::string>& overrides) {
  RunConfig rc;
  for (const auto& [k, v] : config_defaults()) rc.tree.put(k, v);
  if (!config_path.empty()) {
    pt::ptree file;
    try {
      pt::read_ini(config_path, file);
    } catch (const pt::ini_parser_error& e) {
      throw ConfigError(std::string("cannot read config: ") + e.what());
    }
    for (const auto& [section, body] : file) {
      if (body.empty()) throw ConfigError("config key '" + section + "' is outside a section");
      for (const auto& [key, value] : body) {
        const std::string full = section + "." + key;
        if (!rc.tree.get_optional<std::string>(full))
          throw ConfigError("unknown config key " + full);
        rc.tree.put(full, value.data());
      }
    }
  }
  for (const auto& [k, v] : overrides) rc.tree.put(k, v);

  const auto& t = rc.tree;
  rc.seed = get<std::uint64_t>(t, "run.seed");
  auto& w = rc.world;
  w.num_classes = get_count(t, "world.classes");
  w.dim = get_count(t, "world.dim");
  w.pair_correlation = get<double>(t, "world.pair_correlation");
  w.image_noise = get<double>(t, "world.image_noise");
  w.text_noise = get<double>(t, "world.text_noise");
  w.dimension_signal = get<double>(t, "world.dimension_signal");
  w.differential_repulsion = get<double>(t, "world.differential_repulsion");
  w.noise_std = get<double>(t, "world.noise_std");
  w.seed = rc.seed;
  w.validate();
  auto& d = rc.data;
  d.num_classes = w.num_classes;
  d.n_max = get_count(t, "data.n_max");
  d.imbalance_ratio = get<double>(t, "data.ir");
  d.test_per_class = get_count(t, "data.test_per_class");
  d.seed = rc.seed;
  d.validate();
  auto& c = rc.train;
  c.epochs = get_count(t, "train.epochs");
  c.batch_size = get_count(t, "train.batch");
  c.learning_rate = get<double>(t, "train.learning_rate");
  c.weight_decay = get<double>(t, "train.weight_decay");
  c.beta = get<double>(t, "train.beta");
  c.heads = get_count(t, "train.heads");
  c.proj_dim = get_count(t, "train.proj_dim");
  c.dropout = get<double>(t, "train.dropout");
  const auto sim = t.get<std::string>("train.similarity");
  if (sim != "cosine" && sim != "dot")
    throw ConfigError("train.similarity must be cosine or dot, got " + sim);
  c.similarity = sim == "cosine" ? Similarity::Cosine : Similarity::Dot;
  c.base_scale = get<double>(t, "train.base_scale");
  const auto init = t.get<std::string>("train.value_init");
  if (init != "identity" && init != "uniform")
    throw ConfigError("train.value_init must be identity or uniform, got " + init);
  c.value_init = init == "identity" ? ValueInit::Identity : ValueInit::Uniform;
  c.eval_every = get_count(t, "train.eval_every");
  c.seed = rc.seed;
  c.loss.base = get<double>(t, "loss.lambda_base");
  c.loss.sem = get<double>(t, "loss.lambda_sem");
  c.loss.pa = get<double>(t, "loss.lambda_pa");
  c.loss.ka = get<double>(t, "loss.lambda_ka");
  c.loss.kl_temperature = get<double>(t, "loss.kl_temp");
  c.loss.tau = get<double>(t, "loss.tau");
  c.loss.warmup_epochs = get_count(t, "loss.warmup_epochs");
  c.loss.compensate_base = get<bool>(t, "loss.compensate_base");
  if (c.heads == 0 || w.dim % c.heads != 0)
    throw ConfigError("head count " + std::to_string(c.heads) +
                      " does not divide feature dimension " + std::to_string(w.dim));
  c.validate();
  return rc;
}

struct Args {
  std::string config, out, world, kb, checkpoint;
  std::map<std::string, std::string> overrides;
};

void add_shared(CLI::App* sub, Args& a) {
  sub->add_option("--config", a.config, "INI configuration file")->check(CLI::ExistingFile);
  sub->add_option("--out", a.out, "output directory");
  sub->add_option("--world", a.world, "world directory from gen-world");
  sub->add_option("--kb", a.kb, "knowledge base directory from build-kb");
  sub->add_option("--checkpoint", a.checkpoint, "checkpoint directory from train");
  const std::pair<const char*, const char*> flags[] = {
      {"--seed", "run.seed"},          {"--beta", "train.beta"},
      {"--ir", "data.ir"},             {"--classes", "world.classes"},
      {"--epochs", "train.epochs"},    {"--batch", "train.batch"},
      {"--lambda-sem", "loss.lambda_sem"}, {"--lambda-pa", "loss.lambda_pa"},
      {"--lambda-ka", "loss.lambda_ka"},   {"--kl-temp", "loss.kl_temp"},
      {"--tau", "loss.tau"}};
  for (const auto& [flag, key] : flags) {
    std::string k = key;
    sub->add_option_function<std::string>(
        flag, [&a, k](const std::string& v) { a.overrides[k] = v; }, "overrides " + k);
  }
}

fs::path require_dir(const std::string& value, const char* flag) {
  if (value.empty()) throw ConfigError(std::string(flag) + " is required");
  return value;
}

void prepare_out(const fs::path& out, const RunConfig& rc) {
  fs::create_directories(out);
  write_text_file(out / "config.ini", rc.ini());
}

void cmd_gen_world(const Args& a, const RunConfig& rc) {
  const fs::path out = require_dir(a.out, "--out");
  const auto world = make_synthetic_world(rc.world);
  const auto ds = make_dataset(rc.data, *world);
  const auto names = synthetic_class_names(rc.world.num_classes);
  const auto kb = build_knowledge_base(*world, names, ds);
  prepare_out(out, rc);
  export_world(out, *world, ds, kb,
               {{"generator", "synthetic"}, {"seed", rc.seed}, {"config_hash", rc.hash()}});
  std::cout << "world: C=" << rc.world.num_classes << " d=" << rc.world.dim
            << " train=" << ds.train_size() << " test=" << ds.test_size() << "\n";
}

void cmd_build_kb(const Args& a, const RunConfig& rc) {
  const fs::path out = require_dir(a.out, "--out");
  const World w = load_world(require_dir(a.world, "--world"));
  const auto kb = build_knowledge_base(*w.provider, w.class_names, w.dataset);
  prepare_out(out, rc);
  save_kb(kb, out);
  const auto s = prior_stats(kb);
  std::printf("kb: C=%zu V=%zu d=%zu  M mean %.4f std %.4f median %.4f\n", kb.num_classes(),
              kb.pool_size(), kb.dim(), s.mean, s.std, s.median);
}

void print_report(const std::string& name, const EvalReport& r) {
  std::cout << table_header() << table_row(name, r);
}

void cmd_train(const Args& a, const RunConfig& rc) {
  const fs::path out = require_dir(a.out, "--out");
  const World w = load_world(require_dir(a.world, "--world"));
  const auto kb = load_kb(require_dir(a.kb, "--kb"));
  const Tensor anchors = w.provider->anchors();
  prepare_out(out, rc);
  TrainResult result;
  try {
    result = a.checkpoint.empty()
                 ? train(rc.train, w.dataset, kb, anchors)
                 : train(rc.train, w.dataset, kb, anchors, load_checkpoint(a.checkpoint));
  } catch (const TrainingAborted& e) {
    save_checkpoint(out / "last_good", e.last_good(), {e.history().size(), rc.hash()});
    write_text_file(out / "history.jsonl", history_jsonl(e.history()));
    throw;
  }
  save_checkpoint(out, result.params, {rc.train.epochs, rc.hash()});
  write_text_file(out / "history.jsonl", history_jsonl(result.history));
  const auto report = evaluate(result.params, w.dataset, kb, anchors, rc.train.beta);
  nlohmann::json summary = {{"epochs", rc.train.epochs},
                            {"beta", rc.train.beta},
                            {"final_loss", result.history.back().total},
                            {"test", report_json(report)}};
  write_text_file(out / "summary.json", summary.dump(2) + "\n");
  print_report("mdpr", report);
}

void cmd_eval(const Args& a, const RunConfig& rc) {
  const World w = load_world(require_dir(a.world, "--world"));
  const auto kb = load_kb(require_dir(a.kb, "--kb"));
  const auto params = load_checkpoint(require_dir(a.checkpoint, "--checkpoint"));
  const auto report = evaluate(params, w.dataset, kb, w.provider->anchors(), rc.train.beta);
  if (!a.out.empty()) {
    prepare_out(a.out, rc);
    nlohmann::json j = report_json(report);
    j["beta"] = rc.train.beta;
    write_text_file(fs::path(a.out) / "report.json", j.dump(2) + "\n");
    write_text_file(fs::path(a.out) / "table.txt", table_header() + table_row("mdpr", report));
  }
  print_report("mdpr", report);
}

void cmd_ablate(const Args& a, const RunConfig& rc) {
  const fs::path out = require_dir(a.out, "--out");
  const World w = load_world(require_dir(a.world, "--world"));
  const Tensor anchors = w.provider->anchors();
  const KnowledgeBase kb = a.kb.empty()
                               ? build_knowledge_base(*w.provider, w.class_names, w.dataset)
                               : load_kb(a.kb);
  prepare_out(out, rc);
  const auto modules = run_module_ablation(rc.train, w.dataset, kb, anchors);
  const auto knowledge = run_knowledge_ablation(rc.train, w.dataset, kb, anchors);
  const nlohmann::json j = {{"module", ablation_json(modules)},
                            {"knowledge", ablation_json(knowledge)}};
  write_text_file(out / "ablation.json", j.dump(2) + "\n");
  const std::string text = ablation_text(modules) + "\n" + ablation_text(knowledge);
  write_text_file(out / "ablation.txt", text);
  std::cout << text;
}

nlohmann::json weights_json(const LossWeights& w) {
  return {{"lambda_sem", w.sem}, {"lambda_pa", w.pa}, {"lambda_ka", w.ka},
          {"kl_temp", w.kl_temperature}};
}

void cmd_tune(const Args& a, const RunConfig& rc) {
  const fs::path out = require_dir(a.out, "--out");
  const World w = load_world(require_dir(a.world, "--world"));
  const auto kb = load_kb(require_dir(a.kb, "--kb"));
  prepare_out(out, rc);
  const auto result = tune_grid(rc.train, w.dataset, kb, w.provider->anchors());
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : result.rows) {
    auto j = weights_json(r.weights);
    j["stage"] = r.stage;
    j["validation"] = report_json(r.validation);
    rows.push_back(std::move(j));
  }
  const nlohmann::json j = {{"best", weights_json(result.best)}, {"rows", rows}};
  write_text_file(out / "tune.json", j.dump(2) + "\n");
  std::cout << "best: " << weights_json(result.best).dump() << "\n";
}

void cmd_kb_stats(const Args& a, const RunConfig& rc) {
  const auto kb = load_kb(require_dir(a.kb, "--kb"));
  const auto s = prior_stats(kb);
  char line[128];
  std::snprintf(line, sizeof line, "Mean\tStd\tMedian\n%.6f\t%.6f\t%.6f\n", s.mean, s.std,
                s.median);
  if (!a.out.empty()) {
    prepare_out(a.out, rc);
    write_text_file(fs::path(a.out) / "kb_stats.txt", line);
  }
  std::cout << line;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-dimensional dynamic prompt routing on synthetic long-tailed worlds"};
  app.require_subcommand(1);
  Args args;
  using Command = void (*)(const Args&, const RunConfig&);
  const std::pair<const char*, Command> commands[] = {
      {"gen-world", cmd_gen_world}, {"build-kb", cmd_build_kb}, {"train", cmd_train},
      {"eval", cmd_eval},           {"ablate", cmd_ablate},     {"tune", cmd_tune},
      {"kb-stats", cmd_kb_stats}};
  const char* help[] = {"generate a synthetic world, dataset and feature bundle",
                        "build the knowledge base from a world",
                        "train router and base branch",
                        "evaluate a checkpoint with fused logits",
                        "run module and knowledge-dimension ablations",
                        "two-stage loss-weight grid search on a validation split",
                        "print Mean/Std/Median of the prior matrix"};
  std::vector<std::pair<CLI::App*, Command>> subs;
  for (std::size_t i = 0; i < std::size(commands); ++i) {
    auto* sub = app.add_subcommand(commands[i].first, help[i]);
    add_shared(sub, args);
    subs.emplace_back(sub, commands[i].second);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }
  try {
    const RunConfig rc = resolve(args.config, args.overrides);
    for (const auto& [sub, run] : subs)
      if (sub->parsed()) run(args, rc);
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 2;
  } catch (const IntegrityError& e) {
    std::cerr << "integrity error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
