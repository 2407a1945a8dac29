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
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mdpr/bundle.hpp"
#include "mdpr/error.hpp"
#include "mdpr/prompts.hpp"
#include "mdpr/rng.hpp"
#include "mdpr/tensor.hpp"

namespace mdpr {

enum class Split : std::uint32_t { Train = 0, Test = 1 };

// Identifies one image: its class, split and the running index within
// (class). Synthetic providers generate from it; file-backed providers use
// the index-th stored row carrying that label.
struct ImageRef {
  std::size_t class_id = 0;
  Split split = Split::Train;
  std::size_t index = 0;
};

// Frozen encoder pair. Every returned vector has unit norm.
class FeatureProvider {
 public:
  virtual ~FeatureProvider() = default;
  virtual std::size_t dim() const = 0;
  virtual std::size_t num_classes() const = 0;
  // Embedding of the generic "a photo of a <class>" prompt.
  virtual std::vector<double> class_anchor(std::size_t class_id) const = 0;
  virtual std::vector<double> encode_text(const PromptRecord& record) const = 0;
  virtual std::vector<double> encode_image(const ImageRef& ref) const = 0;

  Tensor anchors() const {
    Tensor out({num_classes(), dim()});
    for (std::size_t c = 0; c < num_classes(); ++c) {
      auto a = class_anchor(c);
      std::copy(a.begin(), a.end(), out.row(c).begin());
    }
    return out;
  }
};

struct SyntheticWorldSpec {
  std::size_t num_classes = 20;
  std::size_t dim = 64;
  double pair_correlation = 0.8;   // cosine between the two prototypes of a pair
  double image_noise = 0.4;
  double text_noise = 0.1;
  double dimension_signal = 0.3;   // weight of the per-(class, dimension) direction
  double differential_repulsion = 0.5;
  // Per-coordinate standard deviation of the Gaussian noise vectors scaled by
  // image_noise / text_noise.
  double noise_std = 0.6;
  std::uint64_t seed = 0;

  void validate() const {
    if (num_classes < 2) throw ConfigError("synthetic world needs at least 2 classes");
    if (dim < 4) throw ConfigError("synthetic world needs dimension d >= 4");
    if (!(pair_correlation >= 0.0 && pair_correlation <= 1.0))
      throw ConfigError("pair correlation must lie in [0,1]");
    if (!(image_noise >= 0.0) || !(text_noise >= 0.0) || !(noise_std >= 0.0))
      throw ConfigError("noise scales must be nonnegative");
    if (!(dimension_signal >= 0.0) || !(differential_repulsion >= 0.0))
      throw ConfigError("dimension signal and differential repulsion must be nonnegative");
  }
};

namespace detail {

enum : std::uint64_t {
  kTagPrototype = 1,
  kTagPairDirection = 2,
  kTagAnchor = 3,
  kTagDirection = 4,
  kTagText = 5,
  kTagImage = 6,
};

inline std::vector<double> gaussian_vector(std::size_t d, std::uint64_t seed, double stddev) {
  Engine engine(seed);
  std::normal_distribution<double> normal(0.0, stddev);
  std::vector<double> out(d);
  for (double& v : out) v = normal(engine);
  return out;
}

// Unit-normalizes and snaps every entry to the f32 grid so stored bundles
// round-trip bit-exactly.
inline std::vector<double> finish_feature(std::vector<double> v) {
  const double n = norm(v);
  if (n == 0.0) throw NumericError("synthetic feature collapsed to zero");
  for (double& x : v) x = static_cast<double>(static_cast<float>(x / n));
  return v;
}

}  // namespace detail

// Deterministic stand-in for a frozen encoder pair. Classes are paired
// (0,1), (2,3), ...; the odd member's prototype has cosine
// pair_correlation with the even member's.
class SyntheticWorld final : public FeatureProvider {
 public:
  explicit SyntheticWorld(SyntheticWorldSpec spec) : spec_(spec) {
    spec_.validate();
    const std::size_t C = spec_.num_classes, d = spec_.dim;
    prototypes_ = Tensor({C, d});
    for (std::size_t c = 0; c < C; c += 2) {
      auto u = normalized(detail::gaussian_vector(
          d, derive_seed(spec_.seed, {detail::kTagPrototype, c}), 1.0));
      std::copy(u.begin(), u.end(), prototypes_.row(c).begin());
      if (c + 1 >= C) break;
      auto w = detail::gaussian_vector(
          d, derive_seed(spec_.seed, {detail::kTagPairDirection, c}), 1.0);
      axpy(-dot(w, u), u, w);
      w = normalized(w);
      const double a = spec_.pair_correlation;
      const double b = std::sqrt(std::max(0.0, 1.0 - a * a));
      auto odd = prototypes_.row(c + 1);
      for (std::size_t i = 0; i < d; ++i) odd[i] = a * u[i] + b * w[i];
    }
  }

  const SyntheticWorldSpec& spec() const { return spec_; }
  std::size_t dim() const override { return spec_.dim; }
  std::size_t num_classes() const override { return spec_.num_classes; }

  std::span<const double> prototype(std::size_t c) const {
    check_class(c);
    return prototypes_.row(c);
  }

  // Partner of c in the pairing, if any (an odd trailing class has none).
  std::optional<std::size_t> paired_class(std::size_t c) const {
    check_class(c);
    const std::size_t partner = c ^ 1U;
    if (partner >= spec_.num_classes) return std::nullopt;
    return partner;
  }

  std::vector<double> class_anchor(std::size_t c) const override {
    check_class(c);
    return noisy(c, spec_.text_noise, derive_seed(spec_.seed, {detail::kTagAnchor, c}));
  }

  std::vector<double> encode_text(const PromptRecord& record) const override {
    const std::size_t c = record.class_id;
    check_class(c);
    const auto v = static_cast<std::size_t>(record.dimension);
    if (v >= kNumDimensions) throw ValidationError("unknown knowledge dimension");
    std::vector<double> x(prototypes_.row(c).begin(), prototypes_.row(c).end());
    const auto z = normalized(detail::gaussian_vector(
        spec_.dim, derive_seed(spec_.seed, {detail::kTagDirection, c, v}), 1.0));
    axpy(spec_.dimension_signal, z, x);
    const auto g = detail::gaussian_vector(
        spec_.dim, derive_seed(spec_.seed, {detail::kTagText, c, v, fnv1a(record.text)}),
        spec_.noise_std);
    axpy(spec_.text_noise, g, x);
    if (record.dimension == Dimension::DF) {
      const auto other = record.confusable ? record.confusable : paired_class(c);
      if (other) {
        check_class(*other);
        axpy(-spec_.differential_repulsion, prototypes_.row(*other), x);
      }
    }
    return detail::finish_feature(std::move(x));
  }

  std::vector<double> encode_image(const ImageRef& ref) const override {
    check_class(ref.class_id);
    return noisy(ref.class_id, spec_.image_noise,
                 derive_seed(spec_.seed, {detail::kTagImage,
                                          static_cast<std::uint64_t>(ref.split),
                                          ref.class_id, ref.index}));
  }

 private:
  void check_class(std::size_t c) const {
    if (c >= spec_.num_classes)
      throw ValidationError("class id " + std::to_string(c) + " out of range");
  }

  std::vector<double> noisy(std::size_t c, double sigma, std::uint64_t seed) const {
    std::vector<double> x(prototypes_.row(c).begin(), prototypes_.row(c).end());
    axpy(sigma, detail::gaussian_vector(spec_.dim, seed, spec_.noise_std), x);
    return detail::finish_feature(std::move(x));
  }

  SyntheticWorldSpec spec_;
  Tensor prototypes_;
};

inline std::unique_ptr<SyntheticWorld> make_synthetic_world(const SyntheticWorldSpec& spec) {
  return std::make_unique<SyntheticWorld>(spec);
}

// Serves vectors stored in a FeatureBundle. Rows whose norm deviates from 1 by
// more than 1e-3 are re-normalized and reported in warnings().
class FileFeatureProvider final : public FeatureProvider {
 public:
  explicit FileFeatureProvider(const Bundle& bundle) {
    auto require = [&](const char* name, const char* role) -> const Tensor& {
      if (!bundle.has(name))
        throw LoadError(std::string("feature bundle is missing the ") + role + " tensor '" +
                        name + "'");
      return bundle.get(name);
    };
    anchors_ = require("class_anchors", "class anchors");
    pool_ = require("prompt_pool", "prompt pool");
    images_ = require("image_features", "images");
    const Tensor& labels = require("image_labels", "images");

    if (anchors_.rank() != 2) throw IntegrityError("class_anchors must be C x d");
    dim_ = anchors_.extent(1);
    classes_ = anchors_.extent(0);
    if (bundle.d && *bundle.d != dim_)
      throw IntegrityError("manifest declares d=" + std::to_string(*bundle.d) +
                           " but class_anchors has d=" + std::to_string(dim_));
    if (pool_.rank() != 3 || pool_.extent(0) != classes_ || pool_.extent(2) != dim_)
      throw IntegrityError("prompt_pool must be C x V x d, got " + shape_string(pool_.shape()));
    if (images_.rank() != 2 || images_.extent(1) != dim_)
      throw IntegrityError("image_features must be N x d, got " +
                           shape_string(images_.shape()));
    if (labels.rank() != 1 || labels.extent(0) != images_.extent(0))
      throw IntegrityError("image_labels must hold one label per image row");

    rows_by_class_.resize(classes_);
    labels_.reserve(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const double l = labels[i];
      if (l < 0 || l != std::floor(l) || l >= static_cast<double>(classes_))
        throw IntegrityError("image_labels row " + std::to_string(i) +
                             " is not a valid class id");
      labels_.push_back(static_cast<std::size_t>(l));
      rows_by_class_[labels_.back()].push_back(i);
    }
    renormalize(anchors_, "class_anchors");
    renormalize(pool_, "prompt_pool");
    renormalize(images_, "image_features");
  }

  std::size_t dim() const override { return dim_; }
  std::size_t num_classes() const override { return classes_; }
  std::size_t pool_size() const { return pool_.extent(1); }
  std::size_t image_count() const { return images_.extent(0); }
  const std::vector<std::size_t>& image_labels() const { return labels_; }
  const Tensor& image_features() const { return images_; }
  const Tensor& prompt_pool() const { return pool_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  std::vector<double> class_anchor(std::size_t c) const override {
    if (c >= classes_) throw ValidationError("class id out of range");
    auto r = anchors_.row(c);
    return {r.begin(), r.end()};
  }

  std::vector<double> encode_text(const PromptRecord& record) const override {
    const auto v = static_cast<std::size_t>(record.dimension);
    if (record.class_id >= classes_) throw ValidationError("class id out of range");
    if (v >= pool_.extent(1))
      throw ValidationError("prompt pool has no slot for dimension " +
                            std::string(dimension_label(record.dimension)));
    const double* p = &pool_(record.class_id, v, 0);
    return {p, p + dim_};
  }

  std::vector<double> encode_image(const ImageRef& ref) const override {
    if (ref.class_id >= classes_) throw ValidationError("class id out of range");
    const auto& rows = rows_by_class_[ref.class_id];
    if (ref.index >= rows.size())
      throw LoadError("bundle holds only " + std::to_string(rows.size()) +
                      " images of class " + std::to_string(ref.class_id));
    auto r = images_.row(rows[ref.index]);
    return {r.begin(), r.end()};
  }

 private:
  void renormalize(Tensor& t, const char* name) {
    const std::size_t d = dim_;
    for (std::size_t off = 0; off < t.size(); off += d) {
      std::span<double> row(t.data() + off, d);
      const double n = norm(row);
      if (std::abs(n - 1.0) > 1e-3) {
        if (n == 0.0) throw IntegrityError(std::string(name) + " holds a zero vector");
        for (double& x : row) x /= n;
        warnings_.push_back(std::string(name) + " row " + std::to_string(off / d) +
                            " had norm " + std::to_string(n) + "; re-normalized");
      }
    }
  }

  std::size_t dim_ = 0, classes_ = 0;
  Tensor anchors_, pool_, images_;
  std::vector<std::size_t> labels_;
  std::vector<std::vector<std::size_t>> rows_by_class_;
  std::vector<std::string> warnings_;
};

inline std::unique_ptr<FileFeatureProvider> load_feature_bundle(
    const std::filesystem::path& dir) {
  return std::make_unique<FileFeatureProvider>(read_bundle(dir));
}

}  // namespace mdpr
