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

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "mdpr/error.hpp"

namespace mdpr {

// The five knowledge dimensions, in storage order.
enum class Dimension : std::size_t { GA = 0, FA = 1, FT = 2, CI = 3, DF = 4 };

inline constexpr std::size_t kNumDimensions = 5;
inline constexpr std::array<Dimension, kNumDimensions> kAllDimensions = {
    Dimension::GA, Dimension::FA, Dimension::FT, Dimension::CI, Dimension::DF};

inline constexpr std::size_t kDefaultWordCount = 15;

inline std::string_view dimension_label(Dimension d) {
  constexpr std::array<std::string_view, kNumDimensions> labels = {"GA", "FA", "FT", "CI",
                                                                   "DF"};
  return labels.at(static_cast<std::size_t>(d));
}

// Name of the generation template used for a dimension.
inline std::string_view template_key(Dimension d) {
  constexpr std::array<std::string_view, kNumDimensions> keys = {
      "visual features", "fine-grained-attribute", "functional-use", "contextual-scene",
      "differential-comparison"};
  return keys.at(static_cast<std::size_t>(d));
}

inline Dimension parse_dimension(std::string_view label) {
  for (Dimension d : kAllDimensions)
    if (dimension_label(d) == label) return d;
  throw ValidationError("unknown knowledge dimension '" + std::string(label) + "'");
}

struct PromptRecord {
  std::size_t class_id = 0;
  Dimension dimension = Dimension::GA;
  std::string text;
  std::size_t word_count = kDefaultWordCount;
  std::optional<std::size_t> confusable;  // set iff dimension == DF

  friend bool operator==(const PromptRecord&, const PromptRecord&) = default;
};

namespace detail {

// Paragraphs are separated by a single newline. The GA template's sentence
// slot uses brackets like the other four so rendered text has no braces.
inline std::string_view prompt_template(Dimension d) {
  switch (d) {
    case Dimension::GA:
      return "Provide a concise English phrase describing the key visual appearance "
             "features of a \"{class-name}\".\n"
             "Focus on what it looks like (e.g., shape, color, texture, notable parts).\n"
             "The phrase should be approximately {target-word-count} words and suitable to "
             "complete the sentence: \"A {class-name} typically appears as [YOUR PHRASE "
             "HERE].\"\n"
             "Output ONLY the descriptive phrase. Do NOT include \"A {class-name} typically "
             "appears as\".\n"
             "Descriptive phrase for \"{class-name}\":";
    case Dimension::FA:
      return "Provide a concise English phrase describing one or two highly distinctive or "
             "fine-grained visual attributes of a \"{class-name}\" that make it unique or "
             "easily identifiable.\n"
             "Focus on specific, detailed characteristics.\n"
             "The description should be in English, concise, and approximately "
             "{target-word-count} words.\n"
             "Output ONLY the descriptive phrase itself, suitable for completing the "
             "sentence: \"A distinctive feature of a {class-name} is [YOUR PHRASE HERE].\"\n"
             "Output ONLY the descriptive phrase of the attribute(s). Do NOT include \"A "
             "distinctive feature of a {class-name} is\".\n"
             "Descriptive phrase of attribute(s) for \"{class-name}\":";
    case Dimension::FT:
      return "Provide a concise English phrase describing the primary function or purpose "
             "of a \"{class-name}\".\n"
             "Focus on what it is used for.\n"
             "The phrase should be approximately {target-word-count} words and suitable to "
             "complete the sentence: \"A {class-name} is used for [YOUR PHRASE HERE].\"\n"
             "Output ONLY the descriptive phrase. Do NOT include \"A {class-name} is used "
             "for\".\n"
             "Descriptive phrase for \"{class-name}\":";
    case Dimension::CI:
      return "Provide a concise English phrase describing the common environments or "
             "contexts where a \"{class-name}\" is typically found.\n"
             "Focus on its usual surroundings or scenarios.\n"
             "The phrase should be approximately {target-word-count} words and suitable to "
             "complete the sentence: \"A {class-name} is commonly found in [YOUR PHRASE "
             "HERE].\"\n"
             "Output ONLY the descriptive phrase. Do NOT include \"A {class-name} is "
             "commonly found in\".\n"
             "Descriptive phrase for \"{class-name}\":";
    case Dimension::DF:
      return "Describe the key visual differences of a \"{class-name}\" when compared to a "
             "\"{confusing-class-name}\".\n"
             "Focus on features that distinguish a \"{class-name}\" from a "
             "\"{confusing-class-name}\".\n"
             "The description should be in English, concise, and approximately "
             "{target-word-count} words.\n"
             "Output ONLY the descriptive phrase itself, suitable for completing the "
             "sentence: \"Unlike a {confusing-class-name}, a {class-name} has [YOUR PHRASE "
             "HERE].\"\n"
             "Output ONLY the descriptive phrase of differences. Do NOT include \"Unlike a "
             "{confusing-class-name}, a {class-name} has\".\n"
             "Descriptive phrase of differences for \"{class-name}\" compared to "
             "\"{confusing-class-name}\":";
  }
  throw ValidationError("unknown knowledge dimension");
}

inline void replace_all(std::string& text, std::string_view key, std::string_view value) {
  for (std::size_t pos = text.find(key); pos != std::string::npos;
       pos = text.find(key, pos + value.size()))
    text.replace(pos, key.size(), value);
}

}  // namespace detail

inline std::string render_prompt(Dimension dimension, std::string_view class_name,
                                 std::optional<std::string_view> confusable_name,
                                 std::size_t target_word_count = kDefaultWordCount) {
  if (static_cast<std::size_t>(dimension) >= kNumDimensions)
    throw ValidationError("unknown knowledge dimension");
  if (dimension == Dimension::DF && !confusable_name)
    throw ValidationError("DF prompt requires a confusable class name");
  if (dimension != Dimension::DF && confusable_name)
    throw ValidationError("only DF prompts take a confusable class name");
  if (target_word_count == 0) throw ValidationError("target word count must be positive");
  auto has_brace = [](std::string_view s) {
    return s.find('{') != std::string_view::npos || s.find('}') != std::string_view::npos;
  };
  if (has_brace(class_name) || (confusable_name && has_brace(*confusable_name)))
    throw ValidationError("class names may not contain braces");

  std::string text(detail::prompt_template(dimension));
  detail::replace_all(text, "{class-name}", class_name);
  detail::replace_all(text, "{target-word-count}", std::to_string(target_word_count));
  if (confusable_name) detail::replace_all(text, "{confusing-class-name}", *confusable_name);
  return text;
}

}  // namespace mdpr
