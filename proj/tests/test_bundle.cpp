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
#include <cstring>
#include <limits>

#include <gtest/gtest.h>

#include "mdpr/bundle.hpp"
#include "support.hpp"

namespace mdpr {
namespace {

using testing::TempDir;

Tensor f32_grid_tensor(Shape shape, double start) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i)
    t[i] = static_cast<double>(static_cast<float>(start + 0.37 * static_cast<double>(i)));
  return t;
}

TEST(Bundle, RoundTripF32AndF64) {
  TempDir dir;
  Bundle b;
  b.d = 4;
  b.provenance = "unit test";
  b.add("a", f32_grid_tensor({3, 4}, -1.0));
  Tensor exact({2}, std::vector<double>{0.1, 1.0 / 3.0});
  b.add("b", exact, DType::F64);
  write_bundle(dir.path(), b);

  const Bundle r = read_bundle(dir.path());
  EXPECT_EQ(r.d, std::optional<std::size_t>(4));
  EXPECT_EQ(r.provenance, "unit test");
  EXPECT_EQ(r.get("a"), b.get("a"));
  EXPECT_EQ(r.get("b"), exact);
  EXPECT_EQ(r.tensors[1].dtype, DType::F64);
}

TEST(Bundle, ManifestFieldsAndLittleEndianPayload) {
  TempDir dir;
  Bundle b;
  b.add("x", Tensor({2}, std::vector<double>{1.0, -2.0}));
  write_bundle(dir.path(), b);
  const auto manifest = read_json_file(dir / "manifest.json");
  const auto& entry = manifest["tensors"][0];
  EXPECT_EQ(entry["name"], "x");
  EXPECT_EQ(entry["dtype"], "f32");
  EXPECT_EQ(entry["shape"], nlohmann::json::array({2}));
  EXPECT_EQ(entry["byte_offset"], 0);
  const std::string payload = testing::slurp(dir / entry["file"].get<std::string>());
  ASSERT_EQ(payload.size(), 8u);
  // 1.0f = 0x3f800000, -2.0f = 0xc0000000, least significant byte first.
  const unsigned char expected[8] = {0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x00, 0xc0};
  EXPECT_EQ(std::memcmp(payload.data(), expected, 8), 0);
}

TEST(Bundle, TruncatedPayloadIsIntegrityError) {
  TempDir dir;
  Bundle b;
  b.add("class_anchors", f32_grid_tensor({3, 512}, 0.0));
  write_bundle(dir.path(), b);
  const std::string payload = testing::slurp(dir / "payload.bin");
  ASSERT_EQ(payload.size(), 3u * 512u * 4u);
  testing::spit(dir / "payload.bin", payload.substr(0, payload.size() - 4));
  EXPECT_THROW(read_bundle(dir.path()), IntegrityError);
}

TEST(Bundle, CorruptedByteIsIntegrityError) {
  TempDir dir;
  Bundle b;
  b.add("t", f32_grid_tensor({4, 4}, 0.5));
  write_bundle(dir.path(), b);
  std::string payload = testing::slurp(dir / "payload.bin");
  payload[9] = static_cast<char>(payload[9] ^ 0x01);
  testing::spit(dir / "payload.bin", payload);
  EXPECT_THROW(read_bundle(dir.path()), IntegrityError);
}

TEST(Bundle, MultiplePayloadFiles) {
  TempDir dir;
  Bundle one, two;
  one.add("a", f32_grid_tensor({2, 2}, 1.0));
  two.add("b", f32_grid_tensor({3}, 2.0));
  write_bundle(dir.path(), two, "second.bin");
  auto second = read_json_file(dir / "manifest.json")["tensors"][0];
  write_bundle(dir.path(), one, "first.bin");
  auto manifest = read_json_file(dir / "manifest.json");
  manifest["tensors"].push_back(second);
  write_text_file(dir / "manifest.json", manifest.dump());
  const Bundle r = read_bundle(dir.path());
  EXPECT_EQ(r.get("a"), one.get("a"));
  EXPECT_EQ(r.get("b"), two.get("b"));
}

TEST(Bundle, DuplicateNamesRejected) {
  TempDir dir;
  Bundle b;
  b.add("x", Tensor({1}));
  b.add("x", Tensor({1}));
  EXPECT_THROW(write_bundle(dir.path(), b), ValidationError);
}

TEST(Bundle, NonFiniteValuesRejectedOnWrite) {
  TempDir dir;
  Bundle b;
  b.add("x", Tensor({1}, std::numeric_limits<double>::quiet_NaN()));
  EXPECT_THROW(write_bundle(dir.path(), b), NumericError);
}

TEST(Bundle, MissingOrMalformedManifest) {
  TempDir dir;
  EXPECT_THROW(read_bundle(dir.path()), LoadError);
  write_text_file(dir / "manifest.json", "{ not json");
  EXPECT_THROW(read_bundle(dir.path()), LoadError);
}

TEST(Bundle, UnknownDtypeAndMissingTensor) {
  TempDir dir;
  Bundle b;
  b.add("x", Tensor({2}));
  write_bundle(dir.path(), b);
  auto manifest = read_json_file(dir / "manifest.json");
  EXPECT_THROW(read_bundle(dir.path()).get("y"), LoadError);
  manifest["tensors"][0]["dtype"] = "i8";
  write_text_file(dir / "manifest.json", manifest.dump());
  EXPECT_THROW(read_bundle(dir.path()), LoadError);
}

}  // namespace
}  // namespace mdpr
