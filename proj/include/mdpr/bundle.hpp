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

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <boost/crc.hpp>

#include "json.hpp"
#include "mdpr/error.hpp"
#include "mdpr/tensor.hpp"

namespace mdpr {

// On-disk tensor bundle: a directory holding manifest.json plus raw
// little-endian row-major payload files. f32 is the interchange dtype;
// f64 is used for derived tensors that must round-trip bit-exactly.
enum class DType { F32, F64 };

inline const char* dtype_name(DType t) { return t == DType::F32 ? "f32" : "f64"; }
inline std::size_t dtype_size(DType t) { return t == DType::F32 ? 4 : 8; }

inline DType parse_dtype(const std::string& s) {
  if (s == "f32") return DType::F32;
  if (s == "f64") return DType::F64;
  throw LoadError("unsupported tensor dtype '" + s + "'");
}

struct BundleTensor {
  std::string name;
  DType dtype = DType::F32;
  Tensor tensor;
};

struct Bundle {
  int format_version = 1;
  std::optional<std::size_t> d;
  std::string provenance;
  std::vector<BundleTensor> tensors;

  bool has(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return true;
    return false;
  }
  const Tensor& get(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return t.tensor;
    throw LoadError("bundle has no tensor named '" + name + "'");
  }
  void add(std::string name, Tensor tensor, DType dtype = DType::F32) {
    tensors.push_back({std::move(name), dtype, std::move(tensor)});
  }
};

inline constexpr int kBundleFormatVersion = 1;
inline constexpr const char* kManifestName = "manifest.json";

namespace detail {

inline std::vector<unsigned char> encode_payload(const Tensor& t, DType dtype) {
  std::vector<unsigned char> bytes(t.size() * dtype_size(dtype));
  unsigned char* out = bytes.data();
  for (double v : t.values()) {
    if (dtype == DType::F32) {
      auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int b = 0; b < 4; ++b) *out++ = static_cast<unsigned char>(bits >> (8 * b));
    } else {
      auto bits = std::bit_cast<std::uint64_t>(v);
      for (int b = 0; b < 8; ++b) *out++ = static_cast<unsigned char>(bits >> (8 * b));
    }
  }
  return bytes;
}

inline std::vector<double> decode_payload(const unsigned char* in, std::size_t count,
                                          DType dtype) {
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (dtype == DType::F32) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= std::uint32_t{in[b]} << (8 * b);
      out[i] = std::bit_cast<float>(bits);
      in += 4;
    } else {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= std::uint64_t{in[b]} << (8 * b);
      out[i] = std::bit_cast<double>(bits);
      in += 8;
    }
  }
  return out;
}

inline std::uint32_t crc32(const unsigned char* data, std::size_t n) {
  boost::crc_32_type crc;
  crc.process_bytes(data, n);
  return crc.checksum();
}

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

}  // namespace detail

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write " + path.string());
  out << text;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  auto bytes = detail::read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw LoadError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

// Writes every tensor into a single payload file inside `dir`.
inline void write_bundle(const std::filesystem::path& dir, const Bundle& bundle,
                         const std::string& payload_name = "payload.bin") {
  std::filesystem::create_directories(dir);
  std::set<std::string> names;
  nlohmann::json manifest;
  manifest["format_version"] = bundle.format_version;
  if (bundle.d) manifest["d"] = *bundle.d;
  manifest["provenance"] = bundle.provenance;
  manifest["tensors"] = nlohmann::json::array();

  std::ofstream payload(dir / payload_name, std::ios::binary);
  if (!payload) throw LoadError("cannot write " + (dir / payload_name).string());
  std::uint64_t offset = 0;
  for (const auto& t : bundle.tensors) {
    if (!names.insert(t.name).second)
      throw ValidationError("duplicate tensor name '" + t.name + "' in bundle");
    if (!t.tensor.all_finite())
      throw NumericError("tensor '" + t.name + "' has non-finite values");
    const auto bytes = detail::encode_payload(t.tensor, t.dtype);
    payload.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
    manifest["tensors"].push_back({{"name", t.name},
                                   {"dtype", dtype_name(t.dtype)},
                                   {"shape", t.tensor.shape()},
                                   {"file", payload_name},
                                   {"byte_offset", offset},
                                   {"crc32", detail::crc32(bytes.data(), bytes.size())}});
    offset += bytes.size();
  }
  write_text_file(dir / kManifestName, manifest.dump(2) + "\n");
}

inline Bundle read_bundle(const std::filesystem::path& dir) {
  const auto manifest_path = dir / kManifestName;
  if (!std::filesystem::exists(manifest_path))
    throw LoadError("no " + std::string(kManifestName) + " in " + dir.string());
  const nlohmann::json manifest = read_json_file(manifest_path);

  Bundle bundle;
  try {
    bundle.format_version = manifest.at("format_version").get<int>();
    if (manifest.contains("d")) bundle.d = manifest["d"].get<std::size_t>();
    bundle.provenance = manifest.value("provenance", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("manifest " + manifest_path.string() + ": " + e.what());
  }
  if (bundle.format_version != kBundleFormatVersion)
    throw LoadError("unsupported bundle format_version " +
                    std::to_string(bundle.format_version));
  if (!manifest.contains("tensors") || !manifest["tensors"].is_array())
    throw LoadError("manifest " + manifest_path.string() + " has no tensor list");

  std::map<std::string, std::vector<unsigned char>> files;
  std::set<std::string> names;
  for (const auto& entry : manifest["tensors"]) {
    std::string name, file;
    DType dtype;
    Shape shape;
    std::uint64_t offset = 0;
    try {
      name = entry.at("name").get<std::string>();
      dtype = parse_dtype(entry.at("dtype").get<std::string>());
      shape = entry.at("shape").get<Shape>();
      file = entry.at("file").get<std::string>();
      offset = entry.at("byte_offset").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw LoadError("manifest entry: " + std::string(e.what()));
    }
    if (!names.insert(name).second)
      throw IntegrityError("duplicate tensor name '" + name + "' in manifest");
    auto it = files.find(file);
    if (it == files.end()) it = files.emplace(file, detail::read_file(dir / file)).first;
    const auto& bytes = it->second;
    const std::uint64_t length = shape_volume(shape) * dtype_size(dtype);
    if (offset + length > bytes.size())
      throw IntegrityError("tensor '" + name + "' declares " + shape_string(shape) + " " +
                           dtype_name(dtype) + " at offset " + std::to_string(offset) +
                           " but " + file + " holds only " + std::to_string(bytes.size()) +
                           " bytes");
    if (entry.contains("crc32") &&
        entry["crc32"].get<std::uint32_t>() != detail::crc32(bytes.data() + offset, length))
      throw IntegrityError("checksum mismatch for tensor '" + name + "'");
    if (shape.empty() || shape_volume(shape) == 0)
      throw IntegrityError("tensor '" + name + "' declares an empty shape");
    Tensor t(shape, detail::decode_payload(bytes.data() + offset, shape_volume(shape), dtype));
    if (!t.all_finite()) throw IntegrityError("tensor '" + name + "' holds non-finite values");
    bundle.tensors.push_back({name, dtype, std::move(t)});
  }
  return bundle;
}

}  // namespace mdpr
