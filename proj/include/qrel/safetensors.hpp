//
// Copyright 2026 The qrel Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#pragma once

#include <openssl/evp.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "qrel/error.hpp"

namespace qrel {

/// Dense float tensor, row-major.
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<float> data;

  std::int64_t dim(std::size_t i) const { return shape.at(i); }
  std::size_t numel() const { return data.size(); }
};

namespace detail {

inline float half_to_float(std::uint16_t h) {
  const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
  std::uint32_t exp = (h >> 10) & 0x1Fu;
  std::uint32_t mant = h & 0x3FFu;
  std::uint32_t bits;
  if (exp == 0) {
    if (mant == 0) {
      bits = sign;
    } else {
      // subnormal: renormalize
      exp = 127 - 15 + 1;
      while ((mant & 0x400u) == 0) {
        mant <<= 1;
        --exp;
      }
      mant &= 0x3FFu;
      bits = sign | (exp << 23) | (mant << 13);
    }
  } else if (exp == 0x1F) {
    bits = sign | 0x7F800000u | (mant << 13);
  } else {
    bits = sign | ((exp + 127 - 15) << 23) | (mant << 13);
  }
  return std::bit_cast<float>(bits);
}

inline float bf16_to_float(std::uint16_t h) {
  return std::bit_cast<float>(static_cast<std::uint32_t>(h) << 16);
}

}  // namespace detail

/// Reader for the safetensors container: an 8-byte little-endian header
/// length, a JSON header mapping tensor names to dtype/shape/offsets plus an
/// optional "__metadata__" string map, then the raw tensor bytes.
class SafeTensorFile {
 public:
  explicit SafeTensorFile(const std::filesystem::path& path) : path_(path) {
    if (!std::filesystem::exists(path)) {
      throw MissingFileError("model file not found: " + path.string());
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingFileError("cannot open model file: " + path.string());
    const auto file_size = std::filesystem::file_size(path);
    std::uint64_t header_len = 0;
    unsigned char len_bytes[8];
    if (!in.read(reinterpret_cast<char*>(len_bytes), 8)) {
      throw FormatError(path.string() + ": truncated safetensors header");
    }
    for (int i = 7; i >= 0; --i) header_len = (header_len << 8) | len_bytes[i];
    if (header_len == 0 || header_len > file_size - 8 || header_len > (100u << 20)) {
      throw FormatError(path.string() + ": not a safetensors file (bad header length)");
    }
    std::string header(header_len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(header_len));
    try {
      header_ = nlohmann::json::parse(header);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ": malformed safetensors header: " + e.what());
    }
    if (!header_.is_object()) throw FormatError(path.string() + ": header is not an object");
    data_offset_ = 8 + header_len;
    data_size_ = file_size - data_offset_;
    if (header_.contains("__metadata__")) {
      for (const auto& [k, v] : header_["__metadata__"].items()) {
        if (v.is_string()) metadata_[k] = v.get<std::string>();
      }
    }
    bytes_.resize(data_size_);
    in.read(reinterpret_cast<char*>(bytes_.data()), static_cast<std::streamsize>(data_size_));
    if (static_cast<std::uint64_t>(in.gcount()) != data_size_) {
      throw FormatError(path.string() + ": truncated tensor data");
    }
  }

  const std::map<std::string, std::string>& metadata() const { return metadata_; }

  bool contains(const std::string& name) const {
    return name != "__metadata__" && header_.contains(name);
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : header_.items()) {
      if (k != "__metadata__") out.push_back(k);
    }
    return out;
  }

  /// Loads a tensor as float32 (F32, F16, BF16 and F64 are accepted).
  Tensor tensor(const std::string& name) const {
    if (!contains(name)) {
      throw FormatError(path_.string() + ": missing tensor '" + name + "'");
    }
    const auto& entry = header_[name];
    Tensor t;
    std::string dtype;
    std::uint64_t begin = 0;
    std::uint64_t end = 0;
    try {
      dtype = entry.at("dtype").get<std::string>();
      t.shape = entry.at("shape").get<std::vector<std::int64_t>>();
      begin = entry.at("data_offsets").at(0).get<std::uint64_t>();
      end = entry.at("data_offsets").at(1).get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path_.string() + ": bad entry for '" + name + "': " + e.what());
    }
    std::size_t numel = 1;
    for (auto d : t.shape) numel *= static_cast<std::size_t>(d);
    const std::size_t width = dtype == "F32" ? 4 : dtype == "F64" ? 8
                              : (dtype == "F16" || dtype == "BF16") ? 2 : 0;
    if (width == 0) {
      throw FormatError(path_.string() + ": unsupported dtype " + dtype + " for '" + name + "'");
    }
    if (end > data_size_ || begin > end || end - begin != numel * width) {
      throw FormatError(path_.string() + ": inconsistent data offsets for '" + name + "'");
    }
    t.data.resize(numel);
    const unsigned char* src = bytes_.data() + begin;
    for (std::size_t i = 0; i < numel; ++i) {
      const unsigned char* p = src + i * width;
      if (width == 4) {
        std::uint32_t v = p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
        t.data[i] = std::bit_cast<float>(v);
      } else if (width == 8) {
        std::uint64_t v = 0;
        for (int k = 7; k >= 0; --k) v = (v << 8) | p[k];
        t.data[i] = static_cast<float>(std::bit_cast<double>(v));
      } else {
        const std::uint16_t h = static_cast<std::uint16_t>(p[0] | (p[1] << 8));
        t.data[i] = dtype == "F16" ? detail::half_to_float(h) : detail::bf16_to_float(h);
      }
    }
    return t;
  }

 private:
  std::filesystem::path path_;
  nlohmann::json header_;
  std::map<std::string, std::string> metadata_;
  std::uint64_t data_offset_ = 0;
  std::uint64_t data_size_ = 0;
  std::vector<unsigned char> bytes_;
};

/// Hex SHA-256 of a file's bytes.
inline std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFileError("cannot open for hashing: " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 initialization failed");
  }
  std::vector<char> buf(1 << 20);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    const auto got = in.gcount();
    if (got > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(got));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

/// Hex SHA-256 of an in-memory string.
inline std::string sha256_string(std::string_view s) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(s.data(), s.size(), digest, &len, EVP_sha256(), nullptr);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

}  // namespace qrel
