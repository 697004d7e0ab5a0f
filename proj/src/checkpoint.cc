// Copyright 2026 The VPConv Authors.
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

#include "vpconv/checkpoint.h"

#include <cstring>
#include <fstream>
#include <iterator>

#include "vpconv/error.h"

namespace vpconv {

namespace {

constexpr char kMagic[4] = {'V', 'P', 'C', 'K'};

std::uint64_t Fnv1a(const std::uint8_t* data, std::size_t n, std::uint64_t h) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001B3ull;
  }
  return h;
}

constexpr std::uint64_t kFnvOffset = 0xCBF29CE484222325ull;

template <typename T>
void PutLe(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
  }
}

template <typename T>
T GetLe(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return static_cast<T>(v);
}

}  // namespace

bool Archive::Has(const std::string& name) const {
  for (const auto& [n, v] : tensors) {
    if (n == name) return true;
  }
  return false;
}

const std::vector<float>& Archive::Get(const std::string& name) const {
  for (const auto& [n, v] : tensors) {
    if (n == name) return v;
  }
  throw Error(ErrorCode::kMalformed, "checkpoint has no tensor '" + name + "'");
}

void WriteArchive(const std::filesystem::path& path, const nlohmann::json& meta,
                  const TensorRefs& tensors) {
  std::string blobs;
  nlohmann::json index = nlohmann::json::array();
  for (const auto& [name, values] : tensors) {
    index.push_back({{"name", name},
                     {"count", values->size()},
                     {"offset", blobs.size()}});
    for (float f : *values) {
      std::uint32_t bits;
      std::memcpy(&bits, &f, sizeof(bits));
      PutLe(blobs, bits);
    }
  }
  nlohmann::json header = {
      {"meta", meta},
      {"tensors", index},
      {"blob_bytes", blobs.size()},
      {"checksum", Fnv1a(reinterpret_cast<const std::uint8_t*>(blobs.data()),
                         blobs.size(), kFnvOffset)}};
  const std::string header_text = header.dump();

  std::string out(kMagic, 4);
  PutLe(out, kCheckpointVersion);
  PutLe(out, static_cast<std::uint64_t>(header_text.size()));
  out += header_text;
  out += blobs;

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorCode::kIo, "cannot write " + tmp.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw Error(ErrorCode::kIo, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot rename onto " + path.string() + ": " + ec.message());
}

Archive ReadArchive(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::kNotFound, "no checkpoint at " + path.string());
  }
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIo, "cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                        std::istreambuf_iterator<char>());
  const std::string where = "checkpoint " + path.string();
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::kMalformed, where + ": not a checkpoint archive");
  }
  const auto version = GetLe<std::uint32_t>(bytes.data() + 4);
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::kVersionMismatch,
                where + ": version " + std::to_string(version) + ", expected " +
                    std::to_string(kCheckpointVersion));
  }
  const auto header_len = GetLe<std::uint64_t>(bytes.data() + 8);
  if (header_len > bytes.size() - 16) throw Error(ErrorCode::kMalformed, where + ": truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 16,
                                   bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kMalformed, where + ": bad header: " + e.what());
  }
  const std::size_t blob_begin = 16 + header_len;
  Archive archive;
  try {
    const auto blob_bytes = header.at("blob_bytes").get<std::uint64_t>();
    if (blob_bytes != bytes.size() - blob_begin) {
      throw Error(ErrorCode::kMalformed, where + ": blob size mismatch (truncated?)");
    }
    if (Fnv1a(bytes.data() + blob_begin, blob_bytes, kFnvOffset) !=
        header.at("checksum").get<std::uint64_t>()) {
      throw Error(ErrorCode::kMalformed, where + ": checksum mismatch");
    }
    archive.meta = header.at("meta");
    for (const auto& entry : header.at("tensors")) {
      const auto count = entry.at("count").get<std::uint64_t>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      if (offset + 4 * count > blob_bytes) {
        throw Error(ErrorCode::kMalformed, where + ": tensor out of range");
      }
      std::vector<float> values(count);
      const std::uint8_t* p = bytes.data() + blob_begin + offset;
      for (std::size_t i = 0; i < count; ++i) {
        const auto bits = GetLe<std::uint32_t>(p + 4 * i);
        std::memcpy(&values[i], &bits, sizeof(bits));
      }
      archive.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(values));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kMalformed, where + ": bad header: " + e.what());
  }
  return archive;
}

}  // namespace vpconv
