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

#ifndef VPCONV_CHECKPOINT_H_
#define VPCONV_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace vpconv {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// On-disk layout:
//   "VPCK" | u32 version | u64 header bytes | header JSON | float32 blobs
// The header carries caller metadata under "meta" and a tensor index
// (name, element count, byte offset) plus an FNV-1a checksum of the blobs.
// Values are little-endian.
struct Archive {
  nlohmann::json meta;
  std::vector<std::pair<std::string, std::vector<float>>> tensors;

  bool Has(const std::string& name) const;
  // Throws kMalformed when absent.
  const std::vector<float>& Get(const std::string& name) const;
};

using TensorRefs = std::vector<std::pair<std::string, const std::vector<float>*>>;

// Writes to a temporary sibling and renames it over `path`, so readers never
// see a partial file.
void WriteArchive(const std::filesystem::path& path, const nlohmann::json& meta,
                  const TensorRefs& tensors);

// Errors: kIo (unreadable), kMalformed (bad magic, truncation, checksum),
// kVersionMismatch.
Archive ReadArchive(const std::filesystem::path& path);

}  // namespace vpconv

#endif  // VPCONV_CHECKPOINT_H_
