// ----------------------------------------------------------------------------
// Copyright 2026 The FUDA Authors
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
// ----------------------------------------------------------------------------

// Versioned parameter container shared by the style-transfer and segmentation
// networks.
//
// Layout (all integers little-endian):
//   "FUDACKPT" | u32 version | str kind | u64 config_hash | str config_json |
//   u32 n_tensors | n x { str name | u8 dtype | u32 ndim | i64 dims[ndim] |
//   raw payload }
// where str is u32 length + bytes and dtype is 0 = float32, 1 = float64.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "json.hpp"

namespace fuda::ckpt {

inline constexpr std::uint32_t kFormatVersion = 1;

struct Checkpoint {
  std::string kind;
  nlohmann::json config;
  std::vector<std::pair<std::string, torch::Tensor>> tensors;
};

/// FNV-1a over the compact JSON serialization.
std::uint64_t config_hash(const nlohmann::json& config);

/// FNV-1a over names and raw bytes of every parameter and buffer.
std::uint64_t parameter_hash(const torch::nn::Module& module);

void save(const std::filesystem::path& file, const std::string& kind,
          const nlohmann::json& config, const torch::nn::Module& module);

/// Verifies magic, version and the stored config hash.
Checkpoint read(const std::filesystem::path& file);

/// Copies tensors into `module` by name; every parameter and buffer must be
/// present with a matching shape. Throws CheckpointError otherwise, or when
/// `expected_kind` differs.
void load_into(const Checkpoint& ckpt, torch::nn::Module& module,
               const std::string& expected_kind);

}  // namespace fuda::ckpt
