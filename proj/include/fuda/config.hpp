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

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "fuda/data.hpp"
#include "fuda/metrics.hpp"
#include "fuda/rain.hpp"
#include "fuda/segmenter.hpp"

namespace fuda {

/// kBaseline trains on source images only (no stylization, no target data).
enum class TargetScope { kFewShot, kOneShot, kBaseline };

std::string to_string(TargetScope s);
TargetScope target_scope_from_string(const std::string& s);

struct DataConfig {
  std::string root;  // empty: render the synthetic phantom
  PhantomParams phantom;
  int n_patients = 20;
  int slices_per_patient = 8;
  int crop_size = 64;
  std::vector<std::string> train_patients;  // empty: everything not test/target
  std::vector<std::string> test_patients;   // empty: everything not train/target
  std::string target_patient = "p012";
  int target_slice = 3;
  TargetScope target_scope = TargetScope::kFewShot;
  bool augment = true;
  AffineConfig augmentation;
  metrics::Aggregation aggregation = metrics::Aggregation::kSliceMean;
  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct RainStageConfig {
  rain::RainArch arch;
  rain::RainTrainConfig train;
  int heldout_slices = 8;
  friend bool operator==(const RainStageConfig&, const RainStageConfig&) = default;
};

struct SegStageConfig {
  seg::SegArch arch;
  int pretrain_iters = 800;  // phase A: fixed sampled styles
  int adv_iters = 800;       // phase B: alternating eps ascent / descent
  int batch_size = 8;         // source + stylized, 1:1
  double lr = 1e-2;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double poly_power = 0.9;
  double lambda_con = 2e-3;
  friend bool operator==(const SegStageConfig&, const SegStageConfig&) = default;
};

struct AdvConfig {
  double alpha = 1.0;
  int resample_period = 10;
  friend bool operator==(const AdvConfig&, const AdvConfig&) = default;
};

struct RunConfig {
  std::uint64_t seed = 0;
  int threads = 1;
  DataConfig data;
  RainStageConfig rain;
  SegStageConfig seg;
  AdvConfig adv;

  /// Throws ConfigError on negative counts or weights, empty ranges, etc.
  void validate() const;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Desk-scale defaults with the phantom patients split 12 / 1 / 7 into
/// train / target / test.
RunConfig default_config();

RunConfig load_config(const std::filesystem::path& file);
void save_config(const RunConfig& config, const std::filesystem::path& file);

void to_json(nlohmann::json& j, const RunConfig& v);
void from_json(const nlohmann::json& j, RunConfig& v);

}  // namespace fuda
