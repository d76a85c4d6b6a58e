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

// Two-stage training orchestration: style-transfer pretraining on source and
// auxiliary modalities, then segmentation training with (adversarially
// updated) target styles, plus evaluation and visualization commands.

#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "fuda/adversarial.hpp"
#include "fuda/config.hpp"
#include "fuda/data.hpp"
#include "fuda/metrics.hpp"
#include "fuda/rain.hpp"
#include "fuda/segmenter.hpp"

namespace fuda {

/// Loads (or renders) only the requested modalities, then min-max normalizes
/// and center-crops every slice.
Dataset load_modalities(const RunConfig& config, const std::vector<Modality>& modalities);

/// (N, 1, H, W) float tensor of slice pixels.
torch::Tensor slices_to_tensor(const std::vector<LabeledSlice>& items);
/// (N, H, W) int64 tensor of masks; every item must carry one.
torch::Tensor masks_to_tensor(const std::vector<LabeledSlice>& items);

/// Source patient ids used for training, resolved against `available`.
std::vector<std::string> resolve_train_patients(const RunConfig& config,
                                                const std::vector<std::string>& available);
std::vector<std::string> resolve_test_patients(const RunConfig& config,
                                               const std::vector<std::string>& available);

struct Stage1Result {
  std::filesystem::path checkpoint;
  std::filesystem::path loss_curve;
  std::vector<rain::RainCurvePoint> curve;
  std::set<Modality> modalities_read;
};

/// Pretrains RAIN on SOURCE_CONTENT (content) and STYLE_AUX (style) slices of
/// the training patients; writes rain.ckpt and rain_loss.csv to `out_dir`.
Stage1Result train_stage1(const RunConfig& config, const std::filesystem::path& out_dir);

struct Stage2Result {
  std::filesystem::path checkpoint;
  std::filesystem::path log;
  std::filesystem::path ascent_log;
  std::uint64_t rain_hash_before = 0;
  std::uint64_t rain_hash_after = 0;
  int aborted_ascents = 0;
};

/// Trains the segmenter for config.data.target_scope. Few-shot uses every
/// TARGET slice of target_patient, one-shot only target_slice; baseline uses
/// no target data and no stylization. Writes seg.ckpt, seg_log.csv and, when
/// adversarial iterations run, ascent.csv.
Stage2Result train_stage2(const RunConfig& config, const std::filesystem::path& rain_ckpt,
                          const std::filesystem::path& out_dir);

rain::RainNetworks load_rain(const std::filesystem::path& file);
seg::DrUnet load_segmenter(const std::filesystem::path& file);

/// Predicts argmax labels for (N, 1, H, W) images.
std::vector<LabelMask> predict(seg::DrUnet& net, const torch::Tensor& images);

struct EvaluateResult {
  metrics::MetricsReport report;
  std::filesystem::path csv;
  std::filesystem::path table;
  double seconds_per_patient = 0.0;
};

/// Scores the segmenter on the TARGET slices of the test patients; writes
/// report.csv / report.txt under `out_dir` and, when `export_predictions`,
/// label maps under out_dir/predictions.
EvaluateResult evaluate_cmd(const RunConfig& config, const std::filesystem::path& seg_ckpt,
                            const std::filesystem::path& out_dir, const std::string& label,
                            bool export_predictions = false);

enum class EpsSource { kTarget, kPrior };

/// Writes a grid image: top-left the style slice, first row content slices,
/// second row their stylizations.
std::filesystem::path stylize_cmd(const RunConfig& config, const std::filesystem::path& rain_ckpt,
                                  const std::filesystem::path& out_dir, int n_content,
                                  EpsSource source);

/// Renders the phantom and writes it in the on-disk dataset layout.
std::filesystem::path gen_synth_cmd(const RunConfig& config, const std::filesystem::path& out_dir);

}  // namespace fuda
