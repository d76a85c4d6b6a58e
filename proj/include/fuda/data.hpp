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

// Slices, label masks, the synthetic cardiac phantom, preprocessing and
// augmentation, and on-disk dataset ingestion.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "fuda/image.hpp"

namespace fuda {

enum class Modality : int { kSourceContent = 0, kStyleAux = 1, kTarget = 2 };
inline constexpr std::array<Modality, 3> kAllModalities = {
    Modality::kSourceContent, Modality::kStyleAux, Modality::kTarget};

/// Tag as written in manifests and config files, e.g. "SOURCE_CONTENT".
std::string modality_tag(Modality m);
Modality modality_from_tag(const std::string& tag);

/// Segmentation classes; kNumClasses includes background.
enum Label : std::uint8_t { kBackground = 0, kMyo = 1, kLV = 2, kRV = 3 };
inline constexpr int kNumClasses = 4;

struct Spacing {
  double row_mm = 1.0;
  double col_mm = 1.0;
  friend bool operator==(const Spacing&, const Spacing&) = default;
};

struct Slice {
  Image<double> pixels;
  Spacing spacing;
  Modality modality = Modality::kSourceContent;
  std::string patient_id;
  int slice_index = 0;
};

using LabelMask = Image<std::uint8_t>;

struct LabeledSlice {
  Slice slice;
  std::optional<LabelMask> mask;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool valid() const noexcept { return lo <= hi; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Appearance of one modality: base tissue intensities are remapped through
/// `contrast * base^gamma + offset` and then modulated by band-limited
/// multiplicative noise of relative amplitude `noise_amplitude`.
struct ModalityAppearance {
  double gamma = 1.0;
  double contrast = 1.0;
  double offset = 0.0;
  double noise_amplitude = 0.05;
  double noise_scale_px = 1.5;   // std of the Gaussian low-pass on the noise
  double gamma_jitter = 0.0;     // per-patient +/- uniform jitter on gamma
  friend bool operator==(const ModalityAppearance&,
                         const ModalityAppearance&) = default;
};

/// Geometry ranges are fractions of image_size.
struct PhantomParams {
  int image_size = 64;
  Interval lv_radius_range{0.09, 0.14};
  Interval myo_thickness_range{0.035, 0.06};
  Interval rv_offset_range{0.16, 0.24};
  Interval rv_radius_range{0.13, 0.18};
  Interval center_jitter{-0.06, 0.06};
  Spacing spacing{2.0, 2.0};
  std::array<ModalityAppearance, 3> appearance = default_appearance();
  std::uint64_t seed = 0;

  static std::array<ModalityAppearance, 3> default_appearance();
  friend bool operator==(const PhantomParams&, const PhantomParams&) = default;
};

/// Flat collection ordered by (modality, patient_id, slice_index).
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::vector<LabeledSlice> items);

  const std::vector<LabeledSlice>& items() const noexcept { return items_; }
  std::size_t size() const noexcept { return items_.size(); }

  std::vector<LabeledSlice> select(Modality m) const;
  std::vector<LabeledSlice> select(Modality m, const std::string& patient) const;
  std::vector<std::string> patients(Modality m) const;
  std::set<Modality> modalities() const;

 private:
  std::vector<LabeledSlice> items_;
};

/// Renders `n_patients x slices_per_patient` geometries in each requested
/// modality; the mask of a given (patient, slice) is identical across
/// modalities and the render of one modality does not depend on which other
/// modalities were requested.
Dataset gen_phantom(const PhantomParams& params, int n_patients,
                    int slices_per_patient,
                    const std::vector<Modality>& modalities = {
                        kAllModalities.begin(), kAllModalities.end()});

std::string phantom_patient_id(int index);

Slice minmax_normalize(const Slice& slice);

std::pair<Slice, std::optional<LabelMask>> center_crop(
    const Slice& slice, const std::optional<LabelMask>& mask, int h, int w);

/// Parameter ranges are sampled uniformly; degrees for rotation, pixels for
/// translation, unitless for shear and isotropic scale.
struct AffineConfig {
  Interval rotation_deg{-15.0, 15.0};
  Interval translation_px{-3.0, 3.0};
  Interval shear{-0.08, 0.08};
  Interval scale{0.92, 1.08};

  static AffineConfig identity();
  void validate() const;
  friend bool operator==(const AffineConfig&, const AffineConfig&) = default;
};

std::pair<Slice, LabelMask> affine_augment(const Slice& slice,
                                           const LabelMask& mask,
                                           const AffineConfig& aug,
                                           std::uint64_t seed);

enum class DatasetLayout { kModalityPatientSlice };

/// Reads `<root>/<modality dir>/<patient>/<index>.{npy,png}` with optional
/// `<index>_mask.{npy,png}` siblings, as described by `<root>/manifest.json`.
/// Only directories of `modalities` are touched.
Dataset load_dataset(const std::filesystem::path& root,
                     DatasetLayout layout = DatasetLayout::kModalityPatientSlice,
                     const std::vector<Modality>& modalities = {
                         kAllModalities.begin(), kAllModalities.end()});

/// Inverse of load_dataset, writing the dense-array container.
void save_dataset(const Dataset& data, const std::filesystem::path& root);

void to_json(nlohmann::json& j, const Interval& v);
void from_json(const nlohmann::json& j, Interval& v);
void to_json(nlohmann::json& j, const Spacing& v);
void from_json(const nlohmann::json& j, Spacing& v);
void to_json(nlohmann::json& j, const ModalityAppearance& v);
void from_json(const nlohmann::json& j, ModalityAppearance& v);
void to_json(nlohmann::json& j, const PhantomParams& v);
void from_json(const nlohmann::json& j, PhantomParams& v);
void to_json(nlohmann::json& j, const AffineConfig& v);
void from_json(const nlohmann::json& j, AffineConfig& v);

}  // namespace fuda
