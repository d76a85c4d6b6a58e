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

// Dice and Hausdorff evaluation laid out as Myo / LV / RV / AVG.

#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "fuda/data.hpp"

namespace fuda::metrics {

inline constexpr std::array<int, 3> kForegroundClasses = {kMyo, kLV, kRV};
inline constexpr std::array<const char*, 3> kClassNames = {"Myo", "LV", "RV"};

/// 2|P n T| / (|P| + |T|); 1 when both are empty.
double dice(const LabelMask& pred, const LabelMask& truth, int cls);

/// Pixels of class `cls` with at least one 4-neighbour outside the class or
/// outside the image, as (row, col) pairs in raster order.
std::vector<std::pair<int, int>> boundary_pixels(const LabelMask& mask, int cls);

/// Symmetric Hausdorff distance (mm) between the class boundaries. Both empty
/// gives 0; exactly one empty gives the image diagonal in mm.
double hausdorff(const LabelMask& pred, const LabelMask& truth, int cls,
                 const Spacing& spacing);

struct ClassScore {
  double dice = 0.0;
  double hd_mm = 0.0;
};

struct MetricsReport {
  std::array<ClassScore, 3> per_class{};  // Myo, LV, RV
  ClassScore avg;
  std::map<std::string, std::array<ClassScore, 3>> per_patient;
};

enum class Aggregation {
  kSliceMean,       // per-slice Dice and HD averaged over a patient's slices
  kVolumetricDice,  // Dice pooled over a patient's slices; HD still per slice
};

struct PatientMasks {
  std::string patient_id;
  std::vector<LabelMask> pred;
  std::vector<LabelMask> truth;
  Spacing spacing;
};

/// Per-class metrics averaged over each patient's slices, then over patients.
MetricsReport evaluate(const std::vector<PatientMasks>& patients,
                       Aggregation aggregation = Aggregation::kSliceMean);

/// Header and one row per named report; columns follow
/// DC(Myo, LV, RV, AVG) then HD(Myo, LV, RV, AVG).
std::string report_csv(const std::vector<std::pair<std::string, MetricsReport>>& rows);
std::string report_table(const std::vector<std::pair<std::string, MetricsReport>>& rows);

}  // namespace fuda::metrics
