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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "fuda/data.hpp"
#include "fuda/error.hpp"

namespace fuda {
namespace {

Slice make_slice(int rows, int cols, std::vector<double> values) {
  Slice s;
  s.pixels = Image<double>(rows, cols, std::move(values));
  return s;
}

Slice ramp(int rows, int cols) {
  std::vector<double> v(static_cast<std::size_t>(rows * cols));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
  return make_slice(rows, cols, v);
}

std::set<std::uint8_t> alphabet(const LabelMask& m) {
  return {m.values().begin(), m.values().end()};
}

TEST(Phantom, SameSeedIsBitIdentical) {
  PhantomParams p;
  p.seed = 7;
  const auto a = gen_phantom(p, 1, 1);
  const auto b = gen_phantom(p, 1, 1);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.items()[i].slice.pixels, b.items()[i].slice.pixels);
    EXPECT_EQ(a.items()[i].mask, b.items()[i].mask);
  }
}

TEST(Phantom, MasksSharedAcrossModalities) {
  const auto d = gen_phantom(PhantomParams{}, 2, 4);
  for (Modality m : kAllModalities) EXPECT_EQ(d.select(m).size(), 8u);
  const auto src = d.select(Modality::kSourceContent);
  for (Modality m : {Modality::kStyleAux, Modality::kTarget}) {
    const auto other = d.select(m);
    for (std::size_t i = 0; i < src.size(); ++i) {
      EXPECT_EQ(src[i].slice.patient_id, other[i].slice.patient_id);
      EXPECT_EQ(src[i].slice.slice_index, other[i].slice.slice_index);
      EXPECT_EQ(*src[i].mask, *other[i].mask);
    }
  }
}

TEST(Phantom, ModalityRenderIndependentOfRequestedSet) {
  PhantomParams p;
  p.seed = 3;
  const auto all = gen_phantom(p, 2, 2);
  const auto only_target = gen_phantom(p, 2, 2, {Modality::kTarget});
  EXPECT_EQ(only_target.modalities(), std::set<Modality>{Modality::kTarget});
  const auto a = all.select(Modality::kTarget), b = only_target.select(Modality::kTarget);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].slice.pixels, b[i].slice.pixels);
}

TEST(Phantom, MyoIntensityGapExceedsInModalitySpread) {
  const auto d = gen_phantom(PhantomParams{}, 6, 4);
  auto stats = [&](Modality m) {
    std::vector<double> v;
    for (const auto& it : d.select(m))
      for (int r = 0; r < it.mask->rows(); ++r)
        for (int c = 0; c < it.mask->cols(); ++c)
          if ((*it.mask)(r, c) == kMyo) v.push_back(it.slice.pixels(r, c));
    double mean = 0, sq = 0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    for (double x : v) sq += (x - mean) * (x - mean);
    return std::pair{mean, std::sqrt(sq / static_cast<double>(v.size()))};
  };
  const auto [ms, ss] = stats(Modality::kSourceContent);
  const auto [mt, st] = stats(Modality::kTarget);
  EXPECT_GT(std::abs(ms - mt), std::max(ss, st));
}

TEST(Phantom, AllFourClassesInMostSlices) {
  const auto d = gen_phantom(PhantomParams{}, 20, 8, {Modality::kSourceContent});
  int full = 0;
  for (const auto& it : d.items()) full += alphabet(*it.mask).size() == 4 ? 1 : 0;
  EXPECT_GE(full, static_cast<int>(0.9 * static_cast<double>(d.size())));
}

TEST(Phantom, LvEnclosedByMyo) {
  const auto d = gen_phantom(PhantomParams{}, 10, 8, {Modality::kSourceContent});
  for (const auto& it : d.items()) {
    const auto& m = *it.mask;
    for (int r = 0; r < m.rows(); ++r)
      for (int c = 0; c < m.cols(); ++c) {
        if (m(r, c) != kLV) continue;
        bool edge = false, near_myo = false;
        for (auto [dr, dc] : {std::pair{-1, 0}, {1, 0}, {0, -1}, {0, 1}})
          edge |= !m.contains(r + dr, c + dc) || m(r + dr, c + dc) != kLV;
        if (!edge) continue;
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc)
            near_myo |= m.contains(r + dr, c + dc) && m(r + dr, c + dc) == kMyo;
        EXPECT_TRUE(near_myo) << it.slice.patient_id << "/" << it.slice.slice_index;
      }
  }
}

TEST(Phantom, RejectsInvalidParameters) {
  PhantomParams p;
  p.lv_radius_range = {0.2, 0.1};
  EXPECT_THROW(gen_phantom(p, 1, 1), ConfigError);
  EXPECT_THROW(gen_phantom(PhantomParams{}, 0, 1), ConfigError);
  p = {};
  p.image_size = 16;
  EXPECT_THROW(gen_phantom(p, 1, 1), ConfigError);
}

TEST(Normalize, AffineEndpoints) {
  const auto out = minmax_normalize(make_slice(1, 3, {0, 5, 10}));
  EXPECT_EQ(out.pixels.data(), (std::vector<double>{0, 0.5, 1}));
}

TEST(Normalize, ConstantSliceBecomesZeros) {
  const auto out = minmax_normalize(make_slice(2, 2, {3.7, 3.7, 3.7, 3.7}));
  EXPECT_EQ(out.pixels.data(), std::vector<double>(4, 0.0));
}

TEST(Normalize, UnitRangeUnchangedAndIdempotent) {
  const auto s = make_slice(1, 4, {0, 0.25, 0.6, 1});
  EXPECT_EQ(minmax_normalize(s).pixels, s.pixels);
  const auto r = minmax_normalize(ramp(5, 7));
  EXPECT_EQ(minmax_normalize(r).pixels, r.pixels);
}

TEST(Crop, CenteredWindow) {
  const auto [out, mask] = center_crop(ramp(6, 6), std::nullopt, 4, 4);
  EXPECT_FALSE(mask.has_value());
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) EXPECT_EQ(out.pixels(r, c), (r + 1) * 6 + (c + 1));
}

TEST(Crop, OddMarginTiesTowardTopLeft) {
  const auto [out, mask] = center_crop(ramp(5, 5), std::nullopt, 4, 4);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) EXPECT_EQ(out.pixels(r, c), r * 5 + c);
}

TEST(Crop, FullSizeIsIdentityAndMaskFollows) {
  const auto s = ramp(4, 5);
  LabelMask m(4, 5, 0);
  m(2, 3) = kRV;
  const auto [out, mask] = center_crop(s, m, 4, 5);
  EXPECT_EQ(out.pixels, s.pixels);
  EXPECT_EQ(*mask, m);
  EXPECT_THROW(center_crop(s, m, 5, 5), DimensionError);
  EXPECT_THROW(center_crop(s, LabelMask(3, 3), 2, 2), DimensionError);
}

TEST(Crop, CommutesWithNormalizeWhenExtremaInside) {
  auto s = ramp(8, 8);
  for (double& v : s.pixels.values()) v = 5.0;
  s.pixels(3, 3) = -2.0;
  s.pixels(4, 5) = 9.0;
  s.pixels(2, 4) = 7.0;
  const auto a = center_crop(minmax_normalize(s), std::nullopt, 4, 4).first;
  const auto b = minmax_normalize(center_crop(s, std::nullopt, 4, 4).first);
  EXPECT_EQ(a.pixels, b.pixels);
}

TEST(Augment, IdentityConfigLeavesInputUnchanged) {
  const auto d = gen_phantom(PhantomParams{}, 1, 1, {Modality::kSourceContent});
  const auto& it = d.items().front();
  const auto [s, m] = affine_augment(it.slice, *it.mask, AffineConfig::identity(), 11);
  EXPECT_EQ(s.pixels, it.slice.pixels);
  EXPECT_EQ(m, *it.mask);
}

TEST(Augment, HalfTurnPreservesClassAreas) {
  const auto d = gen_phantom(PhantomParams{}, 1, 2, {Modality::kSourceContent});
  AffineConfig half = AffineConfig::identity();
  half.rotation_deg = {180.0, 180.0};
  for (const auto& it : d.items()) {
    const auto [s, m] = affine_augment(it.slice, *it.mask, half, 1);
    for (int cls = 0; cls < kNumClasses; ++cls)
      EXPECT_EQ(std::count(m.values().begin(), m.values().end(), cls),
                std::count(it.mask->values().begin(), it.mask->values().end(), cls));
  }
}

TEST(Augment, DeterministicAndAlphabetPreserving) {
  const auto d = gen_phantom(PhantomParams{}, 2, 3, {Modality::kSourceContent});
  const AffineConfig aug;
  for (const auto& it : d.items()) {
    const auto a = affine_augment(it.slice, *it.mask, aug, 99);
    const auto b = affine_augment(it.slice, *it.mask, aug, 99);
    EXPECT_EQ(a.first.pixels, b.first.pixels);
    EXPECT_EQ(a.second, b.second);
    const auto in = alphabet(*it.mask), out = alphabet(a.second);
    EXPECT_TRUE(std::includes(in.begin(), in.end(), out.begin(), out.end()));
    for (double v : a.first.pixels.values()) EXPECT_TRUE(std::isfinite(v));
  }
}

TEST(Augment, RejectsEmptyRangesAndShapeMismatch) {
  AffineConfig bad;
  bad.scale = {1.1, 0.9};
  const auto s = ramp(4, 4);
  EXPECT_THROW(affine_augment(s, LabelMask(4, 4), bad, 0), ConfigError);
  EXPECT_THROW(affine_augment(s, LabelMask(3, 4), AffineConfig{}, 0), DimensionError);
}

TEST(Modality, TagsRoundTrip) {
  for (Modality m : kAllModalities) EXPECT_EQ(modality_from_tag(modality_tag(m)), m);
  EXPECT_EQ(modality_tag(Modality::kTarget), "TARGET");
  EXPECT_THROW(modality_from_tag("LGE"), ConfigError);
}

TEST(DataJson, ParamsRoundTrip) {
  PhantomParams p;
  p.seed = 42;
  p.appearance[2].gamma = 3.0;
  EXPECT_EQ(nlohmann::json(p).get<PhantomParams>(), p);
  AffineConfig a;
  a.shear = {-0.01, 0.02};
  EXPECT_EQ(nlohmann::json(a).get<AffineConfig>(), a);
}

}  // namespace
}  // namespace fuda
