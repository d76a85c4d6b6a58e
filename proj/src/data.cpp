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

#include "fuda/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <tuple>

#include "fuda/array_io.hpp"
#include "fuda/random.hpp"

namespace fuda {

namespace fs = std::filesystem;

std::string modality_tag(Modality m) {
  switch (m) {
    case Modality::kSourceContent: return "SOURCE_CONTENT";
    case Modality::kStyleAux: return "STYLE_AUX";
    case Modality::kTarget: return "TARGET";
  }
  throw ConfigError("unknown modality");
}

Modality modality_from_tag(const std::string& tag) {
  for (Modality m : kAllModalities)
    if (modality_tag(m) == tag) return m;
  throw ConfigError("unknown modality tag '" + tag + "'");
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

Dataset::Dataset(std::vector<LabeledSlice> items) : items_(std::move(items)) {
  std::stable_sort(items_.begin(), items_.end(),
                   [](const LabeledSlice& a, const LabeledSlice& b) {
                     return std::tie(a.slice.modality, a.slice.patient_id,
                                     a.slice.slice_index) <
                            std::tie(b.slice.modality, b.slice.patient_id,
                                     b.slice.slice_index);
                   });
}

std::vector<LabeledSlice> Dataset::select(Modality m) const {
  std::vector<LabeledSlice> out;
  for (const auto& it : items_)
    if (it.slice.modality == m) out.push_back(it);
  return out;
}

std::vector<LabeledSlice> Dataset::select(Modality m,
                                          const std::string& patient) const {
  std::vector<LabeledSlice> out;
  for (const auto& it : items_)
    if (it.slice.modality == m && it.slice.patient_id == patient)
      out.push_back(it);
  return out;
}

std::vector<std::string> Dataset::patients(Modality m) const {
  std::vector<std::string> out;
  for (const auto& it : items_)
    if (it.slice.modality == m &&
        (out.empty() || out.back() != it.slice.patient_id))
      out.push_back(it.slice.patient_id);
  return out;
}

std::set<Modality> Dataset::modalities() const {
  std::set<Modality> out;
  for (const auto& it : items_) out.insert(it.slice.modality);
  return out;
}

// ---------------------------------------------------------------------------
// Phantom
// ---------------------------------------------------------------------------

std::array<ModalityAppearance, 3> PhantomParams::default_appearance() {
  ModalityAppearance source{.gamma = 0.8, .contrast = 1.0, .offset = 0.0,
                            .noise_amplitude = 0.06, .noise_scale_px = 1.0,
                            .gamma_jitter = 0.1};
  ModalityAppearance aux{.gamma = 1.6, .contrast = 0.9, .offset = 0.02,
                         .noise_amplitude = 0.12, .noise_scale_px = 1.5,
                         .gamma_jitter = 0.3};
  ModalityAppearance target{.gamma = 2.4, .contrast = 1.0, .offset = 0.03,
                            .noise_amplitude = 0.18, .noise_scale_px = 2.0,
                            .gamma_jitter = 0.25};
  return {source, aux, target};
}

std::string phantom_patient_id(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "p%03d", index);
  return buf;
}

namespace {

enum Tissue : int { kAir, kLung, kBody, kLiver, kTMyo, kTLV, kTRV, kNumTissues };

constexpr std::array<double, kNumTissues> kBaseIntensity = {
    0.0, 0.06, 0.42, 0.55, 0.28, 0.90, 0.85};

struct Ellipse {
  double cy, cx, ry, rx, angle;
  double radius(double y, double x) const {
    const double dy = y - cy, dx = x - cx;
    const double ca = std::cos(angle), sa = std::sin(angle);
    const double u = ca * dx + sa * dy, v = -sa * dx + ca * dy;
    return std::sqrt((u / rx) * (u / rx) + (v / ry) * (v / ry));
  }
};

struct PatientAnatomy {
  double cy, cx;          // heart center, pixels
  double lv_r, myo_t;     // pixels at the base slice
  double rv_off, rv_r, rv_angle;
  double ellipticity, orientation;
  Ellipse body, lung_l, lung_r, liver;
  std::array<double, kNumTissues> intensity;
  std::array<double, 3> gamma;
};

double draw(std::mt19937_64& rng, const Interval& iv) {
  if (iv.lo == iv.hi) return iv.lo;
  return std::uniform_real_distribution<double>(iv.lo, iv.hi)(rng);
}

PatientAnatomy make_patient(const PhantomParams& p, int patient) {
  std::mt19937_64 rng(mix_seed(p.seed, 0x9a71e47u, static_cast<std::uint64_t>(patient)));
  const double n = p.image_size;
  const double mid = (n - 1) / 2.0;
  PatientAnatomy a{};
  a.cy = mid + draw(rng, p.center_jitter) * n;
  a.cx = mid + draw(rng, p.center_jitter) * n;
  a.lv_r = draw(rng, p.lv_radius_range) * n;
  a.myo_t = draw(rng, p.myo_thickness_range) * n;
  a.rv_off = draw(rng, p.rv_offset_range) * n;
  a.rv_r = draw(rng, p.rv_radius_range) * n;
  a.rv_angle = std::numbers::pi + draw(rng, {-0.35, 0.35});
  a.ellipticity = draw(rng, {0.85, 1.0});
  a.orientation = draw(rng, {0.0, std::numbers::pi});
  a.body = {mid + draw(rng, {-0.02, 0.02}) * n, mid + draw(rng, {-0.02, 0.02}) * n,
            draw(rng, {0.38, 0.44}) * n, draw(rng, {0.44, 0.49}) * n, 0.0};
  a.lung_l = {mid - 0.10 * n, mid - 0.30 * n + draw(rng, {-0.02, 0.02}) * n,
              draw(rng, {0.16, 0.2}) * n, draw(rng, {0.08, 0.11}) * n,
              draw(rng, {-0.3, 0.3})};
  a.lung_r = {mid - 0.10 * n, mid + 0.32 * n + draw(rng, {-0.02, 0.02}) * n,
              draw(rng, {0.16, 0.2}) * n, draw(rng, {0.07, 0.10}) * n,
              draw(rng, {-0.3, 0.3})};
  a.liver = {mid + 0.30 * n, mid - 0.18 * n + draw(rng, {-0.03, 0.03}) * n,
             draw(rng, {0.10, 0.14}) * n, draw(rng, {0.18, 0.24}) * n,
             draw(rng, {-0.2, 0.2})};
  for (int t = 0; t < kNumTissues; ++t)
    a.intensity[t] = t == kAir ? 0.0
                               : std::clamp(kBaseIntensity[t] + draw(rng, {-0.03, 0.03}),
                                            0.01, 1.0);
  for (int m = 0; m < 3; ++m) {
    const auto& app = p.appearance[m];
    a.gamma[m] = std::max(0.05, app.gamma + draw(rng, {-app.gamma_jitter, app.gamma_jitter}));
  }
  return a;
}

struct SliceGeometry {
  Image<int> tissue;
  LabelMask mask;
};

SliceGeometry make_slice(const PhantomParams& p, const PatientAnatomy& a,
                         int patient, int slice, int n_slices) {
  std::mt19937_64 rng(mix_seed(p.seed, 0x51ce5u, static_cast<std::uint64_t>(patient),
                               static_cast<std::uint64_t>(slice)));
  const double t = n_slices > 1 ? static_cast<double>(slice) / (n_slices - 1) : 0.5;
  const double shrink = 1.1 - 0.35 * t + draw(rng, {-0.03, 0.03});
  const double lv_r = a.lv_r * shrink;
  const double myo_t = a.myo_t * (0.9 + 0.2 * (1.0 - t));
  const double rv_r = a.rv_r * shrink;
  const double rv_off = a.rv_off * shrink;
  const double cy = a.cy + draw(rng, {-0.6, 0.6});
  const double cx = a.cx + draw(rng, {-0.6, 0.6});
  const Ellipse heart{cy, cx, a.ellipticity, 1.0, a.orientation};
  const double rv_cy = cy + rv_off * std::sin(a.rv_angle);
  const double rv_cx = cx + rv_off * std::cos(a.rv_angle);
  const Ellipse rv{rv_cy, rv_cx, rv_r, rv_r * 0.8, a.rv_angle + std::numbers::pi / 2};

  const int n = p.image_size;
  SliceGeometry g{Image<int>(n, n, kAir), LabelMask(n, n, kBackground)};
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const double y = r, x = c;
      int tissue = kAir;
      if (a.body.radius(y, x) < 1.0) tissue = kBody;
      if (a.lung_l.radius(y, x) < 1.0 || a.lung_r.radius(y, x) < 1.0) tissue = kLung;
      if (a.liver.radius(y, x) < 1.0) tissue = kLiver;
      const double d = heart.radius(y, x);  // pixel units, unit ellipse axes
      std::uint8_t label = kBackground;
      if (d < lv_r) {
        tissue = kTLV;
        label = kLV;
      } else if (d < lv_r + myo_t) {
        tissue = kTMyo;
        label = kMyo;
      } else if (rv.radius(y, x) < 1.0 && d >= lv_r + myo_t + 0.5) {
        tissue = kTRV;
        label = kRV;
      }
      g.tissue(r, c) = tissue;
      g.mask(r, c) = label;
    }
  }
  return g;
}

// Separable Gaussian low-pass of white noise, rescaled to unit std.
Image<double> band_limited_noise(int n, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Image<double> white(n, n);
  for (double& v : white.values()) v = gauss(rng);
  if (sigma <= 0.0) return white;

  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double ksum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    ksum += k[i + radius];
  }
  for (double& v : k) v /= ksum;

  auto reflect = [n](int i) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
    return i;
  };
  Image<double> tmp(n, n), out(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i) s += k[i + radius] * white(r, reflect(c + i));
      tmp(r, c) = s;
    }
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i) s += k[i + radius] * tmp(reflect(r + i), c);
      out(r, c) = s;
    }
  double mean = 0.0, sq = 0.0;
  for (double v : out.values()) mean += v;
  mean /= static_cast<double>(out.size());
  for (double v : out.values()) sq += (v - mean) * (v - mean);
  const double sd = std::sqrt(sq / static_cast<double>(out.size()));
  for (double& v : out.values()) v = sd > 0 ? (v - mean) / sd : 0.0;
  return out;
}

void validate(const PhantomParams& p, int n_patients, int slices_per_patient) {
  if (n_patients < 1) throw ConfigError("gen_phantom: n_patients must be >= 1");
  if (slices_per_patient < 1)
    throw ConfigError("gen_phantom: slices_per_patient must be >= 1");
  if (p.image_size < 32) throw ConfigError("gen_phantom: image_size must be >= 32");
  const std::pair<const char*, const Interval*> ranges[] = {
      {"lv_radius_range", &p.lv_radius_range},
      {"myo_thickness_range", &p.myo_thickness_range},
      {"rv_offset_range", &p.rv_offset_range},
      {"rv_radius_range", &p.rv_radius_range},
      {"center_jitter", &p.center_jitter}};
  for (const auto& [name, iv] : ranges)
    if (!iv->valid()) throw ConfigError(std::string("gen_phantom: empty interval ") + name);
  if (p.lv_radius_range.lo <= 0 || p.myo_thickness_range.lo <= 0 ||
      p.rv_radius_range.lo <= 0)
    throw ConfigError("gen_phantom: radii and thickness must be positive");
  if (p.spacing.row_mm <= 0 || p.spacing.col_mm <= 0)
    throw ConfigError("gen_phantom: spacing must be positive");
  for (const auto& app : p.appearance)
    if (app.gamma <= 0 || app.contrast <= 0 || app.noise_amplitude < 0 ||
        app.noise_scale_px < 0 || app.gamma_jitter < 0)
      throw ConfigError("gen_phantom: invalid modality appearance");
}

}  // namespace

Dataset gen_phantom(const PhantomParams& params, int n_patients,
                    int slices_per_patient,
                    const std::vector<Modality>& modalities) {
  validate(params, n_patients, slices_per_patient);
  std::vector<LabeledSlice> items;
  for (int pt = 0; pt < n_patients; ++pt) {
    const PatientAnatomy anatomy = make_patient(params, pt);
    for (int s = 0; s < slices_per_patient; ++s) {
      const SliceGeometry geo = make_slice(params, anatomy, pt, s, slices_per_patient);
      for (Modality m : modalities) {
        const int mi = static_cast<int>(m);
        const ModalityAppearance& app = params.appearance[mi];
        const Image<double> noise = band_limited_noise(
            params.image_size, app.noise_scale_px,
            mix_seed(params.seed, 0x401e5u, static_cast<std::uint64_t>(pt),
                     static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(mi)));
        Image<double> px(params.image_size, params.image_size);
        for (int r = 0; r < px.rows(); ++r)
          for (int c = 0; c < px.cols(); ++c) {
            const double base = anatomy.intensity[geo.tissue(r, c)];
            const double v = base > 0.0
                                 ? app.contrast * std::pow(base, anatomy.gamma[mi]) + app.offset
                                 : 0.0;
            px(r, c) = std::max(0.0, v * (1.0 + app.noise_amplitude * noise(r, c)));
          }
        Slice sl{std::move(px), params.spacing, m, phantom_patient_id(pt), s};
        items.push_back({std::move(sl), geo.mask});
      }
    }
  }
  return Dataset(std::move(items));
}

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

Slice minmax_normalize(const Slice& slice) {
  Slice out = slice;
  const auto vals = slice.pixels.values();
  if (vals.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(vals.begin(), vals.end());
  const double lo = *lo_it, hi = *hi_it;
  auto dst = out.pixels.values();
  if (hi == lo) {
    std::fill(dst.begin(), dst.end(), 0.0);
    return out;
  }
  const double range = hi - lo;
  for (std::size_t i = 0; i < vals.size(); ++i) dst[i] = (vals[i] - lo) / range;
  return out;
}

namespace {
template <typename T>
Image<T> crop_window(const Image<T>& img, int top, int left, int h, int w) {
  Image<T> out(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) out(r, c) = img(top + r, left + c);
  return out;
}
}  // namespace

std::pair<Slice, std::optional<LabelMask>> center_crop(
    const Slice& slice, const std::optional<LabelMask>& mask, int h, int w) {
  const int rows = slice.pixels.rows(), cols = slice.pixels.cols();
  if (h < 1 || w < 1 || h > rows || w > cols)
    throw DimensionError("center_crop: window " + std::to_string(h) + "x" +
                         std::to_string(w) + " does not fit image " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  if (mask && !mask->same_shape(slice.pixels))
    throw DimensionError("center_crop: mask shape differs from slice");
  // Odd margins leave the extra row/column at the bottom/right.
  const int top = (rows - h) / 2, left = (cols - w) / 2;
  Slice out = slice;
  out.pixels = crop_window(slice.pixels, top, left, h, w);
  std::optional<LabelMask> out_mask;
  if (mask) out_mask = crop_window(*mask, top, left, h, w);
  return {std::move(out), std::move(out_mask)};
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

AffineConfig AffineConfig::identity() {
  return {{0.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}, {1.0, 1.0}};
}

void AffineConfig::validate() const {
  if (!rotation_deg.valid() || !translation_px.valid() || !shear.valid() ||
      !scale.valid())
    throw ConfigError("AffineConfig: empty interval");
  if (scale.lo <= 0.0) throw ConfigError("AffineConfig: scale must be positive");
}

std::pair<Slice, LabelMask> affine_augment(const Slice& slice,
                                           const LabelMask& mask,
                                           const AffineConfig& aug,
                                           std::uint64_t seed) {
  aug.validate();
  if (!mask.same_shape(slice.pixels))
    throw DimensionError("affine_augment: mask shape differs from slice");
  std::mt19937_64 rng(seed);
  const double theta = draw(rng, aug.rotation_deg) * std::numbers::pi / 180.0;
  const double ty = draw(rng, aug.translation_px);
  const double tx = draw(rng, aug.translation_px);
  const double sh = draw(rng, aug.shear);
  const double sc = draw(rng, aug.scale);

  // Forward map on (y, x) about the image center: A = R(theta) * Shear * s.
  const double ct = std::cos(theta), st = std::sin(theta);
  const double a00 = sc * ct, a01 = sc * (ct * sh - st);
  const double a10 = sc * st, a11 = sc * (st * sh + ct);
  const double det = a00 * a11 - a01 * a10;
  const double i00 = a11 / det, i01 = -a01 / det;
  const double i10 = -a10 / det, i11 = a00 / det;

  const int rows = slice.pixels.rows(), cols = slice.pixels.cols();
  const double cy = (rows - 1) / 2.0, cx = (cols - 1) / 2.0;
  Slice out = slice;
  LabelMask out_mask(rows, cols, kBackground);
  const auto& src = slice.pixels;
  auto at = [&](int r, int c) { return src.contains(r, c) ? src(r, c) : 0.0; };

  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      // Columns are x, rows are y; rotate in (x, y) order.
      const double px = c - cx - tx, py = r - cy - ty;
      const double sx = i00 * px + i01 * py + cx;
      const double sy = i10 * px + i11 * py + cy;

      const double fy = std::floor(sy), fx = std::floor(sx);
      const double wy = sy - fy, wx = sx - fx;
      const int y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
      double v = 0.0;
      if (y0 >= -1 && y0 < rows && x0 >= -1 && x0 < cols) {
        v = (1 - wy) * ((1 - wx) * at(y0, x0) + (wx > 0 ? wx * at(y0, x0 + 1) : 0.0));
        if (wy > 0)
          v += wy * ((1 - wx) * at(y0 + 1, x0) + (wx > 0 ? wx * at(y0 + 1, x0 + 1) : 0.0));
      }
      out.pixels(r, c) = v;

      const int ny = static_cast<int>(std::lround(sy));
      const int nx = static_cast<int>(std::lround(sx));
      out_mask(r, c) = mask.contains(ny, nx) ? mask(ny, nx) : std::uint8_t{kBackground};
    }
  }
  return {std::move(out), std::move(out_mask)};
}

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

namespace {

constexpr const char* kManifestName = "manifest.json";

std::string default_dir_name(Modality m) {
  std::string tag = modality_tag(m);
  std::transform(tag.begin(), tag.end(), tag.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return tag;
}

std::optional<int> parse_index(std::string_view s) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || v < 0) return std::nullopt;
  return v;
}

LabelMask to_mask(const Image<double>& raw, const fs::path& file) {
  LabelMask out(raw.rows(), raw.cols());
  for (int r = 0; r < raw.rows(); ++r)
    for (int c = 0; c < raw.cols(); ++c) {
      const double v = raw(r, c);
      if (!(v >= 0 && v < kNumClasses) || v != std::floor(v))
        throw IngestionError(file.string(), "mask value outside {0,1,2,3}");
      out(r, c) = static_cast<std::uint8_t>(v);
    }
  return out;
}

}  // namespace

Dataset load_dataset(const fs::path& root, DatasetLayout layout,
                     const std::vector<Modality>& modalities) {
  if (layout != DatasetLayout::kModalityPatientSlice)
    throw ConfigError("load_dataset: unsupported layout");
  const fs::path manifest_path = root / kManifestName;
  std::ifstream is(manifest_path);
  if (!is) throw IngestionError(manifest_path.string(), "missing dataset manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError(manifest_path.string(), std::string("malformed manifest: ") + e.what());
  }

  Spacing default_spacing;
  std::map<std::string, Spacing> patient_spacing;
  std::map<Modality, std::string> dirs;
  try {
    if (manifest.contains("spacing_mm")) default_spacing = manifest.at("spacing_mm");
    if (manifest.contains("patients"))
      for (const auto& [pid, info] : manifest.at("patients").items())
        if (info.contains("spacing_mm")) patient_spacing[pid] = info.at("spacing_mm");
    if (manifest.contains("modalities")) {
      for (const auto& [tag, dir] : manifest.at("modalities").items())
        dirs[modality_from_tag(tag)] = dir.get<std::string>();
    } else {
      for (Modality m : kAllModalities) dirs[m] = default_dir_name(m);
    }
  } catch (const std::exception& e) {
    throw IngestionError(manifest_path.string(), std::string("malformed manifest: ") + e.what());
  }
  if (default_spacing.row_mm <= 0 || default_spacing.col_mm <= 0)
    throw IngestionError(manifest_path.string(), "spacing must be positive");

  std::vector<LabeledSlice> items;
  for (Modality m : modalities) {
    auto dir_it = dirs.find(m);
    if (dir_it == dirs.end()) continue;
    const fs::path mod_dir = root / dir_it->second;
    if (!fs::is_directory(mod_dir)) continue;

    std::vector<fs::path> patient_dirs;
    for (const auto& e : fs::directory_iterator(mod_dir))
      if (e.is_directory()) patient_dirs.push_back(e.path());
    std::sort(patient_dirs.begin(), patient_dirs.end());

    for (const auto& pdir : patient_dirs) {
      const std::string pid = pdir.filename().string();
      std::map<int, fs::path> images, masks;
      for (const auto& e : fs::directory_iterator(pdir)) {
        const fs::path f = e.path();
        const std::string ext = f.extension().string();
        std::string stem = f.stem().string();
        if (!e.is_regular_file() || (ext != ".npy" && ext != ".png"))
          throw IngestionError(f.string(), "unexpected entry in patient directory");
        bool is_mask = false;
        constexpr std::string_view kSuffix = "_mask";
        if (stem.size() > kSuffix.size() && stem.ends_with(kSuffix)) {
          is_mask = true;
          stem.resize(stem.size() - kSuffix.size());
        }
        const auto idx = parse_index(stem);
        if (!idx) throw IngestionError(f.string(), "file name is not <slice_index>[_mask].<ext>");
        auto& slot = is_mask ? masks : images;
        if (!slot.emplace(*idx, f).second)
          throw IngestionError(f.string(), "duplicate slice index");
      }
      for (const auto& [idx, mfile] : masks)
        if (!images.contains(idx)) throw IngestionError(mfile.string(), "mask without image");

      const Spacing sp = patient_spacing.contains(pid) ? patient_spacing[pid] : default_spacing;
      for (const auto& [idx, ifile] : images) {
        Image<double> px = io::read_array(ifile);
        for (double v : px.values())
          if (!std::isfinite(v)) throw IngestionError(ifile.string(), "non-finite pixel");
        std::optional<LabelMask> mask;
        if (auto mit = masks.find(idx); mit != masks.end()) {
          mask = to_mask(io::read_array(mit->second), mit->second);
          if (!mask->same_shape(px))
            throw IngestionError(mit->second.string(), "mask shape differs from image");
        }
        items.push_back({Slice{std::move(px), sp, m, pid, idx}, std::move(mask)});
      }
    }
  }
  return Dataset(std::move(items));
}

void save_dataset(const Dataset& data, const fs::path& root) {
  fs::create_directories(root);
  nlohmann::json manifest;
  manifest["format"] = "fuda-dataset";
  manifest["version"] = 1;
  nlohmann::json mods = nlohmann::json::object();
  for (Modality m : data.modalities()) mods[modality_tag(m)] = default_dir_name(m);
  manifest["modalities"] = mods;
  nlohmann::json patients = nlohmann::json::object();
  for (const auto& it : data.items()) {
    const Slice& s = it.slice;
    patients[s.patient_id]["spacing_mm"] = s.spacing;
    const fs::path pdir = root / default_dir_name(s.modality) / s.patient_id;
    fs::create_directories(pdir);
    const std::string idx = std::to_string(s.slice_index);
    io::write_npy(pdir / (idx + ".npy"), s.pixels);
    if (it.mask) io::write_npy(pdir / (idx + "_mask.npy"), *it.mask);
  }
  manifest["patients"] = patients;
  if (!data.items().empty()) manifest["spacing_mm"] = data.items().front().slice.spacing;
  std::ofstream os(root / kManifestName);
  os << manifest.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

void to_json(nlohmann::json& j, const Interval& v) { j = nlohmann::json::array({v.lo, v.hi}); }
void from_json(const nlohmann::json& j, Interval& v) {
  v.lo = j.at(0).get<double>();
  v.hi = j.at(1).get<double>();
}
void to_json(nlohmann::json& j, const Spacing& v) {
  j = nlohmann::json::array({v.row_mm, v.col_mm});
}
void from_json(const nlohmann::json& j, Spacing& v) {
  v.row_mm = j.at(0).get<double>();
  v.col_mm = j.at(1).get<double>();
}

void to_json(nlohmann::json& j, const ModalityAppearance& v) {
  j = {{"gamma", v.gamma},
       {"contrast", v.contrast},
       {"offset", v.offset},
       {"noise_amplitude", v.noise_amplitude},
       {"noise_scale_px", v.noise_scale_px},
       {"gamma_jitter", v.gamma_jitter}};
}
void from_json(const nlohmann::json& j, ModalityAppearance& v) {
  ModalityAppearance d;
  v.gamma = j.value("gamma", d.gamma);
  v.contrast = j.value("contrast", d.contrast);
  v.offset = j.value("offset", d.offset);
  v.noise_amplitude = j.value("noise_amplitude", d.noise_amplitude);
  v.noise_scale_px = j.value("noise_scale_px", d.noise_scale_px);
  v.gamma_jitter = j.value("gamma_jitter", d.gamma_jitter);
}

void to_json(nlohmann::json& j, const PhantomParams& v) {
  nlohmann::json app = nlohmann::json::object();
  for (Modality m : kAllModalities) app[modality_tag(m)] = v.appearance[static_cast<int>(m)];
  j = {{"image_size", v.image_size},
       {"lv_radius_range", v.lv_radius_range},
       {"myo_thickness_range", v.myo_thickness_range},
       {"rv_offset_range", v.rv_offset_range},
       {"rv_radius_range", v.rv_radius_range},
       {"center_jitter", v.center_jitter},
       {"spacing_mm", v.spacing},
       {"appearance", app},
       {"seed", v.seed}};
}
void from_json(const nlohmann::json& j, PhantomParams& v) {
  PhantomParams d;
  v.image_size = j.value("image_size", d.image_size);
  v.lv_radius_range = j.value("lv_radius_range", d.lv_radius_range);
  v.myo_thickness_range = j.value("myo_thickness_range", d.myo_thickness_range);
  v.rv_offset_range = j.value("rv_offset_range", d.rv_offset_range);
  v.rv_radius_range = j.value("rv_radius_range", d.rv_radius_range);
  v.center_jitter = j.value("center_jitter", d.center_jitter);
  v.spacing = j.value("spacing_mm", d.spacing);
  v.appearance = d.appearance;
  if (j.contains("appearance"))
    for (const auto& [tag, app] : j.at("appearance").items())
      v.appearance[static_cast<int>(modality_from_tag(tag))] = app.get<ModalityAppearance>();
  v.seed = j.value("seed", d.seed);
}

void to_json(nlohmann::json& j, const AffineConfig& v) {
  j = {{"rotation_deg", v.rotation_deg},
       {"translation_px", v.translation_px},
       {"shear", v.shear},
       {"scale", v.scale}};
}
void from_json(const nlohmann::json& j, AffineConfig& v) {
  AffineConfig d;
  v.rotation_deg = j.value("rotation_deg", d.rotation_deg);
  v.translation_px = j.value("translation_px", d.translation_px);
  v.shear = j.value("shear", d.shear);
  v.scale = j.value("scale", d.scale);
}

}  // namespace fuda
