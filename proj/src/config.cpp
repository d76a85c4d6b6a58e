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

#include "fuda/config.hpp"

#include <fstream>

#include "fuda/error.hpp"

namespace fuda {

std::string to_string(TargetScope s) {
  switch (s) {
    case TargetScope::kFewShot: return "few-shot";
    case TargetScope::kOneShot: return "one-shot";
    case TargetScope::kBaseline: return "baseline";
  }
  throw ConfigError("unknown target scope");
}

TargetScope target_scope_from_string(const std::string& s) {
  if (s == "few-shot") return TargetScope::kFewShot;
  if (s == "one-shot") return TargetScope::kOneShot;
  if (s == "baseline") return TargetScope::kBaseline;
  throw ConfigError("target scope must be few-shot, one-shot or baseline, got '" + s + "'");
}

RunConfig default_config() {
  RunConfig c;
  for (int i = 0; i < 12; ++i) c.data.train_patients.push_back(phantom_patient_id(i));
  c.data.target_patient = phantom_patient_id(12);
  for (int i = 13; i < 20; ++i) c.data.test_patients.push_back(phantom_patient_id(i));
  return c;
}

void RunConfig::validate() const {
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (data.n_patients < 1 || data.slices_per_patient < 1)
    throw ConfigError("data: n_patients and slices_per_patient must be >= 1");
  if (data.crop_size < 1) throw ConfigError("data: crop_size must be >= 1");
  if (data.target_slice < 0) throw ConfigError("data: target_slice must be >= 0");
  data.augmentation.validate();
  rain.arch.validate();
  seg.arch.validate();
  const auto& rt = rain.train;
  if (rt.iters < 0 || rt.ae_warmup_iters < 0 || rt.batch_size < 1 || rt.lr <= 0 ||
      rt.ae_lr <= 0 || rt.poly_power < 0)
    throw ConfigError("rain: iteration counts must be >= 0, batch >= 1, rates > 0");
  if (rt.weights.content < 0 || rt.weights.style < 0 || rt.weights.kl < 0 || rt.weights.rec < 0)
    throw ConfigError("rain: loss weights must be >= 0");
  if (rain.heldout_slices < 1) throw ConfigError("rain: heldout_slices must be >= 1");
  if (seg.pretrain_iters < 0 || seg.adv_iters < 0)
    throw ConfigError("seg: iteration counts must be >= 0");
  if (seg.batch_size < 2 || seg.batch_size % 2 != 0)
    throw ConfigError("seg: batch_size must be an even number >= 2");
  if (seg.lr <= 0 || seg.momentum < 0 || seg.weight_decay < 0 || seg.poly_power < 0)
    throw ConfigError("seg: invalid optimizer settings");
  if (seg.lambda_con < 0) throw ConfigError("seg: lambda_con must be >= 0");
  if (!(adv.alpha > 0)) throw ConfigError("adv: alpha must be > 0");
  if (adv.resample_period < 0) throw ConfigError("adv: resample_period must be >= 0");
}

RunConfig load_config(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw ConfigError("cannot open config " + file.string());
  try {
    RunConfig c = nlohmann::json::parse(is).get<RunConfig>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed config " + file.string() + ": " + e.what());
  }
}

void save_config(const RunConfig& config, const std::filesystem::path& file) {
  std::ofstream os(file);
  if (!os) throw ConfigError("cannot write config " + file.string());
  os << nlohmann::json(config).dump(2) << '\n';
}

namespace {

std::string aggregation_name(metrics::Aggregation a) {
  return a == metrics::Aggregation::kSliceMean ? "slice" : "volumetric_dice";
}

metrics::Aggregation aggregation_from(const std::string& s) {
  if (s == "slice") return metrics::Aggregation::kSliceMean;
  if (s == "volumetric_dice") return metrics::Aggregation::kVolumetricDice;
  throw ConfigError("aggregation must be 'slice' or 'volumetric_dice'");
}

}  // namespace

void to_json(nlohmann::json& j, const RunConfig& v) {
  const auto& d = v.data;
  j = {{"seed", v.seed},
       {"threads", v.threads},
       {"data",
        {{"root", d.root},
         {"phantom", d.phantom},
         {"n_patients", d.n_patients},
         {"slices_per_patient", d.slices_per_patient},
         {"crop_size", d.crop_size},
         {"train_patients", d.train_patients},
         {"test_patients", d.test_patients},
         {"target_patient", d.target_patient},
         {"target_slice", d.target_slice},
         {"target_scope", to_string(d.target_scope)},
         {"augment", d.augment},
         {"augmentation", d.augmentation},
         {"aggregation", aggregation_name(d.aggregation)}}},
       {"rain",
        {{"arch", v.rain.arch}, {"train", v.rain.train}, {"heldout_slices", v.rain.heldout_slices}}},
       {"seg",
        {{"arch", v.seg.arch},
         {"pretrain_iters", v.seg.pretrain_iters},
         {"adv_iters", v.seg.adv_iters},
         {"batch_size", v.seg.batch_size},
         {"lr", v.seg.lr},
         {"momentum", v.seg.momentum},
         {"weight_decay", v.seg.weight_decay},
         {"poly_power", v.seg.poly_power},
         {"lambda_con", v.seg.lambda_con}}},
       {"adv", {{"alpha", v.adv.alpha}, {"resample_period", v.adv.resample_period}}}};
}

void from_json(const nlohmann::json& j, RunConfig& v) {
  v = default_config();
  v.seed = j.value("seed", v.seed);
  v.threads = j.value("threads", v.threads);
  if (j.contains("data")) {
    const auto& jd = j.at("data");
    auto& d = v.data;
    d.root = jd.value("root", d.root);
    if (jd.contains("phantom")) d.phantom = jd.at("phantom").get<PhantomParams>();
    d.n_patients = jd.value("n_patients", d.n_patients);
    d.slices_per_patient = jd.value("slices_per_patient", d.slices_per_patient);
    d.crop_size = jd.value("crop_size", d.crop_size);
    d.train_patients = jd.value("train_patients", d.train_patients);
    d.test_patients = jd.value("test_patients", d.test_patients);
    d.target_patient = jd.value("target_patient", d.target_patient);
    d.target_slice = jd.value("target_slice", d.target_slice);
    if (jd.contains("target_scope"))
      d.target_scope = target_scope_from_string(jd.at("target_scope").get<std::string>());
    d.augment = jd.value("augment", d.augment);
    if (jd.contains("augmentation")) d.augmentation = jd.at("augmentation").get<AffineConfig>();
    if (jd.contains("aggregation"))
      d.aggregation = aggregation_from(jd.at("aggregation").get<std::string>());
  }
  if (j.contains("rain")) {
    const auto& jr = j.at("rain");
    if (jr.contains("arch")) v.rain.arch = jr.at("arch").get<rain::RainArch>();
    if (jr.contains("train")) v.rain.train = jr.at("train").get<rain::RainTrainConfig>();
    v.rain.heldout_slices = jr.value("heldout_slices", v.rain.heldout_slices);
  }
  if (j.contains("seg")) {
    const auto& js = j.at("seg");
    auto& s = v.seg;
    if (js.contains("arch")) s.arch = js.at("arch").get<seg::SegArch>();
    s.pretrain_iters = js.value("pretrain_iters", s.pretrain_iters);
    s.adv_iters = js.value("adv_iters", s.adv_iters);
    s.batch_size = js.value("batch_size", s.batch_size);
    s.lr = js.value("lr", s.lr);
    s.momentum = js.value("momentum", s.momentum);
    s.weight_decay = js.value("weight_decay", s.weight_decay);
    s.poly_power = js.value("poly_power", s.poly_power);
    s.lambda_con = js.value("lambda_con", s.lambda_con);
  }
  if (j.contains("adv")) {
    v.adv.alpha = j.at("adv").value("alpha", v.adv.alpha);
    v.adv.resample_period = j.at("adv").value("resample_period", v.adv.resample_period);
  }
}

}  // namespace fuda
