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

#include "fuda/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <stdexcept>

#include "fuda/array_io.hpp"
#include "fuda/checkpoint.hpp"
#include "fuda/error.hpp"
#include "fuda/random.hpp"

namespace fuda {

namespace fs = std::filesystem;

namespace {

constexpr const char* kRainKind = "rain";
constexpr const char* kSegKind = "seg";

// Stream keys for mix_seed.
enum : std::uint64_t {
  kRainInitStream = 0x101,
  kRainTrainStream,
  kSegInitStream,
  kSegBatchStream,
  kSegAugStream,
  kStyleStream,
  kAdvStream,
  kStylizeCmdStream,
};

void configure_runtime(const RunConfig& config) {
  config.validate();
  torch::set_num_threads(config.threads);
}

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

std::vector<LabeledSlice> select_patients(const Dataset& data, Modality m,
                                          const std::vector<std::string>& ids) {
  std::vector<LabeledSlice> out;
  for (const auto& id : ids) {
    auto part = data.select(m, id);
    out.insert(out.end(), std::make_move_iterator(part.begin()),
               std::make_move_iterator(part.end()));
  }
  return out;
}

// Per-image min-max rescaling, differentiable away from constant images.
torch::Tensor renormalize(const torch::Tensor& x) {
  auto flat = x.flatten(1);
  auto lo = std::get<0>(flat.min(1, true));
  auto hi = std::get<0>(flat.max(1, true));
  auto out = (flat - lo) / (hi - lo).clamp_min(1e-6);
  return out.view_as(x);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string());
}

}  // namespace

// ---------------------------------------------------------------------------
// Data plumbing
// ---------------------------------------------------------------------------

Dataset load_modalities(const RunConfig& config, const std::vector<Modality>& modalities) {
  const auto& d = config.data;
  Dataset raw = d.root.empty()
                    ? gen_phantom(d.phantom, d.n_patients, d.slices_per_patient, modalities)
                    : load_dataset(d.root, DatasetLayout::kModalityPatientSlice, modalities);
  std::vector<LabeledSlice> items;
  items.reserve(raw.size());
  for (const auto& it : raw.items()) {
    auto [slice, mask] = center_crop(minmax_normalize(it.slice), it.mask, d.crop_size, d.crop_size);
    items.push_back({std::move(slice), std::move(mask)});
  }
  return Dataset(std::move(items));
}

torch::Tensor slices_to_tensor(const std::vector<LabeledSlice>& items) {
  if (items.empty()) return torch::empty({0, 1, 0, 0});
  const int h = items.front().slice.pixels.rows(), w = items.front().slice.pixels.cols();
  auto out = torch::empty({static_cast<std::int64_t>(items.size()), 1, h, w}, torch::kFloat32);
  auto acc = out.accessor<float, 4>();
  for (std::size_t n = 0; n < items.size(); ++n) {
    const auto& px = items[n].slice.pixels;
    if (px.rows() != h || px.cols() != w) throw DimensionError("slices differ in shape");
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) acc[n][0][r][c] = static_cast<float>(px(r, c));
  }
  return out;
}

torch::Tensor masks_to_tensor(const std::vector<LabeledSlice>& items) {
  if (items.empty()) return torch::empty({0, 0, 0}, torch::kLong);
  const int h = items.front().slice.pixels.rows(), w = items.front().slice.pixels.cols();
  auto out = torch::empty({static_cast<std::int64_t>(items.size()), h, w}, torch::kLong);
  auto acc = out.accessor<std::int64_t, 3>();
  for (std::size_t n = 0; n < items.size(); ++n) {
    if (!items[n].mask)
      throw ConfigError("slice " + std::to_string(items[n].slice.slice_index) + " of patient " +
                        items[n].slice.patient_id + " has no label mask");
    const auto& m = *items[n].mask;
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) acc[n][r][c] = m(r, c);
  }
  return out;
}

std::vector<std::string> resolve_train_patients(const RunConfig& config,
                                                const std::vector<std::string>& available) {
  const auto& d = config.data;
  std::vector<std::string> out;
  if (!d.train_patients.empty()) {
    for (const auto& id : d.train_patients) {
      if (!contains(available, id)) throw ConfigError("training patient " + id + " not found");
      out.push_back(id);
    }
  } else {
    if (d.test_patients.empty())
      throw ConfigError("either train_patients or test_patients must be listed");
    for (const auto& id : available)
      if (!contains(d.test_patients, id) && id != d.target_patient) out.push_back(id);
  }
  if (out.empty()) throw ConfigError("no training patients");
  return out;
}

std::vector<std::string> resolve_test_patients(const RunConfig& config,
                                               const std::vector<std::string>& available) {
  const auto& d = config.data;
  std::vector<std::string> out;
  if (!d.test_patients.empty()) {
    for (const auto& id : d.test_patients) {
      if (!contains(available, id)) throw ConfigError("test patient " + id + " not found");
      out.push_back(id);
    }
  } else {
    if (d.train_patients.empty())
      throw ConfigError("either train_patients or test_patients must be listed");
    for (const auto& id : available)
      if (!contains(d.train_patients, id) && id != d.target_patient) out.push_back(id);
  }
  if (out.empty()) throw ConfigError("no test patients");
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

rain::RainNetworks load_rain(const fs::path& file) {
  const auto ck = ckpt::read(file);
  if (!ck.config.contains("arch")) throw CheckpointError(file.string() + ": config lacks arch");
  rain::RainNetworks nets(ck.config.at("arch").get<rain::RainArch>());
  ckpt::load_into(ck, *nets, kRainKind);
  nets->eval();
  return nets;
}

seg::DrUnet load_segmenter(const fs::path& file) {
  const auto ck = ckpt::read(file);
  if (!ck.config.contains("arch")) throw CheckpointError(file.string() + ": config lacks arch");
  seg::DrUnet net(ck.config.at("arch").get<seg::SegArch>());
  ckpt::load_into(ck, *net, kSegKind);
  net->eval();
  return net;
}

// ---------------------------------------------------------------------------
// Stage 1
// ---------------------------------------------------------------------------

Stage1Result train_stage1(const RunConfig& config, const fs::path& out_dir) {
  configure_runtime(config);
  ensure_dir(out_dir);
  const Dataset data = load_modalities(config, {Modality::kSourceContent, Modality::kStyleAux});
  const auto train_ids = resolve_train_patients(config, data.patients(Modality::kSourceContent));

  const auto content_items = select_patients(data, Modality::kSourceContent, train_ids);
  const auto style_items = select_patients(data, Modality::kStyleAux, train_ids);
  const auto held = static_cast<std::int64_t>(config.rain.heldout_slices);
  const auto content_all = slices_to_tensor(content_items);
  const auto style_all = slices_to_tensor(style_items);
  if (content_all.size(0) <= held || style_all.size(0) <= held)
    throw ConfigError("stage 1 needs more content/style slices than heldout_slices");
  const auto nc = content_all.size(0), ns = style_all.size(0);

  torch::manual_seed(mix_seed(config.seed, kRainInitStream));
  rain::RainNetworks nets(config.rain.arch);
  auto train_cfg = config.rain.train;
  train_cfg.seed = mix_seed(config.seed, kRainTrainStream);

  Stage1Result res;
  res.modalities_read = data.modalities();
  res.curve = rain::pretrain_rain(nets, content_all.narrow(0, 0, nc - held),
                                  style_all.narrow(0, 0, ns - held),
                                  content_all.narrow(0, nc - held, held),
                                  style_all.narrow(0, ns - held, held), train_cfg);
  res.checkpoint = out_dir / "rain.ckpt";
  res.loss_curve = out_dir / "rain_loss.csv";
  ckpt::save(res.checkpoint, kRainKind, {{"arch", config.rain.arch}}, *nets);
  rain::write_loss_curve_csv(res.loss_curve.string(), res.curve);
  return res;
}

// ---------------------------------------------------------------------------
// Stage 2
// ---------------------------------------------------------------------------

namespace {

struct Batch {
  torch::Tensor x;  // (n, 1, H, W)
  torch::Tensor y;  // (n, H, W)
};

class SourceSampler {
 public:
  SourceSampler(std::vector<LabeledSlice> items, const RunConfig& config)
      : items_(std::move(items)),
        augment_(config.data.augment),
        aug_(config.data.augmentation),
        seed_(config.seed),
        rng_(mix_seed(config.seed, kSegBatchStream)) {
    if (items_.empty()) throw ConfigError("no labelled source slices for segmentation");
    for (const auto& it : items_)
      if (!it.mask) throw ConfigError("source slice without label mask");
  }

  Batch next(int n, int iteration) {
    std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
    std::vector<LabeledSlice> chosen;
    chosen.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
      const auto& it = items_[pick(rng_)];
      if (augment_) {
        auto [s, m] = affine_augment(it.slice, *it.mask, aug_,
                                     mix_seed(seed_, kSegAugStream, iteration, k));
        chosen.push_back({std::move(s), std::move(m)});
      } else {
        chosen.push_back(it);
      }
    }
    return {slices_to_tensor(chosen), masks_to_tensor(chosen)};
  }

 private:
  std::vector<LabeledSlice> items_;
  bool augment_;
  AffineConfig aug_;
  std::uint64_t seed_;
  std::mt19937_64 rng_;
};

torch::Tensor stylize_batch(rain::RainNetworks& rain_nets, const torch::Tensor& x,
                            const torch::Tensor& eps) {
  return renormalize(rain_nets->stylize(x, eps));
}

}  // namespace

Stage2Result train_stage2(const RunConfig& config, const fs::path& rain_ckpt,
                          const fs::path& out_dir) {
  configure_runtime(config);
  ensure_dir(out_dir);
  const auto scope = config.data.target_scope;
  const bool adapt = scope != TargetScope::kBaseline;
  const auto& sc = config.seg;

  Stage2Result res;
  rain::RainNetworks rain_nets{nullptr};
  std::vector<rain::StyleDistribution> dists;
  if (adapt) {
    if (!fs::exists(rain_ckpt))
      throw ConfigError("RAIN checkpoint " + rain_ckpt.string() + " does not exist");
    rain_nets = load_rain(rain_ckpt);
    for (auto& p : rain_nets->parameters()) p.set_requires_grad(false);
    res.rain_hash_before = ckpt::parameter_hash(*rain_nets);

    const Dataset target = load_modalities(config, {Modality::kTarget});
    auto target_items = target.select(Modality::kTarget, config.data.target_patient);
    if (scope == TargetScope::kOneShot) {
      std::erase_if(target_items, [&](const LabeledSlice& it) {
        return it.slice.slice_index != config.data.target_slice;
      });
    }
    if (target_items.empty())
      throw ConfigError("no TARGET slices for patient '" + config.data.target_patient + "'" +
                        (scope == TargetScope::kOneShot
                             ? " at slice " + std::to_string(config.data.target_slice)
                             : std::string()));
    dists = adv::init_style_distribution(slices_to_tensor(target_items), rain_nets);
  }

  const Dataset source = load_modalities(config, {Modality::kSourceContent});
  const auto train_ids = resolve_train_patients(config, source.patients(Modality::kSourceContent));
  SourceSampler sampler(select_patients(source, Modality::kSourceContent, train_ids), config);

  torch::manual_seed(mix_seed(config.seed, kSegInitStream));
  seg::DrUnet net(sc.arch);
  net->train();
  torch::optim::SGD opt(net->parameters(), torch::optim::SGDOptions(sc.lr)
                                               .momentum(sc.momentum)
                                               .weight_decay(sc.weight_decay));

  res.checkpoint = out_dir / "seg.ckpt";
  res.log = out_dir / "seg_log.csv";
  std::ofstream log(res.log);
  log << "iteration,phase,lr,L_CE,L_JD,L_con,L_S\n";
  std::ofstream ascent;
  if (adapt && sc.adv_iters > 0) {
    res.ascent_log = out_dir / "ascent.csv";
    ascent.open(res.ascent_log);
    ascent << "iteration,eps_norm,L_seg_before,L_seg_after,resampled\n";
  }

  const int total = sc.pretrain_iters + sc.adv_iters;
  const int half = sc.batch_size / 2;
  std::optional<adv::AdvState> state;
  char buf[256];

  for (int it = 0; it < total; ++it) {
    const double lr = sc.lr * std::pow(1.0 - static_cast<double>(it) / total, sc.poly_power);
    for (auto& group : opt.param_groups())
      static_cast<torch::optim::SGDOptions&>(group.options()).lr(lr);

    const bool phase_b = adapt && it >= sc.pretrain_iters;
    Batch b = sampler.next(adapt ? half : sc.batch_size, it);
    seg::SegLosses l;

    if (!adapt) {
      auto out = seg::seg_forward(b.x, net);
      l.ce = seg::ce_loss(out.logits, b.y);
      l.jaccard = seg::jaccard_loss(torch::softmax(out.logits, 1), b.y);
      l.seg = l.ce + l.jaccard;
      l.con = torch::zeros({});
      l.total = l.seg;
    } else {
      torch::Tensor eps;
      if (!phase_b) {
        eps = adv::sample_initial_eps(dists, mix_seed(config.seed, kStyleStream, it)).epsilon;
      } else {
        if (!state)
          state = adv::make_state(dists, config.adv.alpha, config.adv.resample_period,
                                  mix_seed(config.seed, kAdvStream));
        const adv::Stylizer stylizer = [&](const torch::Tensor& e) {
          return stylize_batch(rain_nets, b.x, e);
        };
        const auto g = adv::grad_wrt_eps(state->eps.epsilon, stylizer, net, b.y);
        if (!g.finite) {
          ++res.aborted_ascents;
          state = adv::resample(*state);
        } else {
          state = adv::eps_ascent_step(*state, g.grad);
        }
        eps = state->eps.epsilon;
        double after;
        {
          torch::NoGradGuard no_grad;
          after = seg::seg_loss(seg::seg_forward(stylizer(eps), net).logits, b.y).item<double>();
        }
        std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%d\n", it,
                      eps.norm().item<double>(), g.loss, after, state->resampled ? 1 : 0);
        ascent << buf;
      }
      torch::Tensor stylized;
      {
        torch::NoGradGuard no_grad;
        stylized = stylize_batch(rain_nets, b.x, eps);
      }
      auto out = seg::seg_forward(torch::cat({b.x, stylized}), net);
      auto labels = torch::cat({b.y, b.y});
      auto z = out.bottleneck.split(half);
      l = seg::seg_total_loss(out.logits, torch::softmax(out.logits, 1), labels, z[0], z[1],
                              sc.lambda_con);
    }

    opt.zero_grad();
    l.total.backward();
    opt.step();

    std::snprintf(buf, sizeof(buf), "%d,%c,%.6g,%.9g,%.9g,%.9g,%.9g\n", it, phase_b ? 'B' : 'A',
                  lr, l.ce.item<double>(), l.jaccard.item<double>(), l.con.item<double>(),
                  l.total.item<double>());
    log << buf;
  }

  net->eval();
  ckpt::save(res.checkpoint, kSegKind, {{"arch", sc.arch}}, *net);
  if (adapt) {
    res.rain_hash_after = ckpt::parameter_hash(*rain_nets);
    if (res.rain_hash_after != res.rain_hash_before)
      throw std::logic_error("RAIN parameters changed during segmentation training");
  }
  return res;
}

// ---------------------------------------------------------------------------
// Evaluation and visualization
// ---------------------------------------------------------------------------

std::vector<LabelMask> predict(seg::DrUnet& net, const torch::Tensor& images) {
  torch::NoGradGuard no_grad;
  net->eval();
  std::vector<LabelMask> out;
  constexpr std::int64_t kChunk = 16;
  for (std::int64_t start = 0; start < images.size(0); start += kChunk) {
    const auto n = std::min(kChunk, images.size(0) - start);
    auto labels = seg::seg_forward(images.narrow(0, start, n), net).logits.argmax(1).to(torch::kUInt8).contiguous();
    const int h = static_cast<int>(labels.size(1)), w = static_cast<int>(labels.size(2));
    const auto* p = labels.data_ptr<std::uint8_t>();
    for (std::int64_t i = 0; i < n; ++i)
      out.emplace_back(h, w, std::vector<std::uint8_t>(p + i * h * w, p + (i + 1) * h * w));
  }
  return out;
}

EvaluateResult evaluate_cmd(const RunConfig& config, const fs::path& seg_ckpt,
                            const fs::path& out_dir, const std::string& label,
                            bool export_predictions) {
  configure_runtime(config);
  ensure_dir(out_dir);
  auto net = load_segmenter(seg_ckpt);
  const Dataset data = load_modalities(config, {Modality::kTarget});
  const auto test_ids = resolve_test_patients(config, data.patients(Modality::kTarget));

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<metrics::PatientMasks> patients;
  for (const auto& id : test_ids) {
    const auto items = data.select(Modality::kTarget, id);
    metrics::PatientMasks pm;
    pm.patient_id = id;
    pm.spacing = items.front().slice.spacing;
    pm.pred = predict(net, slices_to_tensor(items));
    for (const auto& it : items) {
      if (!it.mask) throw ConfigError("test patient " + id + " lacks label masks");
      pm.truth.push_back(*it.mask);
    }
    if (export_predictions) {
      const fs::path dir = out_dir / "predictions" / id;
      ensure_dir(dir);
      for (std::size_t s = 0; s < items.size(); ++s) {
        const std::string stem = std::to_string(items[s].slice.slice_index) + "_pred";
        io::write_png(dir / (stem + ".png"), pm.pred[s]);
        io::write_npy(dir / (stem + ".npy"), pm.pred[s]);
      }
    }
    patients.push_back(std::move(pm));
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  EvaluateResult res;
  res.report = metrics::evaluate(patients, config.data.aggregation);
  res.seconds_per_patient = secs / static_cast<double>(patients.size());
  res.csv = out_dir / "report.csv";
  res.table = out_dir / "report.txt";
  const std::vector<std::pair<std::string, metrics::MetricsReport>> rows = {{label, res.report}};
  std::ofstream(res.csv) << metrics::report_csv(rows);
  std::ofstream(res.table) << metrics::report_table(rows);
  return res;
}

fs::path stylize_cmd(const RunConfig& config, const fs::path& rain_ckpt, const fs::path& out_dir,
                     int n_content, EpsSource source) {
  configure_runtime(config);
  ensure_dir(out_dir);
  if (n_content < 1) throw ConfigError("stylize: need at least one content image");
  auto nets = load_rain(rain_ckpt);

  const Dataset content_data = load_modalities(config, {Modality::kSourceContent});
  const auto train_ids =
      resolve_train_patients(config, content_data.patients(Modality::kSourceContent));
  auto content_items = select_patients(content_data, Modality::kSourceContent, train_ids);
  if (content_items.size() > static_cast<std::size_t>(n_content))
    content_items.resize(static_cast<std::size_t>(n_content));
  const auto content = slices_to_tensor(content_items);

  const Dataset target = load_modalities(config, {Modality::kTarget});
  auto style_items = target.select(Modality::kTarget, config.data.target_patient);
  std::erase_if(style_items, [&](const LabeledSlice& it) {
    return it.slice.slice_index != config.data.target_slice;
  });
  if (style_items.empty())
    throw ConfigError("stylize: target slice " + std::to_string(config.data.target_slice) +
                      " of patient " + config.data.target_patient + " not found");
  const auto style = slices_to_tensor(style_items);

  torch::Tensor stylized;
  {
    torch::NoGradGuard no_grad;
    torch::Tensor eps;
    const auto seed = mix_seed(config.seed, kStylizeCmdStream);
    if (source == EpsSource::kTarget) {
      eps = adv::sample_initial_eps(adv::init_style_distribution(style, nets), seed).epsilon;
    } else {
      auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
      eps = torch::randn({nets->arch().latent_dim}, gen, torch::kFloat32);
    }
    stylized = nets->stylize(content, eps);
  }

  const int h = static_cast<int>(content.size(2)), w = static_cast<int>(content.size(3));
  const int n = static_cast<int>(content.size(0));
  Image<double> grid(2 * h, (n + 1) * w, 0.0);
  auto blit = [&](const torch::Tensor& img, int row, int col) {
    auto a = img.to(torch::kFloat64).contiguous();
    auto acc = a.accessor<double, 3>();
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) grid(row * h + r, col * w + c) = acc[0][r][c];
  };
  blit(style[0], 0, 0);
  for (int i = 0; i < n; ++i) {
    blit(content[i], 0, i + 1);
    blit(stylized[i], 1, i + 1);
  }
  const fs::path file = out_dir / "stylize_grid.png";
  io::write_png(file, io::to_gray8(grid));
  return file;
}

fs::path gen_synth_cmd(const RunConfig& config, const fs::path& out_dir) {
  configure_runtime(config);
  const auto& d = config.data;
  save_dataset(gen_phantom(d.phantom, d.n_patients, d.slices_per_patient), out_dir);
  return out_dir;
}

}  // namespace fuda
