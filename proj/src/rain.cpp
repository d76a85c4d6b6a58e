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

#include "fuda/rain.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>

#include "fuda/error.hpp"
#include "fuda/random.hpp"

namespace fuda::rain {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

void RainArch::validate() const {
  if (in_channels < 1) throw ConfigError("RainArch: in_channels must be >= 1");
  if (widths.empty()) throw ConfigError("RainArch: at least one encoder stage required");
  for (auto w : widths)
    if (w < 1) throw ConfigError("RainArch: stage widths must be >= 1");
  if (latent_dim < 1 || vae_hidden < 1)
    throw ConfigError("RainArch: latent_dim and vae_hidden must be >= 1");
  if (!(eps_std > 0)) throw ConfigError("RainArch: eps_std must be positive");
}

// ---------------------------------------------------------------------------
// Moments and AdaIN
// ---------------------------------------------------------------------------

FeatureMoments channel_moments(const torch::Tensor& features, double eps_std) {
  if (features.dim() != 4)
    throw DimensionError("channel_moments: expected (batch, channels, H, W)");
  auto mean = features.mean({2, 3});
  auto var = (features - mean.unsqueeze(-1).unsqueeze(-1)).pow(2).mean({2, 3});
  auto std = var.clamp_min(eps_std * eps_std).sqrt();
  return {mean, std};
}

torch::Tensor adain(const torch::Tensor& content, const FeatureMoments& style,
                    double eps_std) {
  if (content.dim() != 4)
    throw DimensionError("adain: expected (batch, channels, H, W) content");
  const auto channels = content.size(1);
  if (style.mean.size(-1) != channels || style.std.size(-1) != channels)
    throw DimensionError("adain: style has " + std::to_string(style.mean.size(-1)) +
                         " channels, content has " + std::to_string(channels));
  const auto c = channel_moments(content, eps_std);
  auto expand = [](const torch::Tensor& t) {
    auto v = t.dim() == 1 ? t.unsqueeze(0) : t;
    return v.unsqueeze(-1).unsqueeze(-1);
  };
  return expand(style.std) * ((content - expand(c.mean)) / expand(c.std)) +
         expand(style.mean);
}

torch::Tensor concat_moments(const FeatureMoments& m) {
  return torch::cat({m.mean, m.std}, -1);
}

FeatureMoments split_moments(const torch::Tensor& packed) {
  const auto n = packed.size(-1);
  if (n % 2 != 0) throw DimensionError("split_moments: odd packed length");
  auto halves = packed.split(n / 2, -1);
  return {halves[0], halves[1]};
}

torch::Tensor kl_divergence(const StyleDistribution& dist) {
  auto psi = dist.psi.dim() == 1 ? dist.psi.unsqueeze(0) : dist.psi;
  auto xi = dist.xi.dim() == 1 ? dist.xi.unsqueeze(0) : dist.xi;
  auto var = xi.pow(2);
  auto per_item = -0.5 * (1.0 + var.log() - psi.pow(2) - var).sum(-1);
  return per_item.mean();
}

StyleCode vae_sample(const StyleDistribution& dist, std::uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  auto eta = torch::randn(dist.psi.sizes(), gen, dist.psi.options().requires_grad(false));
  return {dist.psi + dist.xi * eta};
}

// ---------------------------------------------------------------------------
// Networks
// ---------------------------------------------------------------------------

namespace {
void push_conv3x3_relu(nn::Sequential& seq, std::int64_t in, std::int64_t out) {
  seq->push_back(nn::ReflectionPad2d(1));
  seq->push_back(nn::Conv2d(nn::Conv2dOptions(in, out, 3)));
  seq->push_back(nn::ReLU());
}
}  // namespace

EncoderImpl::EncoderImpl(const RainArch& arch) {
  arch.validate();
  std::int64_t in = arch.in_channels;
  for (std::size_t i = 0; i < arch.widths.size(); ++i) {
    nn::Sequential stage;
    push_conv3x3_relu(stage, in, arch.widths[i]);
    stage->push_back(nn::AvgPool2d(nn::AvgPool2dOptions(2)));
    stages_.push_back(register_module("stage" + std::to_string(i), stage));
    in = arch.widths[i];
  }
}

std::vector<torch::Tensor> EncoderImpl::forward(const torch::Tensor& x) {
  std::vector<torch::Tensor> out;
  auto h = x;
  for (auto& stage : stages_) {
    h = stage->forward(h);
    out.push_back(h);
  }
  return out;
}

DecoderImpl::DecoderImpl(const RainArch& arch) {
  arch.validate();
  nn::Sequential body;
  for (std::size_t i = arch.widths.size(); i-- > 0;) {
    const auto out = i > 0 ? arch.widths[i - 1] : arch.widths[0];
    body->push_back(nn::Upsample(
        nn::UpsampleOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest)));
    push_conv3x3_relu(body, arch.widths[i], out);
  }
  body->push_back(nn::ReflectionPad2d(1));
  body->push_back(nn::Conv2d(nn::Conv2dOptions(arch.widths[0], arch.in_channels, 3)));
  body->push_back(nn::Sigmoid());
  body_ = register_module("body", body);
}

torch::Tensor DecoderImpl::forward(const torch::Tensor& deepest) {
  return body_->forward(deepest);
}

StyleVaeImpl::StyleVaeImpl(const RainArch& arch)
    : channels_(arch.deepest_channels()), eps_std_(arch.eps_std) {
  arch.validate();
  enc_hidden_ = register_module("enc_hidden", nn::Linear(2 * channels_, arch.vae_hidden));
  enc_mean_ = register_module("enc_mean", nn::Linear(arch.vae_hidden, arch.latent_dim));
  enc_logvar_ = register_module("enc_logvar", nn::Linear(arch.vae_hidden, arch.latent_dim));
  dec_hidden_ = register_module("dec_hidden", nn::Linear(arch.latent_dim, arch.vae_hidden));
  dec_out_ = register_module("dec_out", nn::Linear(arch.vae_hidden, 2 * channels_));
}

StyleDistribution StyleVaeImpl::encode(const torch::Tensor& packed_moments) {
  if (packed_moments.size(-1) != 2 * channels_)
    throw DimensionError("vae_encode: expected packed moments of length " +
                         std::to_string(2 * channels_));
  auto h = torch::relu(enc_hidden_->forward(packed_moments));
  auto psi = enc_mean_->forward(h);
  auto xi = (0.5 * enc_logvar_->forward(h)).exp();
  return {psi, xi};
}

torch::Tensor StyleVaeImpl::decode(const torch::Tensor& epsilon) {
  auto h = torch::relu(dec_hidden_->forward(epsilon));
  auto out = dec_out_->forward(h);
  auto halves = out.split(channels_, -1);
  return torch::cat({halves[0], halves[1].clamp_min(eps_std_)}, -1);
}

RainNetworksImpl::RainNetworksImpl(RainArch arch) : arch_(std::move(arch)) {
  arch_.validate();
  encoder = register_module("encoder", Encoder(arch_));
  decoder = register_module("decoder", Decoder(arch_));
  vae = register_module("vae", StyleVae(arch_));
}

void RainNetworksImpl::check_input(const torch::Tensor& x) const {
  const auto f = arch_.downsample_factor();
  if (x.dim() != 4 || x.size(1) != arch_.in_channels || x.size(2) % f != 0 ||
      x.size(3) % f != 0 || x.size(2) < f || x.size(3) < f)
    throw DimensionError("RAIN: input must be (batch, " + std::to_string(arch_.in_channels) +
                         ", H, W) with H and W positive multiples of " + std::to_string(f));
}

torch::Tensor RainNetworksImpl::stylize(const torch::Tensor& x, const torch::Tensor& eps) {
  check_input(x);
  if (eps.size(-1) != arch_.latent_dim)
    throw DimensionError("stylize: style code length differs from latent_dim");
  auto deepest = encoder->forward(x).back();
  auto code = eps.dim() == 1 ? eps.unsqueeze(0) : eps;
  auto style = split_moments(vae->decode(code));
  return decoder->forward(adain(deepest, style, arch_.eps_std));
}

StyleDistribution vae_encode(RainNetworks& nets, const torch::Tensor& packed_moments) {
  return nets->vae->encode(packed_moments);
}

torch::Tensor vae_decode(RainNetworks& nets, const StyleCode& code) {
  return nets->vae->decode(code.epsilon);
}

torch::Tensor stylize(const torch::Tensor& x, const StyleCode& code, RainNetworks& nets) {
  return nets->stylize(x, code.epsilon);
}

StyleDistribution encode_style(RainNetworks& nets, const torch::Tensor& x) {
  nets->check_input(x);
  auto deepest = nets->encoder->forward(x).back();
  return nets->vae->encode(concat_moments(channel_moments(deepest, nets->arch().eps_std)));
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

RainLosses rain_loss(const torch::Tensor& content_batch,
                     const torch::Tensor& style_batch, RainNetworks& nets,
                     std::uint64_t seed, const RainLossWeights& weights) {
  nets->check_input(content_batch);
  nets->check_input(style_batch);
  const double eps_std = nets->arch().eps_std;

  const auto content_feats = nets->encoder->forward(content_batch);
  const auto style_feats = nets->encoder->forward(style_batch);
  const auto style_packed = concat_moments(channel_moments(style_feats.back(), eps_std));

  const auto dist = nets->vae->encode(style_packed);
  const auto code = vae_sample(dist, seed);
  const auto rec_packed = nets->vae->decode(code.epsilon);

  const auto target = adain(content_feats.back(), split_moments(rec_packed), eps_std);
  const auto generated = nets->decoder->forward(target);
  const auto gen_feats = nets->encoder->forward(generated);

  RainLosses l;
  l.content = F::mse_loss(gen_feats.back(), target.detach());
  l.style = torch::zeros({}, content_batch.options());
  for (std::size_t i = 0; i < gen_feats.size(); ++i) {
    const auto g = channel_moments(gen_feats[i], eps_std);
    const auto s = channel_moments(style_feats[i], eps_std);
    l.style = l.style + F::mse_loss(g.mean, s.mean) + F::mse_loss(g.std, s.std);
  }
  l.kl = kl_divergence(dist);
  l.rec = F::mse_loss(rec_packed, style_packed);
  l.total = weights.content * l.content + weights.style * l.style +
            weights.kl * l.kl + weights.rec * l.rec;
  return l;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

torch::Tensor sample_rows(const torch::Tensor& data, int n, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::int64_t> pick(0, data.size(0) - 1);
  std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
  for (auto& i : idx) i = pick(rng);
  return data.index_select(0, torch::tensor(idx, torch::kLong));
}

std::vector<torch::Tensor> params_of(std::initializer_list<torch::nn::Module*> modules) {
  std::vector<torch::Tensor> out;
  for (auto* m : modules)
    for (auto& p : m->parameters()) out.push_back(p);
  return out;
}

}  // namespace

std::vector<RainCurvePoint> pretrain_rain(
    RainNetworks& nets, const torch::Tensor& content, const torch::Tensor& style,
    const torch::Tensor& heldout_content, const torch::Tensor& heldout_style,
    const RainTrainConfig& config,
    const std::function<void(const RainCurvePoint&)>& on_log) {
  if (content.size(0) < 1 || style.size(0) < 1)
    throw ConfigError("pretrain_rain: empty content or style set");
  if (config.batch_size < 1 || config.iters < 0 || config.ae_warmup_iters < 0)
    throw ConfigError("pretrain_rain: invalid iteration or batch settings");
  nets->check_input(content);
  nets->check_input(style);
  nets->train();
  std::mt19937_64 rng(mix_seed(config.seed, 0x4a1u));

  if (config.ae_warmup_iters > 0) {
    torch::optim::Adam ae_opt(params_of({nets->encoder.get(), nets->decoder.get()}),
                              torch::optim::AdamOptions(config.ae_lr));
    const int half = std::max(1, config.batch_size / 2);
    for (int it = 0; it < config.ae_warmup_iters; ++it) {
      auto x = torch::cat({sample_rows(content, half, rng), sample_rows(style, half, rng)});
      auto recon = nets->decoder->forward(nets->encoder->forward(x).back());
      auto loss = F::mse_loss(recon, x);
      ae_opt.zero_grad();
      loss.backward();
      ae_opt.step();
    }
  }

  for (auto& p : nets->encoder->parameters()) p.set_requires_grad(false);
  torch::optim::Adam opt(params_of({nets->decoder.get(), nets->vae.get()}),
                         torch::optim::AdamOptions(config.lr));

  const std::uint64_t eval_seed = mix_seed(config.seed, 0xe7a1u);
  std::vector<RainCurvePoint> curve;
  auto evaluate = [&](int iteration) {
    torch::NoGradGuard no_grad;
    const auto l = rain_loss(heldout_content, heldout_style, nets, eval_seed, config.weights);
    RainCurvePoint pt{iteration,        l.content.item<double>(), l.style.item<double>(),
                      l.kl.item<double>(), l.rec.item<double>(),  l.total.item<double>()};
    curve.push_back(pt);
    if (on_log) on_log(pt);
  };

  evaluate(0);
  const int log_every = std::max(1, config.log_every);
  for (int it = 1; it <= config.iters; ++it) {
    const double lr =
        config.lr * std::pow(1.0 - static_cast<double>(it - 1) / config.iters, config.poly_power);
    for (auto& group : opt.param_groups())
      static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
    auto xc = sample_rows(content, config.batch_size, rng);
    auto xs = sample_rows(style, config.batch_size, rng);
    auto l = rain_loss(xc, xs, nets, mix_seed(config.seed, 0x7a1u, it), config.weights);
    opt.zero_grad();
    l.total.backward();
    opt.step();
    if (it % log_every == 0 || it == config.iters) evaluate(it);
  }
  nets->eval();
  return curve;
}

void write_loss_curve_csv(const std::string& path,
                          const std::vector<RainCurvePoint>& curve) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write loss curve " + path);
  os << "iteration,L_c,L_s,L_KL,L_Rec,L_RAIN\n" << std::setprecision(9);
  for (const auto& p : curve)
    os << p.iteration << ',' << p.content << ',' << p.style << ',' << p.kl << ','
       << p.rec << ',' << p.total << '\n';
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

void to_json(nlohmann::json& j, const RainArch& v) {
  j = {{"in_channels", v.in_channels}, {"widths", v.widths},
       {"latent_dim", v.latent_dim},   {"vae_hidden", v.vae_hidden},
       {"eps_std", v.eps_std}};
}
void from_json(const nlohmann::json& j, RainArch& v) {
  RainArch d;
  v.in_channels = j.value("in_channels", d.in_channels);
  v.widths = j.value("widths", d.widths);
  v.latent_dim = j.value("latent_dim", d.latent_dim);
  v.vae_hidden = j.value("vae_hidden", d.vae_hidden);
  v.eps_std = j.value("eps_std", d.eps_std);
}

void to_json(nlohmann::json& j, const RainLossWeights& v) {
  j = {{"content", v.content}, {"style", v.style}, {"kl", v.kl}, {"rec", v.rec}};
}
void from_json(const nlohmann::json& j, RainLossWeights& v) {
  RainLossWeights d;
  v.content = j.value("content", d.content);
  v.style = j.value("style", d.style);
  v.kl = j.value("kl", d.kl);
  v.rec = j.value("rec", d.rec);
}

void to_json(nlohmann::json& j, const RainTrainConfig& v) {
  j = {{"ae_warmup_iters", v.ae_warmup_iters},
       {"iters", v.iters},
       {"batch_size", v.batch_size},
       {"lr", v.lr},
       {"ae_lr", v.ae_lr},
       {"poly_power", v.poly_power},
       {"log_every", v.log_every},
       {"weights", v.weights}};
}
void from_json(const nlohmann::json& j, RainTrainConfig& v) {
  RainTrainConfig d;
  v.ae_warmup_iters = j.value("ae_warmup_iters", d.ae_warmup_iters);
  v.iters = j.value("iters", d.iters);
  v.batch_size = j.value("batch_size", d.batch_size);
  v.lr = j.value("lr", d.lr);
  v.ae_lr = j.value("ae_lr", d.ae_lr);
  v.poly_power = j.value("poly_power", d.poly_power);
  v.log_every = j.value("log_every", d.log_every);
  v.weights = j.value("weights", d.weights);
}

}  // namespace fuda::rain
