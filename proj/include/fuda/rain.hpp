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

// Random adaptive instance normalization: a convolutional encoder/decoder
// whose deepest features are renormalized (AdaIN) to channel moments decoded
// from a latent style code by a small style-VAE.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "json.hpp"

namespace fuda::rain {

inline constexpr double kEpsStd = 1e-5;

struct RainArch {
  std::int64_t in_channels = 1;
  std::vector<std::int64_t> widths{32, 64, 128};  // one entry per downsampling stage
  std::int64_t latent_dim = 64;
  std::int64_t vae_hidden = 128;
  double eps_std = kEpsStd;

  std::int64_t deepest_channels() const { return widths.back(); }
  std::int64_t downsample_factor() const { return std::int64_t{1} << widths.size(); }
  void validate() const;
  friend bool operator==(const RainArch&, const RainArch&) = default;
};

struct RainLossWeights {
  double content = 1.0;
  double style = 5.0;
  double kl = 1.0;
  double rec = 5.0;
  friend bool operator==(const RainLossWeights&, const RainLossWeights&) = default;
};

/// Per-sample channel moments, each of shape (batch, channels).
struct FeatureMoments {
  torch::Tensor mean;
  torch::Tensor std;
};

/// Diagonal Gaussian over the latent style space; psi and xi are
/// (batch, latent_dim) or (latent_dim).
struct StyleDistribution {
  torch::Tensor psi;
  torch::Tensor xi;
  std::int64_t latent_dim() const { return psi.size(-1); }
};

struct StyleCode {
  torch::Tensor epsilon;
};

/// Mean and population standard deviation over (H, W) of each sample and
/// channel; std is floored at eps_std (gradient is zero below the floor).
FeatureMoments channel_moments(const torch::Tensor& features,
                               double eps_std = kEpsStd);

/// sigma_s * (f - mu_c) / sigma_c + mu_s, channel-wise with the content's own
/// clamped moments. Style moments with batch 1 broadcast over the batch.
torch::Tensor adain(const torch::Tensor& content, const FeatureMoments& style,
                    double eps_std = kEpsStd);

/// mu (+) sigma along the last axis.
torch::Tensor concat_moments(const FeatureMoments& m);
FeatureMoments split_moments(const torch::Tensor& packed);

/// KL(N(psi, xi^2) || N(0, I)) summed over latent dims, averaged over batch.
torch::Tensor kl_divergence(const StyleDistribution& dist);

/// psi + xi * eta, eta ~ N(0, I) drawn from a generator seeded with `seed`.
StyleCode vae_sample(const StyleDistribution& dist, std::uint64_t seed);

class EncoderImpl : public torch::nn::Module {
 public:
  explicit EncoderImpl(const RainArch& arch);
  /// One feature map per stage, shallowest first.
  std::vector<torch::Tensor> forward(const torch::Tensor& x);

 private:
  std::vector<torch::nn::Sequential> stages_;
};
TORCH_MODULE(Encoder);

class DecoderImpl : public torch::nn::Module {
 public:
  explicit DecoderImpl(const RainArch& arch);
  torch::Tensor forward(const torch::Tensor& deepest);

 private:
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(Decoder);

class StyleVaeImpl : public torch::nn::Module {
 public:
  explicit StyleVaeImpl(const RainArch& arch);
  StyleDistribution encode(const torch::Tensor& packed_moments);
  /// Returns packed (mu_hat, sigma_hat); the sigma half is floored at eps_std.
  torch::Tensor decode(const torch::Tensor& epsilon);

 private:
  std::int64_t channels_;
  double eps_std_;
  torch::nn::Linear enc_hidden_{nullptr}, enc_mean_{nullptr}, enc_logvar_{nullptr};
  torch::nn::Linear dec_hidden_{nullptr}, dec_out_{nullptr};
};
TORCH_MODULE(StyleVae);

class RainNetworksImpl : public torch::nn::Module {
 public:
  explicit RainNetworksImpl(RainArch arch);

  const RainArch& arch() const { return arch_; }
  Encoder encoder{nullptr};
  Decoder decoder{nullptr};
  StyleVae vae{nullptr};

  /// D(AdaIN(E(x)[deepest], D_vae(eps))). `eps` is (latent_dim) or
  /// (1, latent_dim) and is shared by every batch item, or (batch, latent_dim).
  torch::Tensor stylize(const torch::Tensor& x, const torch::Tensor& eps);

  /// Throws DimensionError when x cannot pass through the encoder pyramid.
  void check_input(const torch::Tensor& x) const;

 private:
  RainArch arch_;
};
TORCH_MODULE(RainNetworks);

/// E_vae on the packed deepest moments.
StyleDistribution vae_encode(RainNetworks& nets, const torch::Tensor& packed_moments);
torch::Tensor vae_decode(RainNetworks& nets, const StyleCode& code);
torch::Tensor stylize(const torch::Tensor& x, const StyleCode& code, RainNetworks& nets);

/// Style distribution of each image in `x` (batch).
StyleDistribution encode_style(RainNetworks& nets, const torch::Tensor& x);

struct RainLosses {
  torch::Tensor content, style, kl, rec, total;
};

RainLosses rain_loss(const torch::Tensor& content_batch,
                     const torch::Tensor& style_batch, RainNetworks& nets,
                     std::uint64_t seed, const RainLossWeights& weights = {});

struct RainTrainConfig {
  int ae_warmup_iters = 1000;
  int iters = 500;
  int batch_size = 8;
  double lr = 1e-4;
  double ae_lr = 1e-3;
  double poly_power = 0.9;  // lr * (1 - t / iters)^poly_power during L_RAIN training
  int log_every = 1;
  std::uint64_t seed = 0;  // set by the caller; not part of the JSON form
  RainLossWeights weights;
  friend bool operator==(const RainTrainConfig&, const RainTrainConfig&) = default;
};

/// Losses of the held-out batch, recorded after `iteration` updates.
struct RainCurvePoint {
  int iteration = 0;
  double content = 0, style = 0, kl = 0, rec = 0, total = 0;
};

/// Autoencoding warm-up of encoder+decoder on pixel reconstruction, then the
/// encoder is frozen and decoder+style-VAE minimize L_RAIN. Inputs are
/// (N, 1, H, W) tensors in [0, 1]. Returns the held-out loss curve.
std::vector<RainCurvePoint> pretrain_rain(
    RainNetworks& nets, const torch::Tensor& content, const torch::Tensor& style,
    const torch::Tensor& heldout_content, const torch::Tensor& heldout_style,
    const RainTrainConfig& config,
    const std::function<void(const RainCurvePoint&)>& on_log = {});

void write_loss_curve_csv(const std::string& path,
                          const std::vector<RainCurvePoint>& curve);

void to_json(nlohmann::json& j, const RainArch& v);
void from_json(const nlohmann::json& j, RainArch& v);
void to_json(nlohmann::json& j, const RainLossWeights& v);
void from_json(const nlohmann::json& j, RainLossWeights& v);
void to_json(nlohmann::json& j, const RainTrainConfig& v);
void from_json(const nlohmann::json& j, RainTrainConfig& v);

}  // namespace fuda::rain
