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

// Few-shot target style acquisition and adversarial ascent on the style code.

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <torch/torch.h>

#include "fuda/rain.hpp"
#include "fuda/segmenter.hpp"

namespace fuda::adv {

struct AdvState {
  rain::StyleCode eps;     // (latent_dim), detached
  int iteration = 0;
  double alpha = 1.0;
  int resample_period = 10;  // 0 disables periodic resampling
  std::vector<rain::StyleDistribution> source_dists;
  std::uint64_t seed = 0;
  bool resampled = false;  // set when the last transition re-drew eps
};

/// One (latent_dim) distribution per target slice in `target` (N, 1, H, W).
std::vector<rain::StyleDistribution> init_style_distribution(const torch::Tensor& target,
                                                             rain::RainNetworks& nets);

/// Uniformly picks one slice distribution, then draws from it.
rain::StyleCode sample_initial_eps(const std::vector<rain::StyleDistribution>& dists,
                                   std::uint64_t seed);

AdvState make_state(std::vector<rain::StyleDistribution> dists, double alpha,
                    int resample_period, std::uint64_t seed);

struct EpsGradient {
  torch::Tensor grad;  // (latent_dim)
  double loss = 0.0;   // L_seg at eps
  bool finite = true;
};

/// Maps a style code to the stylized batch.
using Stylizer = std::function<torch::Tensor(const torch::Tensor& eps)>;

/// d L_seg(seg(stylizer(eps)), labels) / d eps with every network parameter
/// held fixed; parameter .grad fields are left untouched.
EpsGradient grad_wrt_eps(const torch::Tensor& eps, const Stylizer& stylizer,
                         seg::DrUnet& seg_net, const torch::Tensor& labels);

EpsGradient grad_wrt_eps(const rain::StyleCode& eps, const torch::Tensor& x_s,
                         const torch::Tensor& y_s, rain::RainNetworks& rain_nets,
                         seg::DrUnet& seg_net);

/// L_seg(seg(stylize(x_s, eps)), y_s) without gradients.
double seg_loss_at(const torch::Tensor& eps, const torch::Tensor& x_s,
                   const torch::Tensor& y_s, rain::RainNetworks& rain_nets,
                   seg::DrUnet& seg_net);

/// eps <- eps + alpha * grad, iteration += 1; every resample_period
/// iterations eps is re-drawn with sample_initial_eps.
AdvState eps_ascent_step(const AdvState& state, const torch::Tensor& grad);

/// Re-draws eps without advancing the iteration (used when an ascent round is
/// aborted on a non-finite gradient).
AdvState resample(const AdvState& state);

}  // namespace fuda::adv
