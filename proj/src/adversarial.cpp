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

#include "fuda/adversarial.hpp"

#include <random>

#include "fuda/error.hpp"
#include "fuda/random.hpp"

namespace fuda::adv {

std::vector<rain::StyleDistribution> init_style_distribution(const torch::Tensor& target,
                                                             rain::RainNetworks& nets) {
  if (target.dim() != 4 || target.size(0) < 1)
    throw ConfigError("init_style_distribution: at least one target slice is required");
  torch::NoGradGuard no_grad;
  const auto all = rain::encode_style(nets, target);
  std::vector<rain::StyleDistribution> out;
  out.reserve(static_cast<std::size_t>(target.size(0)));
  for (std::int64_t i = 0; i < target.size(0); ++i)
    out.push_back({all.psi[i].clone(), all.xi[i].clone()});
  return out;
}

rain::StyleCode sample_initial_eps(const std::vector<rain::StyleDistribution>& dists,
                                   std::uint64_t seed) {
  if (dists.empty()) throw ConfigError("sample_initial_eps: no style distributions");
  std::mt19937_64 rng(mix_seed(seed, 0x5e1u));
  std::uniform_int_distribution<std::size_t> pick(0, dists.size() - 1);
  const auto& d = dists[pick(rng)];
  torch::NoGradGuard no_grad;
  return {rain::vae_sample(d, mix_seed(seed, 0xe95u)).epsilon.detach()};
}

AdvState make_state(std::vector<rain::StyleDistribution> dists, double alpha,
                    int resample_period, std::uint64_t seed) {
  if (!(alpha > 0)) throw ConfigError("AdvState: alpha must be positive");
  if (resample_period < 0) throw ConfigError("AdvState: resample_period must be >= 0");
  AdvState s;
  s.alpha = alpha;
  s.resample_period = resample_period;
  s.seed = seed;
  s.source_dists = std::move(dists);
  s.eps = sample_initial_eps(s.source_dists, mix_seed(seed, 0));
  s.resampled = true;
  return s;
}

EpsGradient grad_wrt_eps(const torch::Tensor& eps, const Stylizer& stylizer,
                         seg::DrUnet& seg_net, const torch::Tensor& labels) {
  auto e = eps.detach().clone().set_requires_grad(true);
  torch::Tensor loss;
  {
    torch::AutoGradMode enable(true);
    auto images = stylizer(e);
    auto out = seg::seg_forward(images, seg_net);
    loss = seg::seg_loss(out.logits, labels);
  }
  EpsGradient g;
  g.loss = loss.item<double>();
  auto grads = torch::autograd::grad({loss}, {e}, /*grad_outputs=*/{}, /*retain_graph=*/false,
                                     /*create_graph=*/false, /*allow_unused=*/true);
  g.grad = grads[0].defined() ? grads[0].detach() : torch::zeros_like(e).detach();
  g.finite = std::isfinite(g.loss) && torch::isfinite(g.grad).all().item<bool>();
  return g;
}

EpsGradient grad_wrt_eps(const rain::StyleCode& eps, const torch::Tensor& x_s,
                         const torch::Tensor& y_s, rain::RainNetworks& rain_nets,
                         seg::DrUnet& seg_net) {
  if (eps.epsilon.size(-1) != rain_nets->arch().latent_dim)
    throw DimensionError("grad_wrt_eps: style code length differs from latent_dim");
  const auto shape = eps.epsilon.sizes().vec();
  auto g = grad_wrt_eps(
      eps.epsilon, [&](const torch::Tensor& e) { return rain_nets->stylize(x_s, e); }, seg_net,
      y_s);
  g.grad = g.grad.reshape(shape);
  return g;
}

double seg_loss_at(const torch::Tensor& eps, const torch::Tensor& x_s,
                   const torch::Tensor& y_s, rain::RainNetworks& rain_nets,
                   seg::DrUnet& seg_net) {
  torch::NoGradGuard no_grad;
  auto out = seg::seg_forward(rain_nets->stylize(x_s, eps), seg_net);
  return seg::seg_loss(out.logits, y_s).item<double>();
}

AdvState eps_ascent_step(const AdvState& state, const torch::Tensor& grad) {
  if (grad.sizes() != state.eps.epsilon.sizes())
    throw DimensionError("eps_ascent_step: gradient shape differs from eps");
  AdvState next = state;
  next.eps = {(state.eps.epsilon + state.alpha * grad).detach()};
  next.iteration = state.iteration + 1;
  next.resampled = false;
  if (state.resample_period > 0 && next.iteration % state.resample_period == 0 &&
      !state.source_dists.empty()) {
    next.eps = sample_initial_eps(state.source_dists,
                                  mix_seed(state.seed, static_cast<std::uint64_t>(next.iteration)));
    next.resampled = true;
  }
  return next;
}

AdvState resample(const AdvState& state) {
  AdvState next = state;
  next.eps = sample_initial_eps(
      state.source_dists,
      mix_seed(state.seed, 0xab07u, static_cast<std::uint64_t>(state.iteration)));
  next.resampled = true;
  return next;
}

}  // namespace fuda::adv
