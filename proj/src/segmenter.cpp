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

#include "fuda/segmenter.hpp"

#include "fuda/error.hpp"

namespace fuda::seg {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

void SegArch::validate() const {
  if (in_channels < 1) throw ConfigError("SegArch: in_channels must be >= 1");
  if (widths.empty()) throw ConfigError("SegArch: at least one encoder scale required");
  for (auto w : widths)
    if (w < 1) throw ConfigError("SegArch: widths must be >= 1");
  for (auto d : dilations)
    if (d < 1) throw ConfigError("SegArch: dilations must be >= 1");
}

ResidualBlockImpl::ResidualBlockImpl(std::int64_t in, std::int64_t out,
                                     std::int64_t dilation) {
  conv1_ = register_module(
      "conv1", nn::Conv2d(nn::Conv2dOptions(in, out, 3).padding(dilation).dilation(dilation)));
  conv2_ = register_module(
      "conv2", nn::Conv2d(nn::Conv2dOptions(out, out, 3).padding(dilation).dilation(dilation)));
  if (in != out) proj_ = register_module("proj", nn::Conv2d(nn::Conv2dOptions(in, out, 1)));
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
  auto h = conv2_->forward(torch::relu(conv1_->forward(x)));
  auto shortcut = proj_ ? proj_->forward(x) : x;
  return torch::relu(h + shortcut);
}

DrUnetImpl::DrUnetImpl(SegArch arch) : arch_(std::move(arch)) {
  arch_.validate();
  const auto& w = arch_.widths;
  std::int64_t in = arch_.in_channels;
  for (std::size_t i = 0; i < w.size(); ++i) {
    down_.push_back(register_module("down" + std::to_string(i), ResidualBlock(in, w[i])));
    in = w[i];
  }
  for (std::size_t i = 0; i < arch_.dilations.size(); ++i) {
    const auto d = arch_.dilations[i];
    bottleneck_.push_back(register_module(
        "bottleneck" + std::to_string(i),
        nn::Conv2d(nn::Conv2dOptions(w.back(), w.back(), 3).padding(d).dilation(d))));
  }
  up_.resize(w.size(), nullptr);
  for (std::size_t i = w.size(); i-- > 0;) {
    const auto from = i + 1 < w.size() ? w[i + 1] : w.back();
    up_[i] = register_module("up" + std::to_string(i), ResidualBlock(from + w[i], w[i]));
  }
  head_ = register_module("head", nn::Conv2d(nn::Conv2dOptions(w.front(), kNumClasses, 1)));
  if (arch_.zero_init_head) {
    torch::NoGradGuard no_grad;
    head_->weight.zero_();
    head_->bias.zero_();
  }
}

SegOutput DrUnetImpl::forward(const torch::Tensor& x) {
  std::vector<torch::Tensor> skips;
  auto h = x;
  for (auto& block : down_) {
    h = block->forward(h);
    skips.push_back(h);
    h = F::max_pool2d(h, F::MaxPool2dFuncOptions(2));
  }
  for (auto& conv : bottleneck_) h = torch::relu(h + conv->forward(h));
  auto z = h;
  for (std::size_t i = up_.size(); i-- > 0;) {
    h = F::interpolate(h, F::InterpolateFuncOptions()
                              .scale_factor(std::vector<double>{2.0, 2.0})
                              .mode(torch::kNearest));
    h = up_[i]->forward(torch::cat({h, skips[i]}, 1));
  }
  return {head_->forward(h), z};
}

SegOutput seg_forward(const torch::Tensor& x, DrUnet& net) {
  const auto f = net->arch().downsample_factor();
  if (x.dim() != 4 || x.size(1) != net->arch().in_channels || x.size(2) < f ||
      x.size(3) < f || x.size(2) % f != 0 || x.size(3) % f != 0)
    throw DimensionError("seg_forward: input must be (batch, " +
                         std::to_string(net->arch().in_channels) +
                         ", H, W) with H and W positive multiples of " + std::to_string(f));
  return net->forward(x);
}

torch::Tensor ce_loss(const torch::Tensor& logits, const torch::Tensor& labels) {
  return F::cross_entropy(logits, labels.to(torch::kLong));
}

torch::Tensor jaccard_per_class(const torch::Tensor& probs, const torch::Tensor& labels,
                                double smooth) {
  if (probs.dim() != 4 || labels.dim() != 3 || probs.size(0) != labels.size(0) ||
      probs.size(2) != labels.size(1) || probs.size(3) != labels.size(2))
    throw DimensionError("jaccard: probs (B, K, H, W) and labels (B, H, W) disagree");
  const auto classes = probs.size(1);
  auto onehot = F::one_hot(labels.to(torch::kLong), classes).permute({0, 3, 1, 2}).to(probs.dtype());
  auto inter = (probs * onehot).sum({0, 2, 3});
  auto union_ = probs.sum({0, 2, 3}) + onehot.sum({0, 2, 3}) - inter;
  return 1.0 - (inter + smooth) / (union_ + smooth);
}

torch::Tensor jaccard_loss(const torch::Tensor& probs, const torch::Tensor& labels,
                           double smooth) {
  return jaccard_per_class(probs, labels, smooth).mean();
}

torch::Tensor consistency_loss(const torch::Tensor& z_s, const torch::Tensor& z_t) {
  if (z_s.sizes() != z_t.sizes())
    throw DimensionError("consistency_loss: feature shapes differ");
  auto sq = (z_s - z_t).flatten(1).pow(2).sum(1);
  // sqrt has an infinite slope at 0; route exact zeros around it.
  auto norm = torch::where(sq > 0, sq.clamp_min(1e-30).sqrt(), torch::zeros_like(sq));
  return norm.mean();
}

SegLosses seg_total_loss(const torch::Tensor& logits, const torch::Tensor& probs,
                         const torch::Tensor& labels, const torch::Tensor& z_s,
                         const torch::Tensor& z_t, double lambda) {
  SegLosses l;
  l.ce = ce_loss(logits, labels);
  l.jaccard = jaccard_loss(probs, labels);
  l.seg = l.ce + l.jaccard;
  l.con = consistency_loss(z_s, z_t);
  l.total = l.seg + lambda * l.con;
  return l;
}

double combine_seg_loss(double ce, double jaccard, double con, double lambda) {
  return (ce + jaccard) + lambda * con;
}

torch::Tensor seg_loss(const torch::Tensor& logits, const torch::Tensor& labels) {
  return ce_loss(logits, labels) + jaccard_loss(torch::softmax(logits, 1), labels);
}

void to_json(nlohmann::json& j, const SegArch& v) {
  j = {{"in_channels", v.in_channels},
       {"widths", v.widths},
       {"dilations", v.dilations},
       {"zero_init_head", v.zero_init_head}};
}
void from_json(const nlohmann::json& j, SegArch& v) {
  SegArch d;
  v.in_channels = j.value("in_channels", d.in_channels);
  v.widths = j.value("widths", d.widths);
  v.dilations = j.value("dilations", d.dilations);
  v.zero_init_head = j.value("zero_init_head", d.zero_init_head);
}

}  // namespace fuda::seg
