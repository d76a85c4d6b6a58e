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

// Dilated-residual U-Net and the supervised + consistency loss stack.

#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "json.hpp"

namespace fuda::seg {

inline constexpr std::int64_t kNumClasses = 4;
inline constexpr double kJaccardSmooth = 1e-6;

struct SegArch {
  std::int64_t in_channels = 1;
  std::vector<std::int64_t> widths{16, 32, 64};  // one per encoder scale
  std::vector<std::int64_t> dilations{1, 2, 4};  // bottleneck
  bool zero_init_head = false;

  std::int64_t downsample_factor() const { return std::int64_t{1} << widths.size(); }
  void validate() const;
  friend bool operator==(const SegArch&, const SegArch&) = default;
};

/// conv-ReLU-conv with an identity (or 1x1 projection) shortcut, then ReLU.
class ResidualBlockImpl : public torch::nn::Module {
 public:
  ResidualBlockImpl(std::int64_t in, std::int64_t out, std::int64_t dilation = 1);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, proj_{nullptr};
};
TORCH_MODULE(ResidualBlock);

struct SegOutput {
  torch::Tensor logits;      // (batch, 4, H, W)
  torch::Tensor bottleneck;  // (batch, C, H / 2^scales, W / 2^scales)
};

class DrUnetImpl : public torch::nn::Module {
 public:
  explicit DrUnetImpl(SegArch arch);
  SegOutput forward(const torch::Tensor& x);
  const SegArch& arch() const { return arch_; }

 private:
  SegArch arch_;
  std::vector<ResidualBlock> down_, up_;
  std::vector<torch::nn::Conv2d> bottleneck_;
  torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(DrUnet);

/// Throws DimensionError unless H and W are positive multiples of 2^scales.
SegOutput seg_forward(const torch::Tensor& x, DrUnet& net);

/// Mean over pixels of -log softmax(true class). `labels` is (batch, H, W)
/// of integer class ids.
torch::Tensor ce_loss(const torch::Tensor& logits, const torch::Tensor& labels);

/// Per-class soft Jaccard distance 1 - (I + s) / (P + G - I + s), pooled over
/// the batch; returns a (4) tensor.
torch::Tensor jaccard_per_class(const torch::Tensor& probs, const torch::Tensor& labels,
                                double smooth = kJaccardSmooth);
/// Mean of jaccard_per_class.
torch::Tensor jaccard_loss(const torch::Tensor& probs, const torch::Tensor& labels,
                           double smooth = kJaccardSmooth);

/// Per-item Euclidean norm of z_s - z_t, averaged over the batch.
torch::Tensor consistency_loss(const torch::Tensor& z_s, const torch::Tensor& z_t);

struct SegLosses {
  torch::Tensor ce, jaccard, seg, con, total;
};

/// L_seg = CE + JD, L_S = L_seg + lambda * L_con.
SegLosses seg_total_loss(const torch::Tensor& logits, const torch::Tensor& probs,
                         const torch::Tensor& labels, const torch::Tensor& z_s,
                         const torch::Tensor& z_t, double lambda);

/// Same composition on already-reduced components.
double combine_seg_loss(double ce, double jaccard, double con, double lambda);

/// L_seg only (CE + JD on softmax of logits).
torch::Tensor seg_loss(const torch::Tensor& logits, const torch::Tensor& labels);

void to_json(nlohmann::json& j, const SegArch& v);
void from_json(const nlohmann::json& j, SegArch& v);

}  // namespace fuda::seg
