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

#include <cmath>

#include "fuda/error.hpp"
#include "fuda/segmenter.hpp"
#include "oracles.hpp"

namespace fuda::seg {
namespace {

constexpr auto kF64 = torch::kFloat64;

SegArch tiny_arch() {
  SegArch a;
  a.widths = {2, 3};
  a.dilations = {1, 2};
  return a;
}

std::int64_t parameter_count(torch::nn::Module& m) {
  std::int64_t n = 0;
  for (const auto& p : m.parameters()) n += p.numel();
  return n;
}

TEST(Forward, OutputMatchesInputForArchMatrix) {
  torch::manual_seed(0);
  for (const auto& widths : std::vector<std::vector<std::int64_t>>{{4}, {4, 8}, {4, 8, 8}}) {
    SegArch a;
    a.widths = widths;
    a.dilations = {1, 2};
    DrUnet net(a);
    for (int h : {8, 16}) {
      const auto out = seg_forward(torch::rand({2, 1, h, 24}), net);
      EXPECT_EQ(out.logits.sizes(), (std::vector<std::int64_t>{2, 4, h, 24}));
      const auto f = a.downsample_factor();
      EXPECT_EQ(out.bottleneck.size(2), h / f);
      EXPECT_EQ(out.bottleneck.size(3), 24 / f);
      EXPECT_TRUE(torch::allclose(torch::softmax(out.logits, 1).sum(1),
                                  torch::ones({2, h, 24}), 0, 1e-6));
    }
  }
}

TEST(Forward, RejectsIndivisibleOrWrongChannels) {
  DrUnet net(tiny_arch());
  EXPECT_THROW(seg_forward(torch::rand({1, 1, 6, 8}), net), DimensionError);
  EXPECT_THROW(seg_forward(torch::rand({1, 2, 8, 8}), net), DimensionError);
  EXPECT_THROW(seg_forward(torch::rand({1, 8, 8}), net), DimensionError);
}

TEST(Forward, ZeroHeadGivesUniformProbabilities) {
  SegArch a = tiny_arch();
  a.zero_init_head = true;
  DrUnet net(a);
  const auto p = torch::softmax(seg_forward(torch::rand({1, 1, 8, 8}), net).logits, 1);
  EXPECT_TRUE(torch::allclose(p, torch::full_like(p, 0.25)));
}

TEST(Forward, IdenticalItemsGiveIdenticalLogits) {
  torch::manual_seed(1);
  DrUnet net(tiny_arch());
  const auto x = torch::rand({1, 1, 8, 8});
  const auto out = seg_forward(torch::cat({x, x}), net).logits;
  EXPECT_TRUE(torch::equal(out[0], out[1]));
}

TEST(CrossEntropy, UniformLogitsGiveLogFour) {
  const auto labels = torch::randint(0, 4, {2, 3, 3}, torch::kLong);
  EXPECT_NEAR(ce_loss(torch::zeros({2, 4, 3, 3}, kF64), labels).item<double>(), std::log(4.0),
              1e-12);
}

TEST(CrossEntropy, LargeMarginApproachesZero) {
  const auto labels = torch::randint(0, 4, {1, 4, 4}, torch::kLong);
  const auto logits = torch::one_hot(labels, 4).permute({0, 3, 1, 2}).to(kF64) * 60.0;
  EXPECT_LT(ce_loss(logits, labels).item<double>(), 1e-20);
}

TEST(Jaccard, PerfectPredictionIsZero) {
  const auto labels = torch::tensor({0, 1, 2, 3}, torch::kLong).view({1, 2, 2});
  const auto probs = torch::one_hot(labels, 4).permute({0, 3, 1, 2}).to(kF64);
  EXPECT_LT(jaccard_loss(probs, labels).item<double>(), 1e-6);
}

TEST(Jaccard, DisjointClassTermIsOne) {
  const auto labels = torch::zeros({1, 2, 2}, torch::kLong);
  auto probs = torch::zeros({1, 4, 2, 2}, kF64);
  probs.select(1, 1).fill_(1.0);
  const auto per = jaccard_per_class(probs, labels);
  EXPECT_NEAR(per[0].item<double>(), 1.0, 1e-6);
  EXPECT_NEAR(per[1].item<double>(), 1.0, 1e-6);
  // Classes absent from both sides contribute no distance.
  EXPECT_EQ(per[2].item<double>(), 0.0);
  EXPECT_EQ(per[3].item<double>(), 0.0);
}

TEST(Jaccard, TwoByTwoSetCounting) {
  // pred class 1 = {(0,0),(0,1)}, truth class 1 = {(0,0),(1,0)}.
  const auto labels = torch::tensor({1, 0, 1, 0}, torch::kLong).view({1, 2, 2});
  const auto pred = torch::tensor({1, 1, 0, 0}, torch::kLong).view({1, 2, 2});
  const auto probs = torch::one_hot(pred, 4).permute({0, 3, 1, 2}).to(kF64);
  EXPECT_NEAR(jaccard_per_class(probs, labels)[1].item<double>(), 1.0 - 1.0 / 3.0, 1e-6);
}

TEST(Jaccard, PixelPermutationInvariant) {
  torch::manual_seed(2);
  const auto probs = torch::softmax(torch::randn({2, 4, 5, 5}, kF64), 1);
  const auto labels = torch::randint(0, 4, {2, 5, 5}, torch::kLong);
  const auto perm = torch::randperm(25);
  const auto p2 = probs.flatten(2).index_select(2, perm).view({2, 4, 5, 5});
  const auto l2 = labels.flatten(1).index_select(1, perm).view({2, 5, 5});
  EXPECT_NEAR(jaccard_loss(probs, labels).item<double>(), jaccard_loss(p2, l2).item<double>(),
              1e-12);
  EXPECT_THROW(jaccard_loss(probs, labels.narrow(1, 0, 4)), DimensionError);
}

TEST(Consistency, ZeroUnitAndBruteForce) {
  const auto z = torch::randn({3, 2, 2, 2}, kF64);
  EXPECT_EQ(consistency_loss(z, z).item<double>(), 0.0);
  auto shifted = z.clone();
  shifted.index_put_({torch::indexing::Slice(), 0, 0, 0}, z.index({torch::indexing::Slice(), 0, 0, 0}) + 1.0);
  EXPECT_NEAR(consistency_loss(z, shifted).item<double>(), 1.0, 1e-12);

  const auto a = torch::randn({4, 3, 2, 2}, kF64), b = torch::randn({4, 3, 2, 2}, kF64);
  auto fa = a.contiguous(), fb = b.contiguous();
  const double* pa = fa.data_ptr<double>();
  const double* pb = fb.data_ptr<double>();
  double expect = 0;
  for (int i = 0; i < 4; ++i) {
    double sq = 0;
    for (int k = 0; k < 12; ++k) sq += (pa[i * 12 + k] - pb[i * 12 + k]) * (pa[i * 12 + k] - pb[i * 12 + k]);
    expect += std::sqrt(sq) / 4.0;
  }
  EXPECT_NEAR(consistency_loss(a, b).item<double>(), expect, 1e-12);
  EXPECT_THROW(consistency_loss(a, b.narrow(1, 0, 2)), DimensionError);
}

TEST(Consistency, GradientFiniteAtZeroDistance) {
  auto z = torch::randn({2, 3}, kF64).set_requires_grad(true);
  consistency_loss(z, z.detach()).backward();
  EXPECT_TRUE(torch::isfinite(z.grad()).all().item<bool>());
}

TEST(Combined, ArithmeticAndDegenerateCases) {
  EXPECT_NEAR(combine_seg_loss(1.0, 0.5, 10.0, 2e-3), 1.52, 1e-12);
  EXPECT_EQ(combine_seg_loss(1.0, 0.5, 10.0, 0.0), 1.5);
  torch::manual_seed(3);
  const auto logits = torch::randn({2, 4, 4, 4}, kF64);
  const auto labels = torch::randint(0, 4, {2, 4, 4}, torch::kLong);
  const auto z = torch::randn({2, 3, 1, 1}, kF64);
  const auto probs = torch::softmax(logits, 1);
  const auto same = seg_total_loss(logits, probs, labels, z, z, 5.0);
  EXPECT_EQ(same.total.item<double>(), same.seg.item<double>());
  EXPECT_EQ(same.seg.item<double>(), seg_loss(logits, labels).item<double>());
  const auto zero = seg_total_loss(logits, probs, labels, z, z + 1, 0.0);
  EXPECT_EQ(zero.total.item<double>(), zero.seg.item<double>());
}

TEST(Gradient, ParametersMatchFiniteDifferences) {
  torch::manual_seed(11);
  DrUnet net(tiny_arch());
  net->to(kF64);
  ASSERT_LE(parameter_count(*net), 1000);
  const auto xs = torch::rand({2, 1, 8, 8}, kF64);
  const auto xt = xs.pow(2.2);
  const auto labels = torch::randint(0, 4, {2, 8, 8}, torch::kLong);
  const double lambda = 0.5;

  auto loss_fn = [&] {
    const auto out = seg_forward(torch::cat({xs, xt}), net);
    const auto z = out.bottleneck.split(2);
    const auto l = seg_total_loss(out.logits.narrow(0, 0, 2),
                                  torch::softmax(out.logits.narrow(0, 0, 2), 1), labels, z[0],
                                  z[1], lambda);
    return l.total;
  };
  net->zero_grad();
  loss_fn().backward();

  double worst = 0.0;
  torch::NoGradGuard no_grad;
  for (auto& p : net->parameters()) {
    auto flat = p.view(-1);
    const auto analytic = p.grad().view(-1).clone();
    auto fd = torch::zeros_like(analytic);
    for (std::int64_t i = 0; i < flat.size(0); ++i) {
      const double orig = flat[i].item<double>();
      const double h = 1e-6;
      flat[i] = orig + h;
      const double up = loss_fn().item<double>();
      flat[i] = orig - h;
      const double down = loss_fn().item<double>();
      flat[i] = orig;
      fd[i] = (up - down) / (2 * h);
    }
    worst = std::max(worst, oracle::max_relative_error(analytic, fd, 1e-6));
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(Json, ArchRoundTrip) {
  SegArch a = tiny_arch();
  a.zero_init_head = true;
  EXPECT_EQ(nlohmann::json(a).get<SegArch>(), a);
  a.dilations.clear();
  EXPECT_NO_THROW(a.validate());
  a.widths.clear();
  EXPECT_THROW(a.validate(), ConfigError);
}

}  // namespace
}  // namespace fuda::seg
