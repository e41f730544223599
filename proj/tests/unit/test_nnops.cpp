#include <cmath>
#include <random>

#include "doctest.h"
#include "hlseg/errors.hpp"
#include "hlseg/nnops.hpp"
#include "test_util.hpp"

using hlseg::Tensor;
using hlseg::max_abs_diff;
using hlseg::testing::randomize;
using hlseg::testing::random_tensor;
namespace nn = hlseg::nn;

TEST_CASE("tensor rejects inconsistent construction") {
  CHECK_THROWS_AS(Tensor(0, 1, 1), hlseg::ShapeError);
  CHECK_THROWS_AS(Tensor(2, 2, 1, std::vector<float>(3)), hlseg::ShapeError);
  Tensor t(2, 3, 4, 1.5f);
  CHECK(t.size() == 24);
  CHECK(t.shape_string() == "2x3x4");
}

TEST_CASE("conv2d scalar multiply") {
  Tensor in(1, 1, 1, 2.0f);
  auto p = nn::ConvParams::zeros(1, 1, 1, 1);
  p.kernel[0] = 3.0f;
  const Tensor out = nn::conv2d(in, p);
  CHECK(out.shape_string() == "1x1x1");
  CHECK(out.at(0, 0, 0) == doctest::Approx(6.0f));
}

TEST_CASE("conv2d same padding counts overlap") {
  Tensor in(3, 3, 1, 1.0f);
  auto p = nn::ConvParams::zeros(3, 3, 1, 1);
  std::fill(p.kernel.begin(), p.kernel.end(), 1.0f);
  const Tensor out = nn::conv2d(in, p);
  CHECK(out.at(1, 1, 0) == doctest::Approx(9.0f));
  CHECK(out.at(0, 0, 0) == doctest::Approx(4.0f));
  CHECK(out.at(2, 2, 0) == doctest::Approx(4.0f));
  CHECK(out.at(0, 1, 0) == doctest::Approx(6.0f));
}

TEST_CASE("conv2d stride 2 matches the naive oracle") {
  std::mt19937 rng(11);
  const Tensor in = random_tensor(8, 8, 4, rng);
  auto p = nn::ConvParams::zeros(3, 3, 4, 8, 2);
  randomize(p, rng);
  const Tensor fast = nn::conv2d(in, p);
  const Tensor slow = nn::reference::conv2d(in, p);
  CHECK(fast.shape_string() == "4x4x8");
  CHECK(max_abs_diff(fast, slow) < 1e-5f);
}

TEST_CASE("conv2d property: random geometries agree with the oracle") {
  std::mt19937 rng(2024);
  std::uniform_int_distribution<int> extent(1, 16), chans(1, 8), ksize(1, 3), stride(1, 3),
      dil(1, 3), pad(0, 1);
  int checked = 0;
  for (int trial = 0; trial < 120; ++trial) {
    const int h = extent(rng), w = extent(rng), cin = chans(rng), cout = chans(rng);
    const int k = 2 * ksize(rng) - 1;
    auto p = nn::ConvParams::zeros(k, k, cin, cout, stride(rng), dil(rng));
    p.padding = pad(rng) ? nn::Padding::kSame : nn::Padding::kValid;
    const int span = (k - 1) * p.dilation + 1;
    if (p.padding == nn::Padding::kValid && (h < span || w < span)) continue;
    randomize(p, rng);
    const Tensor in = random_tensor(h, w, cin, rng);
    const Tensor fast = nn::conv2d(in, p);
    const Tensor slow = nn::reference::conv2d(in, p);
    REQUIRE(fast.same_shape(slow));
    CHECK(max_abs_diff(fast, slow) < 1e-5f);
    CHECK(fast.all_finite());
    ++checked;
  }
  CHECK(checked > 50);
}

TEST_CASE("conv2d output extent follows ceil(H / stride) for same padding") {
  CHECK(nn::conv_output_extent(224, 3, 2, 1, nn::Padding::kSame) == 112);
  CHECK(nn::conv_output_extent(7, 3, 2, 1, nn::Padding::kSame) == 4);
  CHECK(nn::conv_output_extent(7, 3, 2, 1, nn::Padding::kValid) == 3);
}

TEST_CASE("conv2d errors") {
  Tensor in(4, 4, 3);
  auto p = nn::ConvParams::zeros(3, 3, 2, 1);
  CHECK_THROWS_AS(nn::conv2d(in, p), hlseg::ShapeError);
  CHECK_THROWS_AS(nn::ConvParams::zeros(3, 3, 3, 1, 0), hlseg::ParamError);
  CHECK_THROWS_AS(nn::ConvParams::zeros(3, 3, 3, 1, 1, 0), hlseg::ParamError);
  auto q = nn::ConvParams::zeros(3, 3, 3, 1);
  q.stride = -1;
  CHECK_THROWS_AS(nn::conv2d(in, q), hlseg::ParamError);
}

TEST_CASE("conv2d is linear without bias") {
  std::mt19937 rng(5);
  const Tensor x = random_tensor(9, 7, 3, rng);
  const Tensor y = random_tensor(9, 7, 3, rng);
  auto p = nn::ConvParams::zeros(3, 3, 3, 5, 1, 2);
  randomize(p, rng);
  std::fill(p.bias.begin(), p.bias.end(), 0.0f);
  const float alpha = 1.7f, beta = -0.6f;
  Tensor mix = x;
  for (std::size_t i = 0; i < mix.size(); ++i) {
    mix.data()[i] = alpha * x.data()[i] + beta * y.data()[i];
  }
  const Tensor lhs = nn::conv2d(mix, p);
  const Tensor cx = nn::conv2d(x, p);
  const Tensor cy = nn::conv2d(y, p);
  Tensor rhs = cx;
  for (std::size_t i = 0; i < rhs.size(); ++i) {
    rhs.data()[i] = alpha * cx.data()[i] + beta * cy.data()[i];
  }
  CHECK(max_abs_diff(lhs, rhs) < 1e-4f);
}

TEST_CASE("depthwise conv keeps channels independent") {
  Tensor in(5, 5, 2);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x) {
      in.at(y, x, 0) = 1.0f;
      in.at(y, x, 1) = 2.0f;
    }
  auto p = nn::ConvParams::depthwise_zeros(3, 3, 2);
  std::fill(p.kernel.begin(), p.kernel.end(), 1.0f);
  const Tensor out = nn::depthwise_conv2d(in, p);
  CHECK(out.at(2, 2, 0) == doctest::Approx(9.0f));
  CHECK(out.at(2, 2, 1) == doctest::Approx(18.0f));
}

TEST_CASE("depthwise delta kernel is the identity") {
  std::mt19937 rng(3);
  const Tensor in = random_tensor(6, 7, 5, rng);
  auto p = nn::ConvParams::depthwise_zeros(3, 3, 5);
  for (int c = 0; c < 5; ++c) p.weight(1, 1, c, 0) = 1.0f;
  CHECK(nn::depthwise_conv2d(in, p) == in);
}

TEST_CASE("depthwise conv matches the per-channel oracle") {
  std::mt19937 rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const int stride = 1 + trial % 2;
    const int dilation = 1 + trial % 3;
    const Tensor in = random_tensor(5 + trial % 11, 4 + trial % 9, 1 + trial % 8, rng);
    auto p = nn::ConvParams::depthwise_zeros(3, 3, in.channels(), stride, dilation);
    randomize(p, rng);
    CHECK(max_abs_diff(nn::depthwise_conv2d(in, p), nn::reference::depthwise_conv2d(in, p)) <
          1e-5f);
  }
}

TEST_CASE("depthwise conv rejects non-depthwise kernels") {
  Tensor in(4, 4, 2);
  CHECK_THROWS_AS(nn::depthwise_conv2d(in, nn::ConvParams::zeros(3, 3, 2, 2)), hlseg::ParamError);
  CHECK_THROWS_AS(nn::depthwise_conv2d(in, nn::ConvParams::depthwise_zeros(3, 3, 3)),
                  hlseg::ShapeError);
}

TEST_CASE("fold_batchnorm identity BN leaves parameters unchanged") {
  std::mt19937 rng(1);
  auto p = nn::ConvParams::zeros(3, 3, 2, 4);
  randomize(p, rng);
  const auto folded = nn::fold_batchnorm(p, nn::BNParams::identity(4, 0.0f));
  CHECK(folded.kernel == p.kernel);
  CHECK(folded.bias == p.bias);
}

TEST_CASE("fold_batchnorm hand algebra") {
  auto p = nn::ConvParams::zeros(1, 1, 1, 1);
  p.kernel[0] = 3.0f;
  nn::BNParams bn = nn::BNParams::identity(1, 0.0f);
  bn.gamma[0] = 2.0f;
  bn.beta[0] = 1.0f;
  const auto folded = nn::fold_batchnorm(p, bn);
  CHECK(folded.kernel[0] == doctest::Approx(6.0f));
  CHECK(folded.bias[0] == doctest::Approx(1.0f));
}

TEST_CASE("fold_batchnorm equals the unfused pipeline") {
  std::mt19937 rng(99);
  std::uniform_real_distribution<float> pos(0.2f, 2.0f), any(-1.0f, 1.0f);
  for (bool depthwise : {false, true}) {
    auto p = depthwise ? nn::ConvParams::depthwise_zeros(3, 3, 6, 2)
                       : nn::ConvParams::zeros(3, 3, 6, 5, 2);
    randomize(p, rng);
    const int channels = p.output_channels();
    nn::BNParams bn;
    for (int c = 0; c < channels; ++c) {
      bn.gamma.push_back(pos(rng));
      bn.beta.push_back(any(rng));
      bn.running_mean.push_back(any(rng));
      bn.running_var.push_back(pos(rng));
    }
    const Tensor x = random_tensor(10, 9, 6, rng);
    const auto folded = nn::fold_batchnorm(p, bn);
    const Tensor fused = depthwise ? nn::depthwise_conv2d(x, folded) : nn::conv2d(x, folded);
    const Tensor unfused =
        nn::batchnorm(depthwise ? nn::depthwise_conv2d(x, p) : nn::conv2d(x, p), bn);
    CHECK(max_abs_diff(fused, unfused) < 1e-5f);
  }
}

TEST_CASE("fold_batchnorm length mismatch") {
  auto p = nn::ConvParams::zeros(1, 1, 1, 3);
  CHECK_THROWS_AS(nn::fold_batchnorm(p, nn::BNParams::identity(2)), hlseg::ParamError);
}

TEST_CASE("relu") {
  Tensor t(1, 3, 1, std::vector<float>{-1.0f, 0.0f, 2.0f});
  const Tensor r = nn::relu(t);
  CHECK(r.data()[0] == 0.0f);
  CHECK(r.data()[1] == 0.0f);
  CHECK(r.data()[2] == 2.0f);
  CHECK(nn::relu(Tensor(3, 3, 2, -4.0f)) == Tensor(3, 3, 2, 0.0f));
  std::mt19937 rng(4);
  const Tensor x = random_tensor(5, 5, 3, rng);
  CHECK(nn::relu(nn::relu(x)) == nn::relu(x));
}

TEST_CASE("sigmoid") {
  Tensor t(1, 3, 1, std::vector<float>{0.0f, 40.0f, -40.0f});
  const Tensor s = nn::sigmoid(t);
  CHECK(s.data()[0] == doctest::Approx(0.5f));
  CHECK(std::abs(s.data()[1] - 1.0f) < 1e-6f);
  CHECK(s.all_finite());
  std::mt19937 rng(8);
  const Tensor x = random_tensor(4, 4, 4, rng, -8.0f, 8.0f);
  Tensor neg = x;
  for (float& v : neg.data()) v = -v;
  const Tensor a = nn::sigmoid(x);
  const Tensor b = nn::sigmoid(neg);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.data()[i] + b.data()[i] == doctest::Approx(1.0f).epsilon(1e-6));
}

TEST_CASE("bilinear upsample preserves constants") {
  const Tensor out = nn::bilinear_upsample(Tensor(28, 28, 2, 5.0f), 224, 224);
  CHECK(out.shape_string() == "224x224x2");
  for (float v : out.data()) REQUIRE(v == 5.0f);
}

TEST_CASE("bilinear upsample 1x2 to 1x4 stays monotone and bounded") {
  const Tensor out = nn::bilinear_upsample(Tensor(1, 2, 1, std::vector<float>{0.0f, 1.0f}), 1, 4);
  for (int x = 0; x < 4; ++x) {
    CHECK(out.at(0, x, 0) >= 0.0f);
    CHECK(out.at(0, x, 0) <= 1.0f);
    if (x > 0) CHECK(out.at(0, x, 0) >= out.at(0, x - 1, 0));
  }
}

TEST_CASE("bilinear upsample 2x2 ramp matches the hand-computed grid") {
  // Source (y, x) -> 2y + x. Half-pixel centres map output index o to source
  // coordinate o/2 - 1/4, clamped at 0: offsets {0, 0.25, 0.75, 1}.
  const Tensor in(2, 2, 1, std::vector<float>{0.0f, 1.0f, 2.0f, 3.0f});
  const Tensor out = nn::bilinear_upsample(in, 4, 4);
  const float offsets[4] = {0.0f, 0.25f, 0.75f, 1.0f};
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) CHECK(std::abs(out.at(y, x, 0) - (2.0f * offsets[y] + offsets[x])) < 1e-6f);
}

TEST_CASE("bilinear upsample stays within input range") {
  std::mt19937 rng(21);
  const Tensor in = random_tensor(5, 6, 3, rng, -3.0f, 7.0f);
  const Tensor out = nn::bilinear_upsample(in, 17, 23);
  for (int c = 0; c < 3; ++c) {
    float lo = 1e9f, hi = -1e9f;
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 6; ++x) {
        lo = std::min(lo, in.at(y, x, c));
        hi = std::max(hi, in.at(y, x, c));
      }
    for (int y = 0; y < 17; ++y)
      for (int x = 0; x < 23; ++x) {
        CHECK(out.at(y, x, c) >= lo);
        CHECK(out.at(y, x, c) <= hi);
      }
  }
  CHECK_THROWS_AS(nn::bilinear_upsample(in, 0, 4), hlseg::ParamError);
}

TEST_CASE("global average pool") {
  CHECK(nn::global_avg_pool(Tensor(4, 3, 2, 1.25f)) == Tensor(1, 1, 2, 1.25f));
  const Tensor pooled = nn::global_avg_pool(Tensor(2, 1, 1, std::vector<float>{0.0f, 4.0f}));
  CHECK(pooled.at(0, 0, 0) == doctest::Approx(2.0f));
  std::mt19937 rng(6);
  const Tensor x = random_tensor(7, 9, 3, rng);
  const Tensor g = nn::global_avg_pool(x);
  for (int c = 0; c < 3; ++c) {
    double sum = 0.0;
    for (int y = 0; y < 7; ++y)
      for (int xx = 0; xx < 9; ++xx) sum += x.at(y, xx, c);
    CHECK(std::abs(g.at(0, 0, c) - sum / 63.0) < 1e-6);
  }
}

TEST_CASE("softmax over channels") {
  const Tensor u = nn::softmax_channels(Tensor(1, 1, 3, 0.0f));
  for (float v : u.data()) CHECK(v == doctest::Approx(1.0f / 3.0f));
  const Tensor s = nn::softmax_channels(Tensor(1, 1, 3, std::vector<float>{1000.0f, 0.0f, 0.0f}));
  CHECK(s.all_finite());
  CHECK(s.data()[0] == doctest::Approx(1.0f));
  CHECK(s.data()[1] < 1e-12f);

  std::mt19937 rng(13);
  const Tensor x = random_tensor(6, 5, 3, rng, -20.0f, 20.0f);
  const Tensor a = nn::softmax_channels(x);
  Tensor shifted = x;
  for (float& v : shifted.data()) v += 37.5f;
  CHECK(max_abs_diff(a, nn::softmax_channels(shifted)) < 1e-6f);
  for (int y = 0; y < 6; ++y)
    for (int xx = 0; xx < 5; ++xx) {
      const float sum = a.at(y, xx, 0) + a.at(y, xx, 1) + a.at(y, xx, 2);
      CHECK(std::abs(sum - 1.0f) < 1e-6f);
    }
}

TEST_CASE("inverted residual") {
  std::mt19937 rng(31);
  const Tensor x = random_tensor(28, 28, 16, rng);

  SUBCASE("zero weights with stride 1 is the identity") {
    const auto p = nn::make_inverted_residual(16, 16, 1);
    CHECK(nn::inverted_residual(x, p) == x);
  }
  SUBCASE("stride 2 halves the grid and drops the shortcut") {
    const auto p = nn::make_inverted_residual(16, 16, 2);
    const Tensor out = nn::inverted_residual(x, p);
    CHECK(out.shape_string() == "14x14x16");
    CHECK(out == Tensor(14, 14, 16, 0.0f));
  }
  SUBCASE("expansion factor six") {
    const auto p = nn::make_inverted_residual(64, 64, 1);
    CHECK(nn::kExpansion == 6);
    CHECK(p.expanded_channels() == 6 * 64);
  }
  SUBCASE("stride outside {1, 2} is rejected") {
    auto p = nn::make_inverted_residual(16, 16, 1);
    p.depthwise.stride = 3;
    CHECK_THROWS_AS(nn::inverted_residual(x, p), hlseg::ParamError);
  }
}

TEST_CASE("ffm") {
  std::mt19937 rng(41);
  const Tensor a = random_tensor(28, 28, 64, rng);
  const Tensor b = random_tensor(28, 28, 64, rng);

  SUBCASE("zero attention logits gate at one half") {
    auto p = nn::make_ffm(64, 64, 64);
    randomize(p.fuse, rng, 0.05f);
    const Tensor out = nn::ffm(a, b, p);
    const Tensor f = nn::relu(nn::conv2d(nn::concat_channels(a, b), p.fuse));
    Tensor expected = f;
    for (float& v : expected.data()) v *= 1.5f;
    CHECK(max_abs_diff(out, expected) < 1e-5f);
  }
  SUBCASE("zero inputs give zero output") {
    auto p = nn::make_ffm(64, 64, 64);
    randomize(p.fuse, rng, 0.05f);
    std::fill(p.fuse.bias.begin(), p.fuse.bias.end(), 0.0f);
    randomize(p.attention_reduce, rng);
    randomize(p.attention_expand, rng);
    const Tensor zero(28, 28, 64, 0.0f);
    CHECK(nn::ffm(zero, zero, p) == zero);
  }
  SUBCASE("output shape 28x28x64") {
    auto p = nn::make_ffm(64, 64, 64);
    randomize(p.fuse, rng, 0.05f);
    randomize(p.attention_reduce, rng);
    randomize(p.attention_expand, rng);
    CHECK(p.attention_reduce.out_channels == 64 / nn::kAttentionReduction);
    const Tensor out = nn::ffm(a, b, p);
    CHECK(out.shape_string() == "28x28x64");
    CHECK(out.all_finite());
  }
  SUBCASE("spatial mismatch") {
    const auto p = nn::make_ffm(64, 64, 64);
    CHECK_THROWS_AS(nn::ffm(a, random_tensor(14, 14, 64, rng), p), hlseg::ShapeError);
  }
}

TEST_CASE("dilated group") {
  std::mt19937 rng(51);
  const Tensor x = random_tensor(28, 28, 64, rng, 0.0f, 1.0f);

  SUBCASE("rates are 2, 4, 8") {
    const auto p = nn::make_dilated_group(64, 64, 32);
    CHECK(p.branches[0].dilation == 2);
    CHECK(p.branches[1].dilation == 4);
    CHECK(p.branches[2].dilation == 8);
  }
  SUBCASE("zero weights give zero 28x28x32 output") {
    const auto p = nn::make_dilated_group(64, 64, 32);
    CHECK(nn::dilated_group(x, p) == Tensor(28, 28, 32, 0.0f));
  }
  SUBCASE("delta kernels sum to three times the projected input") {
    auto p = nn::make_dilated_group(64, 64, 32);
    for (auto& branch : p.branches)
      for (int c = 0; c < 64; ++c) branch.weight(1, 1, c, c) = 1.0f;
    for (int c = 0; c < 32; ++c) p.project.weight(0, 0, c, c) = 1.0f;
    const Tensor out = nn::dilated_group(x, p);
    float worst = 0.0f;
    for (int y = 0; y < 28; ++y)
      for (int xx = 0; xx < 28; ++xx)
        for (int c = 0; c < 32; ++c) worst = std::max(worst, std::abs(out.at(y, xx, c) - 3.0f * x.at(y, xx, c)));
    CHECK(worst < 1e-5f);
  }
  SUBCASE("each branch matches the dilated oracle") {
    auto p = nn::make_dilated_group(8, 8, 4);
    const Tensor small = random_tensor(16, 16, 8, rng);
    for (auto& branch : p.branches) {
      randomize(branch, rng);
      CHECK(max_abs_diff(nn::conv2d(small, branch), nn::reference::conv2d(small, branch)) < 1e-5f);
    }
  }
  SUBCASE("channel mismatch") {
    const auto p = nn::make_dilated_group(32, 64, 32);
    CHECK_THROWS_AS(nn::dilated_group(x, p), hlseg::ShapeError);
  }
}

TEST_CASE("interaction module") {
  std::mt19937 rng(61);
  const Tensor high = random_tensor(56, 56, 64, rng);
  const Tensor low = random_tensor(28, 28, 64, rng);

  SUBCASE("zero cross weights return the low branch") {
    const auto p = nn::make_interaction(64, 64);
    CHECK(nn::interaction_module(high, low, p) == low);
  }
  SUBCASE("zero low with identity cross conv is the strided projection of high") {
    auto p = nn::make_interaction(64, 64);
    for (int c = 0; c < 64; ++c) {
      p.low_to_high.weight(0, 0, c, c) = 1.0f;
      p.high_to_low.weight(0, 0, c, c) = 1.0f;
    }
    const Tensor out = nn::interaction_module(high, Tensor(28, 28, 64, 0.0f), p);
    float worst = 0.0f;
    for (int y = 0; y < 28; ++y)
      for (int x = 0; x < 28; ++x)
        for (int c = 0; c < 64; ++c) worst = std::max(worst, std::abs(out.at(y, x, c) - high.at(2 * y, 2 * x, c)));
    CHECK(worst == 0.0f);
  }
  SUBCASE("table shapes") {
    auto p = nn::make_interaction(64, 64);
    randomize(p.low_to_high, rng, 0.1f);
    randomize(p.high_to_low, rng, 0.1f);
    CHECK(nn::interaction_module(high, low, p).shape_string() == "28x28x64");
  }
  SUBCASE("resolution mismatch") {
    const auto p = nn::make_interaction(64, 64);
    CHECK_THROWS_AS(nn::interaction_module(random_tensor(50, 56, 64, rng), low, p),
                    hlseg::ShapeError);
  }
}
