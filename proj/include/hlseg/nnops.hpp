#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "hlseg/tensor.hpp"

namespace hlseg::nn {

// Expansion factor of the inverted residual bottleneck.
inline constexpr int kExpansion = 6;
// Dilation rates of the three parallel branches in the dilated group.
inline constexpr std::array<int, 3> kDilationRates = {2, 4, 8};
// Channel reduction ratio inside the FFM attention gate.
inline constexpr int kAttentionReduction = 4;

enum class Padding { kSame, kValid };

// Convolution weights laid out [ky][kx][in][out]. For depthwise use the out
// dimension is 1 and each input channel owns one spatial filter.
struct ConvParams {
  int kernel_h = 1;
  int kernel_w = 1;
  int in_channels = 1;
  int out_channels = 1;
  std::vector<float> kernel;
  std::vector<float> bias;
  int stride = 1;
  int dilation = 1;
  Padding padding = Padding::kSame;
  // Depthwise kernels have out_channels == 1 and one bias per input channel.
  bool depthwise = false;

  // Zero-initialised parameters of the given geometry.
  static ConvParams zeros(int kernel_h, int kernel_w, int in_channels, int out_channels,
                          int stride = 1, int dilation = 1);
  static ConvParams depthwise_zeros(int kernel_h, int kernel_w, int channels, int stride = 1,
                                    int dilation = 1);

  int output_channels() const noexcept { return depthwise ? in_channels : out_channels; }

  float& weight(int ky, int kx, int ci, int co) noexcept {
    return kernel[((static_cast<std::size_t>(ky) * kernel_w + kx) * in_channels + ci) *
                      out_channels +
                  co];
  }
  float weight(int ky, int kx, int ci, int co) const noexcept {
    return kernel[((static_cast<std::size_t>(ky) * kernel_w + kx) * in_channels + ci) *
                      out_channels +
                  co];
  }

  // Throws ParamError on inconsistent geometry or non-positive stride/dilation.
  void validate() const;

  std::size_t param_count() const noexcept { return kernel.size() + bias.size(); }
};

struct BNParams {
  std::vector<float> gamma;
  std::vector<float> beta;
  std::vector<float> running_mean;
  std::vector<float> running_var;
  float epsilon = 1e-3f;

  static BNParams identity(int channels, float epsilon = 1e-3f);
};

// Output extent along one axis.
int conv_output_extent(int input, int kernel, int stride, int dilation, Padding padding);

Tensor conv2d(const Tensor& input, const ConvParams& p);
Tensor depthwise_conv2d(const Tensor& input, const ConvParams& p);

// Returns parameters whose convolution equals BN applied to the original
// convolution's output. Works for both regular and depthwise kernels.
ConvParams fold_batchnorm(const ConvParams& p, const BNParams& bn);
// Reference BN application on an activation tensor; used to check folding.
Tensor batchnorm(const Tensor& input, const BNParams& bn);

Tensor relu(const Tensor& input);
void relu_inplace(Tensor& t) noexcept;
Tensor sigmoid(const Tensor& input);
Tensor softmax_channels(const Tensor& input);
Tensor global_avg_pool(const Tensor& input);

// Bilinear resampling, half-pixel centres (align_corners = false), source
// coordinates clamped at the borders. Works in both directions.
Tensor resize_bilinear(const Tensor& input, int out_h, int out_w);
// resize_bilinear restricted to enlarging.
Tensor bilinear_upsample(const Tensor& input, int out_h, int out_w);

Tensor add(const Tensor& a, const Tensor& b);
Tensor concat_channels(const Tensor& a, const Tensor& b);

// 1x1 expand (x t) + ReLU, 3x3 depthwise + ReLU, 1x1 linear projection.
// BN is expected to be folded into all three.
struct InvertedResidualParams {
  ConvParams expand;
  ConvParams depthwise;
  ConvParams project;

  int stride() const noexcept { return depthwise.stride; }
  int expanded_channels() const noexcept { return expand.out_channels; }
};

InvertedResidualParams make_inverted_residual(int in_channels, int out_channels, int stride,
                                              int expansion = kExpansion);
Tensor inverted_residual(const Tensor& input, const InvertedResidualParams& p);

// fuse: 3x3 conv over concat(a, b) followed by ReLU (BN folded).
// attention: 1x1 reduce + ReLU, 1x1 expand + sigmoid over the pooled fused map.
struct FFMParams {
  ConvParams fuse;
  ConvParams attention_reduce;
  ConvParams attention_expand;
};

FFMParams make_ffm(int in_channels_a, int in_channels_b, int out_channels,
                   int reduction = kAttentionReduction);
Tensor ffm(const Tensor& a, const Tensor& b, const FFMParams& p);

// Three parallel dilated 3x3 branches summed, then a 1x1 projection + ReLU.
struct DilatedGroupParams {
  std::array<ConvParams, 3> branches;
  ConvParams project;
};

DilatedGroupParams make_dilated_group(int in_channels, int branch_channels, int out_channels);
Tensor dilated_group(const Tensor& input, const DilatedGroupParams& p);

// One bidirectional exchange between a high-resolution and a half-resolution
// branch: high += up(conv1x1(low)); low += conv1x1_stride2(high).
struct InteractionParams {
  ConvParams low_to_high;
  ConvParams high_to_low;
};

InteractionParams make_interaction(int high_channels, int low_channels);
Tensor interaction_module(const Tensor& high, const Tensor& low, const InteractionParams& p);

// Naive direct-loop implementations kept as oracles for the optimised paths.
namespace reference {

Tensor conv2d(const Tensor& input, const ConvParams& p);
Tensor depthwise_conv2d(const Tensor& input, const ConvParams& p);

}  // namespace reference

}  // namespace hlseg::nn
