#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hlseg/modelio.hpp"
#include "hlseg/nnops.hpp"
#include "hlseg/tensor.hpp"

namespace hlseg::net {

// Epsilon used when folding stored batch-norm statistics.
inline constexpr float kBatchNormEpsilon = 1e-3f;

// Channel widths of the network. The defaults reproduce the reference
// 224x224 configuration (32 -> 64 -> 64 -> ... -> 32 -> K).
struct HLNetConfig {
  int input_size = 224;
  int num_classes = 3;
  int stem_channels = 32;
  int high_channels = 64;
  int low_channels = 64;
  int fuse_channels = 64;
  int dilated_branch_channels = 64;
  int head_channels = 32;
  int expansion = nn::kExpansion;
  int attention_reduction = nn::kAttentionReduction;

  // Every internal width multiplied by `factor`; input and class count kept.
  HLNetConfig scaled(int factor) const;
  void validate() const;
};

// One convolution slot in the weight file. Tensors are named
// "<prefix>.weight", "<prefix>.bias" and, when batch_norm is set,
// "<bn_prefix>.gamma|beta|mean|var".
struct ConvSlot {
  std::string layer;  // human readable layer, e.g. "stage6 DilatedGroup"
  std::string prefix;
  std::string bn_prefix;
  int kernel = 1;
  int in_channels = 1;
  int out_channels = 1;
  int stride = 1;
  int dilation = 1;
  bool depthwise = false;
  bool batch_norm = true;
};

std::vector<ConvSlot> conv_slots(const HLNetConfig& config);

// Names and dims of every tensor a complete weight file must contain.
struct TensorSpec {
  std::string name;
  std::vector<std::uint32_t> dims;
};
std::vector<TensorSpec> expected_tensors(const HLNetConfig& config);

// He-initialised convolutions and mildly perturbed BN statistics.
io::WeightStore random_weights(const HLNetConfig& config, std::uint64_t seed);
// Every tensor zero (BN variances included; the fold epsilon keeps them valid).
io::WeightStore zero_weights(const HLNetConfig& config);

struct TraceEntry {
  std::string type;
  int height;
  int width;
  int channels;

  std::string shape() const;
};

// Immutable after build; forward is const and safe to call concurrently.
class HLNetModel {
 public:
  // Throws LoadError naming the layer of a missing tensor and ShapeError
  // with expected/actual dims on a mismatch. BN is folded here.
  static HLNetModel build(const io::WeightStore& weights, const HLNetConfig& config = {});

  const HLNetConfig& config() const noexcept { return config_; }

  // image: input_size x input_size x 3 with values in [0, 1].
  // Returns input_size x input_size x K class probabilities
  // (0 background, 1 hair, 2 face).
  Tensor forward(const Tensor& image) const;
  Tensor forward(const Tensor& image, std::vector<TraceEntry>* trace) const;

  std::size_t param_count() const noexcept;

 private:
  HLNetConfig config_;
  nn::ConvParams stem_;
  nn::ConvParams down1_dw_, down1_pw_;
  nn::ConvParams down2_dw_, down2_pw_;
  nn::InvertedResidualParams bottleneck_;
  nn::InteractionParams interaction_;
  nn::FFMParams ffm_;
  nn::DilatedGroupParams dilated_;
  nn::ConvParams classifier_;
};

HLNetModel build(const io::WeightStore& weights, int num_classes);

std::size_t param_count(const HLNetModel& model) noexcept;
std::size_t param_count(std::span<const nn::ConvParams> layers) noexcept;

// Layer types of the reference trace, in order.
std::vector<std::string> trace_types();

}  // namespace hlseg::net
