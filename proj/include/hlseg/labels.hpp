#pragma once

#include <cstdint>
#include <vector>

#include "hlseg/tensor.hpp"

namespace hlseg {

// Class order of the three-class portrait head.
enum class PortraitClass : std::uint8_t { kBackground = 0, kHair = 1, kFace = 2 };

inline constexpr int kPortraitClasses = 3;

struct LabelMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> labels;

  LabelMask() = default;
  LabelMask(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), labels(static_cast<std::size_t>(h) * w, fill) {}

  std::uint8_t& at(int y, int x) noexcept { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const noexcept {
    return labels[static_cast<std::size_t>(y) * width + x];
  }

  friend bool operator==(const LabelMask&, const LabelMask&) = default;
};

// Per-pixel argmax over channels; ties go to the lowest class index.
LabelMask argmax(const Tensor& prob);

// HxWxK one-hot encoding of a label mask.
Tensor one_hot(const LabelMask& mask, int num_classes);

}  // namespace hlseg
