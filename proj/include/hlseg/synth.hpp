#pragma once

#include <array>
#include <cstdint>

#include "hlseg/labels.hpp"
#include "hlseg/tensor.hpp"

namespace hlseg::synth {

// Generated portrait-like images for the grading pipeline: a skin-coloured
// ellipse with a hair cap on a noisy background, one base tone per grade.
struct SynthParams {
  int count = 500;
  int size = 64;
  std::uint64_t seed = 42;
  double tone_jitter = 12.0;  // per-image shift of the base tone, std dev
  double pixel_noise = 6.0;   // per-pixel noise, std dev
};

struct Sample {
  Tensor image;      // RGB on [0,255]
  LabelMask labels;  // 0 background, 1 hair, 2 face
  int tone = 0;      // grade index
};

// Base RGB of each grade, lightest first.
const std::array<std::array<double, 3>, 5>& tone_palette() noexcept;

// Sample i depends only on (params, i); tones cycle through the grades.
Sample generate(const SynthParams& params, int index);

}  // namespace hlseg::synth
