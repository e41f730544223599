#pragma once

#include "hlseg/tensor.hpp"

namespace hlseg::gf {

// radius r, regularisation eps on the [0,255]^2 scale of the guide, and the
// subsampling factor s of the fast variant.
struct GFParams {
  int radius = 4;
  double eps = 50.0;
  int subsample = 4;

  void validate() const;
};

// Mean over the (2r+1)^2 window centred on each pixel, with out-of-range
// coordinates clamped to the nearest edge pixel. Integral image, O(1) per
// pixel, accumulated in double.
Tensor box_mean(const Tensor& input, int radius);

// Local linear model Q = mean(a) * I + mean(b) with
// a = cov(I, P) / (var(I) + eps), b = mean(P) - a * mean(I).
// guide and input are HxWx1 and share dims.
Tensor guided_filter(const Tensor& guide, const Tensor& input, int radius, double eps);

// Same model with a and b fitted on a 1/s bilinear downsample (radius r/s,
// at least 1) and bilinearly upsampled before being applied at full
// resolution. s = 1 reduces to guided_filter.
Tensor fast_guided_filter(const Tensor& guide, const Tensor& input, int radius, double eps,
                          int subsample);

// Alpha matte for one class: luma of the RGB image (0..255) guides the class
// probability through fast_guided_filter; result clamped to [0,1].
Tensor refine_mask(const Tensor& image_rgb, const Tensor& prob, int class_id,
                   const GFParams& params = {});

}  // namespace hlseg::gf
