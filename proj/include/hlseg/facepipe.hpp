#pragma once

#include <array>
#include <vector>

#include "hlseg/tensor.hpp"

namespace hlseg::face {

struct Box {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  friend bool operator==(const Box&, const Box&) = default;
};

// Grows the box by factor in both dimensions around its centre, then clamps
// it to [0, width) x [0, height).
Box expand_roi(const Box& box, double factor, int width, int height);
Box clamp_box(const Box& box, int width, int height);

Tensor crop(const Tensor& image, const Box& box);

// Binary structuring element with the anchor at the centre.
class StructElement {
 public:
  StructElement(int rows, int cols, std::vector<unsigned char> mask);
  static StructElement full(int rows, int cols);

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  bool on(int r, int c) const noexcept { return mask_[static_cast<std::size_t>(r) * cols_ + c] != 0; }

 private:
  int rows_;
  int cols_;
  std::vector<unsigned char> mask_;
};

// Min over the active offsets. Coordinates outside the frame count as 1.
Tensor erode(const Tensor& mask, const StructElement& se);

// d x d window, replicated borders, Gaussian weights in space and in colour
// distance (Euclidean across channels).
Tensor bilateral_filter(const Tensor& image, int d, double sigma_color, double sigma_space);

struct FaceParams {
  float threshold = 0.5f;
  int erode_size = 3;
  int bilateral_d = 9;
  double sigma_color = 75.0;
  double sigma_space = 75.0;
};

struct FaceRegion {
  Tensor pixels;  // image where the mask is set, exactly 0 elsewhere
  Tensor mask;    // HxWx1 in {0, 1}
};

// Face channel threshold -> erode -> bilateral on the 0/255 mask -> > 127.5.
FaceRegion extract_face_region(const Tensor& image, const Tensor& prob,
                               const FaceParams& params = {});

using Rgb = std::array<float, 3>;

// Replaces hue and saturation of every pixel with the target's while keeping
// its luma, then blends with weight strength * alpha.
Tensor dye_hair(const Tensor& image, const Tensor& alpha, const Rgb& target, float strength);

}  // namespace hlseg::face
