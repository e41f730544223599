#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace hlseg {

// Rank-3 channel-last float tensor (height x width x channels, row-major).
// Carries images, feature maps, probability maps and masks alike.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int height, int width, int channels, float fill = 0.0f);
  Tensor(int height, int width, int channels, std::vector<float> data);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  const std::vector<float>& vec() const noexcept { return data_; }

  float* pixel(int y, int x) noexcept {
    return data_.data() + (static_cast<std::size_t>(y) * width_ + x) * channels_;
  }
  const float* pixel(int y, int x) const noexcept {
    return data_.data() + (static_cast<std::size_t>(y) * width_ + x) * channels_;
  }

  float& at(int y, int x, int c) noexcept { return pixel(y, x)[c]; }
  float at(int y, int x, int c) const noexcept { return pixel(y, x)[c]; }

  bool same_shape(const Tensor& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }
  bool same_spatial(const Tensor& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }

  // "HxWxC"
  std::string shape_string() const;

  bool all_finite() const noexcept;

  // Extracts one channel as an HxWx1 tensor.
  Tensor channel(int c) const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.same_shape(b) && a.data_ == b.data_;
  }

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

// Largest absolute elementwise difference, NaN if any difference is NaN;
// throws ShapeError on mismatch.
float max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace hlseg
