#include "hlseg/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "hlseg/errors.hpp"

namespace hlseg {

namespace {

void check_dims(int height, int width, int channels) {
  if (height < 1 || width < 1 || channels < 1) {
    throw ShapeError("tensor dimensions must be positive, got " + std::to_string(height) + "x" +
                     std::to_string(width) + "x" + std::to_string(channels));
  }
}

}  // namespace

Tensor::Tensor(int height, int width, int channels, float fill)
    : height_(height), width_(width), channels_(channels) {
  check_dims(height, width, channels);
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

Tensor::Tensor(int height, int width, int channels, std::vector<float> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  check_dims(height, width, channels);
  if (data_.size() != static_cast<std::size_t>(height) * width * channels) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match " +
                     shape_string());
  }
}

std::string Tensor::shape_string() const {
  return std::to_string(height_) + "x" + std::to_string(width_) + "x" + std::to_string(channels_);
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

Tensor Tensor::channel(int c) const {
  if (c < 0 || c >= channels_) {
    throw ParamError("channel index " + std::to_string(c) + " out of range for " + shape_string());
  }
  Tensor out(height_, width_, 1);
  const std::size_t n = static_cast<std::size_t>(height_) * width_;
  for (std::size_t i = 0; i < n; ++i) out.data_[i] = data_[i * channels_ + c];
  return out;
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("cannot compare " + a.shape_string() + " with " + b.shape_string());
  }
  float worst = 0.0f;
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    const float d = std::abs(da[i] - db[i]);
    if (std::isnan(d)) return d;  // a NaN anywhere must not read as agreement
    worst = std::max(worst, d);
  }
  return worst;
}

}  // namespace hlseg
