#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hlseg/tensor.hpp"

namespace hlseg::color {

enum class ColorSpace { kRgb, kHsv, kYCrCb };

std::string_view to_string(ColorSpace space) noexcept;
// Accepts "rgb", "hsv", "ycrcb" (case-insensitive); throws ParamError otherwise.
ColorSpace parse_color_space(std::string_view name);
std::array<std::string, 3> channel_names(ColorSpace space);

struct ChannelRange {
  double lo;
  double hi;
};
// Value range of each converted channel: [0,255] for RGB and YCrCb,
// H in [0,360) and S, V in [0,1] for HSV.
std::array<ChannelRange, 3> channel_ranges(ColorSpace space) noexcept;

// Inputs are RGB tensors on the [0,255] scale.
Tensor rgb_to_gray(const Tensor& rgb);
Tensor rgb_to_hsv(const Tensor& rgb);
Tensor hsv_to_rgb(const Tensor& hsv);
// Full-range BT.601, channel order (Y, Cr, Cb), clamped to [0,255].
Tensor rgb_to_ycrcb(const Tensor& rgb);
Tensor convert(const Tensor& rgb, ColorSpace space);

// Per channel: mean, standard deviation, signed cube root of the third
// central moment. Ordered (c1 mean, c1 std, c1 skew, c2 ..., c3 ...).
struct MomentVector {
  ColorSpace space = ColorSpace::kRgb;
  std::array<double, 9> values{};

  double mean(int c) const noexcept { return values[3 * c]; }
  double stddev(int c) const noexcept { return values[3 * c + 1]; }
  double skew(int c) const noexcept { return values[3 * c + 2]; }
};

// mask: HxWx1, foreground where the value exceeds 0.5. Throws DomainError on
// an empty mask and ShapeError when the mask does not cover the image.
MomentVector masked_color_moments(const Tensor& rgb, const Tensor& mask, ColorSpace space);

struct HistogramVector {
  ColorSpace space = ColorSpace::kRgb;
  int bins = 0;
  // 3 * bins values, channel-major; each channel sums to 1.
  std::vector<double> values;
};

// Equal-width bins over each channel's full range.
HistogramVector masked_histogram(const Tensor& rgb, const Tensor& mask, int bins,
                                 ColorSpace space);
int histogram_bin(double value, ChannelRange range, int bins) noexcept;

std::vector<std::string> moment_feature_names(ColorSpace space);
std::vector<std::string> histogram_feature_names(ColorSpace space, int bins);

// Symmetric eigendecomposition by cyclic Jacobi rotations. Eigenvalues in
// descending order; vectors[i] is the unit eigenvector of values[i].
struct SymmetricEigen {
  std::vector<double> values;
  std::vector<std::vector<double>> vectors;
};
SymmetricEigen jacobi_eigen(std::vector<std::vector<double>> matrix);

struct PCABasis {
  std::vector<double> mean;
  // components[k] is a unit vector of length dim; sign fixed so that its
  // largest-magnitude coordinate is positive.
  std::vector<std::vector<double>> components;
  std::vector<double> eigenvalues;

  std::size_t dim() const noexcept { return mean.size(); }
};

PCABasis pca_fit(const std::vector<std::vector<double>>& samples, int components);
std::vector<double> pca_transform(const PCABasis& basis, std::span<const double> x);
std::vector<double> pca_reconstruct(const PCABasis& basis, std::span<const double> coeffs);

// Feature CSV: header row, one row per image, integer label column last.
struct FeatureTable {
  std::vector<std::string> columns;  // feature columns only
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
};

void write_feature_csv(std::ostream& out, const FeatureTable& table);
void write_feature_csv(const std::filesystem::path& path, const FeatureTable& table);
FeatureTable read_feature_csv(std::istream& in);
FeatureTable read_feature_csv(const std::filesystem::path& path);

}  // namespace hlseg::color
