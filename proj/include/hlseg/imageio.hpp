#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "hlseg/labels.hpp"
#include "hlseg/tensor.hpp"

namespace hlseg::img {

// Whether PNG files can be read and written in this build.
bool png_supported() noexcept;

// 8-bit images as float tensors on [0,255]. Grey files give 1 channel, colour
// files 3. Format is chosen by extension (.png, .ppm, .pgm, .pnm).
Tensor read_image(const std::filesystem::path& path);
// Always 3 channels; grey input is replicated.
Tensor read_rgb(const std::filesystem::path& path);
// Values are rounded and clamped to [0,255]; 1 or 3 channels.
void write_image(const std::filesystem::path& path, const Tensor& image);

// Binary PNM (P5 grey / P6 colour), maxval 255.
std::vector<std::uint8_t> encode_pnm(const Tensor& image);
Tensor decode_pnm(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_png(const Tensor& image);
Tensor decode_png(std::span<const std::uint8_t> bytes);

using Color = std::array<std::uint8_t, 3>;
// Background blue, hair red, face green.
const std::array<Color, kPortraitClasses>& portrait_palette() noexcept;

Tensor colorize(const LabelMask& mask);
// Accepts a palette-coloured image (nearest palette entry) or a grey image
// whose values are class ids.
LabelMask labels_from_image(const Tensor& image, int num_classes = kPortraitClasses);

// [0,1] map -> [0,255] grey.
Tensor to_gray8(const Tensor& unit);

}  // namespace hlseg::img
