#include "hlseg/imageio.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <limits>
#include <string>

#include "hlseg/errors.hpp"
#include "hlseg/modelio.hpp"

#ifdef HLSEG_HAVE_PNG
#include <png.h>
#endif

namespace hlseg::img {

namespace {

std::string lower_ext(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext;
}

std::uint8_t to_byte(float v) {
  if (!std::isfinite(v)) return 0;
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

void require_writable(const Tensor& image) {
  if (image.channels() != 1 && image.channels() != 3) {
    throw ShapeError("only 1- or 3-channel images can be written, got " + image.shape_string());
  }
  if (image.height() < 1 || image.width() < 1) throw ShapeError("cannot write an empty image");
}

// PNM header token reader that skips whitespace and '#' comments.
class PnmHeader {
 public:
  explicit PnmHeader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  long number() {
    skip();
    if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_])) throw FormatError("malformed PNM header");
    long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_++] - '0');
      if (v > 1'000'000) throw FormatError("PNM dimension too large");
    }
    return v;
  }
  // Exactly one whitespace byte separates the header from the raster.
  std::size_t raster_start() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) throw FormatError("malformed PNM header");
    return pos_ + 1;
  }

 private:
  void skip() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 2;
};

}  // namespace

bool png_supported() noexcept {
#ifdef HLSEG_HAVE_PNG
  return true;
#else
  return false;
#endif
}

std::vector<std::uint8_t> encode_pnm(const Tensor& image) {
  require_writable(image);
  const std::string header = std::string(image.channels() == 3 ? "P6" : "P5") + "\n" +
                             std::to_string(image.width()) + " " + std::to_string(image.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + image.data().size());
  for (float v : image.data()) out.push_back(to_byte(v));
  return out;
}

Tensor decode_pnm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw FormatError("not a binary PGM/PPM file");
  }
  const int channels = bytes[1] == '6' ? 3 : 1;
  PnmHeader header(bytes);
  const long w = header.number(), h = header.number(), maxval = header.number();
  if (w < 1 || h < 1) throw FormatError("PNM image has zero size");
  if (maxval != 255) throw FormatError("only 8-bit PNM (maxval 255) is supported");
  const std::size_t start = header.raster_start();
  const std::size_t need = static_cast<std::size_t>(w) * h * channels;
  if (bytes.size() - start < need) throw CorruptionError("PNM raster is truncated");
  Tensor out(static_cast<int>(h), static_cast<int>(w), channels);
  auto d = out.data();
  for (std::size_t i = 0; i < need; ++i) d[i] = bytes[start + i];
  return out;
}

#ifdef HLSEG_HAVE_PNG

namespace {

struct PngReadState {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;
};

struct PngError {
  char message[256] = {};
};

void png_read_cb(png_structp png, png_bytep out, png_size_t n) {
  auto* st = static_cast<PngReadState*>(png_get_io_ptr(png));
  if (st->bytes.size() - st->pos < n) png_error(png, "truncated PNG data");
  std::memcpy(out, st->bytes.data() + st->pos, n);
  st->pos += n;
}

void png_write_cb(png_structp png, png_bytep data, png_size_t n) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + n);
}

void png_flush_cb(png_structp) {}

// Records the message and unwinds through libpng's own longjmp.
void png_error_cb(png_structp png, png_const_charp msg) {
  auto* err = static_cast<PngError*>(png_get_error_ptr(png));
  std::snprintf(err->message, sizeof err->message, "%s", msg);
  png_longjmp(png, 1);
}
void png_warning_cb(png_structp, png_const_charp) {}

struct PngDecoded {
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  int channels = 0;
  std::vector<std::uint8_t> raster;
  std::vector<png_bytep> rows;
  bool too_large = false;
};

// No objects with destructors live in this frame across setjmp.
bool png_decode_into(png_structp png, png_infop info, PngReadState* state, PngDecoded* out) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_set_read_fn(png, state, png_read_cb);
  png_read_info(png, info);
  out->width = png_get_image_width(png, info);
  out->height = png_get_image_height(png, info);
  if (out->width > 1'000'000 || out->height > 1'000'000 ||
      static_cast<std::uint64_t>(out->width) * out->height > 200'000'000ull) {
    out->too_large = true;
    return false;
  }
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  out->channels = png_get_channels(png, info);
  if (out->channels != 1 && out->channels != 3) png_error(png, "unsupported PNG channel layout");
  out->raster.resize(static_cast<std::size_t>(out->width) * out->height * out->channels);
  out->rows.resize(out->height);
  for (png_uint_32 y = 0; y < out->height; ++y) {
    out->rows[y] = out->raster.data() + static_cast<std::size_t>(y) * out->width * out->channels;
  }
  png_read_image(png, out->rows.data());
  png_read_end(png, nullptr);
  return true;
}

bool png_encode_into(png_structp png, png_infop info, const std::uint8_t* raster, int w, int h, int C,
                     std::vector<std::uint8_t>* out) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_set_write_fn(png, out, png_write_cb, png_flush_cb);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               C == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  for (int y = 0; y < h; ++y) {
    png_write_row(png, const_cast<png_bytep>(raster + static_cast<std::size_t>(y) * w * C));
  }
  png_write_end(png, nullptr);
  return true;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const Tensor& image) {
  require_writable(image);
  PngError err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_cb, png_warning_cb);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("cannot allocate PNG writer");
  }
  std::vector<std::uint8_t> raster(image.data().size());
  for (std::size_t i = 0; i < raster.size(); ++i) raster[i] = to_byte(image.data()[i]);
  std::vector<std::uint8_t> out;
  const bool ok = png_encode_into(png, info, raster.data(), image.width(), image.height(), image.channels(), &out);
  png_destroy_write_struct(&png, &info);
  if (!ok) throw IoError(std::string("PNG encode failed: ") + err.message);
  return out;
}

Tensor decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw FormatError("not a PNG file");
  PngError err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_cb, png_warning_cb);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("cannot allocate PNG reader");
  }
  PngReadState state{bytes, 0};
  PngDecoded decoded;
  const bool ok = png_decode_into(png, info, &state, &decoded);
  png_destroy_read_struct(&png, &info, nullptr);
  if (decoded.too_large) throw FormatError("PNG dimensions too large");
  if (!ok) throw CorruptionError(std::string("PNG: ") + err.message);
  Tensor out(static_cast<int>(decoded.height), static_cast<int>(decoded.width), decoded.channels);
  auto d = out.data();
  for (std::size_t i = 0; i < decoded.raster.size(); ++i) d[i] = decoded.raster[i];
  return out;
}

#else

std::vector<std::uint8_t> encode_png(const Tensor&) {
  throw IoError("this build has no PNG support; write .ppm instead");
}

Tensor decode_png(std::span<const std::uint8_t>) {
  throw IoError("this build has no PNG support; use .ppm input");
}

#endif

Tensor read_image(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  if (bytes.size() >= 8 && bytes[0] == 0x89 && bytes[1] == 'P' && bytes[2] == 'N' && bytes[3] == 'G') {
    return decode_png(bytes);
  }
  if (bytes.size() >= 2 && bytes[0] == 'P') return decode_pnm(bytes);
  throw FormatError("'" + path.string() + "' is neither PNG nor binary PNM");
}

Tensor read_rgb(const std::filesystem::path& path) {
  Tensor t = read_image(path);
  if (t.channels() == 3) return t;
  Tensor rgb(t.height(), t.width(), 3);
  const auto s = t.data();
  auto d = rgb.data();
  for (std::size_t i = 0; i < s.size(); ++i) d[3 * i] = d[3 * i + 1] = d[3 * i + 2] = s[i];
  return rgb;
}

void write_image(const std::filesystem::path& path, const Tensor& image) {
  const std::string ext = lower_ext(path);
  if (ext == ".png") {
    io::write_file(path, encode_png(image));
  } else if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") {
    io::write_file(path, encode_pnm(image));
  } else {
    throw ParamError("unknown image extension '" + ext + "' (use .png, .ppm or .pgm)");
  }
}

const std::array<Color, kPortraitClasses>& portrait_palette() noexcept {
  static constexpr std::array<Color, kPortraitClasses> palette = {
      Color{0, 0, 255}, Color{255, 0, 0}, Color{0, 255, 0}};
  return palette;
}

Tensor colorize(const LabelMask& mask) {
  const auto& palette = portrait_palette();
  Tensor out(mask.height, mask.width, 3);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      const auto l = mask.at(y, x);
      if (l >= palette.size()) throw DomainError("label " + std::to_string(l) + " has no palette colour");
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = palette[l][c];
    }
  return out;
}

LabelMask labels_from_image(const Tensor& image, int num_classes) {
  LabelMask mask(image.height(), image.width());
  if (image.channels() == 1) {
    for (int y = 0; y < image.height(); ++y)
      for (int x = 0; x < image.width(); ++x) {
        const long v = std::lround(image.at(y, x, 0));
        if (v < 0 || v >= num_classes) {
          throw DomainError("grey label value " + std::to_string(v) + " outside [0, " + std::to_string(num_classes) + ")");
        }
        mask.at(y, x) = static_cast<std::uint8_t>(v);
      }
    return mask;
  }
  if (image.channels() != 3) throw ShapeError("label image must have 1 or 3 channels");
  const auto& palette = portrait_palette();
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x) {
      double best = std::numeric_limits<double>::infinity();
      int label = 0;
      for (int k = 0; k < kPortraitClasses; ++k) {
        double d = 0.0;
        for (int c = 0; c < 3; ++c) {
          const double diff = image.at(y, x, c) - palette[k][c];
          d += diff * diff;
        }
        if (d < best) {
          best = d;
          label = k;
        }
      }
      mask.at(y, x) = static_cast<std::uint8_t>(label);
    }
  return mask;
}

Tensor to_gray8(const Tensor& unit) {
  Tensor out = unit;
  for (float& v : out.data()) v = std::clamp(v, 0.0f, 1.0f) * 255.0f;
  return out;
}

}  // namespace hlseg::img
