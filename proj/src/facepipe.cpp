#include "hlseg/facepipe.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hlseg/errors.hpp"
#include "hlseg/labels.hpp"

namespace hlseg::face {

namespace {

std::string box_string(const Box& b) {
  return "(" + std::to_string(b.x) + "," + std::to_string(b.y) + "," + std::to_string(b.w) + "," +
         std::to_string(b.h) + ")";
}

void require_mask(const Tensor& mask, const char* what) {
  if (mask.channels() != 1) {
    throw ShapeError(std::string(what) + " expects an HxWx1 mask, got " + mask.shape_string());
  }
}

constexpr double kLumaR = 0.299, kLumaG = 0.587, kLumaB = 0.114;

}  // namespace

Box clamp_box(const Box& box, int width, int height) {
  const int x0 = std::clamp(box.x, 0, width);
  const int y0 = std::clamp(box.y, 0, height);
  const int x1 = std::clamp(box.x + box.w, 0, width);
  const int y1 = std::clamp(box.y + box.h, 0, height);
  if (x1 <= x0 || y1 <= y0) {
    throw ParamError("box " + box_string(box) + " does not overlap the " + std::to_string(width) +
                     "x" + std::to_string(height) + " image");
  }
  return {x0, y0, x1 - x0, y1 - y0};
}

Box expand_roi(const Box& box, double factor, int width, int height) {
  if (box.w <= 0 || box.h <= 0) throw ParamError("degenerate box " + box_string(box));
  if (!(factor >= 0.0)) throw ParamError("expansion factor must be non-negative");
  const double gx = box.w * factor / 2.0, gy = box.h * factor / 2.0;
  const long x0 = std::lround(box.x - gx), x1 = std::lround(box.x + box.w + gx);
  const long y0 = std::lround(box.y - gy), y1 = std::lround(box.y + box.h + gy);
  return clamp_box({static_cast<int>(x0), static_cast<int>(y0), static_cast<int>(x1 - x0),
                    static_cast<int>(y1 - y0)},
                   width, height);
}

Tensor crop(const Tensor& image, const Box& box) {
  if (box.w <= 0 || box.h <= 0 || box.x < 0 || box.y < 0 || box.x + box.w > image.width() ||
      box.y + box.h > image.height()) {
    throw ParamError("crop box " + box_string(box) + " outside image " + image.shape_string());
  }
  Tensor out(box.h, box.w, image.channels());
  const std::size_t row = static_cast<std::size_t>(box.w) * image.channels();
  for (int y = 0; y < box.h; ++y) std::copy_n(image.pixel(box.y + y, box.x), row, out.pixel(y, 0));
  return out;
}

StructElement::StructElement(int rows, int cols, std::vector<unsigned char> mask)
    : rows_(rows), cols_(cols), mask_(std::move(mask)) {
  if (rows < 1 || cols < 1 || rows % 2 == 0 || cols % 2 == 0) {
    throw ParamError("structuring element must have odd dimensions, got " + std::to_string(rows) +
                     "x" + std::to_string(cols));
  }
  if (mask_.size() != static_cast<std::size_t>(rows) * cols) {
    throw ShapeError("structuring element mask has the wrong size");
  }
  if (std::none_of(mask_.begin(), mask_.end(), [](unsigned char v) { return v != 0; })) {
    throw ParamError("structuring element has no active element");
  }
}

StructElement StructElement::full(int rows, int cols) {
  return StructElement(rows, cols, std::vector<unsigned char>(static_cast<std::size_t>(std::max(rows, 0)) * std::max(cols, 0), 1));
}

Tensor erode(const Tensor& mask, const StructElement& se) {
  require_mask(mask, "erode");
  const int h = mask.height(), w = mask.width();
  const int ry = se.rows() / 2, rx = se.cols() / 2;
  Tensor out(h, w, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float m = 1.0f;
      for (int dy = -ry; dy <= ry && m > 0.0f; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= h) continue;
        for (int dx = -rx; dx <= rx; ++dx) {
          const int xx = x + dx;
          if (xx < 0 || xx >= w || !se.on(dy + ry, dx + rx)) continue;
          m = std::min(m, mask.at(yy, xx, 0));
        }
      }
      out.at(y, x, 0) = m;
    }
  }
  return out;
}

Tensor bilateral_filter(const Tensor& image, int d, double sigma_color, double sigma_space) {
  if (d < 3 || d % 2 == 0) throw ParamError("bilateral window must be odd and >= 3, got " + std::to_string(d));
  if (!(sigma_color > 0.0) || !(sigma_space > 0.0)) {
    throw ParamError("bilateral sigmas must be positive");
  }
  const int h = image.height(), w = image.width(), C = image.channels();
  const int r = d / 2;
  std::vector<double> spatial(static_cast<std::size_t>(d) * d);
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx)
      spatial[static_cast<std::size_t>(dy + r) * d + (dx + r)] =
          std::exp(-(dx * dx + dy * dy) / (2.0 * sigma_space * sigma_space));
  const double color_coeff = -1.0 / (2.0 * sigma_color * sigma_color);

  Tensor out(h, w, C);
  std::vector<double> acc(static_cast<std::size_t>(C));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float* centre = image.pixel(y, x);
      std::fill(acc.begin(), acc.end(), 0.0);
      double norm = 0.0;
      for (int dy = -r; dy <= r; ++dy) {
        const int yy = std::clamp(y + dy, 0, h - 1);
        for (int dx = -r; dx <= r; ++dx) {
          const float* p = image.pixel(yy, std::clamp(x + dx, 0, w - 1));
          double dist2 = 0.0;
          for (int c = 0; c < C; ++c) {
            const double diff = static_cast<double>(p[c]) - centre[c];
            dist2 += diff * diff;
          }
          const double wgt = spatial[static_cast<std::size_t>(dy + r) * d + (dx + r)] *
                             std::exp(dist2 * color_coeff);
          norm += wgt;
          for (int c = 0; c < C; ++c) acc[c] += wgt * p[c];
        }
      }
      float* o = out.pixel(y, x);
      for (int c = 0; c < C; ++c) o[c] = static_cast<float>(acc[c] / norm);
    }
  }
  return out;
}

FaceRegion extract_face_region(const Tensor& image, const Tensor& prob, const FaceParams& params) {
  const int face = static_cast<int>(PortraitClass::kFace);
  if (prob.channels() <= face) {
    throw ShapeError("probability map " + prob.shape_string() + " has no face channel");
  }
  if (!image.same_spatial(prob)) {
    throw ShapeError("image " + image.shape_string() + " and probability map " + prob.shape_string() +
                     " differ in size");
  }
  const int h = image.height(), w = image.width();
  Tensor m(h, w, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m.at(y, x, 0) = prob.at(y, x, face) > params.threshold ? 1.0f : 0.0f;

  Tensor p = erode(m, StructElement::full(params.erode_size, params.erode_size));
  for (float& v : p.data()) v *= 255.0f;
  const Tensor q = bilateral_filter(p, params.bilateral_d, params.sigma_color, params.sigma_space);

  FaceRegion region{Tensor(h, w, image.channels()), Tensor(h, w, 1)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (q.at(y, x, 0) <= 127.5f) continue;
      region.mask.at(y, x, 0) = 1.0f;
      std::copy_n(image.pixel(y, x), image.channels(), region.pixels.pixel(y, x));
    }
  }
  return region;
}

Tensor dye_hair(const Tensor& image, const Tensor& alpha, const Rgb& target, float strength) {
  if (image.channels() != 3) throw ShapeError("dye_hair expects an RGB image, got " + image.shape_string());
  require_mask(alpha, "dye_hair");
  if (!image.same_spatial(alpha)) {
    throw ShapeError("image " + image.shape_string() + " and alpha " + alpha.shape_string() +
                     " differ in size");
  }
  for (float c : target) {
    if (!(c >= 0.0f && c <= 255.0f)) throw ParamError("target colour components must lie in [0,255]");
  }
  if (!(strength >= 0.0f && strength <= 1.0f)) throw ParamError("dye strength must lie in [0,1]");

  // Chroma of the target: target minus its own luma, so adding it keeps luma.
  const double target_luma = kLumaR * target[0] + kLumaG * target[1] + kLumaB * target[2];
  const double chroma[3] = {target[0] - target_luma, target[1] - target_luma, target[2] - target_luma};

  Tensor out = image;
  const std::size_t n = static_cast<std::size_t>(image.height()) * image.width();
  const float* src = image.data().data();
  const float* a = alpha.data().data();
  float* dst = out.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    const double weight = static_cast<double>(strength) * a[i];
    if (weight <= 0.0) continue;
    const float* p = src + 3 * i;
    const double luma = kLumaR * p[0] + kLumaG * p[1] + kLumaB * p[2];
    // Largest lambda <= 1 keeping luma + lambda * chroma inside [0,255].
    double lambda = 1.0;
    for (double c : chroma) {
      if (c > 0.0) lambda = std::min(lambda, (255.0 - luma) / c);
      if (c < 0.0) lambda = std::min(lambda, -luma / c);
    }
    lambda = std::max(lambda, 0.0);
    for (int c = 0; c < 3; ++c) {
      const double recolored = luma + lambda * chroma[c];
      const double v = (1.0 - weight) * p[c] + weight * recolored;
      dst[3 * i + c] = static_cast<float>(std::clamp(v, 0.0, 255.0));
    }
  }
  return out;
}

}  // namespace hlseg::face
