#include "hlseg/guided_filter.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "hlseg/colorfeat.hpp"
#include "hlseg/errors.hpp"
#include "hlseg/nnops.hpp"

namespace hlseg::gf {

namespace {

void check_pair(const Tensor& guide, const Tensor& input) {
  if (guide.channels() != 1 || input.channels() != 1) {
    throw ShapeError("guided filter works on single-channel tensors, got " +
                     guide.shape_string() + " and " + input.shape_string());
  }
  if (!guide.same_spatial(input)) {
    throw ShapeError("guide " + guide.shape_string() + " and input " + input.shape_string() +
                     " differ in size");
  }
}

// Single-channel box mean over a plain double buffer.
std::vector<double> box_mean_plane(const std::vector<double>& src, int h, int w, int r) {
  const int ph = h + 2 * r;
  const int pw = w + 2 * r;
  // integral[(y + 1) * (pw + 1) + (x + 1)] = sum over padded rows < y+1, cols < x+1
  std::vector<double> integral(static_cast<std::size_t>(ph + 1) * (pw + 1), 0.0);
  for (int y = 0; y < ph; ++y) {
    const int sy = std::clamp(y - r, 0, h - 1);
    double row = 0.0;
    for (int x = 0; x < pw; ++x) {
      const int sx = std::clamp(x - r, 0, w - 1);
      row += src[static_cast<std::size_t>(sy) * w + sx];
      integral[static_cast<std::size_t>(y + 1) * (pw + 1) + (x + 1)] =
          integral[static_cast<std::size_t>(y) * (pw + 1) + (x + 1)] + row;
    }
  }
  const double area = static_cast<double>(2 * r + 1) * (2 * r + 1);
  const int k = 2 * r + 1;
  std::vector<double> out(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      // Window in padded coordinates: rows y..y+2r, cols x..x+2r.
      const double s = integral[static_cast<std::size_t>(y + k) * (pw + 1) + (x + k)] -
                       integral[static_cast<std::size_t>(y) * (pw + 1) + (x + k)] -
                       integral[static_cast<std::size_t>(y + k) * (pw + 1) + x] +
                       integral[static_cast<std::size_t>(y) * (pw + 1) + x];
      out[static_cast<std::size_t>(y) * w + x] = s / area;
    }
  }
  return out;
}

std::vector<double> to_plane(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

Tensor from_plane(const std::vector<double>& plane, int h, int w) {
  Tensor t(h, w, 1);
  auto d = t.data();
  for (std::size_t i = 0; i < plane.size(); ++i) d[i] = static_cast<float>(plane[i]);
  return t;
}

struct Coefficients {
  std::vector<double> mean_a;
  std::vector<double> mean_b;
};

Coefficients fit(const Tensor& guide, const Tensor& input, int r, double eps) {
  const int h = guide.height();
  const int w = guide.width();
  const auto I = to_plane(guide);
  const auto P = to_plane(input);
  std::vector<double> II(I.size()), IP(I.size());
  for (std::size_t i = 0; i < I.size(); ++i) {
    II[i] = I[i] * I[i];
    IP[i] = I[i] * P[i];
  }
  const auto mean_I = box_mean_plane(I, h, w, r);
  const auto mean_P = box_mean_plane(P, h, w, r);
  const auto corr_II = box_mean_plane(II, h, w, r);
  const auto corr_IP = box_mean_plane(IP, h, w, r);
  std::vector<double> a(I.size()), b(I.size());
  for (std::size_t i = 0; i < I.size(); ++i) {
    const double var = corr_II[i] - mean_I[i] * mean_I[i];
    const double cov = corr_IP[i] - mean_I[i] * mean_P[i];
    a[i] = cov / (var + eps);
    b[i] = mean_P[i] - a[i] * mean_I[i];
  }
  return {box_mean_plane(a, h, w, r), box_mean_plane(b, h, w, r)};
}

}  // namespace

void GFParams::validate() const {
  if (radius < 1) throw ParamError("guided filter radius must be >= 1");
  if (!(eps > 0.0)) throw ParamError("guided filter eps must be positive");
  if (subsample < 1) throw ParamError("guided filter subsample factor must be >= 1");
}

Tensor box_mean(const Tensor& input, int radius) {
  if (radius < 0) throw ParamError("box radius must be non-negative");
  const int h = input.height(), w = input.width(), C = input.channels();
  Tensor out(h, w, C);
  std::vector<double> plane(static_cast<std::size_t>(h) * w);
  for (int c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < plane.size(); ++i) plane[i] = input.data()[i * C + c];
    const auto mean = box_mean_plane(plane, h, w, radius);
    for (std::size_t i = 0; i < plane.size(); ++i) out.data()[i * C + c] = static_cast<float>(mean[i]);
  }
  return out;
}

Tensor guided_filter(const Tensor& guide, const Tensor& input, int radius, double eps) {
  check_pair(guide, input);
  GFParams{radius, eps, 1}.validate();
  const auto coeff = fit(guide, input, radius, eps);
  Tensor out(guide.height(), guide.width(), 1);
  auto I = guide.data();
  auto q = out.data();
  for (std::size_t i = 0; i < q.size(); ++i) {
    q[i] = static_cast<float>(coeff.mean_a[i] * I[i] + coeff.mean_b[i]);
  }
  return out;
}

Tensor fast_guided_filter(const Tensor& guide, const Tensor& input, int radius, double eps,
                          int subsample) {
  check_pair(guide, input);
  GFParams{radius, eps, subsample}.validate();
  if (subsample == 1) return guided_filter(guide, input, radius, eps);

  const int h = guide.height(), w = guide.width();
  const int lh = (h + subsample - 1) / subsample;
  const int lw = (w + subsample - 1) / subsample;
  const int low_radius = std::max(1, static_cast<int>(std::lround(static_cast<double>(radius) / subsample)));
  const Tensor small_guide = nn::resize_bilinear(guide, lh, lw);
  const Tensor small_input = nn::resize_bilinear(input, lh, lw);
  const auto coeff = fit(small_guide, small_input, low_radius, eps);
  const Tensor a = nn::resize_bilinear(from_plane(coeff.mean_a, lh, lw), h, w);
  const Tensor b = nn::resize_bilinear(from_plane(coeff.mean_b, lh, lw), h, w);
  Tensor out(h, w, 1);
  auto I = guide.data();
  auto A = a.data();
  auto B = b.data();
  auto q = out.data();
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = A[i] * I[i] + B[i];
  return out;
}

Tensor refine_mask(const Tensor& image_rgb, const Tensor& prob, int class_id,
                   const GFParams& params) {
  params.validate();
  if (class_id < 0 || class_id >= prob.channels()) {
    throw ParamError("class id " + std::to_string(class_id) + " outside [0, " +
                     std::to_string(prob.channels()) + ")");
  }
  if (!image_rgb.same_spatial(prob)) {
    throw ShapeError("image " + image_rgb.shape_string() + " and probability map " +
                     prob.shape_string() + " differ in size");
  }
  const Tensor guide = color::rgb_to_gray(image_rgb);
  Tensor alpha = fast_guided_filter(guide, prob.channel(class_id), params.radius, params.eps,
                                    params.subsample);
  for (float& v : alpha.data()) v = std::clamp(v, 0.0f, 1.0f);
  return alpha;
}

}  // namespace hlseg::gf
