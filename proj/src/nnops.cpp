#include "hlseg/nnops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hlseg/errors.hpp"

namespace hlseg::nn {

namespace {

struct Geometry {
  int out_h;
  int out_w;
  int pad_top;
  int pad_left;
};

int same_pad_before(int input, int output, int kernel, int stride, int dilation) {
  const int span = (kernel - 1) * dilation + 1;
  const int total = std::max((output - 1) * stride + span - input, 0);
  return total / 2;
}

Geometry conv_geometry(const Tensor& input, const ConvParams& p) {
  Geometry g{};
  g.out_h = conv_output_extent(input.height(), p.kernel_h, p.stride, p.dilation, p.padding);
  g.out_w = conv_output_extent(input.width(), p.kernel_w, p.stride, p.dilation, p.padding);
  if (p.padding == Padding::kSame) {
    g.pad_top = same_pad_before(input.height(), g.out_h, p.kernel_h, p.stride, p.dilation);
    g.pad_left = same_pad_before(input.width(), g.out_w, p.kernel_w, p.stride, p.dilation);
  }
  return g;
}

// C[M x N] = bias + A[M x K] * B[K x N], all row-major. Register-blocked
// 4x8 tiles; every output accumulates its K terms in ascending order.
void gemm_bias(int M, int N, int K, const float* A, const float* B, const float* bias,
               float* C) {
  constexpr int MR = 4;
  constexpr int NR = 8;
  int i = 0;
  for (; i + MR <= M; i += MR) {
    const float* a0 = A + static_cast<std::size_t>(i) * K;
    const float* a1 = a0 + K;
    const float* a2 = a1 + K;
    const float* a3 = a2 + K;
    int j = 0;
    for (; j + NR <= N; j += NR) {
      float acc[MR][NR];
      for (int r = 0; r < MR; ++r)
        for (int c = 0; c < NR; ++c) acc[r][c] = bias[j + c];
      for (int k = 0; k < K; ++k) {
        const float* b = B + static_cast<std::size_t>(k) * N + j;
        const float v0 = a0[k], v1 = a1[k], v2 = a2[k], v3 = a3[k];
        for (int c = 0; c < NR; ++c) {
          acc[0][c] += v0 * b[c];
          acc[1][c] += v1 * b[c];
          acc[2][c] += v2 * b[c];
          acc[3][c] += v3 * b[c];
        }
      }
      for (int r = 0; r < MR; ++r) {
        float* out = C + static_cast<std::size_t>(i + r) * N + j;
        for (int c = 0; c < NR; ++c) out[c] = acc[r][c];
      }
    }
    for (; j < N; ++j) {
      float s0 = bias[j], s1 = bias[j], s2 = bias[j], s3 = bias[j];
      for (int k = 0; k < K; ++k) {
        const float b = B[static_cast<std::size_t>(k) * N + j];
        s0 += a0[k] * b;
        s1 += a1[k] * b;
        s2 += a2[k] * b;
        s3 += a3[k] * b;
      }
      C[static_cast<std::size_t>(i) * N + j] = s0;
      C[static_cast<std::size_t>(i + 1) * N + j] = s1;
      C[static_cast<std::size_t>(i + 2) * N + j] = s2;
      C[static_cast<std::size_t>(i + 3) * N + j] = s3;
    }
  }
  for (; i < M; ++i) {
    const float* a = A + static_cast<std::size_t>(i) * K;
    float* out = C + static_cast<std::size_t>(i) * N;
    for (int j = 0; j < N; ++j) out[j] = bias[j];
    for (int k = 0; k < K; ++k) {
      const float* b = B + static_cast<std::size_t>(k) * N;
      const float v = a[k];
      for (int j = 0; j < N; ++j) out[j] += v * b[j];
    }
  }
}

void check_input_channels(const Tensor& input, const ConvParams& p) {
  if (input.channels() != p.in_channels) {
    throw ShapeError("convolution expects " + std::to_string(p.in_channels) +
                     " input channels, got tensor " + input.shape_string());
  }
}

void check_geometry(const ConvParams& p) {
  if (p.kernel_h < 1 || p.kernel_w < 1 || p.in_channels < 1 || p.out_channels < 1) {
    throw ParamError("convolution kernel dimensions must be positive");
  }
  if (p.stride < 1) {
    throw ParamError("convolution stride must be >= 1, got " + std::to_string(p.stride));
  }
  if (p.dilation < 1) {
    throw ParamError("convolution dilation must be >= 1, got " + std::to_string(p.dilation));
  }
  if (p.depthwise && p.out_channels != 1) {
    throw ParamError("depthwise kernel must have a channel multiplier of 1");
  }
}

}  // namespace

ConvParams ConvParams::zeros(int kernel_h, int kernel_w, int in_channels, int out_channels,
                             int stride, int dilation) {
  ConvParams p;
  p.kernel_h = kernel_h;
  p.kernel_w = kernel_w;
  p.in_channels = in_channels;
  p.out_channels = out_channels;
  p.stride = stride;
  p.dilation = dilation;
  check_geometry(p);
  p.kernel.assign(static_cast<std::size_t>(kernel_h) * kernel_w * in_channels * out_channels,
                  0.0f);
  p.bias.assign(static_cast<std::size_t>(out_channels), 0.0f);
  return p;
}

ConvParams ConvParams::depthwise_zeros(int kernel_h, int kernel_w, int channels, int stride,
                                       int dilation) {
  ConvParams p;
  p.kernel_h = kernel_h;
  p.kernel_w = kernel_w;
  p.in_channels = channels;
  p.out_channels = 1;
  p.stride = stride;
  p.dilation = dilation;
  p.depthwise = true;
  check_geometry(p);
  p.kernel.assign(static_cast<std::size_t>(kernel_h) * kernel_w * channels, 0.0f);
  p.bias.assign(static_cast<std::size_t>(channels), 0.0f);
  return p;
}

void ConvParams::validate() const {
  check_geometry(*this);
  const std::size_t expected =
      static_cast<std::size_t>(kernel_h) * kernel_w * in_channels * out_channels;
  if (kernel.size() != expected) {
    throw ParamError("kernel holds " + std::to_string(kernel.size()) + " values, expected " +
                     std::to_string(expected));
  }
  if (bias.size() != static_cast<std::size_t>(output_channels())) {
    throw ParamError("bias length " + std::to_string(bias.size()) + " does not match " +
                     std::to_string(output_channels()) + " output channels");
  }
}

BNParams BNParams::identity(int channels, float epsilon) {
  BNParams bn;
  bn.gamma.assign(static_cast<std::size_t>(channels), 1.0f);
  bn.beta.assign(static_cast<std::size_t>(channels), 0.0f);
  bn.running_mean.assign(static_cast<std::size_t>(channels), 0.0f);
  bn.running_var.assign(static_cast<std::size_t>(channels), 1.0f);
  bn.epsilon = epsilon;
  return bn;
}

int conv_output_extent(int input, int kernel, int stride, int dilation, Padding padding) {
  if (stride < 1 || dilation < 1 || kernel < 1) {
    throw ParamError("stride, dilation and kernel size must be >= 1");
  }
  if (padding == Padding::kSame) return (input + stride - 1) / stride;
  const int span = (kernel - 1) * dilation + 1;
  if (input < span) {
    throw ShapeError("input extent " + std::to_string(input) + " smaller than kernel span " +
                     std::to_string(span) + " with valid padding");
  }
  return (input - span) / stride + 1;
}

Tensor conv2d(const Tensor& input, const ConvParams& p) {
  p.validate();
  if (p.depthwise) throw ParamError("conv2d called with depthwise parameters");
  check_input_channels(input, p);
  const Geometry g = conv_geometry(input, p);
  const int M = g.out_h * g.out_w;
  const int K = p.kernel_h * p.kernel_w * p.in_channels;
  const int N = p.out_channels;
  Tensor out(g.out_h, g.out_w, N);

  const bool pointwise = p.kernel_h == 1 && p.kernel_w == 1 && p.stride == 1 &&
                         g.pad_top == 0 && g.pad_left == 0;
  if (pointwise) {
    gemm_bias(M, N, K, input.data().data(), p.kernel.data(), p.bias.data(), out.data().data());
    return out;
  }

  // im2col: one row per output site, columns ordered [ky][kx][ci] to match
  // the kernel layout.
  std::vector<float> cols(static_cast<std::size_t>(M) * K, 0.0f);
  const int cin = p.in_channels;
  for (int oy = 0; oy < g.out_h; ++oy) {
    for (int ox = 0; ox < g.out_w; ++ox) {
      float* row = cols.data() + (static_cast<std::size_t>(oy) * g.out_w + ox) * K;
      for (int ky = 0; ky < p.kernel_h; ++ky) {
        const int iy = oy * p.stride - g.pad_top + ky * p.dilation;
        if (iy < 0 || iy >= input.height()) continue;
        for (int kx = 0; kx < p.kernel_w; ++kx) {
          const int ix = ox * p.stride - g.pad_left + kx * p.dilation;
          if (ix < 0 || ix >= input.width()) continue;
          std::copy_n(input.pixel(iy, ix), cin, row + (ky * p.kernel_w + kx) * cin);
        }
      }
    }
  }
  gemm_bias(M, N, K, cols.data(), p.kernel.data(), p.bias.data(), out.data().data());
  return out;
}

Tensor depthwise_conv2d(const Tensor& input, const ConvParams& p) {
  p.validate();
  if (!p.depthwise) throw ParamError("depthwise_conv2d requires a kh x kw x C x 1 kernel");
  check_input_channels(input, p);
  const Geometry g = conv_geometry(input, p);
  const int C = p.in_channels;
  Tensor out(g.out_h, g.out_w, C);
  for (int oy = 0; oy < g.out_h; ++oy) {
    for (int ox = 0; ox < g.out_w; ++ox) {
      float* o = out.pixel(oy, ox);
      std::copy_n(p.bias.data(), C, o);
      for (int ky = 0; ky < p.kernel_h; ++ky) {
        const int iy = oy * p.stride - g.pad_top + ky * p.dilation;
        if (iy < 0 || iy >= input.height()) continue;
        for (int kx = 0; kx < p.kernel_w; ++kx) {
          const int ix = ox * p.stride - g.pad_left + kx * p.dilation;
          if (ix < 0 || ix >= input.width()) continue;
          const float* in = input.pixel(iy, ix);
          const float* w = p.kernel.data() + static_cast<std::size_t>(ky * p.kernel_w + kx) * C;
          for (int c = 0; c < C; ++c) o[c] += in[c] * w[c];
        }
      }
    }
  }
  return out;
}

ConvParams fold_batchnorm(const ConvParams& p, const BNParams& bn) {
  p.validate();
  const auto channels = static_cast<std::size_t>(p.output_channels());
  if (bn.gamma.size() != channels || bn.beta.size() != channels ||
      bn.running_mean.size() != channels || bn.running_var.size() != channels) {
    throw ParamError("batch norm parameters must have " + std::to_string(channels) + " entries");
  }
  if (bn.epsilon < 0.0f) throw ParamError("batch norm epsilon must be non-negative");
  std::vector<float> scale(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    const double denom = static_cast<double>(bn.running_var[c]) + bn.epsilon;
    if (!(denom > 0.0)) throw ParamError("batch norm variance + epsilon must be positive");
    scale[c] = static_cast<float>(bn.gamma[c] / std::sqrt(denom));
  }
  ConvParams folded = p;
  // Output channel is the fastest axis for both layouts ([..][ci][co] and
  // [..][c] with multiplier 1).
  for (std::size_t i = 0; i < folded.kernel.size(); ++i) folded.kernel[i] *= scale[i % channels];
  for (std::size_t c = 0; c < channels; ++c) {
    folded.bias[c] = (p.bias[c] - bn.running_mean[c]) * scale[c] + bn.beta[c];
  }
  return folded;
}

Tensor batchnorm(const Tensor& input, const BNParams& bn) {
  const auto channels = static_cast<std::size_t>(input.channels());
  if (bn.gamma.size() != channels || bn.beta.size() != channels ||
      bn.running_mean.size() != channels || bn.running_var.size() != channels) {
    throw ParamError("batch norm parameters must have " + std::to_string(channels) + " entries");
  }
  Tensor out = input;
  auto d = out.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    const std::size_t c = i % channels;
    d[i] = static_cast<float>(bn.gamma[c] * (d[i] - bn.running_mean[c]) /
                                  std::sqrt(static_cast<double>(bn.running_var[c]) + bn.epsilon) +
                              bn.beta[c]);
  }
  return out;
}

void relu_inplace(Tensor& t) noexcept {
  for (float& v : t.data()) v = v > 0.0f ? v : 0.0f;
}

Tensor relu(const Tensor& input) {
  Tensor out = input;
  relu_inplace(out);
  return out;
}

Tensor sigmoid(const Tensor& input) {
  Tensor out = input;
  for (float& v : out.data()) v = 1.0f / (1.0f + std::exp(-v));
  return out;
}

Tensor softmax_channels(const Tensor& input) {
  Tensor out = input;
  const int C = input.channels();
  const std::size_t n = static_cast<std::size_t>(input.height()) * input.width();
  float* d = out.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    float* px = d + i * C;
    const float peak = *std::max_element(px, px + C);
    double sum = 0.0;
    for (int c = 0; c < C; ++c) {
      px[c] = std::exp(px[c] - peak);
      sum += px[c];
    }
    const double inv = 1.0 / sum;
    for (int c = 0; c < C; ++c) px[c] = static_cast<float>(px[c] * inv);
  }
  return out;
}

Tensor global_avg_pool(const Tensor& input) {
  const int C = input.channels();
  std::vector<double> sums(static_cast<std::size_t>(C), 0.0);
  const std::size_t n = static_cast<std::size_t>(input.height()) * input.width();
  const float* d = input.data().data();
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < C; ++c) sums[c] += d[i * C + c];
  Tensor out(1, 1, C);
  for (int c = 0; c < C; ++c) out.at(0, 0, c) = static_cast<float>(sums[c] / static_cast<double>(n));
  return out;
}

namespace {

struct Tap {
  int i0;
  int i1;
  float frac;
};

std::vector<Tap> bilinear_taps(int in, int out) {
  std::vector<Tap> taps(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    int i0 = static_cast<int>(src);
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, static_cast<float>(src - i0)};
  }
  return taps;
}

}  // namespace

Tensor resize_bilinear(const Tensor& input, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) {
    throw ParamError("resize target must be positive, got " + std::to_string(out_h) + "x" +
                     std::to_string(out_w));
  }
  if (input.empty()) throw ShapeError("cannot resize an empty tensor");
  const int C = input.channels();
  const auto ys = bilinear_taps(input.height(), out_h);
  const auto xs = bilinear_taps(input.width(), out_w);
  Tensor out(out_h, out_w, C);
  for (int y = 0; y < out_h; ++y) {
    const Tap& ty = ys[y];
    for (int x = 0; x < out_w; ++x) {
      const Tap& tx = xs[x];
      const float* p00 = input.pixel(ty.i0, tx.i0);
      const float* p01 = input.pixel(ty.i0, tx.i1);
      const float* p10 = input.pixel(ty.i1, tx.i0);
      const float* p11 = input.pixel(ty.i1, tx.i1);
      float* o = out.pixel(y, x);
      for (int c = 0; c < C; ++c) {
        const float top = p00[c] + (p01[c] - p00[c]) * tx.frac;
        const float bottom = p10[c] + (p11[c] - p10[c]) * tx.frac;
        o[c] = top + (bottom - top) * ty.frac;
      }
    }
  }
  return out;
}

Tensor bilinear_upsample(const Tensor& input, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) {
    throw ParamError("upsample target must be positive, got " + std::to_string(out_h) + "x" +
                     std::to_string(out_w));
  }
  if (out_h < input.height() || out_w < input.width()) {
    throw ParamError("bilinear_upsample cannot shrink " + input.shape_string() + " to " +
                     std::to_string(out_h) + "x" + std::to_string(out_w));
  }
  return resize_bilinear(input, out_h, out_w);
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("cannot add " + a.shape_string() + " and " + b.shape_string());
  }
  Tensor out = a;
  auto o = out.data();
  auto d = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += d[i];
  return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (!a.same_spatial(b)) {
    throw ShapeError("cannot concatenate " + a.shape_string() + " and " + b.shape_string());
  }
  const int ca = a.channels();
  const int cb = b.channels();
  Tensor out(a.height(), a.width(), ca + cb);
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      float* o = out.pixel(y, x);
      std::copy_n(a.pixel(y, x), ca, o);
      std::copy_n(b.pixel(y, x), cb, o + ca);
    }
  }
  return out;
}

InvertedResidualParams make_inverted_residual(int in_channels, int out_channels, int stride,
                                              int expansion) {
  if (expansion < 1) throw ParamError("expansion factor must be >= 1");
  const int hidden = in_channels * expansion;
  InvertedResidualParams p;
  p.expand = ConvParams::zeros(1, 1, in_channels, hidden);
  p.depthwise = ConvParams::depthwise_zeros(3, 3, hidden, stride);
  p.project = ConvParams::zeros(1, 1, hidden, out_channels);
  return p;
}

Tensor inverted_residual(const Tensor& input, const InvertedResidualParams& p) {
  if (p.stride() != 1 && p.stride() != 2) {
    throw ParamError("inverted residual stride must be 1 or 2, got " + std::to_string(p.stride()));
  }
  if (p.depthwise.in_channels != p.expand.out_channels ||
      p.project.in_channels != p.expand.out_channels) {
    throw ShapeError("inverted residual expand/depthwise/project channels disagree");
  }
  Tensor h = conv2d(input, p.expand);
  relu_inplace(h);
  h = depthwise_conv2d(h, p.depthwise);
  relu_inplace(h);
  h = conv2d(h, p.project);
  if (p.stride() == 1 && input.channels() == p.project.out_channels) {
    auto o = h.data();
    auto in = input.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += in[i];
  }
  return h;
}

FFMParams make_ffm(int in_channels_a, int in_channels_b, int out_channels, int reduction) {
  if (reduction < 1) throw ParamError("attention reduction must be >= 1");
  const int squeezed = std::max(1, out_channels / reduction);
  FFMParams p;
  p.fuse = ConvParams::zeros(3, 3, in_channels_a + in_channels_b, out_channels);
  p.attention_reduce = ConvParams::zeros(1, 1, out_channels, squeezed);
  p.attention_expand = ConvParams::zeros(1, 1, squeezed, out_channels);
  return p;
}

Tensor ffm(const Tensor& a, const Tensor& b, const FFMParams& p) {
  if (!a.same_spatial(b)) {
    throw ShapeError("FFM inputs must share spatial dims, got " + a.shape_string() + " and " +
                     b.shape_string());
  }
  Tensor f = conv2d(concat_channels(a, b), p.fuse);
  relu_inplace(f);
  Tensor gate = conv2d(global_avg_pool(f), p.attention_reduce);
  relu_inplace(gate);
  gate = sigmoid(conv2d(gate, p.attention_expand));
  if (gate.channels() != f.channels()) {
    throw ShapeError("FFM attention produces " + std::to_string(gate.channels()) +
                     " channels for a " + std::to_string(f.channels()) + "-channel map");
  }
  const int C = f.channels();
  const float* g = gate.data().data();
  auto d = f.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += d[i] * g[i % C];
  return f;
}

DilatedGroupParams make_dilated_group(int in_channels, int branch_channels, int out_channels) {
  DilatedGroupParams p;
  for (std::size_t i = 0; i < p.branches.size(); ++i) {
    p.branches[i] = ConvParams::zeros(3, 3, in_channels, branch_channels, 1, kDilationRates[i]);
  }
  p.project = ConvParams::zeros(1, 1, branch_channels, out_channels);
  return p;
}

Tensor dilated_group(const Tensor& input, const DilatedGroupParams& p) {
  for (const auto& branch : p.branches) {
    if (branch.in_channels != input.channels()) {
      throw ShapeError("dilated group expects " + std::to_string(branch.in_channels) +
                       " channels, got " + input.shape_string());
    }
  }
  Tensor sum = conv2d(input, p.branches[0]);
  for (std::size_t i = 1; i < p.branches.size(); ++i) {
    Tensor b = conv2d(input, p.branches[i]);
    if (!b.same_shape(sum)) throw ShapeError("dilated group branches disagree in shape");
    auto s = sum.data();
    auto d = b.data();
    for (std::size_t k = 0; k < s.size(); ++k) s[k] += d[k];
  }
  Tensor out = conv2d(sum, p.project);
  relu_inplace(out);
  return out;
}

InteractionParams make_interaction(int high_channels, int low_channels) {
  InteractionParams p;
  p.low_to_high = ConvParams::zeros(1, 1, low_channels, high_channels);
  p.high_to_low = ConvParams::zeros(1, 1, high_channels, low_channels, 2);
  return p;
}

Tensor interaction_module(const Tensor& high, const Tensor& low, const InteractionParams& p) {
  if (high.height() != 2 * low.height() || high.width() != 2 * low.width()) {
    throw ShapeError("interaction module needs the high branch at exactly twice the low "
                     "resolution, got " +
                     high.shape_string() + " and " + low.shape_string());
  }
  Tensor up = conv2d(low, p.low_to_high);
  up = resize_bilinear(up, high.height(), high.width());
  const Tensor fused_high = add(high, up);
  const Tensor down = conv2d(fused_high, p.high_to_low);
  return add(low, down);
}

namespace reference {

namespace {

int reference_pad(int input, int kernel, int stride, int dilation, Padding padding, int& out) {
  const int span = (kernel - 1) * dilation + 1;
  if (padding == Padding::kValid) {
    out = (input - span) / stride + 1;
    return 0;
  }
  out = static_cast<int>(std::ceil(static_cast<double>(input) / stride));
  const int needed = (out - 1) * stride + span - input;
  return needed > 0 ? needed / 2 : 0;
}

}  // namespace

Tensor conv2d(const Tensor& input, const ConvParams& p) {
  p.validate();
  check_input_channels(input, p);
  int oh = 0, ow = 0;
  const int pt = reference_pad(input.height(), p.kernel_h, p.stride, p.dilation, p.padding, oh);
  const int pl = reference_pad(input.width(), p.kernel_w, p.stride, p.dilation, p.padding, ow);
  Tensor out(oh, ow, p.out_channels);
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox)
      for (int co = 0; co < p.out_channels; ++co) {
        double acc = p.bias[co];
        for (int ky = 0; ky < p.kernel_h; ++ky)
          for (int kx = 0; kx < p.kernel_w; ++kx)
            for (int ci = 0; ci < p.in_channels; ++ci) {
              const int iy = oy * p.stride + ky * p.dilation - pt;
              const int ix = ox * p.stride + kx * p.dilation - pl;
              if (iy < 0 || ix < 0 || iy >= input.height() || ix >= input.width()) continue;
              acc += static_cast<double>(input.at(iy, ix, ci)) * p.weight(ky, kx, ci, co);
            }
        out.at(oy, ox, co) = static_cast<float>(acc);
      }
  return out;
}

Tensor depthwise_conv2d(const Tensor& input, const ConvParams& p) {
  p.validate();
  check_input_channels(input, p);
  int oh = 0, ow = 0;
  const int pt = reference_pad(input.height(), p.kernel_h, p.stride, p.dilation, p.padding, oh);
  const int pl = reference_pad(input.width(), p.kernel_w, p.stride, p.dilation, p.padding, ow);
  Tensor out(oh, ow, p.in_channels);
  for (int c = 0; c < p.in_channels; ++c)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double acc = p.bias[c];
        for (int ky = 0; ky < p.kernel_h; ++ky)
          for (int kx = 0; kx < p.kernel_w; ++kx) {
            const int iy = oy * p.stride + ky * p.dilation - pt;
            const int ix = ox * p.stride + kx * p.dilation - pl;
            if (iy < 0 || ix < 0 || iy >= input.height() || ix >= input.width()) continue;
            acc += static_cast<double>(input.at(iy, ix, c)) * p.weight(ky, kx, c, 0);
          }
        out.at(oy, ox, c) = static_cast<float>(acc);
      }
  return out;
}

}  // namespace reference

}  // namespace hlseg::nn
