#include "hlseg/hlnet.hpp"

#include <cmath>
#include <map>

#include "hlseg/errors.hpp"
#include "hlseg/rng.hpp"

namespace hlseg::net {

namespace {

std::string dims_string(const std::vector<std::uint32_t>& dims) {
  std::string s;
  for (std::size_t i = 0; i < dims.size(); ++i) s += (i ? "x" : "") + std::to_string(dims[i]);
  return s;
}

std::vector<std::uint32_t> weight_dims(const ConvSlot& s) {
  const auto k = static_cast<std::uint32_t>(s.kernel);
  return {k, k, static_cast<std::uint32_t>(s.in_channels),
          static_cast<std::uint32_t>(s.depthwise ? 1 : s.out_channels)};
}

int slot_outputs(const ConvSlot& s) { return s.depthwise ? s.in_channels : s.out_channels; }

const io::NamedTensor& fetch(const io::WeightStore& store, const std::string& name,
                             const std::vector<std::uint32_t>& dims, const std::string& layer) {
  const io::NamedTensor* t = store.find(name);
  if (t == nullptr) {
    throw LoadError("weight file is missing tensor '" + name + "' required by layer " + layer);
  }
  if (t->dims != dims) {
    throw ShapeError("tensor '" + name + "' of layer " + layer + ": expected " +
                     dims_string(dims) + ", got " + dims_string(t->dims));
  }
  return *t;
}

nn::ConvParams load_slot(const io::WeightStore& store, const ConvSlot& s) {
  nn::ConvParams p = s.depthwise
                         ? nn::ConvParams::depthwise_zeros(s.kernel, s.kernel, s.in_channels,
                                                           s.stride, s.dilation)
                         : nn::ConvParams::zeros(s.kernel, s.kernel, s.in_channels,
                                                 s.out_channels, s.stride, s.dilation);
  const auto channels = static_cast<std::uint32_t>(slot_outputs(s));
  p.kernel = fetch(store, s.prefix + ".weight", weight_dims(s), s.layer).data;
  p.bias = fetch(store, s.prefix + ".bias", {channels}, s.layer).data;
  if (!s.batch_norm) return p;
  nn::BNParams bn;
  bn.gamma = fetch(store, s.bn_prefix + ".gamma", {channels}, s.layer).data;
  bn.beta = fetch(store, s.bn_prefix + ".beta", {channels}, s.layer).data;
  bn.running_mean = fetch(store, s.bn_prefix + ".mean", {channels}, s.layer).data;
  bn.running_var = fetch(store, s.bn_prefix + ".var", {channels}, s.layer).data;
  bn.epsilon = kBatchNormEpsilon;
  for (float v : bn.running_var) {
    if (!(v >= 0.0f)) throw LoadError("negative running variance in " + s.bn_prefix);
  }
  return nn::fold_batchnorm(p, bn);
}

void check_finite_input(const Tensor& image) {
  if (!image.all_finite()) throw DomainError("input image contains NaN or Inf");
}

}  // namespace

HLNetConfig HLNetConfig::scaled(int factor) const {
  if (factor < 1) throw ParamError("width factor must be >= 1");
  HLNetConfig c = *this;
  c.stem_channels *= factor;
  c.high_channels *= factor;
  c.low_channels *= factor;
  c.fuse_channels *= factor;
  c.dilated_branch_channels *= factor;
  c.head_channels *= factor;
  return c;
}

void HLNetConfig::validate() const {
  if (num_classes < 2) throw ParamError("num_classes must be >= 2");
  if (num_classes > 256) throw ParamError("num_classes must be <= 256");
  if (input_size < 8 || input_size % 8 != 0) {
    throw ParamError("input_size must be a positive multiple of 8");
  }
  for (int c : {stem_channels, high_channels, low_channels, fuse_channels,
                dilated_branch_channels, head_channels, expansion, attention_reduction}) {
    if (c < 1) throw ParamError("channel widths and factors must be positive");
  }
}

std::vector<ConvSlot> conv_slots(const HLNetConfig& c) {
  c.validate();
  const int hidden = c.low_channels * c.expansion;
  const int squeezed = std::max(1, c.fuse_channels / c.attention_reduction);
  auto conv = [](std::string layer, std::string prefix, std::string bn, int k, int in, int out,
                 int stride = 1, int dilation = 1) {
    ConvSlot s;
    s.layer = std::move(layer);
    s.prefix = std::move(prefix);
    s.bn_prefix = std::move(bn);
    s.batch_norm = !s.bn_prefix.empty();
    s.kernel = k;
    s.in_channels = in;
    s.out_channels = out;
    s.stride = stride;
    s.dilation = dilation;
    return s;
  };
  auto dw = [&](std::string layer, std::string prefix, std::string bn, int channels, int stride) {
    ConvSlot s = conv(std::move(layer), std::move(prefix), std::move(bn), 3, channels, 1, stride);
    s.depthwise = true;
    return s;
  };
  const std::string l1 = "stage1 Conv2D", l2 = "stage2 DwConv2D", l3 = "stage3 DwConv2D",
                    l4 = "stage4 InteractionModule", l5 = "stage5 FFM", l6 = "stage6 DilatedGroup",
                    l8 = "stage8 Conv2D";
  std::vector<ConvSlot> slots = {
      conv(l1, "stage1.conv", "stage1.bn", 3, 3, c.stem_channels, 2),
      dw(l2, "stage2.dw", "stage2.dw_bn", c.stem_channels, 2),
      conv(l2, "stage2.pw", "stage2.pw_bn", 1, c.stem_channels, c.high_channels),
      dw(l3, "stage3.dw", "stage3.dw_bn", c.high_channels, 2),
      conv(l3, "stage3.pw", "stage3.pw_bn", 1, c.high_channels, c.low_channels),
      conv(l4, "stage4.ir_expand", "stage4.ir_expand_bn", 1, c.low_channels, hidden),
      dw(l4, "stage4.ir_dw", "stage4.ir_dw_bn", hidden, 1),
      conv(l4, "stage4.ir_project", "stage4.ir_project_bn", 1, hidden, c.low_channels),
      conv(l4, "stage4.low_to_high", "stage4.low_to_high_bn", 1, c.low_channels, c.high_channels),
      conv(l4, "stage4.high_to_low", "stage4.high_to_low_bn", 1, c.high_channels, c.low_channels,
           2),
      conv(l5, "stage5.fuse", "stage5.fuse_bn", 3, 2 * c.low_channels, c.fuse_channels),
      conv(l5, "stage5.att_reduce", "", 1, c.fuse_channels, squeezed),
      conv(l5, "stage5.att_expand", "", 1, squeezed, c.fuse_channels),
  };
  for (std::size_t i = 0; i < nn::kDilationRates.size(); ++i) {
    const std::string name = "stage6.branch_d" + std::to_string(nn::kDilationRates[i]);
    slots.push_back(conv(l6, name, name + "_bn", 3, c.fuse_channels, c.dilated_branch_channels, 1,
                         nn::kDilationRates[i]));
  }
  slots.push_back(
      conv(l6, "stage6.project", "stage6.project_bn", 1, c.dilated_branch_channels, c.head_channels));
  slots.push_back(conv(l8, "stage8.classifier", "", 1, c.head_channels, c.num_classes));
  return slots;
}

std::vector<TensorSpec> expected_tensors(const HLNetConfig& config) {
  std::vector<TensorSpec> specs;
  for (const ConvSlot& s : conv_slots(config)) {
    const auto channels = static_cast<std::uint32_t>(slot_outputs(s));
    specs.push_back({s.prefix + ".weight", weight_dims(s)});
    specs.push_back({s.prefix + ".bias", {channels}});
    if (s.batch_norm) {
      for (const char* field : {".gamma", ".beta", ".mean", ".var"}) {
        specs.push_back({s.bn_prefix + field, {channels}});
      }
    }
  }
  return specs;
}

io::WeightStore random_weights(const HLNetConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  io::WeightStore store;
  for (const ConvSlot& s : conv_slots(config)) {
    const auto dims = weight_dims(s);
    const std::size_t fan_in = static_cast<std::size_t>(s.kernel) * s.kernel *
                               (s.depthwise ? 1 : s.in_channels);
    const double gain = s.batch_norm ? 2.0 : 1.0;
    const double stddev = std::sqrt(gain / static_cast<double>(fan_in));
    std::vector<float> w(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2] * dims[3]);
    for (float& v : w) v = static_cast<float>(rng.normal(0.0, stddev));
    store.add(s.prefix + ".weight", dims, std::move(w));

    const auto channels = static_cast<std::uint32_t>(slot_outputs(s));
    std::vector<float> b(channels);
    for (float& v : b) v = static_cast<float>(rng.uniform(-0.05, 0.05));
    store.add(s.prefix + ".bias", {channels}, std::move(b));
    if (!s.batch_norm) continue;
    auto fill = [&](const char* field, double lo, double hi) {
      std::vector<float> v(channels);
      for (float& x : v) x = static_cast<float>(rng.uniform(lo, hi));
      store.add(s.bn_prefix + field, {channels}, std::move(v));
    };
    fill(".gamma", 0.8, 1.2);
    fill(".beta", -0.1, 0.1);
    fill(".mean", -0.1, 0.1);
    fill(".var", 0.8, 1.2);
  }
  return store;
}

io::WeightStore zero_weights(const HLNetConfig& config) {
  io::WeightStore store;
  for (const TensorSpec& spec : expected_tensors(config)) {
    std::size_t n = 1;
    for (auto d : spec.dims) n *= d;
    store.add(spec.name, spec.dims, std::vector<float>(n, 0.0f));
  }
  return store;
}

std::string TraceEntry::shape() const {
  return std::to_string(height) + "x" + std::to_string(width) + "x" + std::to_string(channels);
}

std::vector<std::string> trace_types() {
  return {"Input",   "Conv2D",     "DwConv2D", "DwConv2D", "InteractionModule",
          "FFM",     "DilatedGroup", "UpSample2D", "Conv2D", "SoftMax"};
}

HLNetModel HLNetModel::build(const io::WeightStore& weights, const HLNetConfig& config) {
  config.validate();
  std::map<std::string, nn::ConvParams> layers;
  for (const ConvSlot& s : conv_slots(config)) layers.emplace(s.prefix, load_slot(weights, s));
  auto take = [&](const std::string& prefix) { return std::move(layers.at(prefix)); };

  HLNetModel m;
  m.config_ = config;
  m.stem_ = take("stage1.conv");
  m.down1_dw_ = take("stage2.dw");
  m.down1_pw_ = take("stage2.pw");
  m.down2_dw_ = take("stage3.dw");
  m.down2_pw_ = take("stage3.pw");
  m.bottleneck_.expand = take("stage4.ir_expand");
  m.bottleneck_.depthwise = take("stage4.ir_dw");
  m.bottleneck_.project = take("stage4.ir_project");
  m.interaction_.low_to_high = take("stage4.low_to_high");
  m.interaction_.high_to_low = take("stage4.high_to_low");
  m.ffm_.fuse = take("stage5.fuse");
  m.ffm_.attention_reduce = take("stage5.att_reduce");
  m.ffm_.attention_expand = take("stage5.att_expand");
  for (std::size_t i = 0; i < nn::kDilationRates.size(); ++i) {
    m.dilated_.branches[i] = take("stage6.branch_d" + std::to_string(nn::kDilationRates[i]));
  }
  m.dilated_.project = take("stage6.project");
  m.classifier_ = take("stage8.classifier");
  return m;
}

Tensor HLNetModel::forward(const Tensor& image) const { return forward(image, nullptr); }

Tensor HLNetModel::forward(const Tensor& image, std::vector<TraceEntry>* trace) const {
  const int size = config_.input_size;
  if (image.height() != size || image.width() != size || image.channels() != 3) {
    throw ShapeError("network input must be " + std::to_string(size) + "x" +
                     std::to_string(size) + "x3, got " + image.shape_string());
  }
  check_finite_input(image);
  auto record = [trace](const char* type, const Tensor& t) {
    if (trace != nullptr) trace->push_back({type, t.height(), t.width(), t.channels()});
  };
  record("Input", image);

  Tensor stem = nn::conv2d(image, stem_);
  nn::relu_inplace(stem);
  record("Conv2D", stem);

  auto separable = [](const Tensor& in, const nn::ConvParams& dw, const nn::ConvParams& pw) {
    Tensor t = nn::depthwise_conv2d(in, dw);
    nn::relu_inplace(t);
    t = nn::conv2d(t, pw);
    nn::relu_inplace(t);
    return t;
  };
  const Tensor high = separable(stem, down1_dw_, down1_pw_);
  record("DwConv2D", high);
  const Tensor low = separable(high, down2_dw_, down2_pw_);
  record("DwConv2D", low);

  const Tensor exchanged =
      nn::interaction_module(high, nn::inverted_residual(low, bottleneck_), interaction_);
  record("InteractionModule", exchanged);

  const Tensor fused = nn::ffm(exchanged, low, ffm_);
  record("FFM", fused);

  const Tensor context = nn::dilated_group(fused, dilated_);
  record("DilatedGroup", context);

  const Tensor up = nn::bilinear_upsample(context, size, size);
  record("UpSample2D", up);

  const Tensor logits = nn::conv2d(up, classifier_);
  record("Conv2D", logits);

  Tensor prob = nn::softmax_channels(logits);
  record("SoftMax", prob);
  return prob;
}

std::size_t HLNetModel::param_count() const noexcept {
  std::vector<const nn::ConvParams*> all = {&stem_,
                                            &down1_dw_,
                                            &down1_pw_,
                                            &down2_dw_,
                                            &down2_pw_,
                                            &bottleneck_.expand,
                                            &bottleneck_.depthwise,
                                            &bottleneck_.project,
                                            &interaction_.low_to_high,
                                            &interaction_.high_to_low,
                                            &ffm_.fuse,
                                            &ffm_.attention_reduce,
                                            &ffm_.attention_expand,
                                            &dilated_.project,
                                            &classifier_};
  for (const auto& b : dilated_.branches) all.push_back(&b);
  std::size_t n = 0;
  for (const auto* p : all) n += p->param_count();
  return n;
}

HLNetModel build(const io::WeightStore& weights, int num_classes) {
  HLNetConfig config;
  config.num_classes = num_classes;
  return HLNetModel::build(weights, config);
}

std::size_t param_count(const HLNetModel& model) noexcept { return model.param_count(); }

std::size_t param_count(std::span<const nn::ConvParams> layers) noexcept {
  std::size_t n = 0;
  for (const auto& p : layers) n += p.param_count();
  return n;
}

}  // namespace hlseg::net
