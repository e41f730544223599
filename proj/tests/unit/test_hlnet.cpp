#include <cmath>
#include <random>
#include <thread>

#include "doctest.h"
#include "hlseg/errors.hpp"
#include "hlseg/hlnet.hpp"
#include "test_util.hpp"

using hlseg::Tensor;
namespace net = hlseg::net;
namespace nn = hlseg::nn;

namespace {

Tensor random_image(std::uint32_t seed) {
  std::mt19937 rng(seed);
  return hlseg::testing::random_tensor(224, 224, 3, rng, 0.0f, 1.0f);
}

const net::HLNetModel& shared_model() {
  static const net::HLNetModel model =
      net::HLNetModel::build(net::random_weights(net::HLNetConfig{}, 42));
  return model;
}

// Closed-form count for the reference widths, written out layer by layer:
// conv k*k*in*out + out, depthwise k*k*c + c.
std::size_t closed_form_params(int K) {
  auto conv = [](std::size_t k, std::size_t in, std::size_t out) { return k * k * in * out + out; };
  auto dw = [](std::size_t c) { return 9 * c + c; };
  return conv(3, 3, 32)                                                 // stage1
         + dw(32) + conv(1, 32, 64)                                     // stage2
         + dw(64) + conv(1, 64, 64)                                     // stage3
         + conv(1, 64, 384) + dw(384) + conv(1, 384, 64)                // bottleneck
         + conv(1, 64, 64) + conv(1, 64, 64)                            // exchange
         + conv(3, 128, 64) + conv(1, 64, 16) + conv(1, 16, 64)         // FFM
         + 3 * conv(3, 64, 64) + conv(1, 64, 32)                        // dilated group
         + conv(1, 32, static_cast<std::size_t>(K));                    // classifier
}

}  // namespace

TEST_CASE("random weights build and the trace reproduces the layer table") {
  std::vector<net::TraceEntry> trace;
  const Tensor prob = shared_model().forward(random_image(1), &trace);
  const std::vector<std::string> shapes = {"224x224x3", "112x112x32", "56x56x64", "28x28x64",
                                           "28x28x64",  "28x28x64",   "28x28x32", "224x224x32",
                                           "224x224x3", "224x224x3"};
  REQUIRE(trace.size() == shapes.size());
  const auto types = net::trace_types();
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    CHECK(trace[i].shape() == shapes[i]);
    CHECK(trace[i].type == types[i]);
  }
  CHECK(prob.shape_string() == "224x224x3");
}

TEST_CASE("missing dilated group projection is reported by layer") {
  auto weights = net::random_weights(net::HLNetConfig{}, 3);
  REQUIRE(weights.remove("stage6.project.weight"));
  try {
    (void)net::HLNetModel::build(weights);
    FAIL("build should fail");
  } catch (const hlseg::LoadError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("stage6.project.weight") != std::string::npos);
    CHECK(msg.find("DilatedGroup") != std::string::npos);
  }
}

TEST_CASE("shape mismatch reports expected and actual dims") {
  auto weights = net::random_weights(net::HLNetConfig{}, 3);
  weights.remove("stage1.conv.weight");
  weights.add("stage1.conv.weight", {3, 3, 3, 16}, std::vector<float>(432));
  try {
    (void)net::HLNetModel::build(weights);
    FAIL("build should fail");
  } catch (const hlseg::ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("3x3x3x32") != std::string::npos);
    CHECK(msg.find("3x3x3x16") != std::string::npos);
  }
}

TEST_CASE("eleven-class head") {
  net::HLNetConfig config;
  config.num_classes = 11;
  const auto model = net::build(net::random_weights(config, 5), 11);
  const Tensor prob = model.forward(random_image(2));
  CHECK(prob.shape_string() == "224x224x11");
  CHECK_THROWS_AS(net::build(net::random_weights(config, 5), 3), hlseg::ShapeError);
  config.num_classes = 1;
  CHECK_THROWS_AS(config.validate(), hlseg::ParamError);
}

TEST_CASE("forward produces normalised probabilities") {
  const Tensor prob = shared_model().forward(random_image(9));
  CHECK(prob.all_finite());
  double worst = 0.0;
  for (int y = 0; y < 224; ++y)
    for (int x = 0; x < 224; ++x) {
      double sum = 0.0;
      for (int c = 0; c < 3; ++c) {
        const float v = prob.at(y, x, c);
        REQUIRE(v >= 0.0f);
        REQUIRE(v <= 1.0f);
        sum += v;
      }
      worst = std::max(worst, std::abs(sum - 1.0));
    }
  CHECK(worst < 1e-6);
}

TEST_CASE("zero weights give uniform probabilities") {
  const auto model = net::HLNetModel::build(net::zero_weights(net::HLNetConfig{}));
  const Tensor prob = model.forward(random_image(4));
  for (float v : prob.data()) REQUIRE(std::abs(v - 1.0f / 3.0f) < 1e-7f);
}

TEST_CASE("forward is deterministic and thread safe") {
  const Tensor image = random_image(12);
  const Tensor first = shared_model().forward(image);
  const Tensor second = shared_model().forward(image);
  CHECK(first == second);
  Tensor from_thread;
  std::thread worker([&] { from_thread = shared_model().forward(image); });
  const Tensor concurrent = shared_model().forward(image);
  worker.join();
  CHECK(from_thread == first);
  CHECK(concurrent == first);
}

TEST_CASE("wrong input size is a shape error") {
  std::mt19937 rng(1);
  CHECK_THROWS_AS(shared_model().forward(hlseg::testing::random_tensor(200, 224, 3, rng)),
                  hlseg::ShapeError);
  CHECK_THROWS_AS(shared_model().forward(hlseg::testing::random_tensor(224, 224, 1, rng)),
                  hlseg::ShapeError);
}

TEST_CASE("param count") {
  const auto single = nn::ConvParams::zeros(3, 3, 3, 32);
  CHECK(net::param_count(std::span<const nn::ConvParams>(&single, 1)) == 896);
  CHECK(net::param_count(shared_model()) == closed_form_params(3));

  // Sum of the expected weight-file tensors minus the folded BN vectors.
  std::size_t from_specs = 0;
  for (const auto& spec : net::expected_tensors(net::HLNetConfig{})) {
    if (spec.name.find("_bn.") != std::string::npos || spec.name.find(".bn.") != std::string::npos)
      continue;
    std::size_t n = 1;
    for (auto d : spec.dims) n *= d;
    from_specs += n;
  }
  CHECK(from_specs == closed_form_params(3));
}

TEST_CASE("doubling widths roughly quadruples conv weights") {
  auto kernel_count = [](const net::HLNetConfig& c) {
    std::size_t n = 0;
    for (const auto& s : net::conv_slots(c)) {
      n += static_cast<std::size_t>(s.kernel) * s.kernel * s.in_channels *
           (s.depthwise ? 1 : s.out_channels);
    }
    return n;
  };
  const net::HLNetConfig base;
  const double ratio = static_cast<double>(kernel_count(base.scaled(2))) / kernel_count(base);
  CHECK(ratio > 3.8);
  CHECK(ratio <= 4.0);
}
