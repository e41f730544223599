#include "hlseg/synth.hpp"

#include <algorithm>
#include <cmath>

#include "hlseg/errors.hpp"
#include "hlseg/rng.hpp"

namespace hlseg::synth {

const std::array<std::array<double, 3>, 5>& tone_palette() noexcept {
  static constexpr std::array<std::array<double, 3>, 5> tones = {{
      {238, 215, 200},  // porcelain white
      {222, 190, 160},  // ivory white
      {196, 150, 118},  // medium
      {205, 170, 105},  // yellowish
      {100, 70, 52},    // black
  }};
  return tones;
}

Sample generate(const SynthParams& params, int index) {
  if (params.size < 16) throw ParamError("synthetic images need size >= 16");
  if (index < 0) throw ParamError("sample index must be non-negative");
  Rng rng(mix_seed(params.seed, static_cast<std::uint64_t>(index)));
  const int S = params.size;
  const double s = S;

  Sample out;
  out.tone = index % static_cast<int>(tone_palette().size());
  out.image = Tensor(S, S, 3);
  out.labels = LabelMask(S, S, 0);

  std::array<double, 3> bg{}, bg_slope{}, hair{}, skin{};
  for (int c = 0; c < 3; ++c) {
    bg[c] = rng.uniform(20.0, 230.0);
    bg_slope[c] = rng.uniform(-40.0, 40.0);
  }
  hair[0] = rng.uniform(25.0, 75.0);
  hair[1] = hair[0] * rng.uniform(0.6, 0.9);
  hair[2] = hair[1] * rng.uniform(0.6, 0.9);
  const double shift = rng.normal(0.0, params.tone_jitter);
  for (int c = 0; c < 3; ++c) {
    skin[c] = tone_palette()[static_cast<std::size_t>(out.tone)][c] + shift + rng.normal(0.0, params.tone_jitter / 3.0);
  }

  const double cx = s / 2 + rng.uniform(-0.08, 0.08) * s;
  const double cy = s * 0.56 + rng.uniform(-0.05, 0.05) * s;
  const double ax = s * rng.uniform(0.2, 0.27);
  const double ay = ax * rng.uniform(1.15, 1.35);
  const double hair_grow = rng.uniform(1.12, 1.25);
  const double hair_lift = s * rng.uniform(0.04, 0.08);

  for (int y = 0; y < S; ++y) {
    for (int x = 0; x < S; ++x) {
      const double fx = (x + 0.5 - cx) / ax, fy = (y + 0.5 - cy) / ay;
      const double face_r = fx * fx + fy * fy;
      const double hx = (x + 0.5 - cx) / (ax * hair_grow);
      const double hy = (y + 0.5 - cy + hair_lift) / (ay * hair_grow);
      const bool in_face = face_r <= 1.0;
      const bool in_hair = !in_face && hx * hx + hy * hy <= 1.0 && y + 0.5 < cy;
      std::array<double, 3> base{};
      if (in_face) {
        out.labels.at(y, x) = static_cast<std::uint8_t>(PortraitClass::kFace);
        const double shade = 1.0 - 0.06 * face_r;
        for (int c = 0; c < 3; ++c) base[c] = skin[c] * shade;
      } else if (in_hair) {
        out.labels.at(y, x) = static_cast<std::uint8_t>(PortraitClass::kHair);
        base = hair;
      } else {
        for (int c = 0; c < 3; ++c) base[c] = bg[c] + bg_slope[c] * (y / s - 0.5);
      }
      const double noise = in_face ? params.pixel_noise : 2.0 * params.pixel_noise;
      for (int c = 0; c < 3; ++c) {
        out.image.at(y, x, c) = static_cast<float>(std::clamp(base[c] + rng.normal(0.0, noise), 0.0, 255.0));
      }
    }
  }
  return out;
}

}  // namespace hlseg::synth
