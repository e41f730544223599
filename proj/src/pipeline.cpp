#include "hlseg/pipeline.hpp"

#include <algorithm>

#include "hlseg/errors.hpp"
#include "hlseg/nnops.hpp"

namespace hlseg::pipeline {

Segmentation segment(const net::HLNetModel& model, const Tensor& image_rgb, const SegmentOptions& options) {
  if (image_rgb.channels() != 3) throw ShapeError("segment expects an RGB image, got " + image_rgb.shape_string());
  const int h = image_rgb.height(), w = image_rgb.width();
  const face::Box region = options.roi ? face::expand_roi(*options.roi, options.roi_factor, w, h)
                                       : face::Box{0, 0, w, h};
  const int size = model.config().input_size;
  const int K = model.config().num_classes;

  Tensor input = nn::resize_bilinear(face::crop(image_rgb, region), size, size);
  for (float& v : input.data()) v /= 255.0f;
  const Tensor local = nn::resize_bilinear(model.forward(input), region.h, region.w);

  Segmentation seg;
  seg.region = region;
  seg.prob = Tensor(h, w, K);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) seg.prob.at(y, x, 0) = 1.0f;
  for (int y = 0; y < region.h; ++y)
    std::copy_n(local.pixel(y, 0), static_cast<std::size_t>(region.w) * K, seg.prob.pixel(region.y + y, region.x));
  seg.labels = argmax(seg.prob);
  return seg;
}

Tensor prob_from_labels(const LabelMask& labels, int num_classes) { return one_hot(labels, num_classes); }

color::MomentVector grade_features(const Tensor& image_rgb, const Tensor& prob, color::ColorSpace space,
                                   const face::FaceParams& params) {
  const face::FaceRegion region = face::extract_face_region(image_rgb, prob, params);
  const bool any = std::any_of(region.mask.data().begin(), region.mask.data().end(), [](float v) { return v > 0.5f; });
  if (!any) throw DomainError("no face pixels left after thresholding and erosion; nothing to grade");
  return color::masked_color_moments(image_rgb, region.mask, space);
}

forest::Dataset synthetic_grading_set(const synth::SynthParams& params, color::ColorSpace space) {
  forest::Dataset data;
  data.num_classes = static_cast<int>(synth::tone_palette().size());
  for (int i = 0; i < params.count; ++i) {
    const synth::Sample sample = synth::generate(params, i);
    const auto mv = grade_features(sample.image, prob_from_labels(sample.labels), space);
    data.rows.emplace_back(mv.values.begin(), mv.values.end());
    data.labels.push_back(sample.tone);
  }
  return data;
}

}  // namespace hlseg::pipeline
