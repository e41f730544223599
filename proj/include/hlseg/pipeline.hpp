#pragma once

#include <optional>

#include "hlseg/colorfeat.hpp"
#include "hlseg/facepipe.hpp"
#include "hlseg/forest.hpp"
#include "hlseg/hlnet.hpp"
#include "hlseg/labels.hpp"
#include "hlseg/synth.hpp"
#include "hlseg/tensor.hpp"

namespace hlseg::pipeline {

// Face boxes are enlarged by this factor in both dimensions before cropping.
inline constexpr double kRoiExpandFactor = 0.8;
// Moments in YCrCb are the default grading features.
inline constexpr color::ColorSpace kGradeSpace = color::ColorSpace::kYCrCb;

struct SegmentOptions {
  std::optional<face::Box> roi;  // whole frame when absent
  double roi_factor = kRoiExpandFactor;
};

struct Segmentation {
  Tensor prob;        // HxWxK at the input resolution
  LabelMask labels;   // argmax of prob
  face::Box region;   // area that was fed to the network
};

// Crop (expanded ROI or full frame) -> bilinear resize to the model input ->
// forward -> bilinear resize back. Outside the region the map is background.
Segmentation segment(const net::HLNetModel& model, const Tensor& image_rgb, const SegmentOptions& options = {});

// One-hot probability map from a known label mask.
Tensor prob_from_labels(const LabelMask& labels, int num_classes = kPortraitClasses);

// extract_face_region -> masked moments. DomainError with a plain message
// when the face region comes out empty.
color::MomentVector grade_features(const Tensor& image_rgb, const Tensor& prob,
                                   color::ColorSpace space = kGradeSpace,
                                   const face::FaceParams& params = {});

// Generated images graded from their true label masks: one moment row per
// image, label = tone.
forest::Dataset synthetic_grading_set(const synth::SynthParams& params, color::ColorSpace space = kGradeSpace);

}  // namespace hlseg::pipeline
