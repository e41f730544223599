#include "hlseg/labels.hpp"

#include <string>

#include "hlseg/errors.hpp"

namespace hlseg {

LabelMask argmax(const Tensor& prob) {
  if (prob.channels() > 256) throw ParamError("label masks hold at most 256 classes");
  LabelMask mask(prob.height(), prob.width());
  const int K = prob.channels();
  for (int y = 0; y < prob.height(); ++y) {
    for (int x = 0; x < prob.width(); ++x) {
      const float* p = prob.pixel(y, x);
      int best = 0;
      for (int k = 1; k < K; ++k)
        if (p[k] > p[best]) best = k;
      mask.at(y, x) = static_cast<std::uint8_t>(best);
    }
  }
  return mask;
}

Tensor one_hot(const LabelMask& mask, int num_classes) {
  if (num_classes < 1) throw ParamError("one_hot needs at least one class");
  Tensor out(mask.height, mask.width, num_classes);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      const int label = mask.at(y, x);
      if (label >= num_classes) {
        throw DomainError("label " + std::to_string(label) + " outside " +
                          std::to_string(num_classes) + " classes");
      }
      out.at(y, x, label) = 1.0f;
    }
  }
  return out;
}

}  // namespace hlseg
