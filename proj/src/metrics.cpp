#include "hlseg/metrics.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "hlseg/errors.hpp"

namespace hlseg::metrics {

namespace {

void require_nonempty(const SegConfusion& conf) {
  if (conf.total() == 0) throw DomainError("segmentation metrics of an empty confusion matrix");
}

double iou(const SegConfusion& conf, int i) {
  const double nii = static_cast<double>(conf.at(i, i));
  const double uni = static_cast<double>(conf.support(i)) + static_cast<double>(conf.predicted(i)) - nii;
  return uni > 0.0 ? nii / uni : 0.0;
}

}  // namespace

SegConfusion::SegConfusion(int num_classes) : k_(num_classes) {
  if (num_classes < 1) throw ParamError("confusion needs at least one class");
  n_.assign(static_cast<std::size_t>(num_classes) * num_classes, 0);
}

std::uint64_t SegConfusion::total() const noexcept { return std::accumulate(n_.begin(), n_.end(), std::uint64_t{0}); }

std::uint64_t SegConfusion::support(int truth) const {
  std::uint64_t s = 0;
  for (int j = 0; j < k_; ++j) s += at(truth, j);
  return s;
}

std::uint64_t SegConfusion::predicted(int pred) const {
  std::uint64_t s = 0;
  for (int i = 0; i < k_; ++i) s += at(i, pred);
  return s;
}

void SegConfusion::add(int truth, int pred, std::uint64_t count) {
  if (truth < 0 || truth >= k_ || pred < 0 || pred >= k_) {
    throw DomainError("label pair (" + std::to_string(truth) + ", " + std::to_string(pred) + ") outside [0, " +
                      std::to_string(k_) + ")");
  }
  n_[static_cast<std::size_t>(truth) * k_ + pred] += count;
}

void SegConfusion::accumulate(const LabelMask& truth, const LabelMask& pred) {
  if (truth.height != pred.height || truth.width != pred.width) {
    throw ShapeError("truth " + std::to_string(truth.height) + "x" + std::to_string(truth.width) +
                     " and prediction " + std::to_string(pred.height) + "x" + std::to_string(pred.width) +
                     " differ in size");
  }
  for (std::size_t i = 0; i < truth.labels.size(); ++i) {
    if (truth.labels[i] >= k_ || pred.labels[i] >= k_) {
      throw DomainError("label outside [0, " + std::to_string(k_) + ") at pixel " + std::to_string(i));
    }
  }
  for (std::size_t i = 0; i < truth.labels.size(); ++i) ++n_[static_cast<std::size_t>(truth.labels[i]) * k_ + pred.labels[i]];
}

void SegConfusion::merge(const SegConfusion& other) {
  if (other.k_ != k_) throw ShapeError("cannot merge confusions with different class counts");
  for (std::size_t i = 0; i < n_.size(); ++i) n_[i] += other.n_[i];
}

double pixel_acc(const SegConfusion& conf) {
  require_nonempty(conf);
  std::uint64_t diag = 0;
  for (int i = 0; i < conf.num_classes(); ++i) diag += conf.at(i, i);
  return 100.0 * static_cast<double>(diag) / static_cast<double>(conf.total());
}

double mean_pixel_acc(const SegConfusion& conf) {
  require_nonempty(conf);
  double sum = 0.0;
  int present = 0;
  for (int i = 0; i < conf.num_classes(); ++i) {
    const auto t = conf.support(i);
    if (t == 0) continue;
    sum += static_cast<double>(conf.at(i, i)) / static_cast<double>(t);
    ++present;
  }
  return 100.0 * sum / present;
}

double mean_iou(const SegConfusion& conf) {
  require_nonempty(conf);
  double sum = 0.0;
  int present = 0;
  for (int i = 0; i < conf.num_classes(); ++i) {
    if (conf.support(i) == 0) continue;
    sum += iou(conf, i);
    ++present;
  }
  return 100.0 * sum / present;
}

double fw_iou(const SegConfusion& conf) {
  require_nonempty(conf);
  double sum = 0.0;
  for (int i = 0; i < conf.num_classes(); ++i) sum += static_cast<double>(conf.support(i)) * iou(conf, i);
  return 100.0 * sum / static_cast<double>(conf.total());
}

SegReport report(const SegConfusion& conf) {
  return {pixel_acc(conf), mean_pixel_acc(conf), mean_iou(conf), fw_iou(conf)};
}

double generalized_dice_loss(const Tensor& prob, const Tensor& truth) {
  if (!prob.same_shape(truth)) {
    throw ShapeError("probabilities " + prob.shape_string() + " and truth " + truth.shape_string() + " differ");
  }
  const int K = truth.channels();
  const std::size_t n = static_cast<std::size_t>(truth.height()) * truth.width();
  const float* g = truth.data().data();
  const float* s = prob.data().data();
  for (std::size_t p = 0; p < n; ++p) {
    int ones = 0;
    for (int k = 0; k < K; ++k) {
      const float v = g[p * K + k];
      if (v != 0.0f && v != 1.0f) throw DomainError("truth is not one-hot (value " + std::to_string(v) + ")");
      ones += v == 1.0f;
    }
    if (ones != 1) throw DomainError("truth pixel " + std::to_string(p) + " is not one-hot");
  }
  double num = 0.0, den = 0.0;
  for (int k = 0; k < K; ++k) {
    double gsum = 0.0, inter = 0.0, total = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      const double gk = g[p * K + k], sk = s[p * K + k];
      gsum += gk;
      inter += gk * sk;
      total += gk + sk;
    }
    if (gsum == 0.0) continue;
    const double w = 1.0 / (gsum * gsum);
    num += w * inter;
    den += w * total;
  }
  if (den <= 0.0) throw DomainError("generalized dice loss of an empty map");
  return 1.0 - 2.0 * num / den;
}

double poly_lr(double base, long long iter, long long total, double power) {
  if (total < 1) throw ParamError("total iterations must be >= 1");
  if (iter < 0 || iter > total) {
    throw ParamError("iteration " + std::to_string(iter) + " outside [0, " + std::to_string(total) + "]");
  }
  return base * std::pow(1.0 - static_cast<double>(iter) / static_cast<double>(total), power);
}

}  // namespace hlseg::metrics
