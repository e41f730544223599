#pragma once

#include <cstdint>
#include <vector>

#include "hlseg/labels.hpp"
#include "hlseg/tensor.hpp"

namespace hlseg::metrics {

// K x K pixel counts, row = true class, column = predicted class.
class SegConfusion {
 public:
  explicit SegConfusion(int num_classes);

  int num_classes() const noexcept { return k_; }
  std::uint64_t at(int truth, int pred) const { return n_[static_cast<std::size_t>(truth) * k_ + pred]; }
  std::uint64_t total() const noexcept;
  std::uint64_t support(int truth) const;    // t_i
  std::uint64_t predicted(int pred) const;   // column sum

  void add(int truth, int pred, std::uint64_t count = 1);
  // Equal dims and labels < K, else ShapeError / DomainError.
  void accumulate(const LabelMask& truth, const LabelMask& pred);
  void merge(const SegConfusion& other);

  friend bool operator==(const SegConfusion&, const SegConfusion&) = default;

 private:
  int k_;
  std::vector<std::uint64_t> n_;
};

// Percentages in [0, 100]. Classes without ground-truth pixels are left out
// of the class means. DomainError on an empty matrix.
double pixel_acc(const SegConfusion& conf);
double mean_pixel_acc(const SegConfusion& conf);
double mean_iou(const SegConfusion& conf);
double fw_iou(const SegConfusion& conf);

struct SegReport {
  double pixel_acc;
  double mean_pixel_acc;
  double mean_iou;
  double fw_iou;
};
SegReport report(const SegConfusion& conf);

// 1 - 2 sum_k w_k sum_p g s / sum_k w_k sum_p (g + s), w_k = 1 / (sum_p g)^2,
// w_k = 0 for classes absent from the truth. truth must be one-hot.
double generalized_dice_loss(const Tensor& prob, const Tensor& truth_onehot);

inline constexpr double kBaseLearningRate = 2.5e-3;
inline constexpr double kPolyPower = 0.9;

// base * (1 - iter / total)^power.
double poly_lr(double base, long long iter, long long total, double power = kPolyPower);

}  // namespace hlseg::metrics
