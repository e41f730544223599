#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace hlseg::forest {

inline constexpr int kSkinTones = 5;
// Train/test split ratio 8:2.
inline constexpr double kTestFraction = 0.2;
// Grade order, lightest first.
const std::vector<std::string>& skin_tone_names();

struct Dataset {
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  int num_classes = kSkinTones;

  std::size_t size() const noexcept { return rows.size(); }
  std::size_t dim() const noexcept { return rows.empty() ? 0 : rows.front().size(); }
  std::vector<int> class_counts() const;
  // Throws ShapeError on ragged rows or a row/label mismatch, DomainError on
  // a label outside [0, num_classes).
  void validate() const;
};

// Tops up each non-empty class to the majority count by drawing its own rows
// with replacement. Originals come first, in input order.
Dataset oversample(const Dataset& data, std::uint64_t seed);

// Stratified: round(fraction * n) test rows, allocated to classes by largest
// remainder so each class is within one row of its proportional share.
std::pair<Dataset, Dataset> train_test_split(const Dataset& data, double test_fraction,
                                             std::uint64_t seed);

struct ForestParams {
  int n_trees = 100;
  int max_depth = 0;  // 0 = unlimited
  int min_samples_split = 2;
  int features_per_split = 0;  // 0 = ceil(sqrt(d))
  bool bootstrap = true;
  int threads = 1;  // result does not depend on this
};

struct Node {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // x[feature] <= threshold goes left
  int left = -1;
  int right = -1;
  std::vector<double> counts;  // leaf class counts

  bool is_leaf() const noexcept { return feature < 0; }
  friend bool operator==(const Node&, const Node&) = default;
};

// Nodes in preorder; index 0 is the root.
struct Tree {
  std::vector<Node> nodes;

  // Normalised class distribution of the leaf reached by x.
  std::vector<double> leaf_distribution(std::span<const double> x) const;
  int depth() const;
  friend bool operator==(const Tree&, const Tree&) = default;
};

struct Prediction {
  int label = 0;
  std::vector<double> distribution;  // mean of the leaf distributions
};

class Forest {
 public:
  Forest() = default;
  Forest(int num_classes, int num_features, std::uint64_t seed, std::vector<Tree> trees);

  int num_classes() const noexcept { return num_classes_; }
  int num_features() const noexcept { return num_features_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const std::vector<Tree>& trees() const noexcept { return trees_; }

  // Ties go to the lowest class index.
  Prediction predict(std::span<const double> x) const;
  std::vector<int> predict_all(const std::vector<std::vector<double>>& rows) const;

  friend bool operator==(const Forest&, const Forest&) = default;

 private:
  int num_classes_ = 0;
  int num_features_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<Tree> trees_;
};

// Tree t uses seed mix_seed(seed, t) for its bootstrap and feature draws.
Forest fit(const Dataset& train, const ForestParams& params, std::uint64_t seed);

// Row multiset a tree draws: n indices with replacement, or 0..n-1 when
// bootstrap is off.
std::vector<std::size_t> bootstrap_indices(std::size_t n, std::uint64_t tree_seed, bool bootstrap);

// Gini impurity 1 - sum p_k^2 of a class-count vector.
double gini(std::span<const double> counts);

// Binary "HLRF" file, version 1.
inline constexpr std::uint32_t kForestVersion = 1;
std::vector<std::uint8_t> serialize(const Forest& forest);
Forest deserialize(std::span<const std::uint8_t> bytes);
void save(const Forest& forest, const std::filesystem::path& path);
Forest load(const std::filesystem::path& path);

struct ConfusionMatrix {
  int num_classes = 0;
  std::vector<long long> counts;  // row = truth, column = prediction

  long long at(int truth, int pred) const { return counts[static_cast<std::size_t>(truth) * num_classes + pred]; }
  long long total() const;
  double accuracy() const;
  // Share of the errors that land on a neighbouring grade (|i - j| == 1).
  double adjacent_error_fraction() const;
};

ConfusionMatrix confusion_matrix(std::span<const int> truth, std::span<const int> pred, int num_classes);

}  // namespace hlseg::forest
