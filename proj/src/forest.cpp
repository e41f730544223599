#include "hlseg/forest.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include "hlseg/errors.hpp"
#include "hlseg/modelio.hpp"
#include "hlseg/rng.hpp"

namespace hlseg::forest {

namespace {

constexpr std::string_view kForestMagic = "HLRF";

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

Dataset subset(const Dataset& data, const std::vector<std::size_t>& idx) {
  Dataset out;
  out.num_classes = data.num_classes;
  out.rows.reserve(idx.size());
  out.labels.reserve(idx.size());
  for (auto i : idx) {
    out.rows.push_back(data.rows[i]);
    out.labels.push_back(data.labels[i]);
  }
  return out;
}

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double impurity = 0.0;  // weighted child impurity, n_left * g_left + n_right * g_right
};

class TreeBuilder {
 public:
  TreeBuilder(const Dataset& data, const ForestParams& params, std::uint64_t tree_seed)
      : data_(data), params_(params), rng_(tree_seed), dim_(static_cast<int>(data.dim())) {
    const int auto_k = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(dim_))));
    k_ = params.features_per_split > 0 ? std::min(params.features_per_split, dim_) : std::max(1, auto_k);
  }

  Tree build(std::vector<std::size_t> samples) {
    grow(samples, 0);
    return std::move(tree_);
  }

 private:
  std::vector<double> class_counts(const std::vector<std::size_t>& samples) const {
    std::vector<double> counts(static_cast<std::size_t>(data_.num_classes), 0.0);
    for (auto i : samples) counts[static_cast<std::size_t>(data_.labels[i])] += 1.0;
    return counts;
  }

  // Best threshold on one feature; false when every value is equal.
  bool best_on_feature(const std::vector<std::size_t>& samples, int f, Split& best, bool& found) {
    order_.clear();
    for (auto i : samples) order_.push_back({data_.rows[i][static_cast<std::size_t>(f)], data_.labels[i]});
    std::sort(order_.begin(), order_.end());
    if (order_.front().first == order_.back().first) return false;

    const std::size_t C = static_cast<std::size_t>(data_.num_classes);
    std::vector<double> left(C, 0.0), right(C, 0.0);
    for (const auto& p : order_) right[static_cast<std::size_t>(p.second)] += 1.0;
    const double n = static_cast<double>(order_.size());
    for (std::size_t i = 0; i + 1 < order_.size(); ++i) {
      const auto c = static_cast<std::size_t>(order_[i].second);
      left[c] += 1.0;
      right[c] -= 1.0;
      const double a = order_[i].first, b = order_[i + 1].first;
      if (a == b) continue;
      const double nl = static_cast<double>(i + 1);
      const double impurity = nl * gini(left) + (n - nl) * gini(right);
      if (!found || impurity < best.impurity) {
        double mid = a + (b - a) / 2.0;
        if (!(mid < b)) mid = a;
        best = {f, mid, impurity};
        found = true;
      }
    }
    return true;
  }

  int grow(const std::vector<std::size_t>& samples, int depth) {
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    auto counts = class_counts(samples);
    const bool pure = std::count_if(counts.begin(), counts.end(), [](double c) { return c > 0; }) <= 1;
    const bool depth_done = params_.max_depth > 0 && depth >= params_.max_depth;
    const bool too_small = static_cast<int>(samples.size()) < params_.min_samples_split;

    Split best;
    bool found = false;
    if (!pure && !depth_done && !too_small) {
      std::vector<int> features(static_cast<std::size_t>(dim_));
      std::iota(features.begin(), features.end(), 0);
      // Partial Fisher-Yates: draw k features; keep drawing while none splits.
      for (int j = 0; j < dim_; ++j) {
        if (j >= k_ && found) break;
        const auto pick = static_cast<std::size_t>(j) + rng_.below(static_cast<std::uint64_t>(dim_ - j));
        std::swap(features[static_cast<std::size_t>(j)], features[pick]);
        best_on_feature(samples, features[static_cast<std::size_t>(j)], best, found);
      }
    }

    if (!found) {
      tree_.nodes[static_cast<std::size_t>(id)].counts = std::move(counts);
      return id;
    }
    std::vector<std::size_t> left, right;
    for (auto i : samples) {
      (data_.rows[i][static_cast<std::size_t>(best.feature)] <= best.threshold ? left : right).push_back(i);
    }
    tree_.nodes[static_cast<std::size_t>(id)].feature = best.feature;
    tree_.nodes[static_cast<std::size_t>(id)].threshold = best.threshold;
    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    tree_.nodes[static_cast<std::size_t>(id)].left = l;
    tree_.nodes[static_cast<std::size_t>(id)].right = r;
    return id;
  }

  const Dataset& data_;
  const ForestParams& params_;
  Rng rng_;
  int dim_;
  int k_;
  Tree tree_;
  std::vector<std::pair<double, int>> order_;
};

void check_tree(const Tree& tree, int num_classes, int num_features) {
  if (tree.nodes.empty()) throw CorruptionError("forest file holds an empty tree");
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    const Node& n = tree.nodes[i];
    if (n.is_leaf()) {
      if (n.counts.size() != static_cast<std::size_t>(num_classes)) throw CorruptionError("leaf has wrong class count");
      double sum = 0.0;
      for (double c : n.counts) {
        if (!(c >= 0.0) || !std::isfinite(c)) throw CorruptionError("leaf count is negative or not finite");
        sum += c;
      }
      if (sum <= 0.0) throw CorruptionError("leaf counts are all zero");
    } else {
      if (n.feature >= num_features) throw CorruptionError("split feature out of range");
      if (!std::isfinite(n.threshold)) throw CorruptionError("split threshold not finite");
    }
  }
}

void write_node(io::ByteWriter& w, const Tree& tree, int id) {
  const Node& n = tree.nodes[static_cast<std::size_t>(id)];
  if (n.is_leaf()) {
    w.u8(0);
    for (double c : n.counts) w.f64(c);
    return;
  }
  w.u8(1);
  w.u32(static_cast<std::uint32_t>(n.feature));
  w.f64(n.threshold);
  write_node(w, tree, n.left);
  write_node(w, tree, n.right);
}

int read_node(io::ByteReader& r, Tree& tree, int num_classes, std::size_t limit, int depth) {
  if (tree.nodes.size() >= limit) throw CorruptionError("tree has more nodes than declared");
  if (depth > 100000) throw CorruptionError("tree nesting too deep");
  const int id = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  const std::uint8_t kind = r.u8();
  if (kind == 0) {
    std::vector<double> counts(static_cast<std::size_t>(num_classes));
    for (double& c : counts) c = r.f64();
    tree.nodes[static_cast<std::size_t>(id)].counts = std::move(counts);
    return id;
  }
  if (kind != 1) throw CorruptionError("unknown node tag " + std::to_string(kind));
  const std::uint32_t feature = r.u32();
  if (feature > 0x7fffffffu) throw CorruptionError("split feature out of range");
  tree.nodes[static_cast<std::size_t>(id)].feature = static_cast<int>(feature);
  tree.nodes[static_cast<std::size_t>(id)].threshold = r.f64();
  const int left = read_node(r, tree, num_classes, limit, depth + 1);
  const int right = read_node(r, tree, num_classes, limit, depth + 1);
  tree.nodes[static_cast<std::size_t>(id)].left = left;
  tree.nodes[static_cast<std::size_t>(id)].right = right;
  return id;
}

}  // namespace

const std::vector<std::string>& skin_tone_names() {
  static const std::vector<std::string> names = {"porcelain white", "ivory white", "medium", "yellowish",
                                                 "black"};
  return names;
}

std::vector<int> Dataset::class_counts() const {
  std::vector<int> counts(static_cast<std::size_t>(std::max(num_classes, 0)), 0);
  for (int l : labels)
    if (l >= 0 && l < num_classes) ++counts[static_cast<std::size_t>(l)];
  return counts;
}

void Dataset::validate() const {
  if (num_classes < 1) throw ParamError("dataset needs at least one class");
  if (rows.size() != labels.size()) {
    throw ShapeError("dataset has " + std::to_string(rows.size()) + " rows but " +
                     std::to_string(labels.size()) + " labels");
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.front().size()) throw ShapeError("row " + std::to_string(i) + " has a different width");
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw DomainError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                        " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
}

Dataset oversample(const Dataset& data, std::uint64_t seed) {
  data.validate();
  const auto counts = data.class_counts();
  const int majority = counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
  Dataset out = data;
  Rng rng(mix_seed(seed, 0x05a3));
  for (int c = 0; c < data.num_classes; ++c) {
    if (counts[static_cast<std::size_t>(c)] == 0) continue;
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < data.size(); ++i)
      if (data.labels[i] == c) members.push_back(i);
    for (int k = counts[static_cast<std::size_t>(c)]; k < majority; ++k) {
      const auto pick = members[rng.below(members.size())];
      out.rows.push_back(data.rows[pick]);
      out.labels.push_back(c);
    }
  }
  return out;
}

std::pair<Dataset, Dataset> train_test_split(const Dataset& data, double test_fraction, std::uint64_t seed) {
  data.validate();
  if (!(test_fraction >= 0.0 && test_fraction <= 1.0)) throw ParamError("test fraction must lie in [0,1]");
  Rng rng(mix_seed(seed, 0x5b1e));
  const std::size_t C = static_cast<std::size_t>(data.num_classes);
  std::vector<std::vector<std::size_t>> members(C);
  for (std::size_t i = 0; i < data.size(); ++i) members[static_cast<std::size_t>(data.labels[i])].push_back(i);
  for (auto& m : members) shuffle(m, rng);

  // Largest remainder allocation of the test rows across classes.
  const auto total_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(data.size())));
  std::vector<std::size_t> take(C);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < C; ++c) {
    const double share = test_fraction * static_cast<double>(members[c].size());
    take[c] = static_cast<std::size_t>(std::floor(share));
    assigned += take[c];
    remainders.push_back({share - std::floor(share), c});
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < total_test && k < remainders.size(); ++k) {
    const std::size_t c = remainders[k].second;
    if (take[c] < members[c].size()) {
      ++take[c];
      ++assigned;
    }
  }

  std::vector<std::size_t> train_idx, test_idx;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t k = 0; k < members[c].size(); ++k) (k < take[c] ? test_idx : train_idx).push_back(members[c][k]);
  }
  shuffle(train_idx, rng);
  shuffle(test_idx, rng);
  return {subset(data, train_idx), subset(data, test_idx)};
}

double gini(std::span<const double> counts) {
  double n = 0.0, sq = 0.0;
  for (double c : counts) {
    n += c;
    sq += c * c;
  }
  return n > 0.0 ? 1.0 - sq / (n * n) : 0.0;
}

std::vector<std::size_t> bootstrap_indices(std::size_t n, std::uint64_t tree_seed, bool bootstrap) {
  std::vector<std::size_t> idx(n);
  if (!bootstrap) {
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
  }
  Rng rng(mix_seed(tree_seed, 0xb007));
  for (auto& i : idx) i = rng.below(n);
  return idx;
}

std::vector<double> Tree::leaf_distribution(std::span<const double> x) const {
  int id = 0;
  while (!nodes[static_cast<std::size_t>(id)].is_leaf()) {
    const Node& n = nodes[static_cast<std::size_t>(id)];
    id = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
  }
  std::vector<double> dist = nodes[static_cast<std::size_t>(id)].counts;
  const double sum = std::accumulate(dist.begin(), dist.end(), 0.0);
  for (double& d : dist) d /= sum;
  return dist;
}

int Tree::depth() const {
  std::vector<int> d(nodes.size(), 0);
  int best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    best = std::max(best, d[i]);
    if (!nodes[i].is_leaf()) {
      d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
    }
  }
  return best;
}

Forest::Forest(int num_classes, int num_features, std::uint64_t seed, std::vector<Tree> trees)
    : num_classes_(num_classes), num_features_(num_features), seed_(seed), trees_(std::move(trees)) {}

Prediction Forest::predict(std::span<const double> x) const {
  if (x.size() != static_cast<std::size_t>(num_features_)) {
    throw ShapeError("forest expects " + std::to_string(num_features_) + " features, got " +
                     std::to_string(x.size()));
  }
  if (trees_.empty()) throw ParamError("forest has no trees");
  Prediction p;
  p.distribution.assign(static_cast<std::size_t>(num_classes_), 0.0);
  for (const auto& t : trees_) {
    const auto d = t.leaf_distribution(x);
    for (std::size_t c = 0; c < d.size(); ++c) p.distribution[c] += d[c];
  }
  for (double& d : p.distribution) d /= static_cast<double>(trees_.size());
  p.label = static_cast<int>(std::max_element(p.distribution.begin(), p.distribution.end()) - p.distribution.begin());
  return p;
}

std::vector<int> Forest::predict_all(const std::vector<std::vector<double>>& rows) const {
  std::vector<int> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(predict(r).label);
  return out;
}

Forest fit(const Dataset& train, const ForestParams& params, std::uint64_t seed) {
  train.validate();
  if (train.size() == 0) throw DomainError("cannot fit a forest on an empty dataset");
  if (train.dim() == 0) throw DomainError("training rows have no features");
  if (params.n_trees < 1) throw ParamError("n_trees must be >= 1");
  if (params.max_depth < 0) throw ParamError("max_depth must be >= 0 (0 = unlimited)");
  if (params.min_samples_split < 2) throw ParamError("min_samples_split must be >= 2");
  if (params.features_per_split < 0) throw ParamError("features_per_split must be >= 0");

  std::vector<Tree> trees(static_cast<std::size_t>(params.n_trees));
  auto grow_tree = [&](std::size_t t) {
    const std::uint64_t tree_seed = mix_seed(seed, t);
    TreeBuilder builder(train, params, tree_seed);
    trees[t] = builder.build(bootstrap_indices(train.size(), tree_seed, params.bootstrap));
  };

  const int threads = std::clamp(params.threads, 1, params.n_trees);
  if (threads == 1) {
    for (std::size_t t = 0; t < trees.size(); ++t) grow_tree(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    {
      std::vector<std::jthread> pool;
      for (int w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
          for (std::size_t t = next++; t < trees.size(); t = next++) {
            try {
              grow_tree(t);
            } catch (...) {
              std::lock_guard lock(failure_mutex);
              if (!failure) failure = std::current_exception();
            }
          }
        });
      }
    }
    if (failure) std::rethrow_exception(failure);
  }
  return Forest(train.num_classes, static_cast<int>(train.dim()), seed, std::move(trees));
}

std::vector<std::uint8_t> serialize(const Forest& forest) {
  io::ByteWriter w;
  w.raw(kForestMagic);
  w.u32(kForestVersion);
  w.u32(static_cast<std::uint32_t>(forest.num_classes()));
  w.u32(static_cast<std::uint32_t>(forest.num_features()));
  w.u64(forest.seed());
  w.u32(static_cast<std::uint32_t>(forest.trees().size()));
  for (const auto& tree : forest.trees()) {
    w.u32(static_cast<std::uint32_t>(tree.nodes.size()));
    write_node(w, tree, 0);
  }
  return std::move(w.bytes());
}

Forest deserialize(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  if (bytes.size() < 4 || r.text(4) != kForestMagic) throw FormatError("not a forest file (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kForestVersion) throw FormatError("unsupported forest version " + std::to_string(version));
  const std::uint32_t num_classes = r.u32();
  const std::uint32_t num_features = r.u32();
  if (num_classes < 1 || num_classes > 4096) throw CorruptionError("implausible class count");
  if (num_features < 1 || num_features > (1u << 24)) throw CorruptionError("implausible feature count");
  const std::uint64_t seed = r.u64();
  const std::uint32_t n_trees = r.u32();
  // Every tree takes at least 4 + 1 + 8 * num_classes bytes.
  if (n_trees > r.remaining() / (5 + 8 * static_cast<std::size_t>(num_classes))) {
    throw CorruptionError("tree count exceeds file size");
  }
  std::vector<Tree> trees(n_trees);
  for (auto& tree : trees) {
    const std::uint32_t node_count = r.u32();
    if (node_count == 0 || node_count > r.remaining()) throw CorruptionError("implausible node count");
    read_node(r, tree, static_cast<int>(num_classes), node_count, 0);
    if (tree.nodes.size() != node_count) throw CorruptionError("tree node count disagrees with header");
    check_tree(tree, static_cast<int>(num_classes), static_cast<int>(num_features));
  }
  if (r.remaining() != 0) throw CorruptionError(std::to_string(r.remaining()) + " trailing bytes after forest");
  return Forest(static_cast<int>(num_classes), static_cast<int>(num_features), seed, std::move(trees));
}

void save(const Forest& forest, const std::filesystem::path& path) { io::write_file(path, serialize(forest)); }

Forest load(const std::filesystem::path& path) { return deserialize(io::read_file(path)); }

long long ConfusionMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), 0LL); }

double ConfusionMatrix::accuracy() const {
  const long long n = total();
  if (n == 0) throw DomainError("accuracy of an empty confusion matrix");
  long long diag = 0;
  for (int i = 0; i < num_classes; ++i) diag += at(i, i);
  return static_cast<double>(diag) / static_cast<double>(n);
}

double ConfusionMatrix::adjacent_error_fraction() const {
  long long off = 0, adjacent = 0;
  for (int i = 0; i < num_classes; ++i)
    for (int j = 0; j < num_classes; ++j) {
      if (i == j) continue;
      off += at(i, j);
      if (std::abs(i - j) == 1) adjacent += at(i, j);
    }
  return off == 0 ? 0.0 : static_cast<double>(adjacent) / static_cast<double>(off);
}

ConfusionMatrix confusion_matrix(std::span<const int> truth, std::span<const int> pred, int num_classes) {
  if (truth.size() != pred.size()) throw ShapeError("truth and prediction lengths differ");
  if (num_classes < 1) throw ParamError("confusion matrix needs at least one class");
  ConfusionMatrix cm{num_classes, std::vector<long long>(static_cast<std::size_t>(num_classes) * num_classes, 0)};
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= num_classes || pred[i] < 0 || pred[i] >= num_classes) {
      throw DomainError("label outside [0, " + std::to_string(num_classes) + ") at position " + std::to_string(i));
    }
    ++cm.counts[static_cast<std::size_t>(truth[i]) * num_classes + pred[i]];
  }
  return cm;
}

}  // namespace hlseg::forest
