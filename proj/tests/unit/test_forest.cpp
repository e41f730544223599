#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "doctest.h"
#include "hlseg/errors.hpp"
#include "hlseg/forest.hpp"
#include "hlseg/rng.hpp"

namespace rf = hlseg::forest;

namespace {

// Two Gaussian blobs in 2-D, well apart.
rf::Dataset blobs(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  rf::Dataset d;
  d.num_classes = 2;
  for (int i = 0; i < n; ++i) {
    const int label = i % 2;
    const double cx = label ? 4.0 : 0.0, cy = label ? 4.0 : 0.0;
    d.rows.push_back({cx + g(rng), cy + g(rng)});
    d.labels.push_back(label);
  }
  return d;
}

rf::Dataset with_counts(const std::vector<int>& counts) {
  rf::Dataset d;
  d.num_classes = static_cast<int>(counts.size());
  int id = 0;
  for (int c = 0; c < d.num_classes; ++c)
    for (int k = 0; k < counts[c]; ++k) {
      d.rows.push_back({static_cast<double>(id++), static_cast<double>(c)});
      d.labels.push_back(c);
    }
  return d;
}

double oracle_gini(const std::vector<int>& labels, int classes) {
  if (labels.empty()) return 0.0;
  std::vector<double> c(classes, 0.0);
  for (int l : labels) c[l] += 1;
  double s = 0;
  for (double v : c) s += (v / labels.size()) * (v / labels.size());
  return 1.0 - s;
}

}  // namespace

TEST_CASE("skin tone classes") {
  const auto& names = rf::skin_tone_names();
  REQUIRE(names.size() == 5);
  CHECK(names.front() == "porcelain white");
  CHECK(names.back() == "black");
}

TEST_CASE("oversample") {
  SUBCASE("unequal grade counts are topped up to the largest") {
    const rf::Dataset d = with_counts({95, 95, 96, 93, 94});
    const rf::Dataset o = rf::oversample(d, 1);
    CHECK(o.class_counts() == std::vector<int>{96, 96, 96, 96, 96});
    std::set<std::vector<double>> originals(d.rows.begin(), d.rows.end());
    for (std::size_t i = 0; i < o.size(); ++i) {
      REQUIRE(originals.count(o.rows[i]) == 1);
      REQUIRE(o.rows[i][1] == o.labels[i]);
    }
    CHECK(rf::oversample(d, 1).rows == o.rows);
  }
  SUBCASE("balanced data is unchanged") {
    const rf::Dataset d = with_counts({10, 10, 10});
    const rf::Dataset o = rf::oversample(d, 3);
    CHECK(o.rows == d.rows);
    CHECK(o.labels == d.labels);
  }
}

TEST_CASE("train_test_split") {
  SUBCASE("8:2 of 100") {
    const auto [train, test] = rf::train_test_split(with_counts({20, 20, 20, 20, 20}), 0.2, 5);
    CHECK(train.size() == 80);
    CHECK(test.size() == 20);
  }
  SUBCASE("zero fraction") {
    const auto [train, test] = rf::train_test_split(with_counts({3, 4}), 0.0, 5);
    CHECK(train.size() == 7);
    CHECK(test.size() == 0);
  }
  SUBCASE("stratified, disjoint, exhaustive") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const std::vector<int> counts{95, 95, 96, 93, 94};
      const rf::Dataset d = with_counts(counts);
      const double frac = 0.1 + 0.03 * seed;
      const auto [train, test] = rf::train_test_split(d, frac, seed);
      CHECK(test.size() == static_cast<std::size_t>(std::llround(frac * d.size())));
      const auto tc = test.class_counts();
      for (int c = 0; c < 5; ++c) CHECK(std::abs(tc[c] - frac * counts[c]) <= 1.0);
      std::multiset<double> ids;
      for (const auto& r : train.rows) ids.insert(r[0]);
      for (const auto& r : test.rows) ids.insert(r[0]);
      CHECK(ids.size() == d.size());
      CHECK(std::set<double>(ids.begin(), ids.end()).size() == d.size());
    }
  }
  SUBCASE("bad fraction") {
    CHECK_THROWS_AS(rf::train_test_split(with_counts({3}), 1.5, 0), hlseg::ParamError);
  }
}

TEST_CASE("fit basics") {
  SUBCASE("single class gives single leaves") {
    rf::Dataset d = with_counts({0, 0, 12});
    const auto f = rf::fit(d, {.n_trees = 5}, 3);
    for (const auto& t : f.trees()) {
      REQUIRE(t.nodes.size() == 1);
      CHECK(t.nodes[0].is_leaf());
    }
    CHECK(f.predict(std::vector<double>{1.0, 2.0}).label == 2);
  }
  SUBCASE("empty data and bad parameters") {
    rf::Dataset empty;
    CHECK_THROWS_AS(rf::fit(empty, {}, 0), hlseg::DomainError);
    CHECK_THROWS_AS(rf::fit(with_counts({2, 2}), {.n_trees = 0}, 0), hlseg::ParamError);
  }
  SUBCASE("depth-1 stump on {0,0,1,1}") {
    rf::Dataset d;
    d.num_classes = 2;
    d.rows = {{0.0}, {0.0}, {1.0}, {1.0}};
    d.labels = {0, 0, 1, 1};
    const auto f = rf::fit(d, {.n_trees = 1, .max_depth = 1, .bootstrap = false}, 0);
    const auto& root = f.trees()[0].nodes[0];
    CHECK(root.feature == 0);
    CHECK(root.threshold == 0.5);
    // Only one candidate threshold; its gain is the full parent impurity.
    const double parent = oracle_gini({0, 0, 1, 1}, 2);
    const double children = 0.5 * oracle_gini({0, 0}, 2) + 0.5 * oracle_gini({1, 1}, 2);
    CHECK(parent - children == doctest::Approx(0.5));
  }
}

TEST_CASE("root split matches exhaustive enumeration") {
  std::mt19937_64 rng(83);
  std::uniform_int_distribution<int> lab(0, 2), val(0, 9);
  for (int trial = 0; trial < 40; ++trial) {
    rf::Dataset d;
    d.num_classes = 3;
    const int n = 8 + trial % 13, dim = 1 + trial % 4;
    for (int i = 0; i < n; ++i) {
      std::vector<double> row(dim);
      for (double& v : row) v = val(rng) * 0.5;
      d.rows.push_back(row);
      d.labels.push_back(lab(rng));
    }
    const auto f = rf::fit(d, {.n_trees = 1, .max_depth = 1, .features_per_split = dim, .bootstrap = false},
                           static_cast<std::uint64_t>(trial));
    // Best weighted child impurity over every feature and every midpoint.
    double best = 1e300;
    for (int ft = 0; ft < dim; ++ft) {
      std::set<double> values;
      for (const auto& r : d.rows) values.insert(r[ft]);
      for (auto it = values.begin(); std::next(it) != values.end(); ++it) {
        const double thr = (*it + *std::next(it)) / 2;
        std::vector<int> l, r;
        for (int i = 0; i < n; ++i) (d.rows[i][ft] <= thr ? l : r).push_back(d.labels[i]);
        best = std::min(best, l.size() * oracle_gini(l, 3) + r.size() * oracle_gini(r, 3));
      }
    }
    const auto& root = f.trees()[0].nodes[0];
    if (best == 1e300 || oracle_gini(d.labels, 3) == 0.0) {
      CHECK(root.is_leaf());
      continue;
    }
    REQUIRE_FALSE(root.is_leaf());
    std::vector<int> l, r;
    for (int i = 0; i < n; ++i) (d.rows[i][root.feature] <= root.threshold ? l : r).push_back(d.labels[i]);
    CHECK(l.size() * oracle_gini(l, 3) + r.size() * oracle_gini(r, 3) == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("blob fixture generalises") {
  const rf::Dataset d = blobs(200, 7);
  const auto [train, test] = rf::train_test_split(d, 0.2, 7);
  const auto f = rf::fit(train, {.n_trees = 50}, 7);
  const auto train_cm = rf::confusion_matrix(train.labels, f.predict_all(train.rows), 2);
  const auto test_cm = rf::confusion_matrix(test.labels, f.predict_all(test.rows), 2);
  CHECK(train_cm.accuracy() == 1.0);
  CHECK(test_cm.accuracy() >= 0.95);
}

TEST_CASE("memorisation with one unbootstrapped tree") {
  std::mt19937_64 rng(89);
  std::uniform_real_distribution<double> u(0, 1);
  std::uniform_int_distribution<int> lab(0, 4);
  rf::Dataset d;
  for (int i = 0; i < 150; ++i) {
    d.rows.push_back({u(rng), u(rng), u(rng)});
    d.labels.push_back(lab(rng));
  }
  const auto f = rf::fit(d, {.n_trees = 1, .bootstrap = false}, 1);
  CHECK(f.predict_all(d.rows) == d.labels);
}

TEST_CASE("predict") {
  rf::Tree leaf;
  leaf.nodes.push_back({.counts = {0, 0, 4, 0, 0}});
  const rf::Forest f(5, 2, 0, {leaf, leaf, leaf});
  const auto p = f.predict(std::vector<double>{0.3, 0.1});
  CHECK(p.label == 2);
  CHECK(p.distribution == std::vector<double>{0, 0, 1, 0, 0});
  CHECK_THROWS_AS(f.predict(std::vector<double>{1.0}), hlseg::ShapeError);

  SUBCASE("ties go to the lowest class") {
    rf::Tree a, b;
    a.nodes.push_back({.counts = {0, 1, 0}});
    b.nodes.push_back({.counts = {0, 0, 1}});
    CHECK(rf::Forest(3, 1, 0, {b, a}).predict(std::vector<double>{0}).label == 1);
  }
  SUBCASE("tree order does not matter") {
    const rf::Dataset d = blobs(120, 11);
    const auto fit = rf::fit(d, {.n_trees = 15}, 2);
    auto trees = fit.trees();
    std::reverse(trees.begin(), trees.end());
    const rf::Forest reversed(fit.num_classes(), fit.num_features(), fit.seed(), trees);
    for (const auto& r : d.rows) {
      const auto p1 = fit.predict(r), p2 = reversed.predict(r);
      CHECK(p1.label == p2.label);
      for (int c = 0; c < 2; ++c) CHECK(p1.distribution[c] == doctest::Approx(p2.distribution[c]).epsilon(1e-12));
    }
  }
}

TEST_CASE("determinism and threading") {
  const rf::Dataset d = blobs(160, 13);
  const auto a = rf::fit(d, {.n_trees = 20}, 99);
  const auto b = rf::fit(d, {.n_trees = 20}, 99);
  const auto c = rf::fit(d, {.n_trees = 20, .threads = 4}, 99);
  CHECK(a == b);
  CHECK(a == c);
  CHECK(rf::serialize(a) == rf::serialize(c));
  CHECK_FALSE(a == rf::fit(d, {.n_trees = 20}, 100));
}

TEST_CASE("bootstrap and impurity invariants") {
  const rf::Dataset d = blobs(100, 17);
  const std::uint64_t seed = 21;
  const auto f = rf::fit(d, {.n_trees = 8, .max_depth = 6}, seed);
  for (std::size_t t = 0; t < f.trees().size(); ++t) {
    const auto idx = rf::bootstrap_indices(d.size(), hlseg::mix_seed(seed, t), true);
    REQUIRE(idx.size() == d.size());
    for (auto i : idx) REQUIRE(i < d.size());

    // Route the bootstrap sample and collect class counts per node.
    const auto& nodes = f.trees()[t].nodes;
    std::vector<std::vector<double>> counts(nodes.size(), std::vector<double>(2, 0.0));
    for (auto i : idx) {
      int id = 0;
      for (;;) {
        counts[id][d.labels[i]] += 1;
        if (nodes[id].is_leaf()) break;
        id = d.rows[i][nodes[id].feature] <= nodes[id].threshold ? nodes[id].left : nodes[id].right;
      }
    }
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      const auto& n = nodes[k];
      if (n.is_leaf()) {
        CHECK(n.counts == counts[k]);
        continue;
      }
      auto mass = [&](int id) { return counts[id][0] + counts[id][1]; };
      const double parent = mass(static_cast<int>(k)) * rf::gini(counts[k]);
      const double kids = mass(n.left) * rf::gini(counts[n.left]) + mass(n.right) * rf::gini(counts[n.right]);
      CHECK(parent - kids >= -1e-9);
    }
  }
  CHECK(rf::gini(std::vector<double>{0, 7, 0}) == 0.0);
}

TEST_CASE("forest file round trip") {
  const rf::Dataset d = blobs(90, 19);
  const auto f = rf::fit(d, {.n_trees = 6}, 4);
  const auto bytes = rf::serialize(f);
  REQUIRE(bytes.size() > 4);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "HLRF");
  const auto back = rf::deserialize(bytes);
  CHECK(back == f);
  CHECK(back.predict_all(d.rows) == f.predict_all(d.rows));

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(rf::deserialize(bad), hlseg::FormatError);
  bad = bytes;
  bad[4] = 9;
  CHECK_THROWS_AS(rf::deserialize(bad), hlseg::FormatError);
  auto longer = bytes;
  longer.push_back(0);
  CHECK_THROWS_AS(rf::deserialize(longer), hlseg::CorruptionError);
  for (std::size_t cut = 0; cut < bytes.size(); cut += 7) {
    const std::vector<std::uint8_t> part(bytes.begin(), bytes.begin() + cut);
    CHECK_THROWS_AS(rf::deserialize(part), hlseg::Error);
  }
  std::mt19937 rng(97);
  for (int trial = 0; trial < 200; ++trial) {
    auto m = bytes;
    m[rng() % m.size()] ^= static_cast<std::uint8_t>(1 + rng() % 255);
    try {
      const auto g = rf::deserialize(m);
      g.predict_all(d.rows);
    } catch (const hlseg::Error&) {
    }
  }
}

TEST_CASE("confusion matrix") {
  const std::vector<int> t{0, 1, 2, 3, 4}, swapped_t{0, 1}, swapped_p{1, 0};
  const auto perfect = rf::confusion_matrix(t, t, 5);
  CHECK(perfect.accuracy() == 1.0);
  CHECK(perfect.total() == 5);
  const auto swapped = rf::confusion_matrix(swapped_t, swapped_p, 2);
  CHECK(swapped.at(0, 0) == 0);
  CHECK(swapped.at(1, 1) == 0);
  CHECK(swapped.accuracy() == 0.0);

  const std::vector<int> truth{0, 0, 1, 2, 3, 4, 4}, pred{1, 0, 1, 4, 2, 3, 4};
  const auto cm = rf::confusion_matrix(truth, pred, 5);
  // Errors: 0->1, 2->4, 3->2, 4->3: three of four adjacent.
  CHECK(cm.adjacent_error_fraction() == doctest::Approx(0.75));
  CHECK_THROWS_AS(rf::confusion_matrix(truth, swapped_p, 5), hlseg::ShapeError);
  CHECK_THROWS_AS(rf::confusion_matrix(std::vector<int>{5}, std::vector<int>{0}, 5), hlseg::DomainError);
}
