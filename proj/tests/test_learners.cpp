#include <gtest/gtest.h>

#include <algorithm>
#include <limits>
#include <set>

#include "stealth/learners.hpp"
#include "support.hpp"

using namespace stealth;

namespace {

Dataset xor_data() {
  return Dataset({"a", "b"}, {0, 0, 0, 1, 1, 0, 1, 1}, std::vector<int>{0, 1, 1, 0});
}

// Weighted Gini of a candidate split, counted directly.
double split_impurity(const Dataset& ds, std::size_t f, double thr) {
  double n[2] = {0, 0}, pos[2] = {0, 0};
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    const int side = ds.at(i, f) <= thr ? 0 : 1;
    n[side] += 1;
    pos[side] += ds.labels()[i];
  }
  double total = 0;
  for (int s = 0; s < 2; ++s)
    if (n[s] > 0) {
      const double p = pos[s] / n[s];
      total += n[s] * (1 - (p * p + (1 - p) * (1 - p)));
    }
  return total / (n[0] + n[1]);
}

// Lowest impurity over every feature and every midpoint between distinct
// observed values.
double best_impurity(const Dataset& ds) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t f = 0; f < ds.cols(); ++f) {
    std::set<double> vals;
    for (std::size_t i = 0; i < ds.rows(); ++i) vals.insert(ds.at(i, f));
    for (auto it = vals.begin(); std::next(it) != vals.end(); ++it)
      best = std::min(best, split_impurity(ds, f, 0.5 * (*it + *std::next(it))));
  }
  return best;
}

}  // namespace

TEST(Predictor, TieAtOneHalfPredictsZero) {
  const std::vector<double> row{0.0};
  EXPECT_EQ(ConstantPredictor(0.5, 1).predict(row), 0);
  EXPECT_EQ(ConstantPredictor(0.5000001, 1).predict(row), 1);
  EXPECT_EQ(ConstantPredictor(0.0, 1).predict(row), 0);
}

TEST(Predictor, CountingPredictorCountsEveryCall) {
  CountingPredictor c(std::make_shared<const ConstantPredictor>(1.0, 2));
  const std::vector<double> row{0, 0};
  EXPECT_EQ(c.calls(), 0u);
  for (int i = 0; i < 7; ++i) c.predict(row);
  c.predict_proba(row);
  EXPECT_EQ(c.calls(), 8u);
  EXPECT_EQ(c.feature_count(), 2u);
  c.reset();
  EXPECT_EQ(c.calls(), 0u);
}

TEST(DecisionTree, EveryXorSplitHasZeroGainButTreeStillLearnsIt) {
  const auto ds = xor_data();
  // Root impurity is 0.5; every candidate split leaves it at 0.5.
  for (std::size_t f = 0; f < 2; ++f) EXPECT_DOUBLE_EQ(split_impurity(ds, f, 0.5), 0.5);
  Rng rng(1);
  const auto tree = train_tree(ds, TreeConfig{}, rng);
  EXPECT_DOUBLE_EQ(accuracy_on(tree, ds), 1.0);
  EXPECT_EQ(tree.depth(), 2u);
}

TEST(DecisionTree, RootSplitMatchesBruteForceGini) {
  Rng gen(3);
  for (int trial = 0; trial < 50; ++trial) {
    auto base = fixtures::uniform_rows(20 + uniform_index(gen, 40), 1 + uniform_index(gen, 4),
                                      gen());
    std::vector<int> y;
    for (std::size_t i = 0; i < base.rows(); ++i) y.push_back(uniform01(gen) < 0.4 ? 1 : 0);
    if (std::count(y.begin(), y.end(), 1) == 0) y[0] = 1;
    const auto ds = base.with_labels(y);
    TreeConfig cfg;
    cfg.max_depth = 1;
    Rng rng(gen());
    const auto tree = train_tree(ds, cfg, rng);
    const auto& root = tree.nodes().front();
    ASSERT_GE(root.feature, 0);
    EXPECT_NEAR(split_impurity(ds, static_cast<std::size_t>(root.feature), root.threshold),
                best_impurity(ds), 1e-12);
  }
}

TEST(DecisionTree, ThresholdIsMidpointBetweenValues) {
  const Dataset ds({"a"}, {0.2, 0.4, 0.6, 0.8}, std::vector<int>{0, 0, 1, 1});
  Rng rng(1);
  const auto tree = train_tree(ds, TreeConfig{}, rng);
  EXPECT_DOUBLE_EQ(tree.nodes().front().threshold, 0.5);
  EXPECT_EQ(tree.nodes().size(), 3u);
}

TEST(DecisionTree, PureOrConstantDataIsALeaf) {
  Rng rng(1);
  const Dataset pure({"a"}, {0.1, 0.9}, std::vector<int>{1, 1});
  EXPECT_EQ(train_tree(pure, TreeConfig{}, rng).nodes().size(), 1u);
  const Dataset flat({"a"}, {0.3, 0.3, 0.3}, std::vector<int>{1, 0, 1});
  const auto t = train_tree(flat, TreeConfig{}, rng);
  ASSERT_EQ(t.nodes().size(), 1u);
  EXPECT_DOUBLE_EQ(t.predict_proba(std::vector<double>{0.3}), 2.0 / 3.0);
}

TEST(DecisionTree, MaxDepthAndMinSplitSizeStopGrowth) {
  const auto ds = fixtures::grouped_rows(300, 2);
  Rng rng(1);
  TreeConfig shallow;
  shallow.max_depth = 2;
  EXPECT_LE(train_tree(ds, shallow, rng).depth(), 2u);
  TreeConfig stump;
  stump.max_depth = 0;
  EXPECT_EQ(train_tree(ds, stump, rng).nodes().size(), 1u);
  TreeConfig coarse;
  coarse.min_split_size = 301;
  EXPECT_EQ(train_tree(ds, coarse, rng).nodes().size(), 1u);
  TreeConfig fine;
  const auto full = train_tree(ds, fine, rng);
  coarse.min_split_size = 50;
  EXPECT_LT(train_tree(ds, coarse, rng).nodes().size(), full.nodes().size());
}

TEST(DecisionTree, FitsTrainingDataWhenUnconstrained) {
  const auto ds = fixtures::grouped_rows(200, 5);
  Rng rng(2);
  EXPECT_DOUBLE_EQ(accuracy_on(train_tree(ds, TreeConfig{}, rng), ds), 1.0);
}

TEST(DecisionTree, ConstantFeaturesDoNotUseUpFeatureAllowance) {
  // Feature 0 is constant; with one feature per split the tree must still
  // find the informative feature 1.
  const Dataset ds({"c", "x"}, {1, 0.1, 1, 0.2, 1, 0.8, 1, 0.9}, std::vector<int>{0, 0, 1, 1});
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng(s);
    TreeConfig cfg;
    cfg.features_per_split = 1;
    EXPECT_DOUBLE_EQ(accuracy_on(train_tree(ds, cfg, rng), ds), 1.0);
  }
}

TEST(DecisionTree, RejectsEmptyOrUnlabeled) {
  Rng rng(1);
  EXPECT_THROW(train_tree(fixtures::uniform_rows(5, 2, 1), TreeConfig{}, rng), ContractError);
  const auto ds = xor_data();
  EXPECT_THROW(DecisionTree::train(ds, std::span<const std::size_t>{}, TreeConfig{}, rng),
               ContractError);
}

TEST(RandomForest, DefaultsAndProbabilityRange) {
  const auto ds = fixtures::grouped_rows(300, 3);
  ForestConfig cfg;
  cfg.seed = 4;
  const auto rf = train_forest(ds, cfg);
  EXPECT_EQ(rf->trees().size(), 50u);
  EXPECT_EQ(rf->feature_count(), 3u);
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    const double p = rf->predict_proba(ds.row(i));
    ASSERT_GE(p, 0.0);
    ASSERT_LE(p, 1.0);
  }
  EXPECT_GT(accuracy_on(*rf, ds), 0.9);
}

TEST(RandomForest, ProbaIsMeanOfTreeProbas) {
  const auto ds = fixtures::grouped_rows(100, 3);
  ForestConfig cfg;
  cfg.trees = 7;
  const auto rf = train_forest(ds, cfg);
  const auto row = ds.row(5);
  double s = 0;
  for (const auto& t : rf->trees()) s += t.predict_proba(row);
  EXPECT_DOUBLE_EQ(rf->predict_proba(row), s / 7);
}

TEST(RandomForest, GeneralizesOnHeldOutRows) {
  const auto train = fixtures::grouped_rows(600, 10);
  const auto test = fixtures::grouped_rows(300, 11);
  ForestConfig cfg;
  cfg.seed = 1;
  // Labels follow feature a with 10% noise.
  EXPECT_GT(accuracy_on(*train_forest(train, cfg), test), 0.8);
}

TEST(RandomForest, SameSeedSameForestDifferentSeedDifferentForest) {
  const auto ds = fixtures::grouped_rows(200, 6);
  const auto probe = fixtures::grouped_rows(50, 7);
  ForestConfig a;
  a.seed = 9;
  ForestConfig b = a;
  b.seed = 10;
  const auto fa = train_forest(ds, a), fa2 = train_forest(ds, a), fb = train_forest(ds, b);
  bool differs = false;
  for (std::size_t i = 0; i < probe.rows(); ++i) {
    EXPECT_EQ(fa->predict_proba(probe.row(i)), fa2->predict_proba(probe.row(i)));
    differs |= fa->predict_proba(probe.row(i)) != fb->predict_proba(probe.row(i));
  }
  EXPECT_TRUE(differs);
}

// Without bootstrap every fully grown tree is pure on the training rows, so
// all trees agree there even if they broke equal-gain ties differently.
TEST(RandomForest, WithoutBootstrapTreesAgreeOnTrainingRows) {
  const auto ds = fixtures::grouped_rows(100, 8);
  ForestConfig cfg;
  cfg.trees = 5;
  cfg.bootstrap = false;
  cfg.features_per_split = 3;
  const auto rf = train_forest(ds, cfg);
  for (std::size_t i = 0; i < ds.rows(); ++i)
    for (const auto& t : rf->trees())
      EXPECT_DOUBLE_EQ(t.predict_proba(ds.row(i)), static_cast<double>(ds.labels()[i]));
}

TEST(RandomForest, RejectsBadConfig) {
  const auto ds = fixtures::grouped_rows(20, 1);
  ForestConfig none;
  none.trees = 0;
  EXPECT_THROW(train_forest(ds, none), ContractError);
  ForestConfig wide;
  wide.features_per_split = 4;
  EXPECT_THROW(train_forest(ds, wide), ContractError);
  ForestConfig narrow;
  narrow.features_per_split = 0;
  EXPECT_THROW(train_forest(ds, narrow), ContractError);
  EXPECT_THROW(train_forest(ds.subset(std::vector<std::size_t>{0}), ForestConfig{}),
               ContractError);
}
