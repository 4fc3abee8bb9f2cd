#include <gtest/gtest.h>

#include "stealth/adversary.hpp"
#include "stealth/mitigation.hpp"
#include "support.hpp"

using namespace stealth;

namespace {

ForestConfig small_forest(std::uint64_t seed) {
  ForestConfig cfg;
  cfg.trees = 10;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST(FairMask, PredictionIgnoresTheProtectedValue) {
  const auto ds = synth_biased(600, 0.9, 0.05, 1).dataset;
  const auto fm = fairmask_train(ds, "sex", small_forest(2));
  EXPECT_EQ(fm->kind(), MitigationKind::fairmask);
  EXPECT_EQ(fm->protected_attribute(), "sex");
  Rng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> row(ds.cols());
    for (auto& x : row) x = uniform01(rng);
    row[0] = 0.0;
    const double p0 = fm->predict_proba(row);
    row[0] = 1.0;
    ASSERT_EQ(fm->predict_proba(row), p0);
  }
}

TEST(FairMask, MaskTreeNeverSplitsOnTheProtectedColumn) {
  const auto ds = fixtures::grouped_rows(300, 4);
  const auto fm = fairmask_train(ds, "g", small_forest(5));
  for (const auto& n : fm->mask().nodes()) EXPECT_NE(n.feature, 0);
  EXPECT_THROW(fairmask_train(ds, "a", small_forest(5)), ContractError);
}

TEST(Subgroups, IndexedByGroupAndLabel) {
  const Dataset ds({"g", "x"}, {1, 0, 1, 0, 0, 0, 0, 0, 1, 0},
                   std::vector<int>{1, 0, 0, 0, 1}, {GroupTags{"g", 0, {1, 1, 0, 0, 1}}});
  const auto s = subgroups(ds, "g");
  EXPECT_EQ(s[0], (std::vector<std::size_t>{2, 3}));
  EXPECT_EQ(s[1].size(), 0u);
  EXPECT_EQ(s[2], (std::vector<std::size_t>{1}));
  EXPECT_EQ(s[3], (std::vector<std::size_t>{0, 4}));
}

// Property: after balancing, every nonempty subgroup has the size of the
// largest input subgroup.
TEST(Balance, NonemptySubgroupsEndUpEqual) {
  Rng gen(7);
  for (int trial = 0; trial < 100; ++trial) {
    const auto ds = fixtures::grouped_rows(10 + uniform_index(gen, 200), gen());
    std::size_t largest = 0;
    for (const auto& g : subgroups(ds, "g")) largest = std::max(largest, g.size());
    std::vector<std::string> warnings;
    Rng rng(gen());
    const auto bal = balance_subgroups(ds, "g", rng, warnings);
    for (const auto& g : subgroups(bal, "g"))
      if (!g.empty()) {
        ASSERT_EQ(g.size(), largest);
      }
  }
}

TEST(Balance, EmptySubgroupIsReportedNotFilled) {
  const Dataset ds({"g", "x"}, {1, 0.1, 1, 0.2, 0, 0.3, 0, 0.4, 0, 0.5},
                   std::vector<int>{1, 1, 0, 0, 1}, {GroupTags{"g", 0, {1, 1, 0, 0, 0}}});
  std::vector<std::string> warnings;
  Rng rng(1);
  const auto bal = balance_subgroups(ds, "g", rng, warnings);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("privileged=1, label=0"), std::string::npos);
  const auto s = subgroups(bal, "g");
  EXPECT_EQ(s[0].size(), 2u);
  EXPECT_EQ(s[1].size(), 2u);
  EXPECT_EQ(s[2].size(), 0u);
  EXPECT_EQ(s[3].size(), 2u);
}

TEST(SituationTesting, FlagsEveryRowForAPurelyProtectedModel) {
  const auto ds = fixtures::grouped_rows(50, 2);
  const BiasedRuleModel biased(0, ds.cols());
  EXPECT_EQ(situation_test_flips(ds, 0, biased).size(), 50u);
  const ConstantPredictor flat(0.9, ds.cols());
  EXPECT_TRUE(situation_test_flips(ds, 0, flat).empty());
}

TEST(FairSmote, BalancedSubgroupCountsAreEqual) {
  const auto ds = synth_biased(800, 0.8, 0.05, 3).dataset;
  const auto fs = fair_smote_train(ds, "sex", small_forest(4));
  const auto& c = fs->balanced_counts();
  EXPECT_GT(c[0], 0u);
  EXPECT_EQ(c[0], c[1]);
  EXPECT_EQ(c[1], c[2]);
  EXPECT_EQ(c[2], c[3]);
  EXPECT_LE(fs->removed_rows(), ds.rows());
  EXPECT_EQ(fs->kind(), MitigationKind::fair_smote);
}

TEST(FairSmote, NeedsBothGroups) {
  const Dataset one_group({"g", "x"}, {1, 0.1, 1, 0.9, 1, 0.5}, std::vector<int>{0, 1, 1},
                          {GroupTags{"g", 0, {1, 1, 1}}});
  EXPECT_THROW(fair_smote_train(one_group, "g", small_forest(1)), ContractError);
  EXPECT_THROW(maat_train(one_group, "g", small_forest(1)), ContractError);
}

TEST(Maat, ProbabilityIsTheMeanOfItsTwoModels) {
  const auto ds = synth_biased(500, 0.8, 0.05, 6).dataset;
  const auto maat = maat_train(ds, "sex", small_forest(7));
  Rng rng(8);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> row(ds.cols());
    for (auto& x : row) x = uniform01(rng);
    const double expect =
        (maat->performance_model().predict_proba(row) + maat->fairness_model().predict_proba(row)) / 2;
    ASSERT_EQ(maat->predict_proba(row), expect);
  }
  EXPECT_EQ(maat->kind(), MitigationKind::maat);
  EXPECT_EQ(mitigation_name(maat->kind()), "maat");
}
