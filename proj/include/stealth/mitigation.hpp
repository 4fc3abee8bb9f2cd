#pragma once

// Simplified bias-mitigation baselines. Each follows a one-paragraph
// description of the original method and is not a replication of its
// published code:
//
//   FairMASK   - a tree predicts the protected attribute from the other
//                features; at inference the query's protected value is
//                replaced by that prediction.
//   Fair-SMOTE - situation testing removes rows whose prediction flips with
//                the protected value, then the four (group x label)
//                subgroups are oversampled by duplication to equal size.
//   MAAT       - equal-weight average of a performance model (plain data)
//                and a fairness model (subgroup-balanced data).

#include <algorithm>
#include <array>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "stealth/data.hpp"
#include "stealth/error.hpp"
#include "stealth/learners.hpp"
#include "stealth/random.hpp"

namespace stealth {

enum class MitigationKind { fairmask, fair_smote, maat };

inline constexpr std::string_view mitigation_name(MitigationKind k) {
  switch (k) {
    case MitigationKind::fairmask: return "fairmask";
    case MitigationKind::fair_smote: return "fair_smote";
    case MitigationKind::maat: return "maat";
  }
  return "?";
}

class MitigatedPipeline : public Predictor {
 public:
  MitigatedPipeline(MitigationKind kind, std::string protected_name, std::size_t features)
      : kind_(kind), protected_(std::move(protected_name)), features_(features) {}

  MitigationKind kind() const { return kind_; }
  const std::string& protected_attribute() const { return protected_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  std::size_t feature_count() const override { return features_; }

 protected:
  std::vector<std::string> warnings_;

 private:
  MitigationKind kind_;
  std::string protected_;
  std::size_t features_;
};

class FairMaskPipeline final : public MitigatedPipeline {
 public:
  FairMaskPipeline(std::string protected_name, std::size_t column,
                   std::shared_ptr<const DecisionTree> mask, PredictorPtr model)
      : MitigatedPipeline(MitigationKind::fairmask, std::move(protected_name),
                          model->feature_count()),
        column_(column),
        mask_(std::move(mask)),
        model_(std::move(model)) {}

  double predict_proba(std::span<const double> row) const override {
    std::vector<double> masked(row.begin(), row.end());
    masked[column_] = static_cast<double>(mask_->predict(masked));
    return model_->predict_proba(masked);
  }

  const DecisionTree& mask() const { return *mask_; }

 private:
  std::size_t column_;
  std::shared_ptr<const DecisionTree> mask_;
  PredictorPtr model_;
};

class FairSmotePipeline final : public MitigatedPipeline {
 public:
  FairSmotePipeline(std::string protected_name, PredictorPtr model, std::size_t removed,
                    std::array<std::size_t, 4> balanced_counts, std::vector<std::string> warnings)
      : MitigatedPipeline(MitigationKind::fair_smote, std::move(protected_name),
                          model->feature_count()),
        model_(std::move(model)),
        removed_(removed),
        balanced_(balanced_counts) {
    warnings_ = std::move(warnings);
  }

  double predict_proba(std::span<const double> row) const override {
    return model_->predict_proba(row);
  }

  /// Rows dropped by situation testing.
  std::size_t removed_rows() const { return removed_; }
  /// Subgroup sizes after balancing, indexed by 2 * privileged + label.
  const std::array<std::size_t, 4>& balanced_counts() const { return balanced_; }

 private:
  PredictorPtr model_;
  std::size_t removed_;
  std::array<std::size_t, 4> balanced_;
};

class MaatPipeline final : public MitigatedPipeline {
 public:
  MaatPipeline(std::string protected_name, PredictorPtr performance, PredictorPtr fairness)
      : MitigatedPipeline(MitigationKind::maat, std::move(protected_name),
                          performance->feature_count()),
        performance_(std::move(performance)),
        fairness_(std::move(fairness)) {}

  double predict_proba(std::span<const double> row) const override {
    return 0.5 * (performance_->predict_proba(row) + fairness_->predict_proba(row));
  }

  const Predictor& performance_model() const { return *performance_; }
  const Predictor& fairness_model() const { return *fairness_; }

 private:
  PredictorPtr performance_;
  PredictorPtr fairness_;
};

namespace detail {

inline void require_both_groups(const Dataset& train, std::string_view protected_name) {
  const auto& g = train.group(protected_name);
  const auto priv = std::count(g.privileged.begin(), g.privileged.end(), std::uint8_t{1});
  if (priv == 0 || priv == static_cast<std::ptrdiff_t>(g.privileged.size()))
    throw ContractError("mitigation needs both protected groups in the training data");
}

}  // namespace detail

inline std::shared_ptr<const FairMaskPipeline> fairmask_train(const Dataset& train,
                                                             std::string_view protected_name,
                                                             const ForestConfig& cfg) {
  const auto& g = train.group(protected_name);
  // The mask tree sees the protected column zeroed out, so it can only split
  // on the other features.
  std::vector<double> v(train.values().begin(), train.values().end());
  for (std::size_t i = 0; i < train.rows(); ++i) v[i * train.cols() + g.column] = 0.0;
  std::vector<int> target(g.privileged.begin(), g.privileged.end());
  const Dataset mask_data(train.feature_names(), std::move(v), std::move(target));
  TreeConfig tc;
  tc.max_depth = cfg.max_depth;
  tc.min_split_size = cfg.min_split_size;
  Rng rng = make_rng(cfg.seed, 0x6d61736bULL);
  auto mask = std::make_shared<const DecisionTree>(train_tree(mask_data, tc, rng));
  return std::make_shared<const FairMaskPipeline>(std::string(protected_name), g.column,
                                                  std::move(mask), train_forest(train, cfg));
}

/// Subgroup index 2 * privileged + label.
inline std::array<std::vector<std::size_t>, 4> subgroups(const Dataset& ds,
                                                         std::string_view protected_name) {
  const auto& g = ds.group(protected_name);
  const auto y = ds.labels();
  std::array<std::vector<std::size_t>, 4> out;
  for (std::size_t i = 0; i < ds.rows(); ++i) out[2 * g.privileged[i] + y[i]].push_back(i);
  return out;
}

/// Oversamples each nonempty (group x label) subgroup, by uniform duplication,
/// up to the size of the largest one. Empty subgroups are skipped and
/// reported through `warnings`.
inline Dataset balance_subgroups(const Dataset& ds, std::string_view protected_name, Rng& rng,
                                 std::vector<std::string>& warnings) {
  const auto groups = subgroups(ds, protected_name);
  std::size_t target = 0;
  for (const auto& g : groups) target = std::max(target, g.size());
  std::vector<std::size_t> rows;
  for (std::size_t k = 0; k < 4; ++k) {
    const auto& g = groups[k];
    if (g.empty()) {
      warnings.push_back("subgroup (privileged=" + std::to_string(k / 2) +
                         ", label=" + std::to_string(k % 2) + ") is empty; not balanced");
      continue;
    }
    rows.insert(rows.end(), g.begin(), g.end());
    for (std::size_t extra = g.size(); extra < target; ++extra)
      rows.push_back(g[uniform_index(rng, g.size())]);
  }
  return ds.subset(rows);
}

/// Rows whose predicted label changes when only the protected flag is toggled.
inline std::vector<std::size_t> situation_test_flips(const Dataset& ds, std::size_t column,
                                                     const Predictor& model) {
  std::vector<std::size_t> flips;
  std::vector<double> toggled(ds.cols());
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    const auto r = ds.row(i);
    std::copy(r.begin(), r.end(), toggled.begin());
    toggled[column] = 1.0 - toggled[column];
    if (model.predict(r) != model.predict(toggled)) flips.push_back(i);
  }
  return flips;
}

inline std::shared_ptr<const FairSmotePipeline> fair_smote_train(const Dataset& train,
                                                                std::string_view protected_name,
                                                                const ForestConfig& cfg) {
  detail::require_both_groups(train, protected_name);
  const auto& g = train.group(protected_name);
  const auto provisional = train_forest(train, cfg);
  const auto flips = situation_test_flips(train, g.column, *provisional);
  std::vector<std::size_t> keep;
  std::size_t f = 0;
  for (std::size_t i = 0; i < train.rows(); ++i) {
    if (f < flips.size() && flips[f] == i) {
      ++f;
      continue;
    }
    keep.push_back(i);
  }
  std::vector<std::string> warnings;
  Rng rng = make_rng(cfg.seed, 0x736d6f74ULL);
  const Dataset balanced = balance_subgroups(train.subset(keep), protected_name, rng, warnings);
  std::array<std::size_t, 4> counts{};
  const auto groups = subgroups(balanced, protected_name);
  for (std::size_t k = 0; k < 4; ++k) counts[k] = groups[k].size();
  ForestConfig final_cfg = cfg;
  final_cfg.seed = derive_seed(cfg.seed, 1);
  return std::make_shared<const FairSmotePipeline>(std::string(protected_name),
                                                   train_forest(balanced, final_cfg),
                                                   flips.size(), counts, std::move(warnings));
}

inline std::shared_ptr<const MaatPipeline> maat_train(const Dataset& train,
                                                     std::string_view protected_name,
                                                     const ForestConfig& cfg) {
  detail::require_both_groups(train, protected_name);
  std::vector<std::string> warnings;
  Rng rng = make_rng(cfg.seed, 0x6d616174ULL);
  const Dataset balanced = balance_subgroups(train, protected_name, rng, warnings);
  ForestConfig fair_cfg = cfg;
  fair_cfg.seed = derive_seed(cfg.seed, 2);
  return std::make_shared<const MaatPipeline>(std::string(protected_name),
                                              train_forest(train, cfg),
                                              train_forest(balanced, fair_cfg));
}

}  // namespace stealth
