#pragma once

// A reconstruction of the "lying" scaffold attack on perturbation-based
// explainers. An out-of-distribution detector learns to tell real rows from
// explainer-style perturbations; the scaffold answers real-looking queries
// with a biased model and everything else with an innocuous decoy.

#include <algorithm>
#include <atomic>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "stealth/data.hpp"
#include "stealth/error.hpp"
#include "stealth/learners.hpp"
#include "stealth/random.hpp"

namespace stealth {

struct PerturbConfig {
  std::size_t per_row = 1;
  /// Noise std as a multiple of each column's std.
  double noise_scale = 1.0;
  std::uint64_t seed = 0;
};

/// Writes `x` plus independent Gaussian noise (std = scale * stds[j]) into
/// `out`, clipped to [0,1]. Columns with zero std are copied unchanged.
inline void perturb_row(std::span<const double> x, std::span<const double> stds, double scale,
                        Rng& rng, std::span<double> out) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double sd = scale * stds[j];
    if (sd > 0.0)
      out[j] = std::clamp(x[j] + sd * normal(rng), 0.0, 1.0);
    else
      out[j] = x[j];
  }
}

/// `per_row` noisy copies of every row, in row order. The output carries no
/// labels and no group tags.
inline Dataset gen_perturbations(const Dataset& ds, const PerturbConfig& cfg) {
  if (ds.rows() < 2) throw ContractError("gen_perturbations: needs at least 2 rows");
  if (!(cfg.noise_scale > 0.0)) throw ContractError("gen_perturbations: noise scale must be > 0");
  const auto stds = ds.column_std();
  Rng rng(cfg.seed);
  std::vector<double> values(ds.rows() * cfg.per_row * ds.cols());
  std::size_t k = 0;
  for (std::size_t i = 0; i < ds.rows(); ++i)
    for (std::size_t c = 0; c < cfg.per_row; ++c, ++k)
      perturb_row(ds.row(i), stds, cfg.noise_scale, rng,
                  std::span<double>(values.data() + k * ds.cols(), ds.cols()));
  return Dataset(ds.feature_names(), std::move(values));
}

/// Forest separating real rows (label 0) from fake rows (label 1).
inline std::shared_ptr<const RandomForest> train_ood_detector(const Dataset& real,
                                                              const Dataset& fake,
                                                              const ForestConfig& cfg) {
  if (real.empty() || fake.empty()) throw ContractError("train_ood_detector: empty input");
  if (real.cols() != fake.cols()) throw ContractError("train_ood_detector: column mismatch");
  std::vector<double> v(real.values().begin(), real.values().end());
  v.insert(v.end(), fake.values().begin(), fake.values().end());
  std::vector<int> y(real.rows(), 0);
  y.resize(real.rows() + fake.rows(), 1);
  return train_forest(Dataset(real.feature_names(), std::move(v), std::move(y)), cfg);
}

/// Favorable outcome exactly for the privileged group (column value >= 0.5).
class BiasedRuleModel final : public Predictor {
 public:
  BiasedRuleModel(std::size_t column, std::size_t features)
      : column_(column), features_(features) {}
  double predict_proba(std::span<const double> row) const override {
    return row[column_] >= 0.5 ? 1.0 : 0.0;
  }
  std::size_t feature_count() const override { return features_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t column_;
  std::size_t features_;
};

/// Favorable outcome iff one non-protected feature reaches its training median.
class InnocuousRuleModel final : public Predictor {
 public:
  InnocuousRuleModel(std::size_t column, double threshold, std::size_t features)
      : column_(column), threshold_(threshold), features_(features) {}
  double predict_proba(std::span<const double> row) const override {
    return row[column_] >= threshold_ ? 1.0 : 0.0;
  }
  std::size_t feature_count() const override { return features_; }
  std::size_t column() const { return column_; }
  double threshold() const { return threshold_; }

 private:
  std::size_t column_;
  double threshold_;
  std::size_t features_;
};

inline std::shared_ptr<const BiasedRuleModel> make_biased_model(const Dataset& ds,
                                                                std::string_view protected_name) {
  const auto& g = ds.group(protected_name);  // throws for unknown attributes
  return std::make_shared<const BiasedRuleModel>(g.column, ds.cols());
}

inline double median_of(std::vector<double> v) {
  if (v.empty()) throw ContractError("median of an empty sample");
  const auto mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

inline std::shared_ptr<const InnocuousRuleModel> make_innocuous_model(
    const Dataset& train, std::string_view legit_feature) {
  const auto col = train.feature_index(legit_feature);
  if (!col) throw ContractError("unknown feature '" + std::string(legit_feature) + "'");
  if (train.is_protected_column(*col))
    throw ContractError("innocuous feature '" + std::string(legit_feature) + "' is protected");
  std::vector<double> v;
  v.reserve(train.rows());
  for (std::size_t i = 0; i < train.rows(); ++i) v.push_back(train.at(i, *col));
  return std::make_shared<const InnocuousRuleModel>(*col, median_of(std::move(v)), train.cols());
}

/// Non-protected feature with the largest absolute correlation with the
/// label; the default decoy feature for real datasets.
inline std::string most_label_correlated_feature(const Dataset& train) {
  const auto y = train.labels();
  const double n = static_cast<double>(train.rows());
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  std::optional<std::size_t> best;
  double best_r = -1.0;
  for (std::size_t j = 0; j < train.cols(); ++j) {
    if (train.is_protected_column(j)) continue;
    double mx = 0;
    for (std::size_t i = 0; i < train.rows(); ++i) mx += train.at(i, j);
    mx /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < train.rows(); ++i) {
      const double dx = train.at(i, j) - mx, dy = y[i] - my;
      sxy += dx * dy;
      sxx += dx * dx;
      syy += dy * dy;
    }
    const double r = (sxx > 0 && syy > 0) ? std::abs(sxy) / std::sqrt(sxx * syy) : 0.0;
    if (r > best_r) {
      best_r = r;
      best = j;
    }
  }
  if (!best) throw ContractError("no non-protected feature available for the decoy model");
  return train.feature_names()[*best];
}

/// Routes each query: detector says out-of-distribution -> innocuous model,
/// otherwise -> biased model. Counts how many queries went each way.
class Scaffold final : public Predictor {
 public:
  Scaffold(PredictorPtr ood_detector, PredictorPtr biased, PredictorPtr innocuous)
      : detector_(std::move(ood_detector)),
        biased_(std::move(biased)),
        innocuous_(std::move(innocuous)) {
    const auto f = detector_->feature_count();
    if (biased_->feature_count() != f || innocuous_->feature_count() != f)
      throw ContractError("scaffold: inner models disagree on feature count");
  }

  double predict_proba(std::span<const double> row) const override {
    if (detector_->predict(row) == 1) {
      to_innocuous_.fetch_add(1, std::memory_order_relaxed);
      return innocuous_->predict_proba(row);
    }
    to_biased_.fetch_add(1, std::memory_order_relaxed);
    return biased_->predict_proba(row);
  }
  std::size_t feature_count() const override { return detector_->feature_count(); }

  const PredictorPtr& detector() const { return detector_; }
  const PredictorPtr& biased() const { return biased_; }
  const PredictorPtr& innocuous() const { return innocuous_; }

  std::size_t routed_to_biased() const { return to_biased_.load(); }
  std::size_t routed_to_innocuous() const { return to_innocuous_.load(); }
  void reset_counters() const {
    to_biased_.store(0);
    to_innocuous_.store(0);
  }

 private:
  PredictorPtr detector_;
  PredictorPtr biased_;
  PredictorPtr innocuous_;
  mutable std::atomic<std::size_t> to_biased_{0};
  mutable std::atomic<std::size_t> to_innocuous_{0};
};

struct ScaffoldConfig {
  /// Each round pairs every real row with one fresh perturbation of it, so
  /// the detector always sees a 50/50 real/fake mix.
  std::size_t rounds = 3;
  /// Detector forest. A larger minimum split keeps it from memorizing the
  /// exact real rows, which would flag unseen real rows as fake.
  ForestConfig detector = [] {
    ForestConfig f;
    f.min_split_size = 30;
    return f;
  }();
};

struct TrainedScaffold {
  std::shared_ptr<const Scaffold> scaffold;
  /// Detector accuracy on held-out real rows (20%) and their perturbations.
  double detector_accuracy = 0.0;
};

namespace detail {

// `rounds` copies of `real` stacked on `rounds` perturbations of it.
inline std::pair<Dataset, Dataset> real_fake_mix(const Dataset& real, std::span<const double> stds,
                                                 const PerturbConfig& perturb, std::size_t rounds,
                                                 std::uint64_t stream) {
  std::vector<double> r, f;
  r.reserve(rounds * real.values().size());
  f.resize(rounds * real.values().size());
  Rng rng = make_rng(perturb.seed, stream);
  std::size_t k = 0;
  for (std::size_t round = 0; round < rounds; ++round)
    for (std::size_t i = 0; i < real.rows(); ++i, ++k) {
      const auto row = real.row(i);
      r.insert(r.end(), row.begin(), row.end());
      perturb_row(row, stds, perturb.noise_scale, rng,
                  std::span<double>(f.data() + k * real.cols(), real.cols()));
    }
  return {Dataset(real.feature_names(), std::move(r)), Dataset(real.feature_names(), std::move(f))};
}

}  // namespace detail

/// Builds the full attack from the adversary's own data. A detector fit on
/// 80% of the real rows is measured on the other 20% (and perturbations of
/// them); the deployed detector is then refit on every real row.
/// Perturbations use the column stds of `real`, the same statistics an
/// explainer working from this data would use.
inline TrainedScaffold train_scaffold(const Dataset& real, std::string_view protected_name,
                                      std::string_view legit_feature,
                                      const PerturbConfig& perturb, const ScaffoldConfig& cfg) {
  if (real.rows() < 5) throw ContractError("train_scaffold: needs at least 5 real rows");
  if (cfg.rounds == 0) throw ContractError("train_scaffold: rounds must be >= 1");
  if (!(perturb.noise_scale > 0.0)) throw ContractError("train_scaffold: noise scale must be > 0");
  const auto stds = real.column_std();
  const Dataset plain = real.without_labels();

  std::vector<std::size_t> idx(real.rows());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng = make_rng(perturb.seed, 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto cut = static_cast<std::ptrdiff_t>(real.rows() - real.rows() / 5);
  const std::vector<std::size_t> fit_rows(idx.begin(), idx.begin() + cut);
  const std::vector<std::size_t> hold_rows(idx.begin() + cut, idx.end());

  const auto [fit_real, fit_fake] =
      detail::real_fake_mix(plain.subset(fit_rows), stds, perturb, cfg.rounds, 1);
  const auto probe = train_ood_detector(fit_real, fit_fake, cfg.detector);
  const auto [hold_real, hold_fake] =
      detail::real_fake_mix(plain.subset(hold_rows), stds, perturb, 1, 2);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < hold_real.rows(); ++i) hit += probe->predict(hold_real.row(i)) == 0;
  for (std::size_t i = 0; i < hold_fake.rows(); ++i) hit += probe->predict(hold_fake.row(i)) == 1;

  TrainedScaffold out;
  out.detector_accuracy =
      static_cast<double>(hit) / static_cast<double>(hold_real.rows() + hold_fake.rows());
  const auto [all_real, all_fake] = detail::real_fake_mix(plain, stds, perturb, cfg.rounds, 3);
  out.scaffold = std::make_shared<const Scaffold>(train_ood_detector(all_real, all_fake, cfg.detector),
                                                  make_biased_model(real, protected_name),
                                                  make_innocuous_model(real, legit_feature));
  return out;
}

}  // namespace stealth
