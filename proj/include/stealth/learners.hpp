#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "stealth/data.hpp"
#include "stealth/error.hpp"
#include "stealth/random.hpp"

namespace stealth {

/// Black-box binary classifier. Label 1 is the favorable outcome.
///
/// `predict` is derived from `predict_proba`: a row gets label 1 only when
/// the probability is strictly above 0.5, so an exact 0.5 tie resolves to the
/// unfavorable label.
class Predictor {
 public:
  virtual ~Predictor() = default;

  virtual double predict_proba(std::span<const double> row) const = 0;
  virtual std::size_t feature_count() const = 0;

  int predict(std::span<const double> row) const { return predict_proba(row) > 0.5 ? 1 : 0; }
};

using PredictorPtr = std::shared_ptr<const Predictor>;

inline std::vector<int> predict_all(const Predictor& model, const Dataset& ds) {
  std::vector<int> out;
  out.reserve(ds.rows());
  for (std::size_t i = 0; i < ds.rows(); ++i) out.push_back(model.predict(ds.row(i)));
  return out;
}

inline double accuracy_on(const Predictor& model, const Dataset& ds) {
  const auto truth = ds.labels();
  std::size_t hit = 0;
  for (std::size_t i = 0; i < ds.rows(); ++i) hit += model.predict(ds.row(i)) == truth[i];
  return ds.rows() ? static_cast<double>(hit) / static_cast<double>(ds.rows()) : 0.0;
}

class ConstantPredictor final : public Predictor {
 public:
  ConstantPredictor(double proba, std::size_t features) : proba_(proba), features_(features) {}
  double predict_proba(std::span<const double>) const override { return proba_; }
  std::size_t feature_count() const override { return features_; }

 private:
  double proba_;
  std::size_t features_;
};

/// Forwards to another predictor and counts every call. Wrapping the black
/// box in one of these is how query budgets are measured.
class CountingPredictor final : public Predictor {
 public:
  explicit CountingPredictor(PredictorPtr inner) : inner_(std::move(inner)) {}

  double predict_proba(std::span<const double> row) const override {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return inner_->predict_proba(row);
  }
  std::size_t feature_count() const override { return inner_->feature_count(); }

  std::size_t calls() const { return calls_.load(); }
  void reset() { calls_.store(0); }

 private:
  PredictorPtr inner_;
  mutable std::atomic<std::size_t> calls_{0};
};

struct TreeConfig {
  std::optional<std::size_t> max_depth;
  /// Nodes with fewer rows than this are not split.
  std::size_t min_split_size = 2;
  /// Candidate features drawn per node; all features when unset.
  std::optional<std::size_t> features_per_split;
};

/// CART classification tree grown greedily on weighted Gini impurity.
class DecisionTree final : public Predictor {
 public:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;  // go left when value <= threshold
    int left = -1;
    int right = -1;
    double proba = 0.0;  // fraction of label 1 among training rows here
  };

  double predict_proba(std::span<const double> row) const override {
    std::size_t id = 0;
    while (nodes_[id].feature >= 0) {
      const auto& n = nodes_[id];
      id = static_cast<std::size_t>(row[static_cast<std::size_t>(n.feature)] <= n.threshold
                                        ? n.left
                                        : n.right);
    }
    return nodes_[id].proba;
  }
  std::size_t feature_count() const override { return features_; }

  const std::vector<Node>& nodes() const { return nodes_; }
  std::size_t depth() const { return depth_of(0); }

  /// Trains on `sample` (row indices into `ds`, repeats allowed).
  static DecisionTree train(const Dataset& ds, std::span<const std::size_t> sample,
                            const TreeConfig& cfg, Rng& rng) {
    if (sample.empty()) throw ContractError("train_tree: no training rows");
    const auto labels = ds.labels();
    DecisionTree tree;
    tree.features_ = ds.cols();
    const std::size_t f = ds.cols();
    const std::size_t mtry = std::clamp<std::size_t>(cfg.features_per_split.value_or(f), 1, f);
    Builder b{ds, labels, cfg, mtry, rng, tree.nodes_};
    std::vector<std::size_t> rows(sample.begin(), sample.end());
    b.grow(rows, 0);
    return tree;
  }

 private:
  std::size_t depth_of(std::size_t id) const {
    const auto& n = nodes_[id];
    if (n.feature < 0) return 0;
    return 1 + std::max(depth_of(static_cast<std::size_t>(n.left)),
                        depth_of(static_cast<std::size_t>(n.right)));
  }

  struct Builder {
    const Dataset& ds;
    std::span<const int> labels;
    const TreeConfig& cfg;
    std::size_t mtry;
    Rng& rng;
    std::vector<Node>& nodes;

    struct Split {
      std::size_t feature = 0;
      double threshold = 0.0;
      double impurity = 0.0;
    };

    static double gini(double pos, double n) {
      if (n <= 0) return 0.0;
      const double p = pos / n;
      return 2.0 * p * (1.0 - p);
    }

    // Best threshold on one feature, or nullopt if the feature is constant
    // over `rows`.
    std::optional<Split> best_on(std::size_t feature, const std::vector<std::size_t>& rows,
                                 std::vector<std::pair<double, int>>& buf) const {
      buf.clear();
      for (auto r : rows) buf.emplace_back(ds.at(r, feature), labels[r]);
      std::sort(buf.begin(), buf.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      if (!(buf.front().first < buf.back().first)) return std::nullopt;
      const double n = static_cast<double>(buf.size());
      double total_pos = 0;
      for (const auto& [v, y] : buf) total_pos += y;
      double left_pos = 0;
      std::optional<Split> best;
      for (std::size_t k = 0; k + 1 < buf.size(); ++k) {
        left_pos += buf[k].second;
        if (!(buf[k].first < buf[k + 1].first)) continue;
        const double nl = static_cast<double>(k + 1), nr = n - nl;
        const double imp =
            (nl * gini(left_pos, nl) + nr * gini(total_pos - left_pos, nr)) / n;
        if (!best || imp < best->impurity) {
          double mid = 0.5 * (buf[k].first + buf[k + 1].first);
          // Guard against the midpoint rounding up onto the right value.
          if (!(mid < buf[k + 1].first)) mid = buf[k].first;
          best = Split{feature, mid, imp};
        }
      }
      return best;
    }

    int grow(std::vector<std::size_t>& rows, std::size_t depth) {
      const int id = static_cast<int>(nodes.size());
      nodes.emplace_back();
      double pos = 0;
      for (auto r : rows) pos += labels[r];
      nodes.back().proba = pos / static_cast<double>(rows.size());

      const bool pure = pos == 0 || pos == static_cast<double>(rows.size());
      const bool too_small = rows.size() < cfg.min_split_size;
      const bool too_deep = cfg.max_depth && depth >= *cfg.max_depth;
      if (pure || too_small || too_deep) return id;

      // Visit features in random order until `mtry` non-constant ones were
      // evaluated; constant features do not use up the allowance.
      std::vector<std::size_t> order(ds.cols());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), rng);
      std::vector<std::pair<double, int>> buf;
      buf.reserve(rows.size());
      std::optional<Split> best;
      std::size_t visited = 0;
      for (auto f : order) {
        if (visited == mtry) break;
        const auto s = best_on(f, rows, buf);
        if (!s) continue;
        ++visited;
        if (!best || s->impurity < best->impurity) best = s;
      }
      if (!best) return id;

      std::vector<std::size_t> lo, hi;
      for (auto r : rows) (ds.at(r, best->feature) <= best->threshold ? lo : hi).push_back(r);
      rows.clear();
      rows.shrink_to_fit();
      const int left = grow(lo, depth + 1);
      const int right = grow(hi, depth + 1);
      auto& n = nodes[static_cast<std::size_t>(id)];
      n.feature = static_cast<int>(best->feature);
      n.threshold = best->threshold;
      n.left = left;
      n.right = right;
      return id;
    }
  };

  std::vector<Node> nodes_;
  std::size_t features_ = 0;
};

/// Trains a single tree on every row of a labeled dataset.
inline DecisionTree train_tree(const Dataset& ds, const TreeConfig& cfg, Rng& rng) {
  if (ds.rows() == 0) throw ContractError("train_tree: empty dataset");
  std::vector<std::size_t> rows(ds.rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return DecisionTree::train(ds, rows, cfg, rng);
}

struct ForestConfig {
  std::size_t trees = 50;
  std::optional<std::size_t> max_depth;
  std::size_t min_split_size = 2;
  /// Defaults to ceil(sqrt(feature count)).
  std::optional<std::size_t> features_per_split;
  bool bootstrap = true;
  std::uint64_t seed = 0;
};

class RandomForest final : public Predictor {
 public:
  double predict_proba(std::span<const double> row) const override {
    double s = 0.0;
    for (const auto& t : trees_) s += t.predict_proba(row);
    return s / static_cast<double>(trees_.size());
  }
  std::size_t feature_count() const override { return features_; }
  const std::vector<DecisionTree>& trees() const { return trees_; }

  /// Tree t draws its bootstrap sample and feature subsets from stream t of
  /// `cfg.seed`, so the forest depends only on (data order, seed).
  static RandomForest train(const Dataset& ds, const ForestConfig& cfg) {
    if (ds.rows() < 2) throw ContractError("train_forest: needs at least 2 labeled rows");
    if (cfg.trees == 0) throw ContractError("train_forest: tree count must be >= 1");
    const std::size_t f = ds.cols();
    TreeConfig tc;
    tc.max_depth = cfg.max_depth;
    tc.min_split_size = cfg.min_split_size;
    tc.features_per_split = cfg.features_per_split.value_or(
        static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(f)))));
    if (*tc.features_per_split < 1 || *tc.features_per_split > f)
      throw ContractError("train_forest: features per split must lie in [1, feature count]");

    RandomForest forest;
    forest.features_ = f;
    forest.trees_.reserve(cfg.trees);
    const std::size_t n = ds.rows();
    std::vector<std::size_t> sample(n);
    for (std::size_t t = 0; t < cfg.trees; ++t) {
      Rng rng = make_rng(cfg.seed, t);
      if (cfg.bootstrap) {
        for (auto& s : sample) s = uniform_index(rng, n);
      } else {
        std::iota(sample.begin(), sample.end(), std::size_t{0});
      }
      forest.trees_.push_back(DecisionTree::train(ds, sample, tc, rng));
    }
    return forest;
  }

 private:
  std::vector<DecisionTree> trees_;
  std::size_t features_ = 0;
};

inline std::shared_ptr<const RandomForest> train_forest(const Dataset& ds,
                                                        const ForestConfig& cfg) {
  return std::make_shared<const RandomForest>(RandomForest::train(ds, cfg));
}

}  // namespace stealth
