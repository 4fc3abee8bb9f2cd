#pragma once

// Local linear explanations in the style of LIME: sample noisy neighbours of
// an instance, ask the model about each, and fit a kernel-weighted ridge
// regression whose coefficients are the feature weights.

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stealth/adversary.hpp"
#include "stealth/cluster.hpp"
#include "stealth/data.hpp"
#include "stealth/error.hpp"
#include "stealth/learners.hpp"
#include "stealth/random.hpp"

namespace stealth {

struct ExplainConfig {
  /// Neighbourhood size, including the instance itself.
  std::size_t samples = 1000;
  /// Kernel width; 0.75 * sqrt(feature count) when unset.
  std::optional<double> kernel_width;
  double ridge = 1e-3;
  std::size_t top_k = 1;
  /// Neighbour noise, as a multiple of each column's std.
  double noise_scale = 1.0;
  std::uint64_t seed = 0;

  double width_for(std::size_t features) const {
    return kernel_width.value_or(0.75 * std::sqrt(static_cast<double>(features)));
  }
  void validate() const {
    if (samples < 10) throw ContractError("explain: need at least 10 samples");
    if (kernel_width && !(*kernel_width > 0)) throw ContractError("explain: kernel width <= 0");
    if (ridge < 0) throw ContractError("explain: ridge penalty must be >= 0");
    if (top_k == 0) throw ContractError("explain: top_k must be >= 1");
    if (!(noise_scale > 0)) throw ContractError("explain: noise scale must be > 0");
  }
};

struct Explanation {
  std::vector<double> weights;
  std::vector<double> row;
  std::size_t samples = 0;
};

/// exp(-d^2 / width^2); 1 at the instance itself.
inline double kernel_weight(double dist, double width) {
  return std::exp(-(dist * dist) / (width * width));
}

inline Explanation lime_explain(const Predictor& model, std::span<const double> x,
                                std::span<const double> stds, const ExplainConfig& cfg,
                                Rng& rng) {
  cfg.validate();
  const std::size_t f = x.size();
  if (stds.size() != f || model.feature_count() != f)
    throw ContractError("lime_explain: feature count mismatch");
  for (double v : x)
    if (!std::isfinite(v)) throw ContractError("lime_explain: non-finite instance");

  const std::size_t p = cfg.samples;
  const double width = cfg.width_for(f);
  Eigen::MatrixXd X(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(f));
  Eigen::VectorXd y(static_cast<Eigen::Index>(p)), w(static_cast<Eigen::Index>(p));
  std::vector<double> z(f);
  for (std::size_t i = 0; i < p; ++i) {
    if (i == 0)
      std::copy(x.begin(), x.end(), z.begin());
    else
      perturb_row(x, stds, cfg.noise_scale, rng, z);
    const auto r = static_cast<Eigen::Index>(i);
    for (std::size_t j = 0; j < f; ++j) X(r, static_cast<Eigen::Index>(j)) = z[j];
    y(r) = model.predict_proba(z);
    w(r) = kernel_weight(distance(x, z), width);
  }

  // Centering on the weighted means leaves the intercept unpenalized.
  const double wsum = w.sum();
  const Eigen::RowVectorXd mx = (w.transpose() * X) / wsum;
  const double my = w.dot(y) / wsum;
  const Eigen::MatrixXd Xc = X.rowwise() - mx;
  const Eigen::VectorXd yc = y.array() - my;
  const Eigen::MatrixXd Xw = Xc.array().colwise() * w.array();
  Eigen::MatrixXd A = Xw.transpose() * Xc;
  A.diagonal().array() += cfg.ridge;
  const Eigen::VectorXd b = Xw.transpose() * yc;

  Eigen::VectorXd beta;
  if (cfg.ridge > 0) {
    beta = A.ldlt().solve(b);
  } else {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    if (qr.rank() < A.rows())
      throw NumericError("lime_explain: singular normal matrix (set a ridge penalty)");
    beta = qr.solve(b);
  }

  Explanation e;
  e.row.assign(x.begin(), x.end());
  e.samples = p;
  e.weights.resize(f);
  for (std::size_t j = 0; j < f; ++j) {
    e.weights[j] = beta(static_cast<Eigen::Index>(j));
    if (!std::isfinite(e.weights[j])) throw NumericError("lime_explain: non-finite weight");
  }
  return e;
}

/// Weights at or below this magnitude are rounding noise from a flat response.
inline constexpr double kNegligibleWeight = 1e-12;

/// Indices of the k largest |weight| entries, ties to the smaller index.
/// Negligible weights never count as influential.
inline std::vector<std::size_t> top_features(std::span<const double> weights, std::size_t k) {
  std::vector<std::size_t> idx;
  for (std::size_t j = 0; j < weights.size(); ++j)
    if (std::abs(weights[j]) > kNegligibleWeight) idx.push_back(j);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(weights[a]) > std::abs(weights[b]);
  });
  if (idx.size() > k) idx.resize(k);
  return idx;
}

struct InfluenceSet {
  std::set<std::string> features;
  std::size_t k = 1;
  std::size_t rows = 0;

  std::string joined(char sep = ';') const {
    std::string s;
    for (const auto& f : features) {
      if (!s.empty()) s += sep;
      s += f;
    }
    return s;
  }
};

struct InfluenceResult {
  InfluenceSet set;
  std::vector<Explanation> explanations;
  /// How often each feature was among an instance's top-k.
  std::vector<std::size_t> top_counts;
};

/// Explains every test row (row i uses stream i of `cfg.seed`) and unions the
/// per-row top-k features.
inline InfluenceResult influential_set_detailed(const Predictor& model, const Dataset& test,
                                                std::span<const double> stds,
                                                const ExplainConfig& cfg) {
  if (test.empty()) throw ContractError("influential_set: empty test set");
  InfluenceResult out;
  out.set.k = cfg.top_k;
  out.set.rows = test.rows();
  out.top_counts.assign(test.cols(), 0);
  out.explanations.reserve(test.rows());
  for (std::size_t i = 0; i < test.rows(); ++i) {
    Rng rng = make_rng(cfg.seed, i);
    auto e = lime_explain(model, test.row(i), stds, cfg, rng);
    for (auto j : top_features(e.weights, cfg.top_k)) {
      out.set.features.insert(test.feature_names()[j]);
      ++out.top_counts[j];
    }
    out.explanations.push_back(std::move(e));
  }
  return out;
}

inline InfluenceSet influential_set(const Predictor& model, const Dataset& test,
                                    std::span<const double> stds, const ExplainConfig& cfg) {
  return influential_set_detailed(model, test, stds, cfg).set;
}

/// |A n B| / |A u B|, with two empty sets counting as identical.
inline double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  std::size_t common = 0;
  for (const auto& s : a) common += b.count(s);
  const std::size_t uni = a.size() + b.size() - common;
  return uni == 0 ? 1.0 : static_cast<double>(common) / static_cast<double>(uni);
}

inline double jaccard(const InfluenceSet& a, const InfluenceSet& b) {
  return jaccard(a.features, b.features);
}

/// CSV with columns row,feature,weight; one line per (row, feature).
inline void write_explanations_csv(std::ostream& out, std::span<const Explanation> explanations,
                                   const std::vector<std::string>& feature_names) {
  out << "row,feature,weight\n";
  char buf[64];
  for (std::size_t i = 0; i < explanations.size(); ++i)
    for (std::size_t j = 0; j < explanations[i].weights.size(); ++j) {
      std::snprintf(buf, sizeof buf, "%.9g", explanations[i].weights[j]);
      out << i << ',' << feature_names[j] << ',' << buf << '\n';
    }
}

}  // namespace stealth
