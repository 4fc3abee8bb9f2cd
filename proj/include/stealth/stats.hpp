#pragma once

// Nonparametric comparison of score samples: Cliff's delta, a pooled
// bootstrap test on the mean difference, Scott-Knott ranking, and the
// win/tie/loss bookkeeping used to summarize methods against a baseline.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stealth/error.hpp"
#include "stealth/metrics.hpp"
#include "stealth/random.hpp"

namespace stealth {

inline double median(std::span<const double> v) {
  if (v.empty()) throw ContractError("median of an empty sample");
  std::vector<double> s(v.begin(), v.end());
  std::sort(s.begin(), s.end());
  const auto n = s.size();
  return n % 2 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
}

inline double mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// (#{a > b} - #{a < b}) / (|A| |B|), counted with binary search over the
/// sorted B in O((|A| + |B|) log |B|).
inline double cliffs_delta(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw ContractError("cliffs_delta: empty sample");
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sb.begin(), sb.end());
  long long more = 0, less = 0;
  for (double x : a) {
    less += sb.end() - std::upper_bound(sb.begin(), sb.end(), x);
    more += std::lower_bound(sb.begin(), sb.end(), x) - sb.begin();
  }
  return static_cast<double>(more - less) /
         (static_cast<double>(a.size()) * static_cast<double>(b.size()));
}

struct SameConfig {
  /// |delta| below this is a negligible effect.
  double small_effect = 0.147;
  std::size_t resamples = 1000;
  double alpha = 0.05;
};

/// Two-sided pooled bootstrap on |mean(A) - mean(B)|. Significant when the
/// observed gap exceeds the (1 - alpha) quantile of the gaps between
/// resamples of sizes |A| and |B| drawn with replacement from A u B.
inline bool bootstrap_diff(std::span<const double> a, std::span<const double> b, Rng& rng,
                           std::size_t resamples = 1000, double alpha = 0.05) {
  if (a.empty() || b.empty()) throw ContractError("bootstrap_diff: empty sample");
  if (resamples == 0) throw ContractError("bootstrap_diff: resamples must be >= 1");
  const double observed = std::abs(mean(a) - mean(b));
  std::vector<double> pool(a.begin(), a.end());
  pool.insert(pool.end(), b.begin(), b.end());
  std::vector<double> gaps(resamples);
  for (auto& g : gaps) {
    double sa = 0, sb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) sa += pool[uniform_index(rng, pool.size())];
    for (std::size_t i = 0; i < b.size(); ++i) sb += pool[uniform_index(rng, pool.size())];
    g = std::abs(sa / static_cast<double>(a.size()) - sb / static_cast<double>(b.size()));
  }
  std::sort(gaps.begin(), gaps.end());
  auto k = static_cast<std::size_t>(std::ceil((1.0 - alpha) * static_cast<double>(resamples)));
  k = std::clamp<std::size_t>(k, 1, resamples);
  return observed > gaps[k - 1];
}

/// Statistically indistinguishable: negligible effect size, or no
/// significant bootstrap difference.
inline bool same(std::span<const double> a, std::span<const double> b, Rng& rng,
                 const SameConfig& cfg = {}) {
  if (std::abs(cliffs_delta(a, b)) < cfg.small_effect) return true;
  return !bootstrap_diff(a, b, rng, cfg.resamples, cfg.alpha);
}

struct NamedSample {
  std::string name;
  std::vector<double> values;
};

/// Scott-Knott clustering of samples. Samples are sorted by median, the
/// sorted list is split where the between-group sum of squares of means is
/// largest, and a split stands only if its halves are not `same`. Returns
/// one rank per input sample; rank 0 is the best cluster under `dir`.
inline std::vector<std::size_t> scott_knott(const std::vector<NamedSample>& groups,
                                            Direction dir, Rng& rng,
                                            const SameConfig& cfg = {}) {
  if (groups.empty()) throw ContractError("scott_knott: no groups");
  for (const auto& g : groups)
    if (g.values.empty()) throw ContractError("scott_knott: group '" + g.name + "' is empty");

  std::vector<std::size_t> order(groups.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> med(groups.size());
  for (std::size_t i = 0; i < groups.size(); ++i) med[i] = median(groups[i].values);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return med[x] < med[y]; });

  auto concat = [&](std::size_t lo, std::size_t hi) {
    std::vector<double> v;
    for (std::size_t k = lo; k < hi; ++k)
      v.insert(v.end(), groups[order[k]].values.begin(), groups[order[k]].values.end());
    return v;
  };

  // cluster id per position in `order`, ascending by median
  std::vector<std::size_t> cluster(groups.size(), 0);
  std::size_t next = 0;
  auto recurse = [&](auto&& self, std::size_t lo, std::size_t hi) -> void {
    const auto all = concat(lo, hi);
    const double mu = mean(all);
    std::size_t best_cut = 0;
    double best_ss = -1.0;
    for (std::size_t cut = lo + 1; cut < hi; ++cut) {
      const auto l = concat(lo, cut), r = concat(cut, hi);
      const double nl = static_cast<double>(l.size()), nr = static_cast<double>(r.size());
      const double ss = nl * std::pow(mean(l) - mu, 2) + nr * std::pow(mean(r) - mu, 2);
      if (ss > best_ss) {
        best_ss = ss;
        best_cut = cut;
      }
    }
    if (best_cut != 0) {
      const auto l = concat(lo, best_cut), r = concat(best_cut, hi);
      if (!same(l, r, rng, cfg)) {
        self(self, lo, best_cut);
        self(self, best_cut, hi);
        return;
      }
    }
    for (std::size_t k = lo; k < hi; ++k) cluster[k] = next;
    ++next;
  };
  recurse(recurse, 0, groups.size());

  std::vector<std::size_t> rank(groups.size());
  for (std::size_t k = 0; k < groups.size(); ++k) {
    const auto c = cluster[k];
    rank[order[k]] = dir == Direction::larger_better ? next - 1 - c : c;
  }
  return rank;
}

enum class Outcome { win, tie, loss };

inline constexpr std::string_view outcome_name(Outcome o) {
  return o == Outcome::win ? "win" : o == Outcome::tie ? "tie" : "loss";
}

/// Repeat scores of one method on one (run, metric) cell.
struct ScoreSample {
  std::string method;
  std::string run_id;
  std::string metric;
  std::vector<double> values;
};

/// Compares raw samples that are already on a comparable scale.
inline Outcome win_tie_loss(std::span<const double> method, std::span<const double> baseline,
                            Direction dir, Rng& rng, const SameConfig& cfg = {}) {
  if (same(method, baseline, rng, cfg)) return Outcome::tie;
  const double mm = median(method), mb = median(baseline);
  const bool better = dir == Direction::larger_better ? mm > mb : mm < mb;
  if (mm == mb) return Outcome::tie;
  return better ? Outcome::win : Outcome::loss;
}

/// Looks up the metric's registered direction and comparison key, then
/// compares. Throws ContractError for unknown metrics or mismatched cells.
inline Outcome win_tie_loss(const ScoreSample& method, const ScoreSample& baseline, Rng& rng,
                            const SameConfig& cfg = {}) {
  if (method.run_id != baseline.run_id || method.metric != baseline.metric)
    throw ContractError("win_tie_loss: samples belong to different cells");
  if (method.values.size() < 2 || baseline.values.size() < 2)
    throw ContractError("win_tie_loss: need at least 2 values per sample");
  const auto rule = rule_for(metric_from_name(method.metric));
  auto keyed = [&](const std::vector<double>& v) {
    std::vector<double> out;
    out.reserve(v.size());
    for (double x : v) out.push_back(rule.key(x));
    return out;
  };
  return win_tie_loss(keyed(method.values), keyed(baseline.values), rule.direction, rng, cfg);
}

struct Tally {
  std::size_t wins = 0, ties = 0, losses = 0;
  /// Cells skipped because a sample had too few defined values.
  std::size_t excluded = 0;

  std::size_t cells() const { return wins + ties + losses; }
  void add(Outcome o) { ++(o == Outcome::win ? wins : o == Outcome::tie ? ties : losses); }
};

/// Win/tie/loss counts per method against the baseline, split into the
/// performance panel (5 metrics) and the fairness panel (4 metrics).
class WtlTable {
 public:
  struct Row {
    std::string method;
    Tally performance;
    Tally fairness;
  };

  Row& row(const std::string& method) {
    for (auto& r : rows_)
      if (r.method == method) return r;
    rows_.push_back({method, {}, {}});
    return rows_.back();
  }
  const std::vector<Row>& rows() const { return rows_; }
  bool empty() const { return rows_.empty(); }

  void write_csv(std::ostream& out) const {
    out << "method,panel,wins,losses,ties,wins_plus_ties,cells,excluded\n";
    for (const auto& r : rows_)
      for (const auto& [panel, t] :
           {std::pair<const char*, const Tally&>{"performance", r.performance},
            std::pair<const char*, const Tally&>{"fairness", r.fairness}})
        out << r.method << ',' << panel << ',' << t.wins << ',' << t.losses << ',' << t.ties
            << ',' << t.wins + t.ties << ',' << t.cells() << ',' << t.excluded << '\n';
  }

  /// Aligned text: one block per panel, columns Wins, Loses, Ties, Wins+Ties.
  void write_text(std::ostream& out) const {
    std::size_t width = 6;
    for (const auto& r : rows_) width = std::max(width, r.method.size());
    char buf[160];
    for (int panel = 0; panel < 2; ++panel) {
      out << (panel == 0 ? "Performance (accuracy, recall, precision, F1, false alarm)\n"
                         : "Fairness (AOD, EOD, SPD, DI)\n");
      std::snprintf(buf, sizeof buf, "  %-*s %6s %6s %6s %12s\n", static_cast<int>(width),
                    "method", "wins", "loses", "ties", "wins+ties");
      out << buf;
      for (const auto& r : rows_) {
        const auto& t = panel == 0 ? r.performance : r.fairness;
        const std::string wt = std::to_string(t.wins + t.ties) + " / " + std::to_string(t.cells());
        std::snprintf(buf, sizeof buf, "  %-*s %6zu %6zu %6zu %12s\n", static_cast<int>(width),
                      r.method.c_str(), t.wins, t.losses, t.ties, wt.c_str());
        out << buf;
      }
      out << '\n';
    }
  }

 private:
  std::vector<Row> rows_;
};

}  // namespace stealth
