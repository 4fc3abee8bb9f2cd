#pragma once

// Performance and group-fairness scores for binary predictions. A score that
// would divide by zero comes back as std::nullopt ("n/a" in reports).

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "stealth/error.hpp"

namespace stealth {

using Score = std::optional<double>;

struct Confusion {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;

  std::size_t total() const { return tp + tn + fp + fn; }
  std::size_t predicted_positive() const { return tp + fp; }
  bool operator==(const Confusion&) const = default;
};

struct GroupConfusion {
  Confusion overall;
  Confusion privileged;
  Confusion unprivileged;
};

/// Label 1 is the positive (favorable) class.
inline GroupConfusion confusion(std::span<const int> pred, std::span<const int> truth,
                                std::span<const std::uint8_t> privileged) {
  if (pred.size() != truth.size() || pred.size() != privileged.size())
    throw ContractError("confusion: prediction, truth and group lengths differ");
  if (pred.empty()) throw ContractError("confusion: no rows");
  GroupConfusion g;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    auto tally = [&](Confusion& c) {
      if (pred[i] == 1)
        ++(truth[i] == 1 ? c.tp : c.fp);
      else
        ++(truth[i] == 1 ? c.fn : c.tn);
    };
    tally(g.overall);
    tally(privileged[i] ? g.privileged : g.unprivileged);
  }
  return g;
}

namespace detail {
inline Score ratio(double num, double den) {
  if (den == 0.0) return std::nullopt;
  return num / den;
}
inline Score minus(Score a, Score b) {
  if (!a || !b) return std::nullopt;
  return *a - *b;
}
}  // namespace detail

inline Score true_positive_rate(const Confusion& c) {
  return detail::ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
}
inline Score false_positive_rate(const Confusion& c) {
  return detail::ratio(static_cast<double>(c.fp), static_cast<double>(c.fp + c.tn));
}
inline Score positive_rate(const Confusion& c) {
  return detail::ratio(static_cast<double>(c.predicted_positive()),
                       static_cast<double>(c.total()));
}

struct Performance {
  Score accuracy, recall, precision, f1, false_alarm;
};

struct Fairness {
  Score aod, eod, spd, di;
};

inline Performance performance(const GroupConfusion& g) {
  const auto& c = g.overall;
  Performance p;
  p.accuracy = detail::ratio(static_cast<double>(c.tp + c.tn), static_cast<double>(c.total()));
  p.recall = true_positive_rate(c);
  p.precision = detail::ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp));
  // 2PR/(P+R) written on counts; equal wherever both forms are defined.
  p.f1 = detail::ratio(2.0 * static_cast<double>(c.tp),
                       static_cast<double>(2 * c.tp + c.fp + c.fn));
  p.false_alarm = false_positive_rate(c);
  return p;
}

/// U = unprivileged, P = privileged. All four scores are n/a when either
/// group is empty.
inline Fairness fairness(const GroupConfusion& g) {
  Fairness f;
  if (g.privileged.total() == 0 || g.unprivileged.total() == 0) return f;
  const auto tpr_gap = detail::minus(true_positive_rate(g.unprivileged),
                                     true_positive_rate(g.privileged));
  const auto fpr_gap = detail::minus(false_positive_rate(g.unprivileged),
                                     false_positive_rate(g.privileged));
  if (tpr_gap && fpr_gap) f.aod = (*fpr_gap + *tpr_gap) / 2.0;
  f.eod = tpr_gap;
  const auto pu = positive_rate(g.unprivileged);
  const auto pp = positive_rate(g.privileged);
  f.spd = detail::minus(pu, pp);
  f.di = detail::ratio(*pu, *pp);
  return f;
}

enum class Metric { accuracy, recall, precision, f1, false_alarm, aod, eod, spd, di };

inline constexpr std::array<Metric, 9> kAllMetrics{
    Metric::accuracy, Metric::recall, Metric::precision, Metric::f1, Metric::false_alarm,
    Metric::aod,      Metric::eod,    Metric::spd,       Metric::di};

inline constexpr std::string_view metric_name(Metric m) {
  switch (m) {
    case Metric::accuracy: return "accuracy";
    case Metric::recall: return "recall";
    case Metric::precision: return "precision";
    case Metric::f1: return "f1";
    case Metric::false_alarm: return "false_alarm";
    case Metric::aod: return "aod";
    case Metric::eod: return "eod";
    case Metric::spd: return "spd";
    case Metric::di: return "di";
  }
  return "?";
}

inline Metric metric_from_name(std::string_view name) {
  for (auto m : kAllMetrics)
    if (metric_name(m) == name) return m;
  throw ContractError("no direction registered for metric '" + std::string(name) + "'");
}

inline constexpr bool is_performance(Metric m) {
  return m == Metric::accuracy || m == Metric::recall || m == Metric::precision ||
         m == Metric::f1 || m == Metric::false_alarm;
}

enum class Direction { larger_better, smaller_better };

/// How a metric is compared across methods. AOD/EOD/SPD compare by absolute
/// value (distance from parity). DI compares by min(DI, 1/DI), which orders
/// exactly like |log DI| but stays finite at DI = 0.
struct MetricRule {
  Direction direction;
  double (*key)(double);
};

inline MetricRule rule_for(Metric m) {
  switch (m) {
    case Metric::accuracy:
    case Metric::recall:
    case Metric::precision:
    case Metric::f1:
      return {Direction::larger_better, [](double v) { return v; }};
    case Metric::false_alarm:
      return {Direction::smaller_better, [](double v) { return v; }};
    case Metric::aod:
    case Metric::eod:
    case Metric::spd:
      return {Direction::smaller_better, [](double v) { return std::abs(v); }};
    case Metric::di:
      return {Direction::larger_better, [](double v) {
                if (v <= 0.0) return 0.0;
                return v < 1.0 ? v : 1.0 / v;
              }};
  }
  throw ContractError("unregistered metric");
}

struct MetricReport {
  Performance perf;
  Fairness fair;

  Score get(Metric m) const {
    switch (m) {
      case Metric::accuracy: return perf.accuracy;
      case Metric::recall: return perf.recall;
      case Metric::precision: return perf.precision;
      case Metric::f1: return perf.f1;
      case Metric::false_alarm: return perf.false_alarm;
      case Metric::aod: return fair.aod;
      case Metric::eod: return fair.eod;
      case Metric::spd: return fair.spd;
      case Metric::di: return fair.di;
    }
    return std::nullopt;
  }
};

inline MetricReport evaluate(std::span<const int> pred, std::span<const int> truth,
                             std::span<const std::uint8_t> privileged) {
  const auto g = confusion(pred, truth, privileged);
  return {performance(g), fairness(g)};
}

}  // namespace stealth
