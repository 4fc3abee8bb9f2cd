// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "stealth/stealth.hpp"

using namespace stealth;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
    }
  }
  void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string num(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

Dataset uniform_rows(std::size_t n, std::size_t f, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n * f);
  for (auto& x : v) x = uniform01(rng);
  std::vector<std::string> names;
  for (std::size_t j = 0; j < f; ++j) names.push_back("f" + std::to_string(j));
  return Dataset(names, std::move(v));
}

std::size_t halving_leaves(std::size_t n, std::size_t t) {
  return n <= t ? 1 : halving_leaves((n + 1) / 2, t) + halving_leaves(n / 2, t);
}

std::vector<double> normal(Rng& rng, std::size_t n) {
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

ExperimentConfig synthetic_config(std::size_t n, double bias, std::size_t repeats) {
  ExperimentConfig cfg;
  SyntheticSpec spec;
  spec.n = n;
  spec.bias_strength = bias;
  spec.noise = 0.05;
  spec.seed = 7;
  cfg.datasets.push_back({"synthetic", "", "", spec});
  cfg.repeats = repeats;
  cfg.seed = 1;
  return cfg;
}

double median_of_records(const ExperimentResult& r, Method m, Metric metric) {
  std::vector<double> v;
  for (const auto& rec : r.records)
    if (rec.method == m && rec.error.empty())
      if (const auto s = rec.report.get(metric)) v.push_back(*s);
  return v.empty() ? NAN : median(v);
}

Verdict projection() {
  Verdict v;
  v.require(std::abs(project(4, 3, 5) - 3.2) < 1e-12, "3-4-5 projection is not 3.2");
  Rng gen(1);
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto ds = uniform_rows(2 + uniform_index(gen, 50), 1 + uniform_index(gen, 10), gen());
    std::vector<std::size_t> rows(ds.rows());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    const auto line = pick_pivots(ds, rows, gen);
    if (!line) {
      v.require(false, "degenerate random cluster");
      continue;
    }
    worst = std::max(worst, std::abs(project(ds.row(line->east), ds, *line)));
    worst = std::max(worst, std::abs(project(ds.row(line->west), ds, *line) - line->c));
  }
  v.require(worst <= 1e-9, "endpoint error " + sci(worst));
  v.note("3-4-5 -> " + num(project(4, 3, 5), 6) + ", max endpoint error " + sci(worst) +
         " over 1000 clusters");
  return v;
}

Verdict clustering() {
  Verdict v;
  const auto ds = uniform_rows(10000, 5, 2);
  ClusterConfig cfg;
  cfg.stop_size = 100;
  Rng rng(3);
  const auto tree = bicluster(ds, cfg, rng);
  std::vector<std::size_t> seen(ds.rows(), 0);
  std::size_t largest = 0;
  for (auto leaf : tree.leaves()) {
    largest = std::max(largest, leaf.size());
    for (auto r : leaf) ++seen[r];
  }
  v.require(std::all_of(seen.begin(), seen.end(), [](std::size_t c) { return c == 1; }),
            "leaves do not partition the rows");
  v.require(largest <= 100, "leaf of " + std::to_string(largest) + " rows");
  v.require(tree.leaf_count() == 128 && halving_leaves(10000, 100) == 128,
            "leaf count " + std::to_string(tree.leaf_count()));
  const auto bb = std::make_shared<const ConstantPredictor>(1.0, ds.cols());
  const auto ex = extract_labels(bb, ds, cfg, 4);
  v.require(ex.queries == ex.tree.leaf_count(), "query counter " + std::to_string(ex.queries));
  v.note("leaves " + std::to_string(tree.leaf_count()) + ", largest " + std::to_string(largest) +
         ", counted queries " + std::to_string(ex.queries));
  return v;
}

Verdict jaccard_checks() {
  Verdict v;
  const std::set<std::string> abc{"a", "b", "c"}, bcd{"b", "c", "d"}, xy{"x", "y"};
  v.require(jaccard(abc, abc) == 1.0, "identity");
  v.require(jaccard(abc, xy) == 0.0, "disjoint");
  v.require(jaccard(abc, bcd) == 0.5, "{a,b,c}/{b,c,d}");
  v.note("identity 1, disjoint 0, {a,b,c}/{b,c,d} " + num(jaccard(abc, bcd), 2));
  return v;
}

Verdict metric_checks() {
  Verdict v;
  std::vector<int> pred, truth;
  std::vector<std::uint8_t> priv;
  auto add = [&](int p, int t, int g, int times) {
    for (int i = 0; i < times; ++i) {
      pred.push_back(p);
      truth.push_back(t);
      priv.push_back(static_cast<std::uint8_t>(g));
    }
  };
  add(1, 1, 1, 25);
  add(0, 0, 1, 25);
  add(1, 0, 0, 25);
  add(0, 1, 0, 25);
  const auto sym = evaluate(pred, truth, priv).perf;
  for (const auto& s : {sym.accuracy, sym.recall, sym.precision, sym.f1, sym.false_alarm})
    v.require(s && *s == 0.5, "symmetric confusion is not 0.5 everywhere");

  pred.clear(), truth.clear(), priv.clear();
  for (int g = 0; g < 2; ++g) {
    add(1, 1, g, 3);
    add(0, 1, g, 2);
    add(1, 0, g, 4);
    add(0, 0, g, 1);
  }
  const auto par = evaluate(pred, truth, priv).fair;
  v.require(par.aod == 0.0 && par.eod == 0.0 && par.spd == 0.0 && par.di == 1.0,
            "identical subgroups are not at parity");

  Rng rng(5);
  int violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    pred.clear(), truth.clear(), priv.clear();
    const auto n = 2 + uniform_index(rng, 50);
    for (std::size_t i = 0; i < n; ++i)
      add(uniform01(rng) < 0.5, uniform01(rng) < 0.5, uniform01(rng) < 0.5, 1);
    const auto a = evaluate(pred, truth, priv).fair;
    for (auto& g : priv) g = 1 - g;
    const auto b = evaluate(pred, truth, priv).fair;
    auto neg = [](const Score& x, const Score& y) {
      return x.has_value() == y.has_value() && (!x || std::abs(*x + *y) < 1e-12);
    };
    bool ok = neg(a.aod, b.aod) && neg(a.eod, b.eod) && neg(a.spd, b.spd);
    if (a.di && b.di && *a.di > 0) ok = ok && std::abs(*a.di - 1.0 / *b.di) < 1e-12;
    violations += !ok;
  }
  v.require(violations == 0, std::to_string(violations) + " group-swap violations");
  v.note("symmetric 0.5 x5, parity 0/0/0/1, group swap holds on 1000 inputs");
  return v;
}

Verdict statistics() {
  Verdict v;
  Rng rng(6);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> a(1 + uniform_index(rng, 40)), b(1 + uniform_index(rng, 40));
    for (auto& x : a) x = std::floor(uniform01(rng) * 8);
    for (auto& x : b) x = std::floor(uniform01(rng) * 8);
    long long gt = 0, lt = 0;
    for (double x : a)
      for (double y : b) gt += x > y, lt += x < y;
    const double oracle = static_cast<double>(gt - lt) / static_cast<double>(a.size() * b.size());
    mismatches += std::abs(cliffs_delta(a, b) - oracle) > 1e-12;
  }
  v.require(mismatches == 0, std::to_string(mismatches) + " Cliff's delta mismatches");

  int rejections = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto a = normal(rng, 20), b = normal(rng, 20);
    rejections += bootstrap_diff(a, b, rng);
  }
  const double fpr = rejections / 1000.0;
  v.require(std::abs(fpr - 0.05) <= 0.02, "bootstrap false-positive rate " + num(fpr));

  int non_ties = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto x = normal(rng, 2 + uniform_index(rng, 30));
    non_ties += win_tie_loss(x, x, Direction::larger_better, rng) != Outcome::tie;
  }
  v.require(non_ties == 0, "win_tie_loss(X, X) was not a tie");
  v.note("delta oracle agrees on 1000 pairs, bootstrap FPR " + num(fpr) + ", self-comparison ties");
  return v;
}

struct Rq1 {
  ExperimentResult result;
  double seconds = 0;
};

const Rq1& rq1_run() {
  static const Rq1 run = [] {
    auto cfg = synthetic_config(2000, 0.9, 20);
    cfg.adversary = true;
    cfg.methods = {Method::baseline, Method::stealth};
    const auto t0 = std::chrono::steady_clock::now();
    Rq1 r{run_experiment(cfg), 0};
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
  }();
  return run;
}

Verdict explanation_overlap() {
  Verdict v;
  const auto& run = rq1_run();
  std::vector<double> slack, base;
  std::size_t errors = 0;
  for (const auto& t : run.result.traces) {
    if (!t.error.empty()) ++errors;
    if (t.slack_jaccard) slack.push_back(*t.slack_jaccard);
    if (t.base_jaccard) base.push_back(*t.base_jaccard);
  }
  v.require(errors == 0, std::to_string(errors) + " failed repeats");
  v.require(slack.size() == 20 && base.size() == 20, "missing Jaccard values");
  if (slack.empty() || base.empty()) return v;
  const double ms = median(slack), mb = median(base);
  v.require(ms <= 0.2, "median slack Jaccard " + num(ms));
  v.require(mb >= 0.5, "median base Jaccard " + num(mb));
  v.note("median slack_J " + num(ms) + ", median base_J " + num(mb) + " over 20 repeats (" +
         num(run.seconds, 1) + " s)");
  return v;
}

Verdict evasion() {
  Verdict v;
  const auto& run = rq1_run();
  std::size_t sb = 0, si = 0, eb = 0, ei = 0;
  double worst_stealth = 1, worst_explain = 1;
  for (const auto& t : run.result.traces) {
    sb += t.stealth_to_biased;
    si += t.stealth_to_innocuous;
    eb += t.explain_to_biased;
    ei += t.explain_to_innocuous;
    if (t.queries)
      worst_stealth = std::min(worst_stealth, double(t.stealth_to_biased) / double(t.queries));
    if (t.explain_to_biased + t.explain_to_innocuous)
      worst_explain = std::min(worst_explain, double(t.explain_to_innocuous) /
                                                  double(t.explain_to_biased + t.explain_to_innocuous));
  }
  if (sb + si == 0 || eb + ei == 0) {
    v.require(false, "no routed queries recorded");
    return v;
  }
  const double stealth_rate = double(sb) / double(sb + si);
  const double explain_rate = double(ei) / double(eb + ei);
  v.require(stealth_rate >= 0.9, "stealth queries to biased model " + num(stealth_rate));
  v.require(explain_rate >= 0.9, "explainer queries to innocuous model " + num(explain_rate));
  v.note("stealth -> biased " + num(stealth_rate) + " (worst repeat " + num(worst_stealth) +
         "), explainer -> innocuous " + num(explain_rate) + " (worst repeat " + num(worst_explain) +
         ")");
  return v;
}

Verdict surrogate_accuracy() {
  Verdict v;
  auto check = [&](ExperimentConfig cfg, const std::string& label) {
    cfg.methods = {Method::baseline, Method::stealth};
    cfg.explain_enabled = false;
    const auto r = run_experiment(cfg);
    const double m1 = median_of_records(r, Method::baseline, Metric::accuracy);
    const double m2 = median_of_records(r, Method::stealth, Metric::accuracy);
    v.require(std::abs(m1 - m2) <= 0.10, label + " accuracy gap " + num(std::abs(m1 - m2)));
    v.note(label + ": MODEL1 " + num(m1) + ", MODEL2 " + num(m2));
  };
  check(synthetic_config(2000, 0.9, 20), "synthetic");
  const char* csv = std::getenv("STEALTH_GERMAN_CSV");
  const char* schema = std::getenv("STEALTH_GERMAN_SCHEMA");
  if (csv && schema) {
    ExperimentConfig cfg;
    cfg.datasets.push_back({"german", csv, schema, std::nullopt});
    cfg.repeats = 20;
    check(cfg, "german");
  } else {
    v.note("german: SKIP (set STEALTH_GERMAN_CSV and STEALTH_GERMAN_SCHEMA)");
  }
  return v;
}

Verdict wtl_structure() {
  Verdict v;
  ExperimentConfig cfg;
  for (std::uint64_t k = 0; k < 12; ++k) {
    SyntheticSpec spec;
    spec.n = 300;
    spec.bias_strength = 0.3 + 0.05 * static_cast<double>(k);
    spec.seed = 100 + k;
    cfg.datasets.push_back({"syn" + std::to_string(k), "", "", spec});
  }
  cfg.repeats = 3;
  cfg.forest.trees = 10;
  cfg.explain_enabled = false;
  const auto r = run_experiment(cfg);
  v.require(r.runs.size() == 12, std::to_string(r.runs.size()) + " runs");
  const auto wtl = build_wtl(r, cfg.methods, 1);
  v.require(wtl.table.rows().size() == 4, "expected four compared methods");
  for (const auto& row : wtl.table.rows()) {
    v.require(row.performance.cells() == 60, row.method + " performance denominator " +
                                                 std::to_string(row.performance.cells()));
    v.require(row.fairness.cells() == 48,
              row.method + " fairness denominator " + std::to_string(row.fairness.cells()));
    v.note(row.method + " " + std::to_string(row.performance.wins + row.performance.ties) + "/" +
           std::to_string(row.performance.cells()) + " perf, " +
           std::to_string(row.fairness.wins + row.fairness.ties) + "/" +
           std::to_string(row.fairness.cells()) + " fair");
  }
  return v;
}

Verdict mitigation_invariants() {
  Verdict v;
  const auto ds = synth_biased(600, 0.8, 0.05, 11).dataset;
  ForestConfig fc;
  fc.trees = 20;
  fc.seed = 3;
  const auto fm = fairmask_train(ds, "sex", fc);
  const auto fs = fair_smote_train(ds, "sex", fc);
  const auto maat = maat_train(ds, "sex", fc);
  Rng rng(4);
  int toggles = 0, means = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> row(ds.cols());
    for (auto& x : row) x = uniform01(rng);
    row[0] = 0;
    const double p0 = fm->predict_proba(row);
    row[0] = 1;
    toggles += fm->predict_proba(row) != p0;
    means += maat->predict_proba(row) != 0.5 * (maat->performance_model().predict_proba(row) +
                                                maat->fairness_model().predict_proba(row));
  }
  const auto& c = fs->balanced_counts();
  v.require(toggles == 0, "FairMASK changed under protected toggling");
  v.require(c[0] == c[1] && c[1] == c[2] && c[2] == c[3], "Fair-SMOTE subgroups differ");
  v.require(means == 0, "MAAT is not the mean of its models");
  v.note("fairmask toggle-invariant, fair_smote subgroups " + std::to_string(c[0]) + " x4, maat mean exact");
  return v;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Verdict determinism() {
  Verdict v;
  const auto dir = fs::temp_directory_path() / "stealth_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "config.json");
    f << R"({"datasets": [{"name": "syn", "synthetic": {"n": 1000, "bias_strength": 0.8, "seed": 5}}],
             "repeats": 3, "seed": 17, "explain_rows": 40})";
  }
  for (const char* out : {"a", "b"}) {
    const std::string cmd = std::string(STEALTH_AUDIT_BIN) + " run --config " +
                            (dir / "config.json").string() + " --out " + (dir / out).string() +
                            " > " + (dir / (std::string(out) + ".log")).string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    v.require(WIFEXITED(status) && WEXITSTATUS(status) == 0, std::string("run ") + out + " exited non-zero");
  }
  int compared = 0;
  for (const char* f : {"runs.csv", "traces.csv", "jaccard.csv", "wtl.csv"}) {
    const auto a = slurp(dir / "a" / f), b = slurp(dir / "b" / f);
    v.require(!a.empty(), std::string(f) + " missing");
    v.require(a == b, std::string(f) + " differs");
    ++compared;
  }
  v.note(std::to_string(compared) + " CSV files byte-identical across two runs");
  return v;
}

Verdict performance_envelope() {
  Verdict v;
  auto cfg = synthetic_config(1000, 0.8, 1);
  cfg.methods = {Method::baseline, Method::stealth};
  const auto data = load_source(cfg.datasets[0]);
  const auto t0 = std::chrono::steady_clock::now();
  const auto rep = run_repeat(data, "sex", cfg, 0);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  v.require(rep.trace && rep.trace->error.empty(), "pipeline failed");
  v.require(secs <= 60.0, "took " + num(secs, 1) + " s");
  v.note("1000 rows, explanations of all 200 test rows: " + num(secs, 2) + " s");
  return v;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"projection formula", projection},
      {"clustering partition and budget", clustering},
      {"jaccard", jaccard_checks},
      {"metrics", metric_checks},
      {"statistics", statistics},
      {"explanation overlap under attack", explanation_overlap},
      {"scaffold routing", evasion},
      {"surrogate accuracy", surrogate_accuracy},
      {"win/tie/loss denominators", wtl_structure},
      {"mitigation invariants", mitigation_invariants},
      {"end-to-end determinism", determinism},
      {"performance envelope", performance_envelope},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("exception: ") + e.what();
    }
    failed += !v.pass;
    std::cout << "criterion " << i + 1 << " (" << criteria[i].first << "): "
              << (v.pass ? "PASS" : "FAIL") << " - " << v.detail << std::endl;
  }
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : "all criteria passed") << '\n';
  return failed ? 1 : 0;
}
