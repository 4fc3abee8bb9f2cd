#pragma once

// End-to-end experiment runner.
//
// One repeat on one (dataset, protected attribute) pair:
//   0. split 40:40:20 into Train1 / Train2 (labels withheld) / Test
//   1. MODEL1, the black box, is trained on Train1 and scored on Test
//      (with the adversary on, the black box is a lying scaffold instead)
//   2. Train2 is bi-clustered without labels
//   3. one row (m in general) is drawn per leaf
//   4. those rows, and only those, are labeled by querying the black box
//   5. the surrogate MODEL2 is trained on the labeled sample
//   6. MODEL2 is scored on Test
//   7. explanations of MODEL1 and MODEL2 are compared by Jaccard similarity
// Mitigation baselines are trained on Train1 and scored on the same Test.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "stealth/adversary.hpp"
#include "stealth/cluster.hpp"
#include "stealth/data.hpp"
#include "stealth/error.hpp"
#include "stealth/explain.hpp"
#include "stealth/learners.hpp"
#include "stealth/metrics.hpp"
#include "stealth/mitigation.hpp"
#include "stealth/random.hpp"
#include "stealth/stats.hpp"

namespace stealth {

enum class Method { baseline, stealth, maat, fair_smote, fairmask };

inline constexpr std::array<Method, 5> kAllMethods{Method::baseline, Method::stealth, Method::maat,
                                                   Method::fair_smote, Method::fairmask};

inline constexpr std::string_view method_name(Method m) {
  switch (m) {
    case Method::baseline: return "baseline";
    case Method::stealth: return "stealth";
    case Method::maat: return "maat";
    case Method::fair_smote: return "fair_smote";
    case Method::fairmask: return "fairmask";
  }
  return "?";
}

inline Method method_from_name(std::string_view name) {
  for (auto m : kAllMethods)
    if (method_name(m) == name) return m;
  throw ContractError("unknown method '" + std::string(name) + "'");
}

struct SyntheticSpec {
  std::size_t n = 1000;
  double bias_strength = 0.8;
  double noise = 0.05;
  std::uint64_t seed = 1;
};

struct DatasetSource {
  std::string name;
  std::string csv;
  std::string schema;
  std::optional<SyntheticSpec> synthetic;
};

struct ExperimentConfig {
  std::vector<DatasetSource> datasets;
  /// Restricts which protected attributes are run; empty means all.
  std::vector<std::string> protected_attributes;
  std::size_t repeats = 20;
  std::uint64_t seed = 1;
  ClusterConfig cluster;
  ForestConfig forest;
  ExplainConfig explain;
  PerturbConfig perturb;
  ScaffoldConfig scaffold;
  std::vector<Method> methods{kAllMethods.begin(), kAllMethods.end()};
  bool adversary = false;
  /// Feature the adversary's innocuous decoy keys on; picked automatically
  /// (strongest label correlation) when unset.
  std::optional<std::string> legit_feature;
  /// Run step 7 (explanations). Needed for Jaccard results only.
  bool explain_enabled = true;
  /// Explain at most this many Test rows (all when unset).
  std::optional<std::size_t> explain_rows;

  bool has(Method m) const { return std::find(methods.begin(), methods.end(), m) != methods.end(); }

  void validate() const {
    if (datasets.empty()) throw ContractError("config: no datasets");
    if (repeats == 0) throw ContractError("config: repeats must be >= 1");
    if (methods.empty()) throw ContractError("config: no methods");
    if (cluster.samples_per_leaf == 0) throw ContractError("config: samples_per_leaf must be >= 1");
    if (cluster.stop_size && *cluster.stop_size == 0)
      throw ContractError("config: stop_size must be >= 1");
    if (forest.trees == 0) throw ContractError("config: forest needs >= 1 tree");
    explain.validate();
    if (!(perturb.noise_scale > 0)) throw ContractError("config: perturb noise_scale must be > 0");
    if (scaffold.rounds == 0 || scaffold.detector.trees == 0)
      throw ContractError("config: scaffold needs >= 1 round and >= 1 tree");
    for (const auto& d : datasets)
      if (!d.synthetic && (d.csv.empty() || d.schema.empty()))
        throw ContractError("config: dataset '" + d.name + "' needs csv+schema or synthetic");
  }

  static ExperimentConfig from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    try {
      for (const auto& d : j.at("datasets")) {
        DatasetSource src;
        src.name = d.value("name", std::string());
        if (d.contains("synthetic")) {
          const auto& s = d.at("synthetic");
          SyntheticSpec spec;
          spec.n = s.value("n", spec.n);
          spec.bias_strength = s.value("bias_strength", spec.bias_strength);
          spec.noise = s.value("noise", spec.noise);
          spec.seed = s.value("seed", spec.seed);
          src.synthetic = spec;
          if (src.name.empty()) src.name = "synthetic";
        } else {
          src.csv = d.at("csv").get<std::string>();
          src.schema = d.at("schema").get<std::string>();
          if (src.name.empty()) src.name = std::filesystem::path(src.csv).stem().string();
        }
        c.datasets.push_back(std::move(src));
      }
      if (j.contains("protected"))
        c.protected_attributes = j.at("protected").get<std::vector<std::string>>();
      c.repeats = j.value("repeats", c.repeats);
      c.seed = j.value("seed", c.seed);
      c.adversary = j.value("adversary", c.adversary);
      if (j.contains("legit_feature")) c.legit_feature = j.at("legit_feature").get<std::string>();
      c.explain_enabled = j.value("explain_enabled", c.explain_enabled);
      if (j.contains("explain_rows")) c.explain_rows = j.at("explain_rows").get<std::size_t>();
      if (j.contains("methods")) {
        c.methods.clear();
        for (const auto& m : j.at("methods")) c.methods.push_back(method_from_name(m.get<std::string>()));
      }
      if (j.contains("cluster")) {
        const auto& s = j.at("cluster");
        if (s.contains("stop_size")) c.cluster.stop_size = s.at("stop_size").get<std::size_t>();
        c.cluster.samples_per_leaf = s.value("samples_per_leaf", c.cluster.samples_per_leaf);
        const auto how = s.value("sampling", std::string("random"));
        if (how == "random")
          c.cluster.sampling = LeafSampling::random;
        else if (how == "nearest_centroid")
          c.cluster.sampling = LeafSampling::nearest_centroid;
        else
          throw ContractError("config: unknown leaf sampling '" + how + "'");
      }
      if (j.contains("forest")) {
        const auto& s = j.at("forest");
        c.forest.trees = s.value("trees", c.forest.trees);
        if (s.contains("max_depth")) c.forest.max_depth = s.at("max_depth").get<std::size_t>();
        c.forest.min_split_size = s.value("min_split_size", c.forest.min_split_size);
        if (s.contains("features_per_split"))
          c.forest.features_per_split = s.at("features_per_split").get<std::size_t>();
        c.forest.bootstrap = s.value("bootstrap", c.forest.bootstrap);
      }
      if (j.contains("explain")) {
        const auto& s = j.at("explain");
        c.explain.samples = s.value("samples", c.explain.samples);
        if (s.contains("kernel_width")) c.explain.kernel_width = s.at("kernel_width").get<double>();
        c.explain.ridge = s.value("ridge", c.explain.ridge);
        c.explain.top_k = s.value("top_k", c.explain.top_k);
        c.explain.noise_scale = s.value("noise_scale", c.explain.noise_scale);
      }
      if (j.contains("perturb")) {
        const auto& s = j.at("perturb");
        c.perturb.per_row = s.value("per_row", c.perturb.per_row);
        c.perturb.noise_scale = s.value("noise_scale", c.perturb.noise_scale);
      }
      if (j.contains("scaffold")) {
        const auto& s = j.at("scaffold");
        c.scaffold.rounds = s.value("rounds", c.scaffold.rounds);
        auto& d = c.scaffold.detector;
        d.trees = s.value("trees", d.trees);
        d.min_split_size = s.value("min_split_size", d.min_split_size);
        if (s.contains("max_depth")) d.max_depth = s.at("max_depth").get<std::size_t>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw ContractError(std::string("malformed config: ") + e.what());
    }
    c.validate();
    return c;
  }
};

/// Reads a JSON config. Relative dataset paths resolve against the config's
/// directory.
inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ContractError("config '" + path + "' is not valid JSON: " + e.what());
  }
  auto cfg = ExperimentConfig::from_json(j);
  const auto base = std::filesystem::path(path).parent_path();
  for (auto& d : cfg.datasets) {
    if (d.synthetic) continue;
    if (std::filesystem::path(d.csv).is_relative()) d.csv = (base / d.csv).string();
    if (std::filesystem::path(d.schema).is_relative()) d.schema = (base / d.schema).string();
  }
  return cfg;
}

struct LoadedDataset {
  std::string name;
  Schema schema;
  Dataset data;
};

inline LoadedDataset load_source(const DatasetSource& src) {
  if (src.synthetic) {
    const auto& s = *src.synthetic;
    auto syn = synth_biased(s.n, s.bias_strength, s.noise, s.seed);
    return {src.name, std::move(syn.schema), std::move(syn.dataset)};
  }
  auto schema = load_schema(src.schema);
  auto data = load_dataset(src.csv, schema);
  return {src.name, std::move(schema), std::move(data)};
}

/// Steps 2-4: cluster the unlabeled pool, sample per leaf, and label the
/// sample by querying the black box through a counter.
struct Extraction {
  ClusterTree tree;
  std::vector<std::size_t> sample;  // row indices into the pool
  Dataset labeled;                  // sampled rows with black-box labels
  std::size_t queries = 0;          // calls observed by the counter
};

inline Extraction extract_labels(const PredictorPtr& black_box, const Dataset& pool,
                                 const ClusterConfig& cfg, std::uint64_t seed) {
  Extraction ex;
  Rng cluster_rng = make_rng(seed, 0);
  ex.tree = bicluster(pool, cfg, cluster_rng);
  Rng sample_rng = make_rng(seed, 1);
  ex.sample = sample_leaves(ex.tree, pool, cfg.samples_per_leaf, sample_rng, cfg.sampling);

  CountingPredictor counted(black_box);
  std::vector<int> labels;
  labels.reserve(ex.sample.size());
  for (auto r : ex.sample) labels.push_back(counted.predict(pool.row(r)));
  ex.queries = counted.calls();

  std::size_t budget = 0;
  for (auto leaf : ex.tree.leaves()) budget += std::min(cfg.samples_per_leaf, leaf.size());
  if (ex.queries != budget || ex.queries != ex.sample.size())
    throw Error("query accounting mismatch: " + std::to_string(ex.queries) + " calls for a budget of " +
                std::to_string(budget));
  ex.labeled = pool.subset(ex.sample).with_labels(std::move(labels));
  return ex;
}

struct RunRecord {
  std::string dataset;
  std::string protected_attribute;
  std::size_t repeat = 0;
  Method method = Method::baseline;
  MetricReport report;
  /// Labeled rows the method trained on; for stealth, black-box queries.
  std::size_t queries = 0;
  double seconds = 0.0;
  std::optional<InfluenceSet> influence;
  std::string error;  // empty on success
};

/// Per-repeat internals of a stealth run.
struct StealthTrace {
  std::string dataset;
  std::string protected_attribute;
  std::size_t repeat = 0;
  std::size_t train2_rows = 0;
  std::size_t leaves = 0;
  std::size_t queries = 0;
  std::optional<double> slack_jaccard;
  std::optional<double> base_jaccard;
  std::optional<InfluenceSet> model1_set;  // honest explanation of MODEL1
  std::optional<InfluenceSet> liar_set;    // explanation as served by the black box
  std::optional<InfluenceSet> model2_set;
  // Routing counters; all zero without the adversary.
  std::size_t stealth_to_biased = 0;
  std::size_t stealth_to_innocuous = 0;
  std::size_t explain_to_biased = 0;
  std::size_t explain_to_innocuous = 0;
  std::optional<double> detector_accuracy;
  std::string error;
};

struct RepeatResult {
  std::vector<RunRecord> records;
  std::optional<StealthTrace> trace;
  std::vector<std::string> warnings;
};

namespace stage {
inline constexpr std::uint64_t split = 0, model1 = 1, extract = 2, model2 = 3, explain = 4,
                               perturb = 5, detector = 6, maat = 7, fair_smote = 8, fairmask = 9;
}

/// One repeat of every configured method on one (dataset, protected) pair.
/// Repeat r draws all randomness from stream r of the master seed. An error
/// in any step turns the repeat into failure records instead of throwing.
inline RepeatResult run_repeat(const LoadedDataset& ds, const std::string& protected_name,
                               const ExperimentConfig& cfg, std::size_t repeat) {
  using clock = std::chrono::steady_clock;
  auto seconds_since = [](clock::time_point t0) {
    return std::chrono::duration<double>(clock::now() - t0).count();
  };
  const std::uint64_t seed = derive_seed(cfg.seed, repeat);
  RepeatResult out;
  auto make_record = [&](Method m) {
    RunRecord r;
    r.dataset = ds.name;
    r.protected_attribute = protected_name;
    r.repeat = repeat;
    r.method = m;
    return r;
  };

  try {
    const TriSplit split = tri_split(ds.data, derive_seed(seed, stage::split));
    const auto& test = split.test;
    const auto truth = test.labels();
    const auto groups = std::span<const std::uint8_t>(test.group(protected_name).privileged);
    auto score = [&](const Predictor& model) {
      const auto pred = predict_all(model, test);
      return evaluate(pred, truth, groups);
    };
    ForestConfig forest = cfg.forest;

    // Step 1: the black box.
    auto t0 = clock::now();
    PredictorPtr model1;
    std::shared_ptr<const Scaffold> scaffold;
    std::optional<double> detector_accuracy;
    if (cfg.adversary) {
      const std::string legit =
          cfg.legit_feature.value_or(most_label_correlated_feature(split.train1));
      PerturbConfig pc = cfg.perturb;
      pc.seed = derive_seed(seed, stage::perturb);
      ScaffoldConfig sc = cfg.scaffold;
      sc.detector.seed = derive_seed(seed, stage::detector);
      auto trained = train_scaffold(split.train1, protected_name, legit, pc, sc);
      scaffold = trained.scaffold;
      detector_accuracy = trained.detector_accuracy;
      model1 = scaffold;
    } else {
      forest.seed = derive_seed(seed, stage::model1);
      model1 = train_forest(split.train1, forest);
    }
    if (cfg.has(Method::baseline)) {
      auto rec = make_record(Method::baseline);
      rec.report = score(*model1);
      rec.queries = split.train1.rows();
      rec.seconds = seconds_since(t0);
      out.records.push_back(std::move(rec));
    }

    if (cfg.has(Method::stealth)) {
      StealthTrace trace;
      trace.dataset = ds.name;
      trace.protected_attribute = protected_name;
      trace.repeat = repeat;
      trace.train2_rows = split.train2.rows();
      trace.detector_accuracy = detector_accuracy;

      t0 = clock::now();
      if (scaffold) scaffold->reset_counters();
      const Extraction ex =
          extract_labels(model1, split.train2, cfg.cluster, derive_seed(seed, stage::extract));
      if (scaffold) {
        trace.stealth_to_biased = scaffold->routed_to_biased();
        trace.stealth_to_innocuous = scaffold->routed_to_innocuous();
      }
      trace.leaves = ex.tree.leaf_count();
      trace.queries = ex.queries;

      PredictorPtr model2;
      if (ex.labeled.rows() >= 2) {
        ForestConfig sc = cfg.forest;
        sc.seed = derive_seed(seed, stage::model2);
        model2 = train_forest(ex.labeled, sc);
      } else {
        model2 = std::make_shared<const ConstantPredictor>(
            ex.labeled.rows() ? ex.labeled.labels()[0] : 0.0, ex.labeled.cols());
      }
      auto rec = make_record(Method::stealth);
      rec.report = score(*model2);
      rec.queries = ex.queries;
      rec.seconds = seconds_since(t0);

      if (cfg.explain_enabled) {
        ExplainConfig ec = cfg.explain;
        ec.seed = derive_seed(seed, stage::explain);
        const auto stds = split.train1.column_std();
        Dataset explained = test;
        if (cfg.explain_rows && *cfg.explain_rows < test.rows()) {
          std::vector<std::size_t> idx(*cfg.explain_rows);
          std::iota(idx.begin(), idx.end(), std::size_t{0});
          explained = test.subset(idx);
        }
        // The honest view of MODEL1: the model the black box really applies
        // to in-distribution queries.
        const Predictor& honest = scaffold ? *scaffold->biased() : *model1;
        trace.model1_set = influential_set(honest, explained, stds, ec);
        trace.model2_set = influential_set(*model2, explained, stds, ec);
        if (scaffold) {
          scaffold->reset_counters();
          trace.liar_set = influential_set(*scaffold, explained, stds, ec);
          trace.explain_to_biased = scaffold->routed_to_biased();
          trace.explain_to_innocuous = scaffold->routed_to_innocuous();
        } else {
          trace.liar_set = trace.model1_set;
        }
        trace.slack_jaccard = jaccard(*trace.model2_set, *trace.liar_set);
        trace.base_jaccard = jaccard(*trace.model2_set, *trace.model1_set);
        rec.influence = trace.model2_set;
        for (auto& r : out.records)
          if (r.method == Method::baseline) r.influence = trace.model1_set;
      }
      out.records.push_back(std::move(rec));
      out.trace = std::move(trace);
    }

    auto run_mitigation = [&](Method m, auto&& train) {
      if (!cfg.has(m)) return;
      const auto start = clock::now();
      auto rec = make_record(m);
      auto pipeline = train();
      rec.report = score(*pipeline);
      rec.queries = split.train1.rows();
      rec.seconds = seconds_since(start);
      for (const auto& w : pipeline->warnings())
        out.warnings.push_back(ds.name + "/" + protected_name + " repeat " +
                               std::to_string(repeat) + " " + std::string(method_name(m)) +
                               ": " + w);
      out.records.push_back(std::move(rec));
    };
    auto seeded = [&](std::uint64_t s) {
      ForestConfig fc = cfg.forest;
      fc.seed = derive_seed(seed, s);
      return fc;
    };
    run_mitigation(Method::maat, [&] { return maat_train(split.train1, protected_name, seeded(stage::maat)); });
    run_mitigation(Method::fair_smote, [&] {
      return fair_smote_train(split.train1, protected_name, seeded(stage::fair_smote));
    });
    run_mitigation(Method::fairmask, [&] {
      return fairmask_train(split.train1, protected_name, seeded(stage::fairmask));
    });
  } catch (const std::exception& e) {
    out.records.clear();
    for (auto m : cfg.methods) {
      auto rec = make_record(m);
      rec.error = e.what();
      out.records.push_back(std::move(rec));
    }
    if (cfg.has(Method::stealth)) {
      StealthTrace t;
      t.dataset = ds.name;
      t.protected_attribute = protected_name;
      t.repeat = repeat;
      t.error = e.what();
      out.trace = std::move(t);
    }
  }
  return out;
}

struct ExperimentResult {
  std::vector<RunRecord> records;
  std::vector<StealthTrace> traces;
  std::vector<std::string> warnings;
  /// (dataset, protected attribute) pairs in run order, with dataset rows.
  struct Run {
    std::string dataset;
    std::string protected_attribute;
    std::size_t rows = 0;
  };
  std::vector<Run> runs;
};

inline std::vector<std::string> protected_to_run(const LoadedDataset& ds,
                                                 const ExperimentConfig& cfg) {
  std::vector<std::string> out;
  for (const auto& p : ds.schema.protected_attributes)
    if (cfg.protected_attributes.empty() ||
        std::find(cfg.protected_attributes.begin(), cfg.protected_attributes.end(), p.name) !=
            cfg.protected_attributes.end())
      out.push_back(p.name);
  return out;
}

/// Every (dataset, protected attribute, repeat), in that nesting order.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                       const std::vector<LoadedDataset>& data) {
  cfg.validate();
  ExperimentResult result;
  for (const auto& ds : data) {
    const auto attrs = protected_to_run(ds, cfg);
    if (attrs.empty())
      throw ContractError("dataset '" + ds.name + "' has no protected attribute to run");
    for (const auto& attr : attrs) {
      result.runs.push_back({ds.name, attr, ds.data.rows()});
      for (std::size_t r = 0; r < cfg.repeats; ++r) {
        auto rep = run_repeat(ds, attr, cfg, r);
        for (auto& rec : rep.records) result.records.push_back(std::move(rec));
        if (rep.trace) result.traces.push_back(std::move(*rep.trace));
        for (auto& w : rep.warnings) result.warnings.push_back(std::move(w));
      }
    }
  }
  return result;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<LoadedDataset> data;
  for (const auto& src : cfg.datasets) data.push_back(load_source(src));
  return run_experiment(cfg, data);
}

struct WtlResult {
  WtlTable table;
  std::vector<std::string> excluded;  // one message per skipped cell
};

/// Compares each non-baseline method to the baseline on every (run, metric)
/// cell. Undefined scores are dropped; a cell with fewer than two defined
/// repeats on either side is excluded and reported.
inline WtlResult build_wtl(const ExperimentResult& result, const std::vector<Method>& methods,
                           std::uint64_t seed) {
  WtlResult out;
  std::uint64_t cell = 0;
  for (auto m : methods) {
    if (m == Method::baseline) continue;
    auto& row = out.table.row(std::string(method_name(m)));
    for (const auto& run : result.runs) {
      for (auto metric : kAllMetrics) {
        ScoreSample mine{std::string(method_name(m)), run.dataset + "/" + run.protected_attribute,
                         std::string(metric_name(metric)), {}};
        ScoreSample base{"baseline", mine.run_id, mine.metric, {}};
        for (const auto& rec : result.records) {
          if (rec.dataset != run.dataset || rec.protected_attribute != run.protected_attribute ||
              !rec.error.empty())
            continue;
          const auto v = rec.report.get(metric);
          if (!v) continue;
          if (rec.method == m) mine.values.push_back(*v);
          if (rec.method == Method::baseline) base.values.push_back(*v);
        }
        auto& tally = is_performance(metric) ? row.performance : row.fairness;
        Rng rng = make_rng(seed, cell++);
        if (mine.values.size() < 2 || base.values.size() < 2) {
          ++tally.excluded;
          out.excluded.push_back(mine.method + " " + mine.run_id + " " + mine.metric +
                                 ": too few defined values");
          continue;
        }
        tally.add(win_tie_loss(mine, base, rng));
      }
    }
  }
  return out;
}

namespace detail {

inline std::string fixed(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}
inline std::string cell(const Score& s) { return s ? fixed(*s) : "n/a"; }
inline std::string csv_text(std::string s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot write '" + p.string() + "'");
  return f;
}

}  // namespace detail

/// Column order: dataset, protected, repeat, method, status, queries, then the
/// nine metrics (accuracy, recall, precision, f1, false_alarm, aod, eod, spd,
/// di), then the influential feature set joined by ';'.
inline void write_runs_csv(std::ostream& out, const std::vector<RunRecord>& records) {
  out << "dataset,protected,repeat,method,status,queries";
  for (auto m : kAllMetrics) out << ',' << metric_name(m);
  out << ",influential\n";
  for (const auto& r : records) {
    out << detail::csv_text(r.dataset) << ',' << detail::csv_text(r.protected_attribute) << ','
        << r.repeat << ',' << method_name(r.method) << ','
        << (r.error.empty() ? std::string("ok") : detail::csv_text("error: " + r.error)) << ','
        << r.queries;
    for (auto m : kAllMetrics) out << ',' << (r.error.empty() ? detail::cell(r.report.get(m)) : "n/a");
    out << ',' << (r.influence ? detail::csv_text(r.influence->joined()) : std::string()) << '\n';
  }
}

inline void write_traces_csv(std::ostream& out, const std::vector<StealthTrace>& traces) {
  out << "dataset,protected,repeat,train2_rows,leaves,queries,slack_jaccard,base_jaccard,"
         "model1_set,liar_set,model2_set,stealth_to_biased,stealth_to_innocuous,"
         "explain_to_biased,explain_to_innocuous,detector_accuracy,status\n";
  auto set = [](const std::optional<InfluenceSet>& s) {
    return s ? detail::csv_text(s->joined()) : std::string();
  };
  for (const auto& t : traces)
    out << detail::csv_text(t.dataset) << ',' << detail::csv_text(t.protected_attribute) << ','
        << t.repeat << ',' << t.train2_rows << ',' << t.leaves << ',' << t.queries << ','
        << detail::cell(t.slack_jaccard) << ',' << detail::cell(t.base_jaccard) << ','
        << set(t.model1_set) << ',' << set(t.liar_set) << ',' << set(t.model2_set) << ','
        << t.stealth_to_biased << ',' << t.stealth_to_innocuous << ',' << t.explain_to_biased
        << ',' << t.explain_to_innocuous << ',' << detail::cell(t.detector_accuracy) << ','
        << (t.error.empty() ? std::string("ok") : detail::csv_text("error: " + t.error)) << '\n';
}

/// Median Jaccard over repeats for one (dataset, protected) run.
struct JaccardRow {
  std::string dataset;
  std::string protected_attribute;
  std::size_t rows = 0;
  std::optional<double> queries;
  std::optional<double> slack;
  std::optional<double> base;
};

inline std::vector<JaccardRow> jaccard_rows(const ExperimentResult& result) {
  std::vector<JaccardRow> rows;
  for (const auto& run : result.runs) {
    JaccardRow row{run.dataset, run.protected_attribute, run.rows, {}, {}, {}};
    std::vector<double> q, s, b;
    for (const auto& t : result.traces) {
      if (t.dataset != run.dataset || t.protected_attribute != run.protected_attribute ||
          !t.error.empty())
        continue;
      q.push_back(static_cast<double>(t.queries));
      if (t.slack_jaccard) s.push_back(*t.slack_jaccard);
      if (t.base_jaccard) b.push_back(*t.base_jaccard);
    }
    if (!q.empty()) row.queries = median(q);
    if (!s.empty()) row.slack = median(s);
    if (!b.empty()) row.base = median(b);
    rows.push_back(std::move(row));
  }
  return rows;
}

/// dataset, protected, rows, queries, slack_jaccard, base_jaccard; the last
/// line holds the medians across runs.
inline void write_jaccard_csv(std::ostream& out, const std::vector<JaccardRow>& rows) {
  out << "dataset,protected,rows,queries,slack_jaccard,base_jaccard\n";
  std::vector<double> s, b;
  for (const auto& r : rows) {
    out << detail::csv_text(r.dataset) << ',' << detail::csv_text(r.protected_attribute) << ','
        << r.rows << ',' << detail::cell(r.queries) << ',' << detail::cell(r.slack) << ','
        << detail::cell(r.base) << '\n';
    if (r.slack) s.push_back(*r.slack);
    if (r.base) b.push_back(*r.base);
  }
  out << "median,,,," << (s.empty() ? "n/a" : detail::fixed(median(s))) << ','
      << (b.empty() ? "n/a" : detail::fixed(median(b))) << '\n';
}

struct ReportOptions {
  bool wtl = true;
  bool jaccard = true;
};

/// Writes runs.csv, traces.csv, jaccard.csv, wtl.csv, wtl.txt and
/// timing.txt under `dir`, and prints a short summary. Everything except
/// timing.txt is a pure function of (config, seed).
inline void emit_report(const ExperimentResult& result, const ExperimentConfig& cfg,
                        const std::filesystem::path& dir, std::ostream& summary,
                        const ReportOptions& opt = {}) {
  if (result.records.empty()) throw ContractError("emit_report: no records");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir))
    throw IoError("cannot create output directory '" + dir.string() + "'");

  {
    auto f = detail::open_out(dir / "runs.csv");
    write_runs_csv(f, result.records);
  }
  if (!result.traces.empty()) {
    auto f = detail::open_out(dir / "traces.csv");
    write_traces_csv(f, result.traces);
  }
  const auto jrows = jaccard_rows(result);
  if (opt.jaccard && !result.traces.empty()) {
    auto f = detail::open_out(dir / "jaccard.csv");
    write_jaccard_csv(f, jrows);
  }

  std::size_t failures = 0;
  for (const auto& r : result.records) failures += !r.error.empty();
  summary << result.records.size() << " run records (" << failures << " failed) over "
          << result.runs.size() << " dataset/attribute runs x " << cfg.repeats << " repeats\n";

  if (opt.jaccard && !result.traces.empty()) {
    summary << "\nExplanation overlap (median over repeats)\n";
    char buf[200];
    std::snprintf(buf, sizeof buf, "  %-16s %-10s %7s %8s %9s %9s\n", "dataset", "protected",
                  "rows", "queries", "slack_J", "base_J");
    summary << buf;
    for (const auto& r : jrows) {
      std::snprintf(buf, sizeof buf, "  %-16s %-10s %7zu %8s %9s %9s\n", r.dataset.c_str(),
                    r.protected_attribute.c_str(), r.rows, detail::cell(r.queries).c_str(),
                    detail::cell(r.slack).c_str(), detail::cell(r.base).c_str());
      summary << buf;
    }
  }

  if (opt.wtl) {
    const bool comparable =
        cfg.has(Method::baseline) &&
        std::any_of(cfg.methods.begin(), cfg.methods.end(),
                    [](Method m) { return m != Method::baseline; });
    if (!comparable) {
      summary << "\nNo win/tie/loss table: need the baseline and at least one other method.\n";
    } else {
      const auto wtl = build_wtl(result, cfg.methods, derive_seed(cfg.seed, 0x77746cULL));
      {
        auto f = detail::open_out(dir / "wtl.csv");
        wtl.table.write_csv(f);
      }
      {
        auto f = detail::open_out(dir / "wtl.txt");
        wtl.table.write_text(f);
      }
      summary << "\nWins/ties/losses against the baseline\n";
      wtl.table.write_text(summary);
      for (const auto& e : wtl.excluded) summary << "excluded: " << e << '\n';
    }
  }

  {
    auto f = detail::open_out(dir / "timing.txt");
    std::map<std::string, std::vector<double>> by_method;
    for (const auto& r : result.records)
      if (r.error.empty()) by_method[std::string(method_name(r.method))].push_back(r.seconds);
    f << "median wall-clock seconds per repeat\n";
    for (const auto& [m, v] : by_method) f << m << ' ' << detail::fixed(median(v)) << '\n';
  }
  for (const auto& w : result.warnings) summary << "warning: " << w << '\n';
}

}  // namespace stealth
