// Command-line front end: experiments (run, rq1, rq2, rq3), cluster-tree
// inspection, and synthetic data generation.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "stealth/stealth.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> repeats;
  std::string out = "out";
  bool adversary = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "Experiment config (JSON)")->required();
  cmd->add_option("--seed", f.seed, "Master seed (overrides the config)");
  cmd->add_option("--repeats", f.repeats, "Repeats per run (overrides the config)")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--out", f.out, "Output directory")->capture_default_str();
  cmd->add_flag("--adversary", f.adversary, "Put the lying scaffold in front of the black box");
}

stealth::ExperimentConfig resolve(const CommonFlags& f) {
  auto cfg = stealth::load_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (f.repeats) cfg.repeats = *f.repeats;
  if (f.adversary) cfg.adversary = true;
  cfg.validate();
  return cfg;
}

int experiment(stealth::ExperimentConfig cfg, const std::string& out,
               const stealth::ReportOptions& opt) {
  const auto result = stealth::run_experiment(cfg);
  stealth::emit_report(result, cfg, out, std::cout, opt);
  std::cout << "\nreports written to " << out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Query-budgeted black-box auditing: surrogate extraction, explanation "
               "attacks and fairness comparison"};
  app.require_subcommand(1);

  CommonFlags run_f, rq1_f, rq2_f, rq3_f, cluster_f;
  auto* run = app.add_subcommand("run", "Run the experiment exactly as configured");
  add_common(run, run_f);
  auto* rq1 = app.add_subcommand("rq1", "Explanation overlap with and without the lying scaffold");
  add_common(rq1, rq1_f);
  auto* rq2 = app.add_subcommand("rq2", "Surrogate vs. black box: performance and fairness");
  add_common(rq2, rq2_f);
  auto* rq3 = app.add_subcommand("rq3", "Surrogate and mitigation baselines vs. black box");
  add_common(rq3, rq3_f);

  auto* cluster = app.add_subcommand("cluster", "Bi-cluster Train2 of the first dataset");
  add_common(cluster, cluster_f);
  bool dump = false;
  cluster->add_flag("--dump", dump, "Print the tree as indented text");

  auto* synth = app.add_subcommand("synth", "Write a synthetic biased CSV and its schema");
  std::size_t n = 1000;
  double bias = 0.8, noise = 0.05;
  std::uint64_t synth_seed = 1;
  std::string synth_out = ".";
  std::string synth_name = "synthetic";
  synth->add_option("--n", n, "Rows")->capture_default_str()->check(CLI::Range(50, 100000000));
  synth->add_option("--bias", bias, "Bias strength in [0,1]")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  synth->add_option("--noise", noise, "Label noise in [0,1]")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  synth->add_option("--seed", synth_seed, "Generator seed")->capture_default_str();
  synth->add_option("--out", synth_out, "Output directory")->capture_default_str();
  synth->add_option("--name", synth_name, "File stem")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return experiment(resolve(run_f), run_f.out, {});
    if (*rq1) {
      auto cfg = resolve(rq1_f);
      cfg.adversary = true;
      cfg.explain_enabled = true;
      cfg.methods = {stealth::Method::baseline, stealth::Method::stealth};
      return experiment(cfg, rq1_f.out, {.wtl = false, .jaccard = true});
    }
    if (*rq2) {
      auto cfg = resolve(rq2_f);
      cfg.explain_enabled = false;
      cfg.methods = {stealth::Method::baseline, stealth::Method::stealth};
      return experiment(cfg, rq2_f.out, {.wtl = true, .jaccard = false});
    }
    if (*rq3) {
      auto cfg = resolve(rq3_f);
      cfg.explain_enabled = false;
      cfg.methods = {stealth::kAllMethods.begin(), stealth::kAllMethods.end()};
      return experiment(cfg, rq3_f.out, {.wtl = true, .jaccard = false});
    }
    if (*cluster) {
      const auto cfg = resolve(cluster_f);
      const auto ds = stealth::load_source(cfg.datasets.front());
      const std::uint64_t seed = stealth::derive_seed(cfg.seed, 0);
      const auto split = stealth::tri_split(ds.data, stealth::derive_seed(seed, stealth::stage::split));
      stealth::Rng rng = stealth::make_rng(stealth::derive_seed(seed, stealth::stage::extract), 0);
      const auto tree = stealth::bicluster(split.train2, cfg.cluster, rng);
      std::cout << ds.name << ": Train2 rows " << split.train2.rows() << ", stop size "
                << tree.stop_size() << ", leaves " << tree.leaf_count() << ", query budget "
                << tree.leaf_count() * cfg.cluster.samples_per_leaf << " (upper bound)\n";
      if (dump) tree.dump(std::cout);
      return 0;
    }
    if (*synth) {
      const auto data = stealth::synth_biased(n, bias, noise, synth_seed);
      const std::filesystem::path dir(synth_out);
      std::filesystem::create_directories(dir);
      const auto csv = dir / (synth_name + ".csv");
      const auto schema = dir / (synth_name + ".schema.json");
      std::ofstream c(csv, std::ios::binary), s(schema, std::ios::binary);
      if (!c || !s) throw stealth::IoError("cannot write into '" + dir.string() + "'");
      stealth::write_csv(c, data.raw, data.schema);
      s << data.schema.to_json().dump(2) << '\n';
      std::cout << "wrote " << csv.string() << " and " << schema.string() << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
