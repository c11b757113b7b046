// Command-line front end: dataset validation, offline artifacts, expansion,
// training and the experiment harness.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lexicol/bench.hpp"
#include "lexicol/report.hpp"

namespace fs = std::filesystem;
using namespace lexicol;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

/// Parses "key=value" overrides given with --set.
bench::ConfigMap parse_overrides(const std::vector<std::string>& sets) {
  bench::ConfigMap out;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + s + "'");
    out[bench::trim(std::string_view(s).substr(0, eq))] = bench::trim(std::string_view(s).substr(eq + 1));
  }
  return out;
}

void merge(bench::ConfigMap& into, const bench::ConfigMap& from) {
  for (const auto& [k, v] : from) into[k] = v;
}

void print_summary(const Dataset& ds) {
  const auto comp = ds.graph.connected_components();
  const std::size_t components =
      comp.empty() ? 0 : *std::max_element(comp.begin(), comp.end()) + 1;
  std::size_t isolated = 0;
  for (std::size_t v = 0; v < ds.num_nodes(); ++v) isolated += ds.graph.degree(static_cast<NodeId>(v)) == 0;
  std::cout << "name: " << ds.name << "\nnodes: " << ds.num_nodes()
            << "\nedges: " << ds.graph.num_edges() << "\nfeatures: " << ds.num_features()
            << "\nclasses: " << ds.num_classes << "\nmean_degree: " << ds.graph.mean_degree()
            << "\ncomponents: " << components << "\nisolated: " << isolated
            << "\nsplit: train=" << ds.split.train.size() << " val=" << ds.split.val.size()
            << " test=" << ds.split.test.size() << '\n';
  if (ds.num_nodes() >= 2 && ds.graph.mean_degree() > 1.0)
    std::cout << "t_star(tau=2): " << compute_t_star(ds.num_nodes(), 2, ds.graph.mean_degree()) << '\n';
}

ParWalkSystem parwalk_from(const Dataset& ds, double alpha, std::size_t m, double tol) {
  return build_parwalk(ds.graph, alpha, {}, {m, tol, std::nullopt});
}

/// Node -> class pairs of every added node in an expansion.json.
std::vector<std::pair<NodeId, ClassId>> read_expansion(const fs::path& path) {
  auto in = io::open_in(path, false);
  nlohmann::json j;
  try {
    in >> j;
    std::vector<std::pair<NodeId, ClassId>> out;
    for (const auto& c : j.at("classes"))
      for (const auto& a : c.at("added"))
        out.emplace_back(a.at("node").get<NodeId>(), c.at("class").get<ClassId>());
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.filename().string() + ": " + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Topological-profile label expansion for graph convolutional networks"};
  app.require_subcommand(1);

  // validate
  std::string dir;
  auto* validate_cmd = app.add_subcommand("validate", "Check a dataset directory and print statistics");
  validate_cmd->add_option("dir", dir, "Dataset directory")->required();

  // partition
  std::size_t k = 500;
  std::uint64_t seed = 0;
  std::string out;
  auto* partition_cmd = app.add_subcommand("partition", "Write a K-way partition (partition.tsv)");
  partition_cmd->add_option("dir", dir)->required();
  partition_cmd->add_option("--k", k, "Number of clusters")->required();
  partition_cmd->add_option("--seed", seed, "Tie-breaking seed (only with --random-ties)");
  bool random_ties = false;
  partition_cmd->add_flag("--random-ties", random_ties, "Break equal-degree ties by seeded hash");
  partition_cmd->add_option("--out", out, "Output file")->required();

  // profiles
  double alpha = 1e-6, tol = 1e-8;
  std::size_t m = 200, workers = 1;
  std::string partition_in;
  auto* profiles_cmd = app.add_subcommand("profiles", "Compute topological profiles (profiles.bin)");
  profiles_cmd->add_option("dir", dir)->required();
  profiles_cmd->add_option("--k", k)->required();
  profiles_cmd->add_option("--alpha", alpha);
  profiles_cmd->add_option("--m", m, "Krylov dimension (CG iteration cap)");
  profiles_cmd->add_option("--tol", tol);
  profiles_cmd->add_option("--partition", partition_in, "Reuse an existing partition.tsv");
  profiles_cmd->add_option("--workers", workers);
  profiles_cmd->add_option("--out", out)->required();

  // expand
  std::string method;
  std::optional<std::size_t> t;
  double eta = 0.7;
  std::string profiles_in;
  std::string damping = "discard";
  bool per_class = false;
  auto* expand_cmd = app.add_subcommand("expand", "Expand the dataset's training labels (expansion.json)");
  expand_cmd->add_option("dir", dir)->required();
  expand_cmd->add_option("--method", method, "cotrain, lexicol, tp or ml")->required();
  expand_cmd->add_option("--t", t, "Target labels per class (default: per-dataset)");
  expand_cmd->add_option("--eta", eta);
  expand_cmd->add_option("--seed", seed);
  expand_cmd->add_option("--k", k);
  expand_cmd->add_option("--alpha", alpha);
  expand_cmd->add_option("--m", m);
  expand_cmd->add_option("--profiles", profiles_in, "Reuse an existing profiles.bin");
  expand_cmd->add_option("--damping", damping, "ml sampler neighbour update: discard or gaussian");
  expand_cmd->add_flag("--per-class-sampling", per_class, "ml: draw a separate diverse sample per class");
  expand_cmd->add_option("--out", out)->required();

  // train
  std::string config;
  std::string expansion_in;
  std::vector<std::string> sets;
  auto* train_cmd = app.add_subcommand("train", "Train the GCN on the dataset split; write a checkpoint");
  train_cmd->add_option("dir", dir)->required();
  train_cmd->add_option("--config", config, "key = value training config");
  train_cmd->add_option("--expansion", expansion_in, "Add pseudo-labels from an expansion.json");
  train_cmd->add_option("--set", sets, "Override a config key (key=value)");
  train_cmd->add_option("--out", out)->required();

  // run-experiment
  std::string out_dir;
  std::optional<std::size_t> workers_override;
  auto* run_cmd = app.add_subcommand("run-experiment", "Run a configured experiment grid");
  run_cmd->add_option("--config", config)->required();
  run_cmd->add_option("--out-dir", out_dir)->required();
  run_cmd->add_option("--set", sets, "Override a config key (key=value)");
  run_cmd->add_option("--workers", workers_override);

  // report
  std::vector<std::string> csvs;
  auto* report_cmd = app.add_subcommand("report", "Summarize results.csv (and degrees.csv) files");
  report_cmd->add_option("csv", csvs)->required();
  report_cmd->add_option("--out", out, "Also write the report to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*validate_cmd) {
      print_summary(load_dataset(dir));
    } else if (*partition_cmd) {
      const auto ds = load_dataset(dir);
      const auto p = GraphGrowingPartitioner(random_ties).partition(ds.graph, k, seed);
      write_partition(p, out);
      std::cout << "wrote " << out << " (K=" << p.num_clusters() << ")\n";
    } else if (*profiles_cmd) {
      const auto ds = load_dataset(dir);
      const auto sys = parwalk_from(ds, alpha, m, tol);
      const auto part = partition_in.empty() ? partition(ds.graph, k)
                                             : read_partition(partition_in, ds.num_nodes());
      if (part.num_clusters() != k)
        throw ValidationError("partition has " + std::to_string(part.num_clusters()) +
                              " clusters, --k is " + std::to_string(k));
      const auto pm = topological_profiles(sys, part, workers);
      std::size_t unconverged = 0;
      for (const auto& r : pm.reports) unconverged += !r.converged;
      write_profiles(pm, out);
      std::cout << "wrote " << out << " (" << pm.num_clusters() << "x" << pm.num_nodes() << ")";
      if (unconverged) std::cout << ", " << unconverged << " rows hit the Krylov cap";
      std::cout << '\n';
    } else if (*expand_cmd) {
      const auto ds = load_dataset(dir);
      const auto which = parse_method(method);
      const auto sys = parwalk_from(ds, alpha, m, 1e-8);
      const auto labeled = LabeledSet::from_dataset(ds);
      const auto budget = make_budget(labeled, t.value_or(bench::default_t(ds)));
      std::optional<ProfileMatrix> pm;
      if (which != Method::kCotrain) {
        pm = profiles_in.empty() ? topological_profiles(sys, partition(ds.graph, k))
                                 : read_profiles(profiles_in);
        if (pm->num_nodes() != ds.num_nodes())
          throw ValidationError("profiles cover " + std::to_string(pm->num_nodes()) +
                                " nodes, dataset has " + std::to_string(ds.num_nodes()));
      }
      ExpansionResult res;
      switch (which) {
        case Method::kCotrain: res = expand_cotrain(sys, ds.graph, labeled, budget); break;
        case Method::kLexicol: res = expand_lexicol(*pm, ds.graph, labeled, budget); break;
        case Method::kTp: res = expand_tp(sys, *pm, ds.graph, labeled, budget, eta); break;
        case Method::kMl: {
          MlOptions opts;
          opts.per_class_sampling = per_class;
          opts.sampler.damping = parse_damping(damping);
          res = expand_ml(sys, *pm, ds.graph, labeled, budget, eta, seed, opts);
          break;
        }
      }
      io::write_atomically(out, [&](std::ostream& os) { os << to_json(res).dump(2) << '\n'; });
      std::cout << "wrote " << out << " (" << res.total_added() << " nodes added)\n";
    } else if (*train_cmd) {
      bench::ConfigMap map;
      if (!config.empty()) map = bench::read_config_file(config);
      merge(map, parse_overrides(sets));
      TrainConfig tc;
      bool row_normalize = true;
      std::uint64_t init_seed = 0;
      for (const auto& [key, v] : map) {
        if (bench::apply_train_key(tc, key, v)) continue;
        if (key == "row_normalize") row_normalize = bench::detail::to_bool(key, v);
        else if (key == "seed") init_seed = bench::detail::to_uint(key, v);
        else throw ValidationError("train config: unknown key '" + key + "'");
      }
      tc.validate();
      const auto ds = load_dataset(dir);
      TrainingData data;
      data.features = prepare_features(ds.features, row_normalize);
      data.labels = ds.labels;
      data.train = ds.split.train;
      data.val = ds.split.val;
      if (!expansion_in.empty()) {
        std::vector<char> blocked(ds.num_nodes(), 0);
        for (const auto* list : {&ds.split.train, &ds.split.val, &ds.split.test})
          for (NodeId v : *list) blocked[v] = 1;
        for (const auto& [v, c] : read_expansion(expansion_in)) {
          if (v >= ds.num_nodes() || blocked[v] || c < 0 ||
              static_cast<std::size_t>(c) >= ds.num_classes)
            throw ValidationError("expansion adds invalid node " + std::to_string(v));
          data.labels[v] = c;
          data.train.push_back(v);
          blocked[v] = 1;
        }
        std::sort(data.train.begin(), data.train.end());
      }
      const auto a_hat = build_convolution_matrix(ds.graph);
      auto model = init_model(ds.num_features(), tc.hidden_units, ds.num_classes, init_seed);
      const auto outcome = train(std::move(model), data, a_hat, tc);
      write_model(outcome.model, out);
      const auto& h = outcome.history;
      std::cout << "epochs: " << h.epochs() << "\nfinal_train_loss: " << h.train_loss.back() << '\n';
      if (!data.val.empty()) std::cout << "final_val_accuracy: " << h.val_accuracy.back() << '\n';
      if (!ds.split.test.empty())
        std::cout << "test_accuracy: "
                  << evaluate(outcome.model, a_hat, data.features, ds.labels, ds.split.test) << '\n';
      std::cout << "wrote " << out << '\n';
    } else if (*run_cmd) {
      auto map = bench::read_config_file(config);
      merge(map, parse_overrides(sets));
      if (workers_override) map["workers"] = std::to_string(*workers_override);
      bench::ExperimentConfig cfg;
      bench::apply_config(cfg, map);
      // Relative dataset paths are resolved against the config file.
      if (cfg.dataset.is_relative() && !fs::exists(cfg.dataset))
        cfg.dataset = fs::path(config).parent_path() / cfg.dataset;
      const auto result = bench::run_experiment(cfg, out_dir, &std::cerr);
      const auto rep = bench::build_report({bench::read_csv(result.results_csv),
                                            bench::read_csv(result.degrees_csv)});
      const auto text = bench::format_report(rep);
      io::write_atomically(fs::path(out_dir) / "summary.csv",
                           [&](std::ostream& os) { os << bench::summary_csv(rep); });
      io::write_atomically(fs::path(out_dir) / "report.txt", [&](std::ostream& os) { os << text; });
      std::cout << text;
    } else if (*report_cmd) {
      std::vector<bench::CsvTable> tables;
      for (const auto& c : csvs) tables.push_back(bench::read_csv(c));
      const auto text = bench::format_report(bench::build_report(tables));
      if (!out.empty()) io::write_atomically(out, [&](std::ostream& os) { os << text; });
      std::cout << text;
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
