#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "lexicol/clustering.hpp"
#include "lexicol/dataset_io.hpp"
#include "lexicol/diffusion.hpp"
#include "lexicol/expansion.hpp"
#include "lexicol/gcn.hpp"
#include "lexicol/hash.hpp"
#include "lexicol/random.hpp"

namespace lexicol::bench {

namespace fs = std::filesystem;

// =============================================================================
// Configuration
// =============================================================================

/// Flat `key = value` text. Blank lines and lines starting with '#' are
/// ignored; later keys override earlier ones.
using ConfigMap = std::map<std::string, std::string>;

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

inline ConfigMap parse_config_text(std::string_view text, const std::string& origin = "config") {
  ConfigMap out;
  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto eol = text.find('\n', pos);
    const auto raw = text.substr(pos, eol == std::string_view::npos ? text.size() - pos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++lineno;
    const std::string line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError(origin + " line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    if (key.empty()) throw ValidationError(origin + " line " + std::to_string(lineno) + ": empty key");
    out[key] = trim(std::string_view(line).substr(eq + 1));
  }
  return out;
}

inline ConfigMap read_config_file(const fs::path& path) {
  auto in = io::open_in(path, false);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.filename().string());
}

namespace detail {

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = v.find(',', start);
    out.push_back(trim(std::string_view(v).substr(start, comma == std::string::npos ? std::string::npos
                                                                                     : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  std::erase_if(out, [](const std::string& s) { return s.empty(); });
  return out;
}

inline double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty() || !std::isfinite(out))
    throw ValidationError("config: '" + key + "' expects a number, got '" + v + "'");
  return out;
}

inline std::uint64_t to_uint(const std::string& key, const std::string& v) {
  try {
    return lexicol::detail::parse_uint(v, "config key '" + key + "'");
  } catch (const FormatError& e) {
    throw ValidationError(e.what());
  }
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ValidationError("config: '" + key + "' expects true/false, got '" + v + "'");
}

}  // namespace detail

/// Training keys shared by `train` and `run-experiment`. Returns false when
/// `key` is not a training key.
inline bool apply_train_key(TrainConfig& c, const std::string& key, const std::string& v) {
  using namespace detail;
  if (key == "lr" || key == "learning_rate") c.learning_rate = to_double(key, v);
  else if (key == "epochs") c.max_epochs = to_uint(key, v);
  else if (key == "dropout") c.dropout_rate = to_double(key, v);
  else if (key == "l2" || key == "weight_decay") c.l2_weight = to_double(key, v);
  else if (key == "hidden") c.hidden_units = to_uint(key, v);
  else if (key == "train_seed") c.seed = to_uint(key, v);
  else if (key == "l2_both_layers") c.l2_both_layers = to_bool(key, v);
  else if (key == "early_stopping") c.early_stopping = to_bool(key, v);
  else if (key == "patience") c.patience = to_uint(key, v);
  else return false;
  return true;
}

/// "none" trains on the original split only.
inline constexpr std::string_view kNoExpansion = "none";

struct ExperimentConfig {
  fs::path dataset;
  std::vector<std::string> methods{std::string(kNoExpansion)};
  std::optional<std::size_t> t;  // unset: per-dataset default
  std::vector<double> etas{0.7};
  std::vector<std::size_t> ks{500};
  double alpha = 1e-6;
  std::size_t krylov_dim = 200;
  double tolerance = 1e-8;
  std::optional<bool> jacobi;
  std::vector<std::size_t> labels_per_class{2};
  std::optional<double> label_rate;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::size_t test_size = 1000;
  bool row_normalize = true;
  bool per_class_sampling = false;
  Damping damping = Damping::kDiscard;
  std::size_t workers = 1;
  std::optional<fs::path> cache_dir;  // unset: <out-dir>/cache
  TrainConfig train;

  void validate() const {
    if (dataset.empty()) throw ValidationError("config: 'dataset' is required");
    if (methods.empty()) throw ValidationError("config: at least one method required");
    for (const auto& m : methods)
      if (m != kNoExpansion) (void)parse_method(m);
    if (etas.empty() || ks.empty()) throw ValidationError("config: eta and K lists must be non-empty");
    for (double e : etas)
      if (!(e >= 0.0)) throw ValidationError("config: eta must be >= 0");
    for (auto k : ks)
      if (k < 2) throw ValidationError("config: K must be >= 2");
    if (!(alpha > 0.0)) throw ValidationError("config: alpha must be > 0");
    if (krylov_dim < 1) throw ValidationError("config: m must be >= 1");
    if (!(tolerance > 0.0)) throw ValidationError("config: tol must be > 0");
    if (t && *t < 1) throw ValidationError("config: t must be >= 1");
    if (label_rate && !labels_per_class.empty())
      throw ValidationError("config: set exactly one of labels_per_class and label_rate");
    if (!label_rate && labels_per_class.empty())
      throw ValidationError("config: set exactly one of labels_per_class and label_rate");
    for (auto l : labels_per_class)
      if (l < 1) throw ValidationError("config: labels_per_class must be >= 1");
    if (label_rate && !(*label_rate > 0.0 && *label_rate <= 1.0))
      throw ValidationError("config: label_rate must be in (0, 1]");
    if (seeds.empty()) throw ValidationError("config: at least one seed required");
    if (test_size < 1) throw ValidationError("config: test_size must be >= 1");
    if (workers < 1) throw ValidationError("config: workers must be >= 1");
    train.validate();
  }
};

/// Applies `map` on top of `cfg`. Unknown keys are errors so typos surface.
inline void apply_config(ExperimentConfig& cfg, const ConfigMap& map) {
  using namespace detail;
  bool saw_lpc = false;
  for (const auto& [key, v] : map) {
    if (apply_train_key(cfg.train, key, v)) continue;
    if (key == "dataset") cfg.dataset = v;
    else if (key == "method" || key == "methods") cfg.methods = split_list(v);
    else if (key == "t") cfg.t = v == "auto" ? std::nullopt : std::optional(to_uint(key, v));
    else if (key == "eta") {
      cfg.etas.clear();
      for (const auto& s : split_list(v)) cfg.etas.push_back(to_double(key, s));
    } else if (key == "K" || key == "k") {
      cfg.ks.clear();
      for (const auto& s : split_list(v)) cfg.ks.push_back(to_uint(key, s));
    } else if (key == "alpha") cfg.alpha = to_double(key, v);
    else if (key == "m") cfg.krylov_dim = to_uint(key, v);
    else if (key == "tol") cfg.tolerance = to_double(key, v);
    else if (key == "jacobi")
      cfg.jacobi = v == "auto" ? std::nullopt : std::optional(to_bool(key, v));
    else if (key == "labels_per_class") {
      saw_lpc = true;
      cfg.labels_per_class.clear();
      for (const auto& s : split_list(v)) cfg.labels_per_class.push_back(to_uint(key, s));
    } else if (key == "label_rate") cfg.label_rate = to_double(key, v);
    else if (key == "seeds") {
      cfg.seeds.clear();
      for (const auto& s : split_list(v)) cfg.seeds.push_back(to_uint(key, s));
    } else if (key == "num_seeds") {
      cfg.seeds.clear();
      for (std::uint64_t s = 0; s < to_uint(key, v); ++s) cfg.seeds.push_back(s);
    } else if (key == "test_size") cfg.test_size = to_uint(key, v);
    else if (key == "row_normalize") cfg.row_normalize = to_bool(key, v);
    else if (key == "per_class_sampling") cfg.per_class_sampling = to_bool(key, v);
    else if (key == "ml_damping") cfg.damping = parse_damping(v);
    else if (key == "workers") cfg.workers = to_uint(key, v);
    else if (key == "cache_dir") cfg.cache_dir = fs::path(v);
    else throw ValidationError("config: unknown key '" + key + "'");
  }
  // A label rate replaces the default labels-per-class sweep unless both were given.
  if (map.contains("label_rate") && !saw_lpc) cfg.labels_per_class.clear();
}

/// Per-dataset defaults 76 / 216 / 975; otherwise the lower bound with two layers.
inline std::size_t default_t(const Dataset& ds) {
  std::string name = ds.name;
  std::transform(name.begin(), name.end(), name.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (name == "cora") return 76;
  if (name == "citeseer") return 216;
  if (name == "pubmed") return 975;
  return compute_t_star(ds.num_nodes(), 2, ds.graph.mean_degree());
}

/// ceil(rate * n / k) labels per class, at least one.
inline std::size_t labels_from_rate(const Dataset& ds, double rate) {
  const double per = rate * static_cast<double>(ds.num_nodes()) / static_cast<double>(ds.num_classes);
  return std::max<std::size_t>(1, ceil_count(per));
}

// =============================================================================
// Splits
// =============================================================================

/// `labels_per_class` uniformly drawn nodes per class for training, then
/// `test_size` labeled non-train nodes for testing (all of them if fewer).
/// Both lists are sorted ascending; validation is left empty.
inline Split make_split(const Dataset& ds, std::size_t labels_per_class, std::uint64_t seed,
                        std::size_t test_size = 1000) {
  if (labels_per_class < 1) throw ValidationError("make_split: labels_per_class must be >= 1");
  std::vector<std::vector<NodeId>> by_class(ds.num_classes);
  for (std::size_t v = 0; v < ds.num_nodes(); ++v)
    if (ds.labels[v] != kUnknownLabel)
      by_class[static_cast<std::size_t>(ds.labels[v])].push_back(static_cast<NodeId>(v));

  // Partial Fisher-Yates: the first `take` slots become a uniform sample.
  const auto draw = [](std::vector<NodeId>& items, std::size_t take, rng::Stream stream) {
    for (std::size_t i = 0; i < take; ++i) {
      const auto j = i + static_cast<std::size_t>(stream.next_below(items.size() - i));
      std::swap(items[i], items[j]);
    }
    items.resize(take);
    std::sort(items.begin(), items.end());
  };

  Split split;
  std::vector<char> in_train(ds.num_nodes(), 0);
  for (std::size_t j = 0; j < ds.num_classes; ++j) {
    auto& members = by_class[j];
    if (members.size() < labels_per_class)
      throw ValidationError("make_split: class " + std::to_string(j) + " has " +
                            std::to_string(members.size()) + " labeled nodes, " +
                            std::to_string(labels_per_class) + " requested");
    draw(members, labels_per_class,
         rng::Stream(rng::derive_key(seed, {rng::label(rng::Domain::kSplitTrain), j})));
    for (NodeId v : members) in_train[v] = 1;
    split.train.insert(split.train.end(), members.begin(), members.end());
  }
  std::sort(split.train.begin(), split.train.end());

  std::vector<NodeId> rest;
  for (std::size_t v = 0; v < ds.num_nodes(); ++v)
    if (ds.labels[v] != kUnknownLabel && !in_train[v]) rest.push_back(static_cast<NodeId>(v));
  draw(rest, std::min(test_size, rest.size()),
       rng::Stream(rng::derive_key(seed, {rng::label(rng::Domain::kSplitTest)})));
  split.test = std::move(rest);
  return split;
}

// =============================================================================
// Offline artifacts
// =============================================================================

struct Offline {
  Partition partition;
  ProfileMatrix profiles;
  double partition_ms = 0.0;
  double profiles_ms = 0.0;
  bool from_cache = false;
};

inline double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

inline std::uint64_t offline_key(const ParWalkSystem& sys, std::size_t k) {
  ContentHash h;
  h.text("offline-v1");
  h.u64(sys.graph_hash());
  h.u64(k);
  h.f64(sys.alpha());
  h.u64(sys.solver().max_iterations);
  h.f64(sys.solver().tolerance);
  h.u64(sys.solver().jacobi ? 1 : 0);
  h.text(GraphGrowingPartitioner{}.name());
  return h.value();
}

/// Partition and profiles for K clusters, read from `cache_dir` when present
/// with matching provenance and written there (atomically) otherwise.
inline Offline offline_artifacts(const Graph& g, const ParWalkSystem& sys, std::size_t k,
                                 const std::optional<fs::path>& cache_dir, std::size_t workers) {
  Offline out;
  std::optional<fs::path> dir;
  if (cache_dir) {
    char name[17];
    std::snprintf(name, sizeof name, "%016llx",
                  static_cast<unsigned long long>(offline_key(sys, k)));
    dir = *cache_dir / name;
  }
  if (dir && fs::exists(*dir / "partition.tsv") && fs::exists(*dir / "profiles.bin")) {
    try {
      auto t0 = std::chrono::steady_clock::now();
      auto part = read_partition(*dir / "partition.tsv", g.num_nodes());
      out.partition_ms = elapsed_ms(t0);
      t0 = std::chrono::steady_clock::now();
      auto pm = read_profiles(*dir / "profiles.bin");
      out.profiles_ms = elapsed_ms(t0);
      if (part.num_clusters() == k && pm.provenance == make_provenance(sys, part)) {
        out.partition = std::move(part);
        out.profiles = std::move(pm);
        out.from_cache = true;
        return out;
      }
    } catch (const Error&) {
      // Unreadable cache entries are rebuilt below.
    }
  }
  auto t0 = std::chrono::steady_clock::now();
  out.partition = partition(g, k);
  out.partition_ms = elapsed_ms(t0);
  t0 = std::chrono::steady_clock::now();
  out.profiles = topological_profiles(sys, out.partition, workers);
  out.profiles_ms = elapsed_ms(t0);
  if (dir) {
    fs::create_directories(*dir);
    write_partition(out.partition, *dir / "partition.tsv");
    write_profiles(out.profiles, *dir / "profiles.bin");
  }
  return out;
}

// =============================================================================
// Runs
// =============================================================================

struct RunSpec {
  std::string method;  // "none" or an expansion method name
  std::size_t t = 0;
  std::optional<double> eta;   // only for tp / ml
  std::optional<std::size_t> k;  // only for methods using profiles
  double alpha = 0.0;
  std::size_t labels_per_class = 0;
  std::uint64_t seed = 0;
};

struct RunRecord {
  std::string dataset;
  RunSpec spec;
  std::optional<double> accuracy;
  std::size_t added_nodes = 0;
  DegreeStats added_degree;
  double partition_ms = 0.0;
  double profiles_ms = 0.0;
  double expand_ms = 0.0;
  double train_ms = 0.0;
  std::string error;
};

inline bool uses_profiles(std::string_view method) {
  return method == "lexicol" || method == "tp" || method == "ml";
}
inline bool uses_eta(std::string_view method) { return method == "tp" || method == "ml"; }

/// Immutable inputs shared by every run of an experiment.
struct Workbench {
  const Dataset* dataset = nullptr;
  ConvolutionMatrix a_hat;
  SparseMatrix features;
  std::optional<ParWalkSystem> parwalk;
  TrainConfig train;
  bool per_class_sampling = false;
  Damping damping = Damping::kDiscard;
  std::size_t test_size = 1000;
};

inline Workbench make_workbench(const Dataset& ds, const ExperimentConfig& cfg) {
  Workbench wb;
  wb.dataset = &ds;
  wb.a_hat = build_convolution_matrix(ds.graph);
  wb.features = prepare_features(ds.features, cfg.row_normalize);
  const bool needs_parwalk = std::any_of(cfg.methods.begin(), cfg.methods.end(),
                                         [](const std::string& m) { return m != kNoExpansion; });
  if (needs_parwalk)
    wb.parwalk = build_parwalk(ds.graph, cfg.alpha, {}, {cfg.krylov_dim, cfg.tolerance, cfg.jacobi});
  wb.train = cfg.train;
  wb.per_class_sampling = cfg.per_class_sampling;
  wb.damping = cfg.damping;
  wb.test_size = cfg.test_size;
  return wb;
}

/// The training seed is derived from the run seed, so runs that differ only
/// in the expansion method share split, initialization and dropout masks.
inline RunRecord run_once(const Workbench& wb, const Offline* offline, const RunSpec& spec) {
  const Dataset& ds = *wb.dataset;
  RunRecord rec;
  rec.dataset = ds.name;
  rec.spec = spec;
  if (offline) {
    rec.partition_ms = offline->partition_ms;
    rec.profiles_ms = offline->profiles_ms;
  }
  try {
    const Split split = make_split(ds, spec.labels_per_class, spec.seed, wb.test_size);
    TrainingData data;
    data.features = wb.features;
    data.labels = ds.labels;
    data.train = split.train;

    auto t0 = std::chrono::steady_clock::now();
    if (spec.method != kNoExpansion) {
      const auto labeled =
          LabeledSet::from_labels(ds.num_nodes(), ds.num_classes, ds.labels, split.train, split.test);
      const auto budget = make_budget(labeled, spec.t);
      const auto method = parse_method(spec.method);
      if (uses_profiles(spec.method) && !offline)
        throw ValidationError("run: method '" + spec.method + "' needs profiles");
      ExpansionResult res;
      switch (method) {
        case Method::kCotrain: res = expand_cotrain(*wb.parwalk, ds.graph, labeled, budget); break;
        case Method::kLexicol: res = expand_lexicol(offline->profiles, ds.graph, labeled, budget); break;
        case Method::kTp:
          res = expand_tp(*wb.parwalk, offline->profiles, ds.graph, labeled, budget, *spec.eta);
          break;
        case Method::kMl: {
          MlOptions opts;
          opts.per_class_sampling = wb.per_class_sampling;
          opts.sampler.damping = wb.damping;
          res = expand_ml(*wb.parwalk, offline->profiles, ds.graph, labeled, budget, *spec.eta,
                          spec.seed, opts);
          break;
        }
      }
      std::vector<char> blocked(ds.num_nodes(), 0);
      for (NodeId v : split.test) blocked[v] = 2;
      for (NodeId v : split.train) blocked[v] = 1;
      for (const auto& [v, c] : res.assignments()) {
        if (blocked[v] != 0)
          throw Error("run: expansion added node " + std::to_string(v) + " from the " +
                      (blocked[v] == 1 ? "train" : "test") + " split");
        data.labels[v] = c;
        data.train.push_back(v);
      }
      std::sort(data.train.begin(), data.train.end());
      rec.added_nodes = res.total_added();
      rec.added_degree = res.added_degree;
    }
    rec.expand_ms = elapsed_ms(t0);

    t0 = std::chrono::steady_clock::now();
    TrainConfig tc = wb.train;
    tc.seed = rng::derive_key(spec.seed, {rng::label(rng::Domain::kDropout), wb.train.seed});
    const auto init_seed = rng::derive_key(spec.seed, {rng::label(rng::Domain::kInit), wb.train.seed});
    auto model = init_model(wb.features.cols(), tc.hidden_units, ds.num_classes, init_seed);
    auto outcome = train(std::move(model), data, wb.a_hat, tc);
    rec.accuracy = evaluate(outcome.model, wb.a_hat, wb.features, ds.labels, split.test);
    rec.train_ms = elapsed_ms(t0);
  } catch (const std::exception& e) {
    rec.error = e.what();
    rec.accuracy.reset();
  }
  return rec;
}

/// Runs `specs` on `workers` threads; records come back in `specs` order.
inline std::vector<RunRecord> run_all(const Workbench& wb, const Offline* offline,
                                      const std::vector<RunSpec>& specs, std::size_t workers) {
  std::vector<RunRecord> out(specs.size());
  workers = std::max<std::size_t>(1, std::min(workers, specs.size()));
  std::atomic<std::size_t> next{0};
  const auto loop = [&] {
    for (std::size_t i = next++; i < specs.size(); i = next++) out[i] = run_once(wb, offline, specs[i]);
  };
  if (workers == 1) {
    loop();
    return out;
  }
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(loop);
  for (auto& t : pool) t.join();
  return out;
}

// =============================================================================
// CSV
// =============================================================================

inline constexpr std::string_view kCsvHeader =
    "dataset,method,t,eta,K,alpha,labels_per_class,seed,accuracy,added_nodes,mean_added_degree,"
    "partition_ms,profiles_ms,expand_ms,train_ms,error";

inline constexpr std::string_view kDegreeCsvHeader =
    "dataset,method,t,eta,K,alpha,labels_per_class,seed,added_nodes,mean_degree,median_degree,"
    "min_degree,max_degree,graph_mean_degree";

/// Columns whose values depend on wall-clock time.
inline constexpr std::array<std::string_view, 4> kTimingColumns{"partition_ms", "profiles_ms",
                                                                "expand_ms", "train_ms"};

inline std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

/// CSV cells never need quoting: free text has separators replaced.
inline std::string sanitize(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r' || c == '"') c = c == ',' ? ';' : ' ';
  return s;
}

inline std::string config_cells(const std::string& dataset, const RunSpec& s) {
  std::string out = sanitize(dataset) + "," + s.method + "," + std::to_string(s.t) + ",";
  out += (s.eta ? fmt("%g", *s.eta) : "") + ",";
  out += (s.k ? std::to_string(*s.k) : "") + ",";
  out += fmt("%g", s.alpha) + "," + std::to_string(s.labels_per_class);
  return out;
}

inline std::string opt_cell(double v, const char* spec = "%.6f") {
  return std::isfinite(v) ? fmt(spec, v) : std::string();
}

inline std::string csv_row(const RunRecord& r) {
  std::string out = config_cells(r.dataset, r.spec) + "," + std::to_string(r.spec.seed) + ",";
  out += (r.accuracy ? fmt("%.6f", *r.accuracy) : "") + ",";
  out += std::to_string(r.added_nodes) + ",";
  out += opt_cell(r.added_degree.count ? r.added_degree.mean : NAN) + ",";
  out += fmt("%.3f", r.partition_ms) + "," + fmt("%.3f", r.profiles_ms) + ",";
  out += fmt("%.3f", r.expand_ms) + "," + fmt("%.3f", r.train_ms) + ",";
  out += sanitize(r.error);
  return out;
}

inline std::string degree_row(const RunRecord& r, double graph_mean_degree) {
  const auto& d = r.added_degree;
  const bool any = d.count > 0;
  std::string out = config_cells(r.dataset, r.spec) + "," + std::to_string(r.spec.seed) + ",";
  out += std::to_string(d.count) + ",";
  out += opt_cell(any ? d.mean : NAN) + "," + opt_cell(any ? d.median : NAN) + ",";
  out += (any ? std::to_string(static_cast<std::size_t>(d.min)) : "") + ",";
  out += (any ? std::to_string(static_cast<std::size_t>(d.max)) : "") + ",";
  out += fmt("%.6f", graph_mean_degree);
  return out;
}

struct MeanStd {
  double mean = NAN;
  double std = NAN;  // sample standard deviation; 0 for a single value
  std::size_t n = 0;
};

inline MeanStd mean_std(std::span<const double> xs) {
  MeanStd m;
  m.n = xs.size();
  if (xs.empty()) return m;
  double s = 0.0;
  for (double x : xs) s += x;
  m.mean = s / static_cast<double>(xs.size());
  if (xs.size() == 1) {
    m.std = 0.0;
    return m;
  }
  double ss = 0.0;
  for (double x : xs) ss += (x - m.mean) * (x - m.mean);
  m.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  return m;
}

/// Aggregate row for one configuration: seed is "agg", numeric cells hold
/// means over successful runs and the error cell holds "std=...;n=...;failed=...".
inline std::string aggregate_row(std::span<const RunRecord> runs) {
  std::vector<double> acc, added, deg, pms, rms, ems, tms;
  std::size_t failed = 0;
  for (const auto& r : runs) {
    if (!r.accuracy) {
      ++failed;
      continue;
    }
    acc.push_back(*r.accuracy);
    added.push_back(static_cast<double>(r.added_nodes));
    if (r.added_degree.count) deg.push_back(r.added_degree.mean);
    pms.push_back(r.partition_ms);
    rms.push_back(r.profiles_ms);
    ems.push_back(r.expand_ms);
    tms.push_back(r.train_ms);
  }
  const auto a = mean_std(acc);
  std::string out = config_cells(runs.front().dataset, runs.front().spec) + ",agg,";
  out += opt_cell(a.mean) + "," + opt_cell(mean_std(added).mean, "%.1f") + ",";
  out += opt_cell(mean_std(deg).mean) + ",";
  out += opt_cell(mean_std(pms).mean, "%.3f") + "," + opt_cell(mean_std(rms).mean, "%.3f") + ",";
  out += opt_cell(mean_std(ems).mean, "%.3f") + "," + opt_cell(mean_std(tms).mean, "%.3f") + ",";
  out += "std=" + opt_cell(a.std) + ";n=" + std::to_string(a.n) + ";failed=" + std::to_string(failed);
  return out;
}

// =============================================================================
// Experiment
// =============================================================================

struct ExperimentOutput {
  std::vector<RunRecord> records;
  fs::path results_csv;
  fs::path degrees_csv;
};

/// Expands the configuration grid into run groups (one per configuration,
/// each holding every seed) in a fixed order: K, labels per class, method, eta.
inline std::vector<std::vector<RunSpec>> expand_grid(const ExperimentConfig& cfg, const Dataset& ds) {
  const std::size_t t = cfg.t.value_or(default_t(ds));
  std::vector<std::size_t> lpcs = cfg.labels_per_class;
  if (cfg.label_rate) lpcs = {labels_from_rate(ds, *cfg.label_rate)};
  std::vector<std::vector<RunSpec>> groups;
  const auto add_group = [&](const std::string& method, std::optional<double> eta,
                             std::optional<std::size_t> k, std::size_t lpc) {
    std::vector<RunSpec> g;
    for (auto seed : cfg.seeds) g.push_back({method, t, eta, k, cfg.alpha, lpc, seed});
    groups.push_back(std::move(g));
  };
  // Methods that ignore K run once, ahead of the K loop.
  for (auto lpc : lpcs)
    for (const auto& m : cfg.methods)
      if (!uses_profiles(m)) add_group(m, std::nullopt, std::nullopt, lpc);
  for (auto k : cfg.ks)
    for (auto lpc : lpcs)
      for (const auto& m : cfg.methods) {
        if (!uses_profiles(m)) continue;
        if (!uses_eta(m)) {
          add_group(m, std::nullopt, k, lpc);
          continue;
        }
        for (double eta : cfg.etas) add_group(m, eta, k, lpc);
      }
  return groups;
}

inline void write_lines(const fs::path& path, std::string_view header,
                        const std::vector<std::string>& lines) {
  io::write_atomically(path, [&](std::ostream& os) {
    os << header << '\n';
    for (const auto& l : lines) os << l << '\n';
  });
}

/// Writes results.csv (runs plus aggregate rows) and degrees.csv to `out_dir`.
inline ExperimentOutput run_experiment(const ExperimentConfig& cfg, const fs::path& out_dir,
                                       std::ostream* log = nullptr) {
  cfg.validate();
  const Dataset ds = load_dataset(cfg.dataset);
  fs::create_directories(out_dir);
  const fs::path cache = cfg.cache_dir.value_or(out_dir / "cache");
  const Workbench wb = make_workbench(ds, cfg);
  const auto groups = expand_grid(cfg, ds);

  std::map<std::size_t, Offline> offline;
  ExperimentOutput out;
  std::vector<std::string> lines, degree_lines;
  for (const auto& group : groups) {
    const RunSpec& head = group.front();
    const Offline* off = nullptr;
    std::string offline_error;
    if (head.k) {
      if (!offline.contains(*head.k)) {
        try {
          offline.emplace(*head.k,
                          offline_artifacts(ds.graph, *wb.parwalk, *head.k, cache, cfg.workers));
        } catch (const std::exception& e) {
          offline_error = e.what();
        }
      }
      if (offline.contains(*head.k)) off = &offline.at(*head.k);
    }
    std::vector<RunRecord> recs;
    if (head.k && !off) {
      for (const auto& s : group) {
        RunRecord r;
        r.dataset = ds.name;
        r.spec = s;
        r.error = "offline: " + offline_error;
        recs.push_back(std::move(r));
      }
    } else {
      recs = run_all(wb, off, group, cfg.workers);
    }
    for (const auto& r : recs) {
      lines.push_back(csv_row(r));
      degree_lines.push_back(degree_row(r, ds.graph.mean_degree()));
    }
    lines.push_back(aggregate_row(recs));
    if (log) *log << lines.back() << '\n';
    out.records.insert(out.records.end(), recs.begin(), recs.end());
  }
  out.results_csv = out_dir / "results.csv";
  out.degrees_csv = out_dir / "degrees.csv";
  write_lines(out.results_csv, kCsvHeader, lines);
  write_lines(out.degrees_csv, kDegreeCsvHeader, degree_lines);
  return out;
}

}  // namespace lexicol::bench
