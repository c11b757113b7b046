#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "lexicol/bench.hpp"

// Summaries over results.csv files (and optionally degrees.csv sidecars):
// accuracy per configuration, degree of expanded nodes relative to the graph
// mean, and whether accuracy is monotone in the number of labels per class.

namespace lexicol::bench {

/// One parsed CSV: header names and string cells.
struct CsvTable {
  std::string origin;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
      throw ValidationError(origin + ": missing column '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - header.begin());
  }
  bool has(std::string_view name) const {
    return std::find(header.begin(), header.end(), name) != header.end();
  }
};

inline CsvTable parse_csv(std::string_view text, std::string origin) {
  CsvTable t;
  t.origin = std::move(origin);
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  const auto cells = [](const std::string& l) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
      const auto c = l.find(',', start);
      out.push_back(l.substr(start, c == std::string::npos ? std::string::npos : c - start));
      if (c == std::string::npos) return out;
      start = c + 1;
    }
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (t.header.empty()) {
      t.header = cells(line);
      continue;
    }
    auto row = cells(line);
    if (row.size() != t.header.size())
      throw ValidationError(t.origin + " line " + std::to_string(lineno) + ": " +
                            std::to_string(row.size()) + " cells for " +
                            std::to_string(t.header.size()) + " columns");
    t.rows.push_back(std::move(row));
  }
  if (t.header.empty()) throw ValidationError(t.origin + ": empty file");
  return t;
}

inline CsvTable read_csv(const fs::path& path) {
  auto in = io::open_in(path, false);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str(), path.filename().string());
}

/// Identifies a configuration; labels per class is kept numeric for ordering.
struct ConfigKey {
  std::string dataset, method, t, eta, k, alpha;
  std::size_t labels_per_class = 0;

  auto tie() const { return std::tie(dataset, method, t, eta, k, alpha, labels_per_class); }
  friend bool operator<(const ConfigKey& a, const ConfigKey& b) { return a.tie() < b.tie(); }
  friend bool operator==(const ConfigKey& a, const ConfigKey& b) { return a.tie() == b.tie(); }
};

struct AccuracySummary {
  ConfigKey key;
  MeanStd accuracy;
  std::size_t failed = 0;
};

/// Degree of the nodes an expansion method added, pooled over runs.
struct DegreeSummary {
  ConfigKey key;
  std::size_t runs = 0;
  std::size_t added_nodes = 0;
  double mean_degree = NAN;         // over all added nodes of all runs
  double mean_median_degree = NAN;  // mean of per-run medians (needs degrees.csv)
  double graph_mean_degree = NAN;   // needs degrees.csv
  double ratio() const { return mean_degree / graph_mean_degree; }
};

struct TrendSummary {
  ConfigKey key;  // labels_per_class unused
  std::vector<std::size_t> levels;
  std::vector<double> means;
  double pooled_std = NAN;
  bool monotone = true;
  std::size_t first_violation = 0;  // index into levels of the lower level
};

struct Report {
  std::vector<AccuracySummary> accuracy;
  std::vector<DegreeSummary> degrees;
  std::vector<TrendSummary> trends;
};

namespace detail {

inline ConfigKey key_of(const CsvTable& t, const std::vector<std::string>& row) {
  ConfigKey k;
  k.dataset = row[t.column("dataset")];
  k.method = row[t.column("method")];
  k.t = row[t.column("t")];
  k.eta = row[t.column("eta")];
  k.k = row[t.column("K")];
  k.alpha = row[t.column("alpha")];
  k.labels_per_class = to_uint("labels_per_class", row[t.column("labels_per_class")]);
  return k;
}

}  // namespace detail

/// Sample variance pooled across groups; levels with one run contribute no
/// degrees of freedom. Zero when no group has more than one run.
inline double pooled_std(std::span<const MeanStd> groups) {
  double num = 0.0, den = 0.0;
  for (const auto& g : groups)
    if (g.n > 1) {
      num += static_cast<double>(g.n - 1) * g.std * g.std;
      den += static_cast<double>(g.n - 1);
    }
  return den > 0.0 ? std::sqrt(num / den) : 0.0;
}

inline Report build_report(const std::vector<CsvTable>& tables) {
  static constexpr std::array<std::string_view, 10> kResultColumns{
      "dataset", "method", "t", "eta", "K", "alpha", "labels_per_class", "seed", "accuracy", "error"};
  std::map<ConfigKey, std::vector<double>> acc;
  std::map<ConfigKey, std::size_t> failed;
  struct DegreeAcc {
    std::size_t runs = 0, added = 0;
    double weighted = 0.0;
    std::vector<double> medians;
    double graph_mean = NAN;
  };
  std::map<ConfigKey, DegreeAcc> deg;
  bool any_results = false;

  for (const auto& t : tables) {
    const bool is_degree = t.has("graph_mean_degree");
    if (!is_degree) {
      for (auto c : kResultColumns) (void)t.column(c);
      (void)t.column("added_nodes");
      (void)t.column("mean_added_degree");
      any_results = true;
    } else {
      for (auto c : {"median_degree", "added_nodes", "seed"}) (void)t.column(c);
    }
    for (const auto& row : t.rows) {
      if (row[t.column("seed")] == "agg") continue;
      const auto key = detail::key_of(t, row);
      const auto added = static_cast<std::size_t>(detail::to_uint("added_nodes", row[t.column("added_nodes")]));
      if (is_degree) {
        auto& d = deg[key];
        const auto& med = row[t.column("median_degree")];
        if (!med.empty()) d.medians.push_back(detail::to_double("median_degree", med));
        d.graph_mean = detail::to_double("graph_mean_degree", row[t.column("graph_mean_degree")]);
        continue;
      }
      const auto& a = row[t.column("accuracy")];
      if (a.empty()) {
        ++failed[key];
        acc[key];
        continue;
      }
      acc[key].push_back(detail::to_double("accuracy", a));
      auto& d = deg[key];
      ++d.runs;
      const auto& md = row[t.column("mean_added_degree")];
      if (added > 0 && !md.empty()) {
        d.added += added;
        d.weighted += static_cast<double>(added) * detail::to_double("mean_added_degree", md);
      }
    }
  }
  if (!any_results) throw ValidationError("report: no results CSV given");

  Report rep;
  for (const auto& [key, xs] : acc) {
    const auto f = failed.contains(key) ? failed.at(key) : 0;
    rep.accuracy.push_back({key, mean_std(xs), f});
  }
  for (const auto& [key, d] : deg) {
    if (key.method == kNoExpansion || !acc.contains(key)) continue;
    DegreeSummary s;
    s.key = key;
    s.runs = d.runs;
    s.added_nodes = d.added;
    if (d.added > 0) s.mean_degree = d.weighted / static_cast<double>(d.added);
    if (!d.medians.empty()) s.mean_median_degree = mean_std(d.medians).mean;
    s.graph_mean_degree = d.graph_mean;
    rep.degrees.push_back(s);
  }

  // Trends: group accuracy summaries across labels-per-class levels.
  std::map<ConfigKey, std::vector<const AccuracySummary*>> by_curve;
  for (const auto& a : rep.accuracy) {
    if (a.accuracy.n == 0) continue;
    ConfigKey curve = a.key;
    curve.labels_per_class = 0;
    by_curve[curve].push_back(&a);
  }
  for (const auto& [curve, points] : by_curve) {
    if (points.size() < 2) continue;
    TrendSummary tr;
    tr.key = curve;
    std::vector<MeanStd> stats;
    for (const auto* p : points) {  // map order: ascending labels per class
      tr.levels.push_back(p->key.labels_per_class);
      tr.means.push_back(p->accuracy.mean);
      stats.push_back(p->accuracy);
    }
    tr.pooled_std = pooled_std(stats);
    for (std::size_t i = 0; i + 1 < tr.means.size(); ++i)
      if (tr.means[i + 1] < tr.means[i] - tr.pooled_std) {
        tr.monotone = false;
        tr.first_violation = i;
        break;
      }
    rep.trends.push_back(std::move(tr));
  }
  return rep;
}

inline std::string format_report(const Report& rep) {
  std::ostringstream os;
  const auto num = [](double v, const char* spec = "%.4f") {
    return std::isfinite(v) ? fmt(spec, v) : std::string("-");
  };
  const auto label = [](const ConfigKey& k, bool with_lpc) {
    std::string s = k.dataset + " " + k.method + " t=" + k.t;
    if (!k.eta.empty()) s += " eta=" + k.eta;
    if (!k.k.empty()) s += " K=" + k.k;
    s += " alpha=" + k.alpha;
    if (with_lpc) s += " lpc=" + std::to_string(k.labels_per_class);
    return s;
  };

  os << "== accuracy (mean +- sample std over seeds) ==\n";
  for (const auto& a : rep.accuracy) {
    os << label(a.key, true) << "  " << num(a.accuracy.mean) << " +- " << num(a.accuracy.std)
       << "  runs=" << a.accuracy.n;
    if (a.failed) os << " failed=" << a.failed;
    os << '\n';
  }

  os << "\n== degree of added nodes ==\n";
  if (rep.degrees.empty()) os << "(no expansion runs)\n";
  for (const auto& d : rep.degrees) {
    os << label(d.key, true) << "  added=" << d.added_nodes << " mean_degree=" << num(d.mean_degree)
       << " median_degree=" << num(d.mean_median_degree)
       << " graph_mean_degree=" << num(d.graph_mean_degree)
       << " ratio=" << num(d.ratio(), "%.3f") << '\n';
  }

  os << "\n== trend over labels per class (tolerance: one pooled std) ==\n";
  if (rep.trends.empty()) os << "(fewer than two levels per configuration)\n";
  for (const auto& t : rep.trends) {
    os << label(t.key, false) << "  ";
    for (std::size_t i = 0; i < t.levels.size(); ++i)
      os << (i ? " " : "") << t.levels[i] << ":" << num(t.means[i]);
    os << "  pooled_std=" << num(t.pooled_std) << "  "
       << (t.monotone ? std::string("monotone")
                      : "NOT monotone at " + std::to_string(t.levels[t.first_violation]) + "->" +
                            std::to_string(t.levels[t.first_violation + 1]))
       << '\n';
  }
  return os.str();
}

/// summary.csv: one row per configuration.
inline std::string summary_csv(const Report& rep) {
  std::ostringstream os;
  os << "dataset,method,t,eta,K,alpha,labels_per_class,runs,failed,mean_accuracy,std_accuracy\n";
  for (const auto& a : rep.accuracy) {
    const auto& k = a.key;
    os << k.dataset << ',' << k.method << ',' << k.t << ',' << k.eta << ',' << k.k << ',' << k.alpha
       << ',' << k.labels_per_class << ',' << a.accuracy.n << ',' << a.failed << ','
       << opt_cell(a.accuracy.mean) << ',' << opt_cell(a.accuracy.std) << '\n';
  }
  return os.str();
}

}  // namespace lexicol::bench
