#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "lexicol/diffusion.hpp"
#include "lexicol/graph.hpp"
#include "lexicol/linalg.hpp"
#include "lexicol/random.hpp"

namespace lexicol {

enum class Method { kCotrain, kLexicol, kTp, kMl };

inline std::string_view method_name(Method m) noexcept {
  switch (m) {
    case Method::kCotrain: return "cotrain";
    case Method::kLexicol: return "lexicol";
    case Method::kTp: return "tp";
    case Method::kMl: return "ml";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  if (s == "cotrain") return Method::kCotrain;
  if (s == "lexicol") return Method::kLexicol;
  if (s == "tp") return Method::kTp;
  if (s == "ml") return Method::kMl;
  throw ValidationError("unknown expansion method '" + std::string(s) +
                        "' (expected cotrain, lexicol, tp or ml)");
}

/// Rounds a non-negative candidate count up, ignoring representation error
/// below 1e-9 (so (1 + 0.5) * 10 is 15, not 16).
inline std::size_t ceil_count(double x) {
  if (!(x >= 0.0) || !std::isfinite(x)) throw ValidationError("candidate count must be finite and >= 0");
  return static_cast<std::size_t>(std::ceil(x - 1e-9));
}

// =============================================================================
// Labeled set and budget
// =============================================================================

/// Labeled nodes per class plus the pool of nodes eligible for expansion.
struct LabeledSet {
  std::size_t num_nodes = 0;
  std::vector<std::vector<NodeId>> by_class;  // ascending ids
  std::vector<NodeId> pool;                   // ascending ids, disjoint from labeled

  std::size_t num_classes() const noexcept { return by_class.size(); }

  /// Labeled = `train`; the pool excludes `train` and every id in `exclude`.
  static LabeledSet from_labels(std::size_t n, std::size_t num_classes,
                                std::span<const ClassId> labels, std::span<const NodeId> train,
                                std::span<const NodeId> exclude = {}) {
    LabeledSet s;
    s.num_nodes = n;
    s.by_class.assign(num_classes, {});
    std::vector<char> blocked(n, 0);
    for (NodeId v : train) {
      if (v >= n || labels[v] == kUnknownLabel)
        throw ValidationError("labeled node " + std::to_string(v) + " has no label");
      s.by_class[static_cast<std::size_t>(labels[v])].push_back(v);
      blocked[v] = 1;
    }
    for (NodeId v : exclude)
      if (v < n) blocked[v] = 1;
    for (auto& c : s.by_class) std::sort(c.begin(), c.end());
    for (std::size_t v = 0; v < n; ++v)
      if (!blocked[v]) s.pool.push_back(static_cast<NodeId>(v));
    return s;
  }

  /// Train split is labeled; validation and test nodes never enter the pool.
  static LabeledSet from_dataset(const Dataset& ds) {
    std::vector<NodeId> exclude(ds.split.val);
    exclude.insert(exclude.end(), ds.split.test.begin(), ds.split.test.end());
    return from_labels(ds.num_nodes(), ds.num_classes, ds.labels, ds.split.train, exclude);
  }
};

struct LabelBudget {
  std::size_t t = 0;
  std::vector<std::size_t> counts;    // t_j
  std::vector<std::size_t> deficits;  // max(t - t_j, 0)
};

inline LabelBudget make_budget(const LabeledSet& labeled, std::size_t t) {
  LabelBudget b;
  b.t = t;
  for (const auto& c : labeled.by_class) {
    b.counts.push_back(c.size());
    b.deficits.push_back(c.size() >= t ? 0 : t - c.size());
  }
  return b;
}

// =============================================================================
// Result types
// =============================================================================

inline constexpr double kNotComputed = std::numeric_limits<double>::quiet_NaN();

struct AddedNode {
  NodeId node = 0;
  double score = 0.0;               // ranking score used for selection
  double proximity = kNotComputed;  // p_j(node) when computed
  double similarity = kNotComputed; // b_j(node) when computed
  std::size_t invalid_correlations = 0;
  bool sampled = false;             // came from the diverse sampler
};

struct ClassExpansion {
  std::size_t labeled = 0;
  std::size_t deficit = 0;
  std::size_t candidates = 0;
  std::vector<AddedNode> added;  // in the class's rank order
};

struct DegreeStats {
  std::size_t count = 0;
  double mean = 0.0;
  double median = 0.0;
  double min = 0.0;
  double max = 0.0;
};

inline DegreeStats degree_stats(const Graph& g, std::span<const NodeId> nodes) {
  DegreeStats s;
  s.count = nodes.size();
  if (nodes.empty()) return s;
  std::vector<double> d;
  d.reserve(nodes.size());
  double sum = 0.0;
  for (NodeId v : nodes) {
    d.push_back(static_cast<double>(g.degree(v)));
    sum += d.back();
  }
  std::sort(d.begin(), d.end());
  s.mean = sum / static_cast<double>(d.size());
  const std::size_t mid = d.size() / 2;
  s.median = d.size() % 2 ? d[mid] : 0.5 * (d[mid - 1] + d[mid]);
  s.min = d.front();
  s.max = d.back();
  return s;
}

struct ExpansionResult {
  Method method = Method::kCotrain;
  std::size_t t = 0;
  double eta = 0.0;
  std::uint64_t seed = 0;
  std::vector<ClassExpansion> classes;
  std::vector<NodeId> sampled;  // ml only, in selection order
  DegreeStats added_degree;

  std::vector<NodeId> added_nodes() const {
    std::vector<NodeId> out;
    for (const auto& c : classes)
      for (const auto& a : c.added) out.push_back(a.node);
    return out;
  }
  std::size_t total_added() const noexcept {
    std::size_t s = 0;
    for (const auto& c : classes) s += c.added.size();
    return s;
  }
  /// (node, class) pairs for every added node, ascending node id.
  std::vector<std::pair<NodeId, ClassId>> assignments() const {
    std::vector<std::pair<NodeId, ClassId>> out;
    for (std::size_t j = 0; j < classes.size(); ++j)
      for (const auto& a : classes[j].added) out.emplace_back(a.node, static_cast<ClassId>(j));
    std::sort(out.begin(), out.end());
    return out;
  }
};

// =============================================================================
// Similarity scores
// =============================================================================

struct SimilarityScore {
  double value = 0.0;
  std::size_t invalid = 0;  // zero-variance pairs, each contributing 0
};

/// Centered profile columns cached for repeated correlations. Scores are
/// bitwise identical to summing `pearson` over the raw columns.
class ProfileCorrelator {
public:
  explicit ProfileCorrelator(const ProfileMatrix& pm)
      : k_(pm.num_clusters()), n_(pm.num_nodes()), dev_(k_ * n_), ss_(n_), constant_(n_) {
    if (k_ < 2)
      throw ValidationError("similarity: need at least 2 profile rows (K=" + std::to_string(k_) +
                            ")");
    std::vector<double> column(k_);
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t s = 0; s < k_; ++s) column[s] = pm.r(s, i);
      auto c = detail::center(column);
      std::copy(c.deviations.begin(), c.deviations.end(), dev_.begin() + static_cast<std::ptrdiff_t>(i * k_));
      ss_[i] = c.sum_squares;
      constant_[i] = c.constant;
    }
  }

  std::size_t num_nodes() const noexcept { return n_; }

  Correlation correlation(NodeId a, NodeId b) const noexcept {
    return detail::correlate(column(a), ss_[a], constant_[a], column(b), ss_[b], constant_[b]);
  }

  /// b_j(candidate) = sum over labeled l (ascending) of rho(R[:, l], R[:, candidate]).
  SimilarityScore score(std::span<const NodeId> labeled, NodeId candidate) const noexcept {
    SimilarityScore s;
    for (NodeId l : labeled) {
      const auto c = correlation(l, candidate);
      s.value += c.value;
      if (!c.valid) ++s.invalid;
    }
    return s;
  }

private:
  std::span<const double> column(NodeId i) const noexcept { return {dev_.data() + i * k_, k_}; }

  std::size_t k_, n_;
  std::vector<double> dev_;
  std::vector<double> ss_;
  std::vector<char> constant_;
};

inline std::vector<SimilarityScore> similarity_scores(const ProfileMatrix& pm,
                                                      std::span<const NodeId> class_nodes,
                                                      std::span<const NodeId> candidates) {
  if (class_nodes.empty()) throw ValidationError("similarity_scores: class has no labeled nodes");
  const ProfileCorrelator corr(pm);
  std::vector<NodeId> labeled(class_nodes.begin(), class_nodes.end());
  std::sort(labeled.begin(), labeled.end());
  std::vector<SimilarityScore> out;
  out.reserve(candidates.size());
  for (NodeId c : candidates) out.push_back(corr.score(labeled, c));
  return out;
}

// =============================================================================
// Conflict resolution
// =============================================================================

struct RankedPick {
  NodeId node = 0;
  double score = 0.0;
};

/// Each class takes picks from its ranked list until its deficit is met. A
/// node wanted by several classes goes to the one scoring it highest (ties:
/// lower class index); a class that loses a node continues down its own list.
/// Returns, per class, indices into that class's ranked list, in rank order.
inline std::vector<std::vector<std::size_t>> resolve_conflicts(
    const std::vector<std::vector<RankedPick>>& ranked, std::span<const std::size_t> deficits) {
  const std::size_t k = ranked.size();
  if (deficits.size() != k) throw DimensionError("resolve_conflicts: one deficit per class required");
  struct Owner {
    std::size_t cls;
    std::size_t rank;
  };
  std::vector<std::vector<std::size_t>> accepted(k);
  std::vector<std::size_t> cursor(k, 0);
  std::unordered_map<NodeId, Owner> owner;

  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t j = 0; j < k; ++j) {
      while (accepted[j].size() < deficits[j] && cursor[j] < ranked[j].size()) {
        const std::size_t rank = cursor[j]++;
        const auto& pick = ranked[j][rank];
        auto it = owner.find(pick.node);
        if (it == owner.end()) {
          owner.emplace(pick.node, Owner{j, rank});
          accepted[j].push_back(rank);
          continue;
        }
        const Owner cur = it->second;
        if (cur.cls == j) continue;  // duplicate within one list
        const double held = ranked[cur.cls][cur.rank].score;
        if (pick.score > held || (pick.score == held && j < cur.cls)) {
          auto& loser = accepted[cur.cls];
          loser.erase(std::find(loser.begin(), loser.end(), cur.rank));
          it->second = Owner{j, rank};
          accepted[j].push_back(rank);
          changed = true;
        }
      }
    }
  }
  for (auto& a : accepted) std::sort(a.begin(), a.end());
  return accepted;
}

// =============================================================================
// Diverse sampler
// =============================================================================

/// How a pick damps the weights of its nearest neighbours. kDiscard multiplies
/// by 1 - exp(-d^2 / (2 sigma^2)), so near-duplicates of the pick drop out;
/// kGaussian multiplies by exp(-d^2 / (2 sigma^2)) itself, which leaves the
/// closest neighbours almost untouched.
enum class Damping { kDiscard, kGaussian };

inline Damping parse_damping(std::string_view s) {
  if (s == "discard") return Damping::kDiscard;
  if (s == "gaussian") return Damping::kGaussian;
  throw ValidationError("unknown damping rule '" + std::string(s) + "' (discard|gaussian)");
}

struct SamplerOptions {
  std::size_t neighbors = 8;
  std::optional<double> sigma;  // unset: median distance of the first round
  Damping damping = Damping::kDiscard;
};

/// Iterative selection over profile space: draw a node proportionally to D,
/// zero its weight, then damp the weights of its nearest neighbours (by
/// Euclidean profile distance) according to `SamplerOptions::damping`.
class DiverseSampler {
public:
  DiverseSampler(const ProfileMatrix& pm, std::span<const NodeId> unlabeled, std::uint64_t key,
                 SamplerOptions options = {})
      : pm_(pm), nodes_(unlabeled.begin(), unlabeled.end()), options_(options), stream_(key) {
    std::sort(nodes_.begin(), nodes_.end());
    nodes_.erase(std::unique(nodes_.begin(), nodes_.end()), nodes_.end());
    for (NodeId v : nodes_)
      if (v >= pm.num_nodes())
        throw ValidationError("sampler: node " + std::to_string(v) + " outside profile matrix");
    weight_.assign(nodes_.size(), nodes_.empty() ? 0.0 : 1.0 / static_cast<double>(nodes_.size()));
    chosen_.assign(nodes_.size(), 0);
    if (options_.sigma && !(*options_.sigma > 0.0))
      throw ValidationError("sampler: sigma must be positive");
    sigma_ = options_.sigma.value_or(0.0);
  }

  std::span<const NodeId> nodes() const noexcept { return nodes_; }
  std::span<const double> weights() const noexcept { return weight_; }
  std::span<const NodeId> selected() const noexcept { return selected_; }
  double sigma() const noexcept { return sigma_; }
  std::uint64_t stream_position() const noexcept { return stream_.position(); }
  std::size_t remaining() const noexcept { return nodes_.size() - selected_.size(); }
  bool used_uniform_fallback() const noexcept { return fallback_; }

  NodeId step() {
    if (remaining() == 0) throw ValidationError("sampler: no unselected nodes left");
    const std::uint64_t draw = stream_.next_bits();
    const std::size_t pick = choose(draw);
    chosen_[pick] = 1;
    weight_[pick] = 0.0;
    const NodeId node = nodes_[pick];
    selected_.push_back(node);
    damp_neighbours(node);
    return node;
  }

private:
  std::size_t choose(std::uint64_t draw) {
    double total = 0.0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) total += weight_[i];
    if (total > 0.0 && std::isfinite(total)) {
      const double target = rng::to_unit(draw) * total;
      double cum = 0.0;
      std::size_t last_positive = nodes_.size();
      for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (weight_[i] <= 0.0) continue;
        cum += weight_[i];
        last_positive = i;
        if (cum > target) return i;
      }
      return last_positive;
    }
    // Every remaining weight underflowed: uniform over unselected nodes.
    fallback_ = true;
    std::size_t r = rng::to_below(draw, remaining());
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (!chosen_[i] && r-- == 0) return i;
    return nodes_.size() - 1;
  }

  void damp_neighbours(NodeId center) {
    const std::size_t k = pm_.num_clusters();
    std::vector<std::pair<double, std::size_t>> dist;
    dist.reserve(remaining());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (chosen_[i]) continue;
      double s = 0.0;
      for (std::size_t r = 0; r < k; ++r) {
        const double diff = pm_.r(r, center) - pm_.r(r, nodes_[i]);
        s += diff * diff;
      }
      dist.emplace_back(std::sqrt(s), i);
    }
    if (dist.empty()) return;
    if (sigma_ == 0.0) {
      std::vector<double> d(dist.size());
      for (std::size_t i = 0; i < dist.size(); ++i) d[i] = dist[i].first;
      std::sort(d.begin(), d.end());
      const std::size_t mid = d.size() / 2;
      const double median = d.size() % 2 ? d[mid] : 0.5 * (d[mid - 1] + d[mid]);
      sigma_ = median > 0.0 ? median : 1.0;
    }
    const std::size_t take = std::min(options_.neighbors, dist.size());
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(take), dist.end());
    for (std::size_t q = 0; q < take; ++q) {
      const double d = dist[q].first;
      const double kernel = std::exp(-(d * d) / (2.0 * sigma_ * sigma_));
      weight_[dist[q].second] *= options_.damping == Damping::kDiscard ? 1.0 - kernel : kernel;
    }
  }

  const ProfileMatrix& pm_;
  std::vector<NodeId> nodes_;
  SamplerOptions options_;
  rng::Stream stream_;
  std::vector<double> weight_;
  std::vector<char> chosen_;
  std::vector<NodeId> selected_;
  double sigma_ = 0.0;
  bool fallback_ = false;
};

inline std::uint64_t sampler_key(std::uint64_t seed, std::optional<std::size_t> cls = std::nullopt) {
  return cls ? rng::derive_key(seed, {rng::label(rng::Domain::kSampler), *cls + 1})
             : rng::derive_key(seed, {rng::label(rng::Domain::kSampler), 0});
}

/// Selects `count` distinct nodes of `unlabeled`, in selection order.
inline std::vector<NodeId> ml_sample(const ProfileMatrix& pm, std::span<const NodeId> unlabeled,
                                     std::size_t count, std::uint64_t seed,
                                     const SamplerOptions& options = {},
                                     std::optional<std::size_t> cls = std::nullopt) {
  DiverseSampler sampler(pm, unlabeled, sampler_key(seed, cls), options);
  if (count > sampler.nodes().size())
    throw ValidationError("ml_sample: asked for " + std::to_string(count) + " nodes, only " +
                          std::to_string(sampler.nodes().size()) + " unlabeled");
  for (std::size_t i = 0; i < count; ++i) sampler.step();
  return {sampler.selected().begin(), sampler.selected().end()};
}

// =============================================================================
// Expansion strategies
// =============================================================================

namespace detail {

inline void check_inputs(const Graph& g, const LabeledSet& labeled, const LabelBudget& budget) {
  if (labeled.num_nodes != g.num_nodes())
    throw ValidationError("expansion: labeled set covers " + std::to_string(labeled.num_nodes) +
                          " nodes, graph has " + std::to_string(g.num_nodes()));
  if (budget.deficits.size() != labeled.num_classes())
    throw ValidationError("expansion: budget has " + std::to_string(budget.deficits.size()) +
                          " classes, labeled set has " + std::to_string(labeled.num_classes()));
  for (std::size_t j = 0; j < labeled.num_classes(); ++j)
    if (budget.counts[j] != labeled.by_class[j].size())
      throw ValidationError("expansion: budget count for class " + std::to_string(j) +
                            " disagrees with labeled set");
}

/// Per-class ranked candidates with full provenance, before conflict resolution.
struct ClassRanking {
  std::vector<AddedNode> ranked;
  std::size_t candidates = 0;
};

inline ExpansionResult finish(Method method, const Graph& g, const LabeledSet& labeled,
                              const LabelBudget& budget, std::vector<ClassRanking> rankings) {
  ExpansionResult res;
  res.method = method;
  res.t = budget.t;
  std::vector<std::vector<RankedPick>> picks(rankings.size());
  for (std::size_t j = 0; j < rankings.size(); ++j)
    for (const auto& a : rankings[j].ranked) picks[j].push_back({a.node, a.score});
  const auto chosen = resolve_conflicts(picks, budget.deficits);
  res.classes.resize(rankings.size());
  for (std::size_t j = 0; j < rankings.size(); ++j) {
    auto& c = res.classes[j];
    c.labeled = labeled.by_class[j].size();
    c.deficit = budget.deficits[j];
    c.candidates = rankings[j].candidates;
    for (std::size_t idx : chosen[j]) c.added.push_back(rankings[j].ranked[idx]);
  }
  const auto nodes = res.added_nodes();
  res.added_degree = degree_stats(g, nodes);
  return res;
}

/// Ranks `candidates` by similarity to the class's labeled nodes.
inline ClassRanking rank_by_similarity(const ProfileCorrelator& corr,
                                       std::span<const NodeId> class_nodes,
                                       std::span<const NodeId> candidates,
                                       const std::vector<double>* proximity,
                                       const std::vector<char>* sampled) {
  std::vector<SimilarityScore> score(corr.num_nodes());
  for (NodeId c : candidates) score[c] = corr.score(class_nodes, c);
  const auto order =
      top_k_of(candidates, candidates.size(), [&](NodeId v) { return score[v].value; });
  ClassRanking out;
  out.candidates = candidates.size();
  for (NodeId v : order) {
    AddedNode a;
    a.node = v;
    a.score = score[v].value;
    a.similarity = score[v].value;
    a.invalid_correlations = score[v].invalid;
    if (proximity) a.proximity = (*proximity)[v];
    if (sampled) a.sampled = (*sampled)[v] != 0;
    out.ranked.push_back(a);
  }
  return out;
}

inline bool class_active(const LabeledSet& labeled, const LabelBudget& budget, std::size_t j) {
  return budget.deficits[j] > 0 && !labeled.by_class[j].empty();
}

}  // namespace detail

/// Baseline: rank the pool by class proximity p_j.
inline ExpansionResult expand_cotrain(const ParWalkSystem& sys, const Graph& g,
                                      const LabeledSet& labeled, const LabelBudget& budget) {
  detail::check_inputs(g, labeled, budget);
  std::vector<detail::ClassRanking> rankings(labeled.num_classes());
  for (std::size_t j = 0; j < labeled.num_classes(); ++j) {
    if (!detail::class_active(labeled, budget, j)) continue;
    const auto p = proximity_vector(sys, labeled.by_class[j]);
    const auto order = top_k_of(labeled.pool, labeled.pool.size(), [&](NodeId v) { return p[v]; });
    rankings[j].candidates = labeled.pool.size();
    for (NodeId v : order) {
      AddedNode a;
      a.node = v;
      a.score = p[v];
      a.proximity = p[v];
      rankings[j].ranked.push_back(a);
    }
  }
  return detail::finish(Method::kCotrain, g, labeled, budget, std::move(rankings));
}

/// Exhaustive: rank the whole pool by profile similarity.
inline ExpansionResult expand_lexicol(const ProfileMatrix& pm, const Graph& g,
                                      const LabeledSet& labeled, const LabelBudget& budget) {
  detail::check_inputs(g, labeled, budget);
  const ProfileCorrelator corr(pm);
  std::vector<detail::ClassRanking> rankings(labeled.num_classes());
  for (std::size_t j = 0; j < labeled.num_classes(); ++j) {
    if (!detail::class_active(labeled, budget, j)) continue;
    rankings[j] = detail::rank_by_similarity(corr, labeled.by_class[j], labeled.pool, nullptr, nullptr);
  }
  return detail::finish(Method::kLexicol, g, labeled, budget, std::move(rankings));
}

/// Candidates are the ceil((1 + eta) t) pool nodes closest by p_j, re-ranked by
/// profile similarity.
inline ExpansionResult expand_tp(const ParWalkSystem& sys, const ProfileMatrix& pm, const Graph& g,
                                 const LabeledSet& labeled, const LabelBudget& budget, double eta) {
  detail::check_inputs(g, labeled, budget);
  if (!(eta >= 0.0)) throw ValidationError("tp: eta must be >= 0");
  const ProfileCorrelator corr(pm);
  const std::size_t count = ceil_count((1.0 + eta) * static_cast<double>(budget.t));
  std::vector<detail::ClassRanking> rankings(labeled.num_classes());
  for (std::size_t j = 0; j < labeled.num_classes(); ++j) {
    if (!detail::class_active(labeled, budget, j)) continue;
    const auto p = proximity_vector(sys, labeled.by_class[j]);
    auto candidates = top_k_of(labeled.pool, count, [&](NodeId v) { return p[v]; });
    std::sort(candidates.begin(), candidates.end());
    rankings[j] = detail::rank_by_similarity(corr, labeled.by_class[j], candidates, &p, nullptr);
  }
  auto res = detail::finish(Method::kTp, g, labeled, budget, std::move(rankings));
  res.eta = eta;
  return res;
}

struct MlOptions {
  SamplerOptions sampler;
  bool per_class_sampling = false;  // default: one shared sample for all classes
};

/// Candidates are the t pool nodes closest by p_j plus ceil(eta t) nodes drawn
/// by the diverse sampler, re-ranked by profile similarity.
inline ExpansionResult expand_ml(const ParWalkSystem& sys, const ProfileMatrix& pm, const Graph& g,
                                 const LabeledSet& labeled, const LabelBudget& budget, double eta,
                                 std::uint64_t seed, const MlOptions& options = {}) {
  detail::check_inputs(g, labeled, budget);
  if (!(eta >= 0.0)) throw ValidationError("ml: eta must be >= 0");
  const ProfileCorrelator corr(pm);
  const std::size_t sample_count = std::min(
      ceil_count(eta * static_cast<double>(budget.t)), labeled.pool.size());

  std::vector<NodeId> shared;
  if (!options.per_class_sampling && sample_count > 0)
    shared = ml_sample(pm, labeled.pool, sample_count, seed, options.sampler);

  std::vector<detail::ClassRanking> rankings(labeled.num_classes());
  for (std::size_t j = 0; j < labeled.num_classes(); ++j) {
    if (!detail::class_active(labeled, budget, j)) continue;
    const auto p = proximity_vector(sys, labeled.by_class[j]);
    auto candidates = top_k_of(labeled.pool, budget.t, [&](NodeId v) { return p[v]; });
    std::vector<NodeId> drawn = options.per_class_sampling && sample_count > 0
                                    ? ml_sample(pm, labeled.pool, sample_count, seed,
                                                options.sampler, j)
                                    : shared;
    std::vector<char> sampled(g.num_nodes(), 0);
    for (NodeId v : drawn) sampled[v] = 1;
    candidates.insert(candidates.end(), drawn.begin(), drawn.end());
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    rankings[j] = detail::rank_by_similarity(corr, labeled.by_class[j], candidates, &p, &sampled);
  }
  auto res = detail::finish(Method::kMl, g, labeled, budget, std::move(rankings));
  res.eta = eta;
  res.seed = seed;
  res.sampled = shared;
  return res;
}

// =============================================================================
// expansion.json
// =============================================================================

inline nlohmann::json to_json(const ExpansionResult& res) {
  using nlohmann::json;
  const auto num = [](double v) -> json { return std::isnan(v) ? json(nullptr) : json(v); };
  json classes = json::array();
  for (std::size_t j = 0; j < res.classes.size(); ++j) {
    const auto& c = res.classes[j];
    json added = json::array();
    for (const auto& a : c.added)
      added.push_back({{"node", a.node},
                       {"score", num(a.score)},
                       {"proximity", num(a.proximity)},
                       {"similarity", num(a.similarity)},
                       {"invalid_correlations", a.invalid_correlations},
                       {"sampled", a.sampled}});
    classes.push_back({{"class", j},
                       {"labeled", c.labeled},
                       {"deficit", c.deficit},
                       {"candidates", c.candidates},
                       {"added", std::move(added)}});
  }
  const auto& d = res.added_degree;
  return {{"method", std::string(method_name(res.method))},
          {"parameters", {{"t", res.t}, {"eta", res.eta}, {"seed", res.seed}}},
          {"classes", std::move(classes)},
          {"sampled_nodes", res.sampled},
          {"total_added", res.total_added()},
          {"degree_stats",
           {{"count", d.count}, {"mean", d.mean}, {"median", d.median}, {"min", d.min}, {"max", d.max}}}};
}

}  // namespace lexicol
