#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "lexicol/binary_io.hpp"
#include "lexicol/clustering.hpp"
#include "lexicol/graph.hpp"
#include "lexicol/linalg.hpp"

namespace lexicol {

struct ParWalkSolverSettings {
  std::size_t krylov_dim = 200;  // CG iteration cap m
  double tolerance = 1e-8;
  /// Unset: Jacobi preconditioning is enabled for alpha < 1e-3.
  std::optional<bool> jacobi;
};

/// P = L + alpha * diag(lambda) and the CG settings used to apply P^{-1}.
class ParWalkSystem {
public:
  ParWalkSystem(SparseMatrix p, double alpha, std::vector<double> lambda, CgOptions solver,
                std::uint64_t graph_hash)
      : p_(std::move(p)),
        alpha_(alpha),
        lambda_(std::move(lambda)),
        solver_(solver),
        graph_hash_(graph_hash) {}

  const SparseMatrix& matrix() const noexcept { return p_; }
  double alpha() const noexcept { return alpha_; }
  std::span<const double> lambda() const noexcept { return lambda_; }
  const CgOptions& solver() const noexcept { return solver_; }
  std::size_t size() const noexcept { return p_.rows(); }
  std::uint64_t graph_hash() const noexcept { return graph_hash_; }

  /// P^{-1} b by conjugate gradients.
  CgResult solve(std::span<const double> b) const { return cg_solve(p_, b, solver_); }

private:
  SparseMatrix p_;
  double alpha_;
  std::vector<double> lambda_;
  CgOptions solver_;
  std::uint64_t graph_hash_;
};

/// Empty `lambda_diag` means Lambda = I.
inline ParWalkSystem build_parwalk(const Graph& g, double alpha,
                                   std::span<const double> lambda_diag = {},
                                   const ParWalkSolverSettings& settings = {}) {
  if (!(alpha > 0.0) || !std::isfinite(alpha))
    throw ValidationError("ParWalk: alpha must be positive (got " + std::to_string(alpha) + ")");
  const std::size_t n = g.num_nodes();
  std::vector<double> lambda(n, 1.0);
  if (!lambda_diag.empty()) {
    if (lambda_diag.size() != n)
      throw DimensionError("ParWalk: lambda has " + std::to_string(lambda_diag.size()) +
                           " entries for " + std::to_string(n) + " nodes");
    for (std::size_t i = 0; i < n; ++i)
      if (!(lambda_diag[i] > 0.0) || !std::isfinite(lambda_diag[i]))
        throw ValidationError("ParWalk: lambda entry " + std::to_string(i) + " must be positive");
    lambda.assign(lambda_diag.begin(), lambda_diag.end());
  }
  if (settings.krylov_dim < 1) throw ValidationError("ParWalk: Krylov dimension must be >= 1");
  std::vector<double> shift(n);
  for (std::size_t i = 0; i < n; ++i) shift[i] = alpha * lambda[i];
  CgOptions cg;
  cg.max_iterations = settings.krylov_dim;
  cg.tolerance = settings.tolerance;
  cg.jacobi = settings.jacobi.value_or(alpha < 1e-3);
  return ParWalkSystem(laplacian_plus_diagonal(g, shift), alpha, std::move(lambda), cg,
                       g.structure_hash());
}

/// p = sum over class nodes i (ascending) of P^{-1} e_i, one solve per node.
inline std::vector<double> proximity_vector(const ParWalkSystem& sys,
                                            std::span<const NodeId> class_nodes,
                                            std::vector<CgReport>* reports = nullptr) {
  if (class_nodes.empty()) throw ValidationError("proximity_vector: class has no labeled nodes");
  std::vector<NodeId> nodes(class_nodes.begin(), class_nodes.end());
  std::sort(nodes.begin(), nodes.end());
  const std::size_t n = sys.size();
  std::vector<double> p(n, 0.0), e(n, 0.0);
  for (NodeId v : nodes) {
    if (v >= n) throw ValidationError("proximity_vector: node " + std::to_string(v) + " out of range");
    e[v] = 1.0;
    auto solved = sys.solve(e);
    e[v] = 0.0;
    for (std::size_t i = 0; i < n; ++i) p[i] += solved.x[i];
    if (reports) reports->push_back(solved.report);
  }
  return p;
}

struct ProfileProvenance {
  std::size_t num_clusters = 0;
  double alpha = 0.0;
  std::size_t krylov_dim = 0;
  double tolerance = 0.0;
  bool jacobi = false;
  std::uint64_t partition_hash = 0;
  std::uint64_t graph_hash = 0;

  friend bool operator==(const ProfileProvenance&, const ProfileProvenance&) = default;
};

/// K x n matrix; column i is the topological profile of node i.
struct ProfileMatrix {
  DenseMatrix r;
  ProfileProvenance provenance;
  std::vector<CgReport> reports;  // one per row; not persisted

  std::size_t num_clusters() const noexcept { return r.rows(); }
  std::size_t num_nodes() const noexcept { return r.cols(); }
};

inline ProfileProvenance make_provenance(const ParWalkSystem& sys, const Partition& part) {
  return {part.num_clusters(),        sys.alpha(),  sys.solver().max_iterations,
          sys.solver().tolerance,     sys.solver().jacobi, part.hash(),
          sys.graph_hash()};
}

/// Row s of R is P^{-1} e_S with e_S uniform (1/|S|) on cluster S. Rows are
/// independent solves and may be spread over `workers` threads without
/// changing any value.
inline ProfileMatrix topological_profiles(const ParWalkSystem& sys, const Partition& part,
                                          std::size_t workers = 1) {
  const std::size_t n = sys.size();
  if (part.num_nodes() != n)
    throw ValidationError("topological_profiles: partition covers " +
                          std::to_string(part.num_nodes()) + " nodes, system has " +
                          std::to_string(n));
  const std::size_t k = part.num_clusters();
  ProfileMatrix out{DenseMatrix(k, n), make_provenance(sys, part), std::vector<CgReport>(k)};

  const auto solve_row = [&](std::size_t s) {
    std::vector<double> e(n, 0.0);
    const auto members = part.members(s);
    const double w = 1.0 / static_cast<double>(members.size());
    for (NodeId v : members) e[v] = w;
    auto solved = sys.solve(e);
    std::copy(solved.x.begin(), solved.x.end(), out.r.row(s).begin());
    out.reports[s] = solved.report;
  };

  workers = std::max<std::size_t>(1, std::min(workers, k));
  if (workers == 1) {
    for (std::size_t s = 0; s < k; ++s) solve_row(s);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t s = next++; s < k; s = next++) {
        try {
          solve_row(s);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

// =============================================================================
// profiles.bin: "LXRP", u32 version=1, u64 K, u64 n, K*n binary64 row-major,
// u64 length + UTF-8 JSON provenance.
// =============================================================================

inline nlohmann::json provenance_json(const ProfileProvenance& p) {
  char ph[17], gh[17];
  std::snprintf(ph, sizeof ph, "%016llx", static_cast<unsigned long long>(p.partition_hash));
  std::snprintf(gh, sizeof gh, "%016llx", static_cast<unsigned long long>(p.graph_hash));
  return {{"K", p.num_clusters}, {"alpha", p.alpha},   {"m", p.krylov_dim},
          {"tol", p.tolerance},  {"jacobi", p.jacobi}, {"partition_hash", ph},
          {"graph_hash", gh}};
}

inline void write_profiles(const ProfileMatrix& pm, const std::filesystem::path& path) {
  const std::string blob = provenance_json(pm.provenance).dump();
  io::write_atomically(path, [&](std::ostream& os) {
    os.write("LXRP", 4);
    io::write_le<std::uint32_t>(os, 1);
    io::write_le<std::uint64_t>(os, pm.r.rows());
    io::write_le<std::uint64_t>(os, pm.r.cols());
    for (double v : pm.r.data()) io::write_le<double>(os, v);
    io::write_le<std::uint64_t>(os, blob.size());
    os.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  });
}

inline ProfileMatrix read_profiles(const std::filesystem::path& path) {
  auto in = io::open_in(path, true);
  const std::string what = path.filename().string();
  io::expect_magic(in, "LXRP", what);
  const auto version = io::read_le<std::uint32_t>(in, what);
  if (version != 1) throw FormatError(what + ": unsupported version " + std::to_string(version));
  const auto k = io::read_le<std::uint64_t>(in, what);
  const auto n = io::read_le<std::uint64_t>(in, what);
  if (n != 0 && k > std::numeric_limits<std::uint64_t>::max() / n)
    throw FormatError(what + ": implausible shape");
  io::expect_available(in, k * n, sizeof(double), what);
  std::vector<double> values(k * n);
  for (auto& v : values) v = io::read_le<double>(in, what);
  const auto len = io::read_le<std::uint64_t>(in, what);
  io::expect_available(in, len, 1, what);
  std::string blob(len, '\0');
  if (!in.read(blob.data(), static_cast<std::streamsize>(len)))
    throw FormatError(what + ": truncated provenance");
  io::expect_end(in, what);
  ProfileMatrix pm{DenseMatrix(k, n, std::move(values)), {}, {}};
  try {
    const auto j = nlohmann::json::parse(blob);
    auto& p = pm.provenance;
    p.num_clusters = j.at("K").get<std::size_t>();
    p.alpha = j.at("alpha").get<double>();
    p.krylov_dim = j.at("m").get<std::size_t>();
    p.tolerance = j.at("tol").get<double>();
    p.jacobi = j.at("jacobi").get<bool>();
    p.partition_hash = std::stoull(j.at("partition_hash").get<std::string>(), nullptr, 16);
    p.graph_hash = std::stoull(j.at("graph_hash").get<std::string>(), nullptr, 16);
  } catch (const std::exception& e) {
    throw FormatError(what + ": bad provenance blob: " + e.what());
  }
  if (!pm.r.all_finite()) throw ValidationError(what + ": non-finite profile entries");
  return pm;
}

}  // namespace lexicol
