#pragma once

// Desk-scale exact machinery: exhaustive enumeration of all multi-type
// spanning forests (MTSFs) of a tiny graph with their sampling probabilities,
// the determinantal marginal kernel over nodes-plus-edges, and exact
// estimator moments. Everything here is deliberately independent of the
// sampler and of the baseline solvers it is used to validate — including its
// own dense Gaussian-elimination routines.

#include <cstdint>
#include <utility>
#include <vector>

#include "forestsync/complex_signal.hpp"
#include "forestsync/estimator_kind.hpp"
#include "forestsync/graph.hpp"

namespace forestsync {

// Minimal dense complex matrix for oracle-internal linear algebra.
struct OracleMatrix {
  int rows = 0, cols = 0;
  std::vector<cplx> a;  // row-major

  OracleMatrix() = default;
  OracleMatrix(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c) {}
  cplx& at(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
  const cplx& at(int i, int j) const { return a[static_cast<std::size_t>(i) * cols + j]; }
  static OracleMatrix identity(int n);
};

// Gaussian elimination with partial pivoting (oracle-local, see above).
cplx oracle_determinant(OracleMatrix m);
ComplexSignal oracle_solve(OracleMatrix m, ComplexSignal rhs);
OracleMatrix oracle_inverse(OracleMatrix m);
OracleMatrix oracle_multiply(const OracleMatrix& x, const OracleMatrix& y);

// Dense L_θ + Q assembled directly from the graph.
OracleMatrix oracle_dense_operator(const SmoothingProblem& p);
// Dense solution f_* = (L_θ+Q)^{-1} Q g via the oracle's own elimination.
ComplexSignal oracle_smooth(const SmoothingProblem& p);

// Minimum of cos θ_C over every simple cycle of the graph, by exhaustive
// enumeration (returns +1 on forests). The exact sampling mode is sound iff
// this is >= 0. Exponential in general — callers keep graphs small.
double oracle_min_cycle_cos(const ConnectionGraph& g);

// One enumerated forest: roots and edges as bitmasks over node ids and
// input-edge indices (enumeration cap keeps both inside 32 bits).
struct CatalogEntry {
  std::uint32_t root_mask = 0;
  std::uint32_t edge_mask = 0;
  double weight = 0.0;       // Π_{r} q_r · Π_{e} w_e · Π_{C} (2 − 2cos θ_C)
  double probability = 0.0;  // weight / Z
  std::vector<double> cycle_angles;
};

struct MtsfCatalog {
  int n_nodes = 0;
  int n_edges = 0;
  std::vector<CatalogEntry> entries;  // deterministic enumeration order
  double partition_constant = 0.0;    // Z = Σ weights

  // Index of the entry with the given key, or -1.
  int index_of(std::uint32_t root_mask, std::uint32_t edge_mask) const;

  // Sorted (packed key, entry index) pairs built during enumeration so that
  // index_of is a binary search; packed key = root_mask << 32 | edge_mask.
  std::vector<std::pair<std::uint64_t, int>> sorted_keys_;
};

// Exhaustive enumeration; requires |V| ≤ 8 and |E| ≤ 16. Zero-weight
// configurations (perfectly coherent unicycles, roots with q_r = 0) are kept
// with weight 0.
MtsfCatalog enumerate_mtsfs(const SmoothingProblem& p);

// Marginal kernel K = ∇_Q (L_θ+Q)^{-1} ∇_Q^* over the index set V ∪ E
// (nodes first, then input edges). ∇_Q stacks √Q on node rows above the
// twisted edge differential (∇f)(e) = √w_e f(t_e) − √w_e e^{ιθ_e} f(s_e).
OracleMatrix build_kernel(const SmoothingProblem& p);

// det of the principal minor of k on rows/cols {roots} ∪ {n + edges}.
double kernel_minor(const OracleMatrix& k, int n_nodes, std::uint32_t root_mask,
                    std::uint32_t edge_mask);

// Value of the chosen estimator on one catalog entry, computed by a
// BFS propagation that shares no code with the sampler.
ComplexSignal oracle_estimator_value(const SmoothingProblem& p, const CatalogEntry& entry,
                                     EstimatorKind kind, double alpha = 1.0);

// Σ_φ P(φ) · estimator(φ, g) — the exact expectation under the forest law.
ComplexSignal exact_estimator_expectation(const SmoothingProblem& p, EstimatorKind kind,
                                          double alpha = 1.0);

// Σ_φ P(φ) · ‖estimator(φ,g) − f_*‖² with f_* from the oracle's own solve.
// With weighted_by_q, the norm is the Q-weighted one Σ_i q_i |·|².
double exact_estimator_second_moment(const SmoothingProblem& p, EstimatorKind kind,
                                     double alpha = 1.0, bool weighted_by_q = false);

// Expected root count Σ_φ P(φ) |φ ∩ V| from the catalog.
double catalog_expected_roots(const MtsfCatalog& catalog);

// Per-node probability of landing in a unicycle, Σ_φ P(φ) 1[i ∈ unicycle].
// This is exactly the gap between the plain estimator's second moment and
// the ‖g‖²_Q − ‖f_*‖²_Q closed form, which assumes full tree occupancy:
//   E‖f̃ − f_*‖²_Q = ‖g‖²_Q − ‖f_*‖²_Q − Σ_i q_i P(i ∈ unicycle) |g_i|².
std::vector<double> unicycle_occupancy(const SmoothingProblem& p, const MtsfCatalog& catalog);

// Canonical (root_mask, edge_mask) key for a forest given as explicit root
// ids and undirected edges; used to match sampled forests against a catalog.
std::pair<std::uint32_t, std::uint32_t> forest_key(const ConnectionGraph& g,
                                                   const std::vector<int>& roots,
                                                   const std::vector<std::pair<int, int>>& edges);

}  // namespace forestsync
