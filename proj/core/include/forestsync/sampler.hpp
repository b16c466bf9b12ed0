#pragma once

// Random multi-type spanning forest (MTSF) sampling. The sampler runs
// loop-erased random walks in the style of Wilson's algorithm (Wilson 1996),
// with two departures: the walk is interrupted and rooted where it stands
// with probability proportional to the local regularization weight q, and a
// loop closed by the walk is kept as a unicycle component with probability
// driven by its holonomy (1 − cos θ_C in exact mode). Kept components are
// frozen; subsequent walks attach to them. The stationary law over forests φ
// is proportional to  Π_{roots r} q_r · Π_{edges e} w_e · Π_{cycles C} (2 − 2 cos θ_C).
//
// Exact mode requires every closable cycle to satisfy cos θ_C ≥ 0 (weak
// inconsistency); the first violation encountered aborts the sample. The
// importance variant keeps violating cycles systematically and records a
// log-weight so estimators can reweight samples back to the target law.

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <memory>
#include <utility>
#include <vector>

#include "forestsync/graph.hpp"
#include "forestsync/rng.hpp"

namespace forestsync {

enum class ComponentKind : std::uint8_t { tree, unicycle };
enum class SampleMode : std::uint8_t { exact, importance };
enum class CycleDetection : std::uint8_t { one_counter, multi_counter };

struct WalkConfig {
  SampleMode mode = SampleMode::exact;
  CycleDetection detection = CycleDetection::multi_counter;
  std::uint64_t seed = 0;
};

// A sampled forest. Every node belongs to exactly one component, either a
// tree (has a root, no cycle) or a unicycle (exactly one cycle, no root).
// `parent` points one hop toward the root (trees) or around the cycle
// (cycle nodes); roots hold parent = -1. `rotation[i]` is the accumulated
// connection angle from the component's anchor to i — the root for trees,
// so a tree estimate transports g(root) by e^{ι·rotation[i]}; for unicycles
// the anchor is the node that closed the cycle and rotations are only
// meaningful up to the cycle's holonomy (estimators ignore unicycle nodes).
struct Mtsf {
  std::vector<ComponentKind> kind;
  std::vector<int> root;             // tree nodes: root id; unicycle nodes: -1
  std::vector<int> parent;           // -1 for tree roots
  std::vector<double> rotation;      // canonicalized to (−π, π]
  std::vector<std::uint8_t> on_cycle;
  std::vector<int> roots;            // ascending
  std::vector<double> accepted_cycles;  // holonomies, in acceptance order
  double importance_log_weight = 0.0;   // Σ log max(1, 1 − cos θ_C); 0 in exact mode

  int n_nodes() const { return static_cast<int>(kind.size()); }
  // Undirected (child, parent) pairs, one per non-root node.
  std::vector<std::pair<int, int>> edge_pairs() const;

  bool operator==(const Mtsf&) const = default;
};

// One line per node: `i kind root parent rotation`, then a trailer with the
// accepted cycle holonomies and, if nonzero, the importance log-weight.
void dump_mtsf(std::ostream& out, const Mtsf& m);

// One step of the q-interrupted random walk, shared by the MTSF sampler and
// the Feynman-Kac walker: returns -1 (boundary absorption, probability
// q_u/(d_u+q_u)) or an adjacency slot of `node` (probability w_e/(d_u+q_u)).
// Consumes exactly one uniform variate. Throws if d_u + q_u = 0.
int interrupted_step_slot(const ConnectionGraph& g, const std::vector<double>& q, int node,
                          Rng& rng);

struct SamplerStats {
  std::uint64_t samples = 0;
  std::uint64_t successor_calls = 0;  // cumulative random-walk steps
  std::uint64_t cycles_closed = 0;
  std::uint64_t cycles_kept = 0;
  std::uint64_t cycles_discarded = 0;
};

class MtsfSampler {
 public:
  static constexpr int kBoundary = -1;

  // Rejects problems where some connected component can never terminate a
  // walk: total q there is zero and every cycle holonomy is coherent (zero).
  MtsfSampler(const SmoothingProblem& p, const WalkConfig& cfg);

  Mtsf sample();

  // One step of the interrupted walk from `node`: returns kBoundary with
  // probability q_u / (d_u + q_u), otherwise a neighbor v with probability
  // w_{uv} / (d_u + q_u). Consumes exactly one uniform variate per call.
  int random_successor(int node);

  const SamplerStats& stats() const { return stats_; }
  void reset_stats() { stats_ = SamplerStats{}; }
  std::uint64_t last_successor_calls() const { return last_calls_; }

  // Upper bound on the expected number of random_successor calls per sample:
  // tr((L + Q)^{-1} (D + Q)) with the combinatorial Laplacian L (connection
  // ignored — cycle acceptance only shortens walks). Dense O(n³); throws if
  // n exceeds dense_size_cap() or if some component has no termination mass.
  static double expected_steps_bound(const SmoothingProblem& p);

 private:
  int successor_slot(int node);  // adjacency slot, or kBoundary
  template <CycleDetection D>
  Mtsf sample_impl();

  // Cycle-detection bookkeeping. Both schemes decide the same predicate —
  // "is v on the current retained path?" — so a fixed seed yields identical
  // samples under either. The one-counter scheme stamps path nodes with the
  // walk number and, on a discard, walks the erased suffix to clear stamps
  // (O(loop length)). The multi-counter scheme instead stamps nodes with a
  // (walk, era, serial) triple and invalidates a whole erased suffix in O(1)
  // by capping the serial range its era considers valid; eras retired by
  // deeper discards are capped to zero as they pop off the live stack.
  template <CycleDetection D>
  void begin_walk();
  template <CycleDetection D>
  void stamp(int node);
  template <CycleDetection D>
  bool on_path(int node) const;
  template <CycleDetection D>
  void discard_suffix(int keep_index);
  void compact_eras();

  std::shared_ptr<const ConnectionGraph> graph_;
  std::vector<double> q_;
  WalkConfig cfg_;
  Rng rng_;
  SamplerStats stats_;
  std::uint64_t last_calls_ = 0;

  // Walk scratch.
  struct PathEntry {
    int node;
    int in_slot;     // adjacency slot used to enter this node (-1 for start)
    double prefix;   // accumulated angle from the walk start (not reduced)
  };
  std::vector<PathEntry> path_;
  std::vector<int> pos_;             // node -> index in path_, stale unless stamped
  std::vector<std::uint8_t> spanned_;

  // One-counter state.
  std::vector<std::uint64_t> mark_;
  std::uint64_t walk_no_ = 0;

  // Multi-counter state.
  struct Stamp {
    std::uint64_t walk = 0;
    std::int64_t era = 0;
    std::int64_t val = 0;
  };
  std::vector<Stamp> stamp_;
  std::vector<std::int64_t> era_cap_;  // per era: highest serial still on the path
  std::vector<std::int64_t> live_;     // stack of eras with uncapped tails
  std::int64_t next_val_ = 0;
};

}  // namespace forestsync
