#pragma once
// Angular synchronization: recover unit-modulus node phases from noisy
// pairwise rotations. The core routine is inverse power iteration on the
// regularized connection Laplacian — each step smooths the current iterate,
// f_{r+1} ∝ (L_θ+Q)^{-1} Q f_r — with the smoother pluggable: dense exact
// solve, preconditioned CG, or the randomized forest estimators. Spanning
// tree propagation baselines (uniform and maximum-coherence) are provided
// for comparison, as is plain power iteration on the connection adjacency.
//
// The normalized-Laplacian variant needs no dedicated code path: passing
// per-node weights q_i = q·d_i makes the iteration map equal (up to a
// D^{1/2} similarity) to power iteration on q(L̃_θ + qI)^{-1}.

#include <vector>

#include "forestsync/complex_signal.hpp"
#include "forestsync/graph.hpp"
#include "forestsync/rng.hpp"
#include "forestsync/sampler.hpp"
#include "forestsync/solvers.hpp"

namespace forestsync {

enum class SmootherKind { exact, cg, mtsf_rb, mtsf_gs, adjacency };

struct SyncOptions {
  SmootherKind smoother = SmootherKind::exact;
  // Per-iteration effort: CG steps for `cg`, forest count for the mtsf
  // smoothers; ignored by `exact` and `adjacency`.
  int m = 5;
  // Walk mode / cycle detection for the mtsf smoothers. The seed field is
  // ignored: per-iteration seeds are derived from the caller's rng, so the
  // whole run is reproducible from one seed.
  WalkConfig walk;
  double alpha = 1.0;  // gradient-step damping for mtsf_gs
  Preconditioner preconditioner = Preconditioner::diagonal;
  // Replace the global ℓ₂ normalization by an entrywise one (generalized
  // power method style); the iterate is still scaled to unit ℓ₂ norm
  // afterwards so the invariant below holds for every smoother.
  bool componentwise = false;
  // Draw one forest batch seed and reuse it at every iteration, so each
  // step re-samples the same forests. Kept as an experimentation flag;
  // default is fresh forests per step.
  bool reuse_forests = false;
};

struct SyncStep {
  int k = 0;
  double seconds_total = 0.0;  // cumulative smoothing+normalize wall time
  double e_s = 0.0;            // valid only when has_error
  bool has_error = false;
};

struct SyncResult {
  ComplexSignal f;  // final iterate, unit ℓ₂ norm
  int k = 0;        // iterations performed
  std::vector<SyncStep> history;
};

// Runs k smoothing+normalize steps from f0 (any nonzero vector; the
// problem's observation g is ignored — each step smooths the current
// iterate). When x_true is given, each history entry carries the
// synchronization error of the rescaled iterate against it. Error
// evaluation is excluded from the recorded wall times. Throws if a
// smoothing step returns a numerically zero vector.
SyncResult power_iterate(const SmoothingProblem& p, const SyncOptions& opt,
                         int k, const ComplexSignal& f0, Rng& rng,
                         const ComplexSignal* x_true = nullptr);

// min over unit-modulus r of ||f - r x||_2 / n, solved in closed form:
// the optimal r is the phase of <x, f>. When <x, f> = 0 every phase is
// optimal; r = 1 is returned with the degenerate flag set.
struct SyncError {
  double value = 0.0;
  cplx phase = cplx(1.0, 0.0);  // the minimizing r
  bool degenerate = false;
};
SyncError sync_error(const ComplexSignal& f, const ComplexSignal& x_true);

// Same, after rescaling f to ||f||_2 = sqrt(n): spectral iterates are unit
// ℓ₂ vectors while ground truth has unit-modulus entries, so they live on
// different spheres; this puts them on the same one.
SyncError sync_error_rescaled(const ComplexSignal& f, const ComplexSignal& x_true);

// Unit-modulus entries with uniform phases, scaled to unit ℓ₂ norm — the
// standard initialization for the power iteration.
ComplexSignal random_phase_state(int n, Rng& rng);

// Spanning-tree propagation baselines: fix phase 1 at a root and transport
// it along tree edges. Uniform spanning tree via Wilson's algorithm (walk
// respects edge weights), and the deterministic maximum spanning tree under
// edge score |cos θ_e| (ties broken by edge id). Both require a connected
// graph and return unit-modulus assignments.
ComplexSignal sync_ust_baseline(const SmoothingProblem& p, Rng& rng);
ComplexSignal sync_mst_baseline(const SmoothingProblem& p);

}  // namespace forestsync
