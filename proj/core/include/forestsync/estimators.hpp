#pragma once

// Unbiased Monte-Carlo estimators of the regularized smoother
// f_* = (L_θ+Q)^{-1} Q g built from sampled MTSFs: the plain root-propagation
// estimator, its Rao-Blackwellized (tree-averaged) refinement, and a
// one-step gradient control variate on top of the latter. Exact-mode
// replicates are averaged plainly; importance-mode replicates are combined
// with self-normalized weights. Also: the Feynman-Kac single-point walker
// and the root-counting estimator of the effective degrees of freedom
// s(Q) = tr((L_θ+Q)^{-1} Q).

#include <cstdint>
#include <memory>
#include <vector>

#include "forestsync/complex_signal.hpp"
#include "forestsync/estimator_kind.hpp"
#include "forestsync/graph.hpp"
#include "forestsync/rng.hpp"
#include "forestsync/sampler.hpp"

namespace forestsync {

// Streaming weighted mean of replicate estimates, mean = sum / weight_sum.
// Exact-mode replicates enter with log-weight 0, so weight_sum == m and the
// mean is the plain average. Importance-mode replicates enter with their
// forest's log-weight; sums are kept at a floating log-scale so products of
// per-cycle factors can never overflow. Merging is associative and
// commutative, so replicate batches may be reduced in any order.
class EstimateAccumulator {
 public:
  explicit EstimateAccumulator(int n) : sum_(n, cplx(0.0, 0.0)) {}

  void add(const ComplexSignal& estimate, double log_weight = 0.0);
  void merge(const EstimateAccumulator& other);

  ComplexSignal mean() const;  // throws when weight_sum == 0
  std::int64_t count() const { return m_; }
  double weight_sum() const { return weight_sum_; }
  double log_scale() const { return log_scale_; }
  // Effective sample size (Σw)²/Σw² of the importance weights; equals m in
  // exact mode.
  double effective_sample_size() const;

 private:
  ComplexSignal sum_;           // Σ w_k·est_k, in units of e^{log_scale_}
  double weight_sum_ = 0.0;     // Σ w_k, same units
  double weight_sq_sum_ = 0.0;  // Σ w_k², in units of e^{2·log_scale_}
  double log_scale_ = 0.0;
  std::int64_t m_ = 0;
};

// Plain estimator: each tree node receives its root's observation transported
// along the tree path, f̃(i) = e^{ι·rotation(i)} g(root(i)); unicycle nodes 0.
ComplexSignal estimate_tilde(const Mtsf& phi, const ComplexSignal& g);

// Rao-Blackwellized estimator: conditionally on the forest, the root position
// within a tree is q-weighted, so the root receives
//   h = Σ_{j∈tree} q_j e^{-ι·rotation(j)} g(j) / Σ_{j∈tree} q_j
// and every tree node gets h transported outward; unicycle nodes 0.
ComplexSignal estimate_rao_blackwell(const Mtsf& phi, const ComplexSignal& g,
                                     const std::vector<double>& q);

// One preconditioned gradient step from the Rao-Blackwell mean:
//   f̂ = f̄ − α (D+Q)^{-1} ((L_θ+Q) f̄ − Q g),
// the heterogeneous form of f̄ − α P (q^{-1}(L_θ+qI) f̄ − g) with
// P = (q^{-1}D + I)^{-1}. Unbiased for any α; α = 1 by default. Throws if
// some node has d_i + q_i = 0.
ComplexSignal estimate_gradient_step(const ComplexSignal& rb_estimate, const SmoothingProblem& p,
                                     double alpha = 1.0);

// Feynman-Kac point estimate of f_*(node): m independent q-interrupted raw
// walks (no loop erasure); each ends by boundary absorption at some node j
// and contributes e^{-ι·(path angle node→j)} g(j). Throws if the component
// of `node` carries no q mass (the walk could never stop).
cplx feynman_kac_point(const SmoothingProblem& p, int node, int m, Rng& rng);

// Effective degrees of freedom s(Q) = tr((L_θ+Q)^{-1} Q): mean root count
// over m sampled forests in exact mode; under importance sampling the root
// counts are combined self-normalized, like the signal estimators.
double estimate_dof(const SmoothingProblem& p, int m, const WalkConfig& cfg);

// Monte-Carlo driver: m replicate forests from one sampler, combined by the
// accumulator; for gradient_step the affine refinement is applied once to
// the combined Rao-Blackwell mean (identical by linearity).
struct MtsfSmoothingResult {
  ComplexSignal f;
  std::int64_t m = 0;
  double mean_steps = 0.0;            // random_successor calls per replicate
  double effective_sample_size = 0.0; // == m in exact mode
  SamplerStats stats;
};

MtsfSmoothingResult smooth_mtsf(const SmoothingProblem& p, EstimatorKind kind, int m,
                                const WalkConfig& cfg, double alpha = 1.0);

// Normalized-Laplacian smoothing q(L̃_θ+qI)^{-1} g without new machinery:
// L̃_θ+qI = D^{-1/2}(L_θ+qD)D^{-1/2}, so solving the heterogeneous problem
// with Q = qD on g' = D^{-1/2} g and rescaling the result by D^{1/2} gives
// the normalized smoother. Rejects graphs with isolated nodes.
struct NormalizedSmoothing {
  SmoothingProblem problem;        // Q = q·D, signal D^{-1/2} g
  std::vector<double> post_scale;  // √d_i, multiplies the sub-problem's solution
};

NormalizedSmoothing make_normalized_smoothing(std::shared_ptr<const ConnectionGraph> g, double q,
                                              const ComplexSignal& signal);
ComplexSignal finish_normalized(const NormalizedSmoothing& ns, const ComplexSignal& f);

}  // namespace forestsync
