#pragma once
// Deterministic baselines for the regularized system (L_θ + Q) f = Q g:
// a dense Hermitian positive-definite factorization for reference
// solutions, and preconditioned conjugate gradient run directly on the
// complex Hermitian operator (no embedding into a doubled real system, so
// each iteration costs one sparse matvec).

#include <functional>
#include <memory>
#include <vector>

#include "forestsync/complex_signal.hpp"
#include "forestsync/graph.hpp"

namespace forestsync {

// Exact solve via dense complex Cholesky. Requires n <= dense_size_cap().
// The factorization cannot encounter a non-positive pivot for a valid
// problem (L_θ is PSD and Q adds positive mass somewhere in every
// component it needs to); if it somehow does, or the result misses the
// residual certificate ||(L_θ+Q)f − Qg|| <= 1e-8 ||Qg||, an exception is
// raised rather than returning a silently bad reference.
ComplexSignal solve_exact(const SmoothingProblem& p);

// Reusable form of the same solver: factor (L_θ + Q) once, then smooth any
// number of observations against it — the power iteration solves the same
// system with a new right-hand side every step, where refactorizing would
// dominate the cost. Each smooth() carries the same residual certificate
// as solve_exact.
class ExactSmoother {
 public:
  ExactSmoother(std::shared_ptr<const ConnectionGraph> g, std::vector<double> q);
  ~ExactSmoother();
  ExactSmoother(ExactSmoother&&) noexcept;
  ExactSmoother& operator=(ExactSmoother&&) noexcept;

  // (L_θ + Q)^{-1} Q g_obs
  ComplexSignal smooth(const ComplexSignal& g_obs) const;

 private:
  struct Impl;  // keeps the dense factorization out of the public header
  std::unique_ptr<Impl> impl_;
};

enum class Preconditioner { none, diagonal };

struct CgResult {
  ComplexSignal f;
  int iterations = 0;          // CG steps actually performed
  bool breakdown = false;      // stopped on a non-positive curvature
  bool converged = false;      // met the residual tolerance (if any)
  double residual_norm = 0.0;  // ||(L_θ+Q)f − Qg|| at exit
  double seconds = 0.0;        // wall time spent in the iteration loop
};

// Preconditioned conjugate gradient on (L_θ+Q) f = Qg, started at f_0 = g.
// Runs m_iters steps, stopping earlier once ||r|| <= tol * ||Qg|| (tol = 0
// runs the full budget). The diagonal choice is Jacobi on the system
// operator, M^{-1} = (D+Q)^{-1}, which matches the classical
// (q^{-1}D + I)^{-1} preconditioner up to a harmless positive scalar at
// uniform q while staying well-defined when some q_i = 0.
//
// The A-norm error ||f_k − f_*||_{L_θ+Q} is non-increasing in k, as for any
// conjugate-gradient iteration. Breakdown (a search direction with
// non-positive curvature) cannot occur for a valid problem — the operator
// is PSD and the Krylov space stays orthogonal to its kernel — but is
// flagged defensively and returns the last iterate.
//
// on_iterate, when set, observes (k, f_k) after each completed step; tests
// and error-trajectory plots hook in here.
CgResult solve_cg(
    const SmoothingProblem& p, int m_iters,
    Preconditioner pre = Preconditioner::diagonal, double tol = 0.0,
    const std::function<void(int, const ComplexSignal&)>& on_iterate = {});

}  // namespace forestsync
