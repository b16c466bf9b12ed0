#pragma once

// Sparse Hermitian operators derived from a connection graph: the connection
// Laplacian L_θ = D − A_θ with (A_θ)_{ij} = w_{ij} e^{−ιθ_(i,j)}, its
// regularized shift L_θ + Q, and the degree-normalized variant
// D^{-1/2} L_θ D^{-1/2}. Only matvec / quadratic form / diagonal access are
// provided; factorizations live in the solver module.

#include <utility>
#include <vector>

#include "forestsync/complex_signal.hpp"
#include "forestsync/graph.hpp"

namespace forestsync {

class SparseHermitianOperator {
 public:
  int dim() const { return n_; }
  const std::vector<double>& diagonal() const { return diag_; }

  // y = A x (caller-owned output buffer; y is resized).
  void matvec(const ComplexSignal& x, ComplexSignal& y) const;
  ComplexSignal matvec(const ComplexSignal& x) const;

  // Re(<f, A f>); asserts the imaginary residue is below 1e-10 * ||f||^2.
  double quadratic_form(const ComplexSignal& f) const;

  // A new operator equal to this one plus the real diagonal shift Q.
  SparseHermitianOperator add_diagonal(const std::vector<double>& q) const;
  SparseHermitianOperator add_diagonal(double q_uniform) const;

  friend SparseHermitianOperator build_connection_laplacian(const ConnectionGraph& g);
  friend SparseHermitianOperator build_normalized_laplacian(const ConnectionGraph& g);

 private:
  int n_ = 0;
  std::vector<int> offset_, col_;
  std::vector<cplx> val_;     // strictly off-diagonal entries
  std::vector<double> diag_;  // real diagonal
};

// L_θ: off-diagonal (i,j) = −w_{ij} e^{−ιθ_(i,j)}, diagonal d_i.
SparseHermitianOperator build_connection_laplacian(const ConnectionGraph& g);

// D^{-1/2} L_θ D^{-1/2}; rejects graphs with isolated (zero-degree) nodes.
SparseHermitianOperator build_normalized_laplacian(const ConnectionGraph& g);

// (lower, upper) bounds on the top eigenvalue of L_θ: (1 + d_max, 2 d_max).
std::pair<double, double> lambda_extremes_bounds(const ConnectionGraph& g);

}  // namespace forestsync
