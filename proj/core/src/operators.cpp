#include "forestsync/operators.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace forestsync {

namespace {

void check_dim(int n, const ComplexSignal& x) {
  if (static_cast<int>(x.size()) != n)
    throw std::invalid_argument("signal has " + std::to_string(x.size()) +
                                " entries, operator dimension is " + std::to_string(n));
}

}  // namespace

void SparseHermitianOperator::matvec(const ComplexSignal& x, ComplexSignal& y) const {
  check_dim(n_, x);
  y.assign(n_, cplx{0.0, 0.0});
  for (int i = 0; i < n_; ++i) {
    cplx acc = diag_[i] * x[i];
    for (int k = offset_[i]; k < offset_[i + 1]; ++k) acc += val_[k] * x[col_[k]];
    y[i] = acc;
  }
}

ComplexSignal SparseHermitianOperator::matvec(const ComplexSignal& x) const {
  ComplexSignal y;
  matvec(x, y);
  return y;
}

double SparseHermitianOperator::quadratic_form(const ComplexSignal& f) const {
  check_dim(n_, f);
  cplx s{0.0, 0.0};
  ComplexSignal y;
  matvec(f, y);
  for (int i = 0; i < n_; ++i) s += std::conj(f[i]) * y[i];
  const double scale = norm2_sq(f);
  if (std::abs(s.imag()) > 1e-10 * std::max(scale, 1.0))
    throw std::runtime_error("quadratic form has non-negligible imaginary part " +
                             std::to_string(s.imag()) + "; operator not Hermitian?");
  return s.real();
}

SparseHermitianOperator SparseHermitianOperator::add_diagonal(
    const std::vector<double>& q) const {
  if (static_cast<int>(q.size()) != n_)
    throw std::invalid_argument("diagonal shift has wrong dimension");
  SparseHermitianOperator out = *this;
  for (int i = 0; i < n_; ++i) out.diag_[i] += q[i];
  return out;
}

SparseHermitianOperator SparseHermitianOperator::add_diagonal(double q_uniform) const {
  SparseHermitianOperator out = *this;
  for (int i = 0; i < n_; ++i) out.diag_[i] += q_uniform;
  return out;
}

SparseHermitianOperator build_connection_laplacian(const ConnectionGraph& g) {
  SparseHermitianOperator op;
  const int n = g.n_nodes();
  op.n_ = n;
  op.diag_.assign(g.degrees().begin(), g.degrees().end());
  op.offset_.assign(n + 1, 0);
  for (int i = 0; i < n; ++i) op.offset_[i + 1] = op.offset_[i] + g.row_degree_count(i);
  const int nnz = op.offset_[n];
  op.col_.resize(nnz);
  op.val_.resize(nnz);
  for (int i = 0; i < n; ++i) {
    int out = op.offset_[i];
    for (int k = g.row_begin(i); k < g.row_end(i); ++k, ++out) {
      op.col_[out] = g.neighbor(k);
      // (L_θ)_{ij} = −w_{ij} e^{−ιθ_(i,j)}
      op.val_[out] = -g.weight(k) * std::exp(cplx{0.0, -g.angle(k)});
    }
  }
  return op;
}

SparseHermitianOperator build_normalized_laplacian(const ConnectionGraph& g) {
  const int n = g.n_nodes();
  for (int i = 0; i < n; ++i)
    if (!(g.degree(i) > 0.0))
      throw std::invalid_argument("normalized Laplacian undefined: node " + std::to_string(i) +
                                  " is isolated");
  SparseHermitianOperator op = build_connection_laplacian(g);
  for (int i = 0; i < n; ++i) {
    const double si = 1.0 / std::sqrt(g.degree(i));
    for (int k = op.offset_[i]; k < op.offset_[i + 1]; ++k)
      op.val_[k] *= si / std::sqrt(g.degree(op.col_[k]));
    op.diag_[i] = 1.0;
  }
  return op;
}

std::pair<double, double> lambda_extremes_bounds(const ConnectionGraph& g) {
  if (g.n_nodes() <= 0) throw std::invalid_argument("empty graph");
  const double dmax = g.max_degree();
  return {1.0 + dmax, 2.0 * dmax};
}

}  // namespace forestsync
