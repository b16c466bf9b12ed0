#include "forestsync/solvers.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "forestsync/config.hpp"
#include "forestsync/operators.hpp"

namespace forestsync {

namespace {

ComplexSignal right_hand_side(const SmoothingProblem& p) {
  ComplexSignal rhs(p.g.size());
  for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] = p.q[i] * p.g[i];
  return rhs;
}

}  // namespace

struct ExactSmoother::Impl {
  std::shared_ptr<const ConnectionGraph> graph;
  std::vector<double> q;
  Eigen::LLT<Eigen::MatrixXcd> llt;
  SparseHermitianOperator op;  // independently assembled, for certification
};

ExactSmoother::ExactSmoother(std::shared_ptr<const ConnectionGraph> g, std::vector<double> q)
    : impl_(std::make_unique<Impl>()) {
  if (!g) throw std::invalid_argument("ExactSmoother: null graph");
  const int n = g->n_nodes();
  if (static_cast<int>(q.size()) != n)
    throw std::invalid_argument("ExactSmoother: q has wrong size");
  if (n > dense_size_cap())
    throw std::runtime_error("solve_exact: graph exceeds the dense size cap");

  Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    a(i, i) = g->degree(i) + q[i];
    for (int k = g->row_begin(i); k < g->row_end(i); ++k)
      a(i, g->neighbor(k)) = -g->weight(k) * std::polar(1.0, -g->angle(k));
  }
  impl_->llt.compute(a);
  if (impl_->llt.info() != Eigen::Success)
    throw std::runtime_error("solve_exact: operator is not positive definite");
  impl_->op = build_connection_laplacian(*g).add_diagonal(q);
  impl_->graph = std::move(g);
  impl_->q = std::move(q);
}

ExactSmoother::~ExactSmoother() = default;
ExactSmoother::ExactSmoother(ExactSmoother&&) noexcept = default;
ExactSmoother& ExactSmoother::operator=(ExactSmoother&&) noexcept = default;

ComplexSignal ExactSmoother::smooth(const ComplexSignal& g_obs) const {
  const int n = impl_->graph->n_nodes();
  if (static_cast<int>(g_obs.size()) != n)
    throw std::invalid_argument("ExactSmoother: observation has wrong size");

  ComplexSignal rhs(n);
  for (int i = 0; i < n; ++i) rhs[i] = impl_->q[i] * g_obs[i];
  Eigen::Map<const Eigen::VectorXcd> b(rhs.data(), n);
  const Eigen::VectorXcd x = impl_->llt.solve(b);
  ComplexSignal f(x.data(), x.data() + n);

  // Certify against the sparse operator, which is assembled independently
  // of the dense matrix the factorization saw.
  ComplexSignal residual = impl_->op.matvec(f);
  for (int i = 0; i < n; ++i) residual[i] -= rhs[i];
  if (norm2(residual) > 1e-8 * norm2(rhs))
    throw std::runtime_error("solve_exact: residual certificate failed");
  return f;
}

ComplexSignal solve_exact(const SmoothingProblem& p) {
  return ExactSmoother(p.graph, p.q).smooth(p.g);
}

CgResult solve_cg(const SmoothingProblem& p, int m_iters, Preconditioner pre,
                  double tol,
                  const std::function<void(int, const ComplexSignal&)>& on_iterate) {
  if (m_iters < 1) throw std::invalid_argument("solve_cg: m_iters must be >= 1");
  if (tol < 0.0) throw std::invalid_argument("solve_cg: tol must be >= 0");
  const ConnectionGraph& g = p.g_ref();
  const int n = g.n_nodes();

  const SparseHermitianOperator op =
      build_connection_laplacian(g).add_diagonal(p.q);

  std::vector<double> inv_diag;
  if (pre == Preconditioner::diagonal) {
    inv_diag.resize(n);
    for (int i = 0; i < n; ++i) {
      const double d = op.diagonal()[i];
      if (!(d > 0.0))
        throw std::invalid_argument(
            "solve_cg: diagonal preconditioner undefined where d_i + q_i = 0");
      inv_diag[i] = 1.0 / d;
    }
  }
  const auto precondition = [&](const ComplexSignal& r) {
    if (pre == Preconditioner::none) return r;
    ComplexSignal z(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) z[i] = inv_diag[i] * r[i];
    return z;
  };

  const ComplexSignal rhs = right_hand_side(p);
  const double rhs_norm = norm2(rhs);

  CgResult res;
  res.f = p.g;  // f_0 = g
  ComplexSignal r = op.matvec(res.f);
  for (int i = 0; i < n; ++i) r[i] = rhs[i] - r[i];

  double r_norm = norm2(r);
  if (tol > 0.0 && r_norm <= tol * rhs_norm) {
    res.converged = true;
    res.residual_norm = r_norm;
    return res;
  }

  ComplexSignal z = precondition(r);
  double rho = inner(r, z).real();
  ComplexSignal d = z;
  ComplexSignal ad;

  const auto start = std::chrono::steady_clock::now();
  for (int k = 1; k <= m_iters; ++k) {
    if (!(rho > 0.0)) {
      res.breakdown = r_norm > 0.0;
      res.converged = r_norm == 0.0;
      break;
    }
    op.matvec(d, ad);
    const double curvature = inner(d, ad).real();
    if (!(curvature > 0.0) || !std::isfinite(curvature)) {
      res.breakdown = true;
      break;
    }
    const double alpha = rho / curvature;
    axpy(alpha, d, res.f);
    axpy(-alpha, ad, r);
    res.iterations = k;
    if (on_iterate) on_iterate(k, res.f);

    r_norm = norm2(r);
    if (tol > 0.0 && r_norm <= tol * rhs_norm) {
      res.converged = true;
      break;
    }
    if (k == m_iters) break;

    z = precondition(r);
    const double rho_next = inner(r, z).real();
    const double beta = rho_next / rho;
    rho = rho_next;
    for (int i = 0; i < n; ++i) d[i] = z[i] + beta * d[i];
  }
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                              start)
                    .count();
  res.residual_norm = r_norm;
  return res;
}

}  // namespace forestsync
