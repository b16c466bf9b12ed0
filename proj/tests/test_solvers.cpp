#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "forestsync/complex_signal.hpp"
#include "forestsync/graph.hpp"
#include "forestsync/operators.hpp"
#include "forestsync/oracle.hpp"
#include "forestsync/rng.hpp"
#include "forestsync/solvers.hpp"
#include "forestsync/synthetic.hpp"

using namespace forestsync;

namespace {

ComplexSignal random_signal(int n, std::uint64_t seed) {
  Rng rng(seed);
  ComplexSignal g(n);
  for (cplx& v : g) v = rng.complex_normal();
  return g;
}

SmoothingProblem random_instance(int n, double mean_degree, double eta,
                                 std::uint64_t seed) {
  Rng rng(seed);
  const Skeleton skel = gen_er(n, mean_degree, rng);
  const ConnectionInstance inst = gen_connection(skel, eta, rng);
  std::vector<double> q(inst.graph->n_nodes());
  for (double& v : q) v = rng.uniform(0.2, 3.0);
  ComplexSignal g(inst.graph->n_nodes());
  for (cplx& v : g) v = rng.complex_normal();
  return SmoothingProblem(inst.graph, std::move(q), std::move(g));
}

double a_norm_error(const SparseHermitianOperator& op, const ComplexSignal& f,
                    const ComplexSignal& reference) {
  ComplexSignal diff(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) diff[i] = f[i] - reference[i];
  return std::sqrt(std::max(0.0, op.quadratic_form(diff)));
}

}  // namespace

TEST_CASE("solve_exact: agrees with the elimination oracle") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const SmoothingProblem p = random_instance(8, 3.0, 0.4, seed);
    const ComplexSignal f = solve_exact(p);
    const ComplexSignal ref = oracle_smooth(p);
    CHECK(dist2(f, ref) < 1e-9);
  }
}

TEST_CASE("solve_exact: huge q reproduces the observation") {
  Rng rng(7);
  const Skeleton skel = gen_er(30, 5.0, rng);
  const ConnectionInstance inst = gen_connection(skel, 0.3, rng);
  const double q = 1e8 * inst.graph->max_degree();
  const SmoothingProblem p(inst.graph, q, random_signal(inst.graph->n_nodes(), 8));
  const ComplexSignal f = solve_exact(p);
  CHECK(dist2(f, p.g) < 1e-6 * norm2(p.g));
}

TEST_CASE("solve_exact: kernel vector of a synchronizable connection is fixed") {
  Rng rng(11);
  const Skeleton skel = gen_er(25, 4.0, rng);
  const ConnectionInstance inst = gen_connection(skel, 0.0, rng);
  ComplexSignal x(inst.graph->n_nodes());
  for (int i = 0; i < inst.graph->n_nodes(); ++i)
    x[i] = std::polar(1.0, inst.omega[i]);
  const SmoothingProblem p(inst.graph, 0.7, x);
  const ComplexSignal f = solve_exact(p);
  CHECK(dist2(f, x) < 1e-9);
}

TEST_CASE("solve_exact: dense size cap enforced") {
  const int big = 4097;
  std::vector<EdgeRecord> edges;
  for (int i = 0; i + 1 < big; ++i) edges.push_back({i, i + 1, 1.0, 0.0});
  const auto chain = std::make_shared<ConnectionGraph>(
      ConnectionGraph::build(big, std::move(edges)));
  const SmoothingProblem p(chain, 1.0, ComplexSignal(big, cplx(1.0, 0.0)));
  CHECK_THROWS_AS(solve_exact(p), std::runtime_error);
}

TEST_CASE("solve_cg: starting at the solution converges at iteration zero") {
  Rng rng(13);
  const Skeleton skel = gen_er(20, 4.0, rng);
  const ConnectionInstance inst = gen_connection(skel, 0.0, rng);
  ComplexSignal x(inst.graph->n_nodes());
  for (int i = 0; i < inst.graph->n_nodes(); ++i)
    x[i] = std::polar(1.0, inst.omega[i]);
  // g lies in the kernel of L_θ, so f_* = g and the initial iterate is
  // already exact.
  const SmoothingProblem p(inst.graph, 1.3, x);
  const CgResult res = solve_cg(p, 10, Preconditioner::diagonal, 1e-10);
  CHECK(res.converged);
  CHECK(res.iterations == 0);
  CHECK_FALSE(res.breakdown);
  CHECK(dist2(res.f, x) == 0.0);
}

TEST_CASE("solve_cg: single node is exact immediately") {
  const auto g = std::make_shared<ConnectionGraph>(
      ConnectionGraph::build(1, std::vector<EdgeRecord>{}));
  const SmoothingProblem p(g, 2.5, ComplexSignal{cplx(0.3, -1.1)});
  const CgResult res = solve_cg(p, 1, Preconditioner::none, 1e-12);
  CHECK(res.converged);
  CHECK(dist2(res.f, p.g) < 1e-14);
}

TEST_CASE("solve_cg: two-eigenvalue system finishes in two steps") {
  // Complete graph with a trivial connection and uniform q: L+qI has
  // exactly two distinct eigenvalues (q and n+q), so conjugate gradient
  // terminates in two iterations up to rounding.
  const int n = 5;
  std::vector<EdgeRecord> edges;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) edges.push_back({i, j, 1.0, 0.0});
  const auto g = std::make_shared<ConnectionGraph>(
      ConnectionGraph::build(n, std::move(edges)));
  const SmoothingProblem p(g, 0.8, random_signal(n, 17));
  const ComplexSignal exact = solve_exact(p);
  for (const Preconditioner pre : {Preconditioner::none, Preconditioner::diagonal}) {
    const CgResult res = solve_cg(p, 2, pre);
    CHECK(res.iterations == 2);
    CHECK(dist2(res.f, exact) < 1e-12);
  }
}

TEST_CASE("solve_cg: matches the dense reference on a mid-size instance") {
  const SmoothingProblem p = random_instance(100, 6.0, 0.2, 23);
  const ComplexSignal exact = solve_exact(p);
  const CgResult res = solve_cg(p, 200, Preconditioner::diagonal);
  CHECK(res.iterations <= 200);
  CHECK(dist2(res.f, exact) < 1e-8 * norm2(exact));

  // Early stop on the residual tolerance reports convergence.
  const CgResult stopped = solve_cg(p, 200, Preconditioner::diagonal, 1e-8);
  CHECK(stopped.converged);
  CHECK(stopped.iterations < 200);
  const SparseHermitianOperator op =
      build_connection_laplacian(p.g_ref()).add_diagonal(p.q);
  ComplexSignal resid = op.matvec(stopped.f);
  for (std::size_t i = 0; i < resid.size(); ++i) resid[i] -= p.q[i] * p.g[i];
  ComplexSignal rhs(p.g.size());
  for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] = p.q[i] * p.g[i];
  CHECK(norm2(resid) <= 1e-8 * norm2(rhs) * (1.0 + 1e-12));
  // The recurrence residual and the from-scratch residual may drift apart
  // by rounding, but only far below the tolerance scale.
  CHECK(std::abs(norm2(resid) - stopped.residual_norm) < 1e-9 * norm2(rhs));
}

TEST_CASE("solve_cg: A-norm error is non-increasing") {
  const SmoothingProblem p = random_instance(60, 5.0, 0.5, 29);
  const ComplexSignal exact = solve_exact(p);
  const SparseHermitianOperator op =
      build_connection_laplacian(p.g_ref()).add_diagonal(p.q);
  for (const Preconditioner pre : {Preconditioner::none, Preconditioner::diagonal}) {
    std::vector<double> errors = {a_norm_error(op, p.g, exact)};
    solve_cg(p, 60, pre, 0.0, [&](int, const ComplexSignal& f) {
      errors.push_back(a_norm_error(op, f, exact));
    });
    for (std::size_t k = 1; k < errors.size(); ++k)
      CHECK(errors[k] <= errors[k - 1] * (1.0 + 1e-10) + 1e-12);
  }
}

TEST_CASE("solve_cg: diagonal preconditioning no slower on heterogeneous graphs") {
  // Median iteration count to a 1e-6 residual over a small heterogeneous
  // family; Jacobi must not lose to the unpreconditioned run.
  std::vector<int> iters_none, iters_diag;
  for (int rep = 0; rep < 7; ++rep) {
    Rng rng(900 + rep);
    const Skeleton skel = gen_dcsbm_moderate(400, rng);
    const ConnectionInstance inst =
        gen_connection(skel, std::numbers::pi / (2.0 * skel.n_nodes), rng);
    const double q = 1e-2 * inst.graph->mean_degree();
    const SmoothingProblem p(inst.graph, q,
                             random_signal(inst.graph->n_nodes(), 950 + rep));
    const CgResult none = solve_cg(p, 5000, Preconditioner::none, 1e-6);
    const CgResult diag = solve_cg(p, 5000, Preconditioner::diagonal, 1e-6);
    REQUIRE(none.converged);
    REQUIRE(diag.converged);
    REQUIRE(none.iterations >= 10);  // the family is genuinely ill-conditioned
    iters_none.push_back(none.iterations);
    iters_diag.push_back(diag.iterations);
  }
  std::sort(iters_none.begin(), iters_none.end());
  std::sort(iters_diag.begin(), iters_diag.end());
  CHECK(iters_diag[3] <= iters_none[3]);  // medians of 7
}

TEST_CASE("solve_cg: parameter validation") {
  const SmoothingProblem p = random_instance(10, 3.0, 0.1, 31);
  CHECK_THROWS_AS(solve_cg(p, 0), std::invalid_argument);
  CHECK_THROWS_AS(solve_cg(p, 5, Preconditioner::diagonal, -1.0),
                  std::invalid_argument);
  const CgResult res = solve_cg(p, 5);
  CHECK(res.seconds >= 0.0);
  CHECK(res.iterations == 5);
  CHECK_FALSE(res.breakdown);
}
