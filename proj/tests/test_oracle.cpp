#include "forestsync/oracle.hpp"

#include <bit>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "doctest.h"
#include "forestsync/rng.hpp"

using namespace forestsync;

namespace {

constexpr double pi = std::numbers::pi;

std::shared_ptr<ConnectionGraph> make_graph(int n, std::vector<EdgeRecord> edges) {
  return std::make_shared<ConnectionGraph>(ConnectionGraph::build(n, std::move(edges)));
}

ComplexSignal random_signal(int n, std::uint64_t seed) {
  Rng rng(seed);
  ComplexSignal f(n);
  for (auto& x : f) x = rng.complex_normal();
  return f;
}

// A 5-node graph with mixed weights, incoherent cycles and a pendant node.
SmoothingProblem pendant_problem() {
  auto g = make_graph(5, {{0, 1, 2.0, 0.4},
                          {1, 2, 1.0, -1.3},
                          {2, 0, 0.5, 2.2},
                          {2, 3, 1.5, pi / 2},
                          {3, 4, 0.25, -0.7}});
  return SmoothingProblem(g, std::vector<double>{0.0, 1.0, 2.0, 0.0, 0.5},
                          random_signal(5, 42));
}

SmoothingProblem triangle_problem(double q = 1.25) {
  auto g = make_graph(3, {{0, 1, 1.0, 0.3}, {1, 2, 1.0, 0.5}, {2, 0, 1.0, -0.2}});
  return SmoothingProblem(g, q, random_signal(3, 5));
}

double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(1.0, std::abs(want));
}

}  // namespace

TEST_CASE("dense elimination: determinant, solve, inverse, multiply") {
  CHECK(std::abs(oracle_determinant(OracleMatrix::identity(4)) - cplx{1.0, 0.0}) < 1e-15);

  OracleMatrix m(2, 2);
  m.at(0, 0) = {1.0, 1.0};
  m.at(0, 1) = {2.0, 0.0};
  m.at(1, 0) = {0.0, -1.0};
  m.at(1, 1) = {3.0, 2.0};
  // det = (1+i)(3+2i) - 2(-i) = 1 + 7i.
  CHECK(std::abs(oracle_determinant(m) - cplx{1.0, 7.0}) < 1e-14);

  const ComplexSignal rhs = {{1.0, 0.0}, {0.0, 2.0}};
  const ComplexSignal x = oracle_solve(m, rhs);
  // Residual of the solve.
  for (int i = 0; i < 2; ++i) {
    cplx acc{0.0, 0.0};
    for (int j = 0; j < 2; ++j) acc += m.at(i, j) * x[j];
    CHECK(std::abs(acc - rhs[i]) < 1e-14);
  }

  const OracleMatrix inv = oracle_inverse(m);
  const OracleMatrix prod = oracle_multiply(m, inv);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      CHECK(std::abs(prod.at(i, j) - (i == j ? cplx{1.0, 0.0} : cplx{0.0, 0.0})) < 1e-14);

  OracleMatrix singular(2, 2);
  singular.at(0, 0) = {1.0, 0.0};
  singular.at(0, 1) = {2.0, 0.0};
  singular.at(1, 0) = {2.0, 0.0};
  singular.at(1, 1) = {4.0, 0.0};
  CHECK(std::abs(oracle_determinant(singular)) < 1e-14);
  CHECK_THROWS_AS(oracle_solve(singular, rhs), std::runtime_error);
}

TEST_CASE("single-edge catalog: 3 forests, Z = 3") {
  auto g = make_graph(2, {{0, 1, 1.0, 0.7}});
  const SmoothingProblem p(g, 1.0, ComplexSignal(2, cplx{1.0, 0.0}));
  const MtsfCatalog cat = enumerate_mtsfs(p);

  CHECK(cat.entries.size() == 3);
  CHECK(cat.partition_constant == doctest::Approx(3.0));
  CHECK(rel_err(cat.partition_constant,
                oracle_determinant(oracle_dense_operator(p)).real()) < 1e-12);

  // Both-nodes-rooted empty forest, and the two single-root trees.
  CHECK(cat.index_of(0b11, 0b0) >= 0);
  CHECK(cat.index_of(0b01, 0b1) >= 0);
  CHECK(cat.index_of(0b10, 0b1) >= 0);
  CHECK(cat.index_of(0b00, 0b1) == -1);

  double total = 0.0;
  for (const CatalogEntry& e : cat.entries) total += e.probability;
  CHECK(total == doctest::Approx(1.0));
}

TEST_CASE("single-edge catalog with a dead node: zero-weight entries are kept") {
  auto g = make_graph(2, {{0, 1, 1.0, 0.0}});
  const SmoothingProblem p(g, std::vector<double>{2.0, 0.0}, ComplexSignal(2, cplx{1.0, 0.0}));
  const MtsfCatalog cat = enumerate_mtsfs(p);

  CHECK(cat.entries.size() == 3);
  CHECK(cat.partition_constant == doctest::Approx(2.0));  // det [[3,-1],[-1,1]] = 2

  int positive = 0;
  for (const CatalogEntry& e : cat.entries) positive += e.weight > 0.0 ? 1 : 0;
  CHECK(positive == 1);
  const int dead = cat.index_of(0b11, 0b0);  // root factor q_0 q_1 = 0
  REQUIRE(dead >= 0);
  CHECK(cat.entries[dead].weight == 0.0);
  CHECK(cat.entries[dead].probability == 0.0);
}

TEST_CASE("triangle with trivial connection: 17 forests, Z = 16") {
  auto g = make_graph(3, {{0, 1, 1.0, 0.0}, {1, 2, 1.0, 0.0}, {2, 0, 1.0, 0.0}});
  const SmoothingProblem p(g, 1.0, ComplexSignal(3, cplx{1.0, 0.0}));
  const MtsfCatalog cat = enumerate_mtsfs(p);

  CHECK(cat.entries.size() == 17);
  CHECK(cat.partition_constant == doctest::Approx(16.0));  // (0+1)(3+1)(3+1)

  // The all-edges unicycle is perfectly coherent: kept, but with weight 0.
  const int uni = cat.index_of(0b000, 0b111);
  REQUIRE(uni >= 0);
  CHECK(cat.entries[uni].weight == 0.0);
  REQUIRE(cat.entries[uni].cycle_angles.size() == 1);
  CHECK(cat.entries[uni].cycle_angles[0] == doctest::Approx(0.0));

  // Expected root count equals tr(q (L+q)^{-1}) = 1/1 + 1/4 + 1/4.
  CHECK(catalog_expected_roots(cat) == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("4-cycle with quarter-turn holonomy: 46 forests") {
  auto g = make_graph(4, {{0, 1, 1.0, pi / 8},
                          {1, 2, 1.0, pi / 8},
                          {2, 3, 1.0, pi / 8},
                          {3, 0, 1.0, pi / 8}});
  const SmoothingProblem p(g, 1.0, ComplexSignal(4, cplx{1.0, 0.0}));
  const MtsfCatalog cat = enumerate_mtsfs(p);

  CHECK(cat.entries.size() == 46);
  const int uni = cat.index_of(0b0000, 0b1111);
  REQUIRE(uni >= 0);
  REQUIRE(cat.entries[uni].cycle_angles.size() == 1);
  CHECK(std::abs(cat.entries[uni].cycle_angles[0]) == doctest::Approx(pi / 2));
  CHECK(cat.entries[uni].weight == doctest::Approx(2.0 - 2.0 * std::cos(pi / 2)));
  CHECK(rel_err(cat.partition_constant,
                oracle_determinant(oracle_dense_operator(p)).real()) < 1e-12);
}

TEST_CASE("partition constant matches det(L + Q) on irregular problems") {
  const SmoothingProblem pendant = pendant_problem();
  const MtsfCatalog cat = enumerate_mtsfs(pendant);
  CHECK(rel_err(cat.partition_constant,
                oracle_determinant(oracle_dense_operator(pendant)).real()) < 1e-8);

  // Two independent cycles sharing a node, heterogeneous q.
  auto g = make_graph(5, {{0, 1, 1.0, 0.9},
                          {1, 2, 2.0, -0.4},
                          {2, 0, 1.0, 0.1},
                          {2, 3, 1.0, 1.7},
                          {3, 4, 0.5, 0.3},
                          {4, 2, 1.0, -2.8}});
  const SmoothingProblem p(g, std::vector<double>{0.5, 0.0, 1.0, 3.0, 0.0},
                           random_signal(5, 11));
  const MtsfCatalog cat2 = enumerate_mtsfs(p);
  CHECK(rel_err(cat2.partition_constant,
                oracle_determinant(oracle_dense_operator(p)).real()) < 1e-8);
  double total = 0.0;
  for (const CatalogEntry& e : cat2.entries) total += e.probability;
  CHECK(total == doctest::Approx(1.0));
}

TEST_CASE("enumeration caps") {
  auto path9 = make_graph(9, {{0, 1, 1.0, 0.0},
                              {1, 2, 1.0, 0.0},
                              {2, 3, 1.0, 0.0},
                              {3, 4, 1.0, 0.0},
                              {4, 5, 1.0, 0.0},
                              {5, 6, 1.0, 0.0},
                              {6, 7, 1.0, 0.0},
                              {7, 8, 1.0, 0.0}});
  const SmoothingProblem p(path9, 1.0, ComplexSignal(9, cplx{1.0, 0.0}));
  CHECK_THROWS_AS(enumerate_mtsfs(p), std::invalid_argument);

  // 8 nodes but 17 edges also exceeds the cap.
  std::vector<EdgeRecord> edges;
  for (int u = 0; u < 8; ++u)
    for (int v = u + 1; v < 8 && edges.size() < 17; ++v)
      edges.push_back({u, v, 1.0, 0.0});
  auto dense8 = make_graph(8, edges);
  const SmoothingProblem p2(dense8, 1.0, ComplexSignal(8, cplx{1.0, 0.0}));
  CHECK_THROWS_AS(enumerate_mtsfs(p2), std::invalid_argument);
}

TEST_CASE("marginal kernel is a Hermitian projection with trace n") {
  for (const SmoothingProblem& p : {pendant_problem(), triangle_problem()}) {
    const int n = p.g_ref().n_nodes();
    const int dim = n + p.g_ref().n_edges();
    const OracleMatrix k = build_kernel(p);
    REQUIRE(k.rows == dim);
    REQUIRE(k.cols == dim);

    double trace = 0.0;
    for (int i = 0; i < dim; ++i) trace += k.at(i, i).real();
    CHECK(trace == doctest::Approx(static_cast<double>(n)).epsilon(1e-10));

    const OracleMatrix kk = oracle_multiply(k, k);
    double worst = 0.0;
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) {
        worst = std::max(worst, std::abs(kk.at(i, j) - k.at(i, j)));
        worst = std::max(worst, std::abs(k.at(i, j) - std::conj(k.at(j, i))));
      }
    CHECK(worst < 1e-8);
  }
}

TEST_CASE("kernel minors sweep the forest law") {
  // Every (roots, edges) pair of total cardinality n: MTSFs get their
  // probability, everything else gets 0.
  for (const SmoothingProblem& p : {triangle_problem(), pendant_problem()}) {
    const int n = p.g_ref().n_nodes();
    const int ne = p.g_ref().n_edges();
    const MtsfCatalog cat = enumerate_mtsfs(p);
    const OracleMatrix k = build_kernel(p);

    int checked_valid = 0, checked_invalid = 0;
    for (std::uint32_t rm = 0; rm < (1u << n); ++rm)
      for (std::uint32_t em = 0; em < (1u << ne); ++em) {
        if (std::popcount(rm) + std::popcount(em) != n) continue;
        const double minor = kernel_minor(k, n, rm, em);
        const int idx = cat.index_of(rm, em);
        if (idx >= 0) {
          CHECK(std::abs(minor - cat.entries[idx].probability) < 1e-8);
          ++checked_valid;
        } else {
          CHECK(std::abs(minor) < 1e-10);
          ++checked_invalid;
        }
      }
    CHECK(checked_valid > 0);
    CHECK(checked_invalid > 0);
  }
}

TEST_CASE("exact solve satisfies the normal equations") {
  const SmoothingProblem p = pendant_problem();
  const ComplexSignal f_star = oracle_smooth(p);
  const OracleMatrix op = oracle_dense_operator(p);
  double resid = 0.0, rhs_norm = 0.0;
  for (int i = 0; i < 5; ++i) {
    cplx acc{0.0, 0.0};
    for (int j = 0; j < 5; ++j) acc += op.at(i, j) * f_star[j];
    resid += std::norm(acc - p.q[i] * p.g[i]);
    rhs_norm += std::norm(p.q[i] * p.g[i]);
  }
  CHECK(std::sqrt(resid) < 1e-12 * std::sqrt(rhs_norm));
}

TEST_CASE("all three estimators are unbiased under the forest law") {
  for (const SmoothingProblem& p : {triangle_problem(), pendant_problem()}) {
    const ComplexSignal f_star = oracle_smooth(p);
    for (EstimatorKind kind :
         {EstimatorKind::tilde, EstimatorKind::rao_blackwell, EstimatorKind::gradient_step}) {
      const ComplexSignal mean = exact_estimator_expectation(p, kind);
      double worst = 0.0;
      for (std::size_t i = 0; i < mean.size(); ++i)
        worst = std::max(worst, std::abs(mean[i] - f_star[i]));
      CHECK(worst < 1e-9);
    }
  }
}

TEST_CASE("second moments match the closed forms (uniform q)") {
  const SmoothingProblem p = triangle_problem(1.25);
  const double q = 1.25;
  const int n = 3;

  // Dense K = q (L + q)^{-1}.
  OracleMatrix k_dense = oracle_inverse(oracle_dense_operator(p));
  for (auto& x : k_dense.a) x *= q;

  const auto quad = [&](const OracleMatrix& m) {  // Re <g, M g>
    cplx acc{0.0, 0.0};
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) acc += std::conj(p.g[i]) * m.at(i, j) * p.g[j];
    return acc.real();
  };
  const OracleMatrix k2 = oracle_multiply(k_dense, k_dense);

  OracleMatrix i_minus_k2 = OracleMatrix::identity(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) i_minus_k2.at(i, j) -= k2.at(i, j);
  const double expect_tilde = quad(i_minus_k2);

  OracleMatrix k_minus_k2 = k_dense;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) k_minus_k2.at(i, j) -= k2.at(i, j);
  const double expect_rb = quad(k_minus_k2);

  // The <g,(I-K^2)g> closed form assumes every node lands in a tree; with
  // incoherent cycles a node sits in a unicycle with positive probability
  // (where the plain estimator returns 0), which removes q_i P(i in
  // unicycle) |g_i|^2 from the second moment. The triangle here is
  // incoherent, so the corrected identity is the exact one.
  const std::vector<double> occ = unicycle_occupancy(p, enumerate_mtsfs(p));
  double correction = 0.0;
  for (int i = 0; i < n; ++i) correction += occ[i] * std::norm(p.g[i]);
  CHECK(correction > 1e-6);  // genuinely incoherent: the gap is real

  const double got_tilde = exact_estimator_second_moment(p, EstimatorKind::tilde);
  const double got_rb = exact_estimator_second_moment(p, EstimatorKind::rao_blackwell);
  CHECK(rel_err(got_tilde, expect_tilde - correction) < 1e-9);
  CHECK(rel_err(got_rb, expect_rb) < 1e-9);

  // Rao-Blackwell can only help, and the gradient step helps again here.
  const double got_gs = exact_estimator_second_moment(p, EstimatorKind::gradient_step);
  CHECK(got_rb <= got_tilde + 1e-12);
  CHECK(got_gs <= got_rb + 1e-12);
}

TEST_CASE("plain-estimator closed form is exact when unicycles carry no mass") {
  // Trivial connection: every cycle is coherent, 2-2cos(0) = 0, so the
  // occupancy correction vanishes and <g,g> - <f_*,f_*> is exact.
  auto g = make_graph(4, {{0, 1, 1.0, 0.0},
                          {1, 2, 2.0, 0.0},
                          {2, 3, 1.0, 0.0},
                          {3, 0, 0.5, 0.0},
                          {0, 2, 1.0, 0.0}});
  const SmoothingProblem p(g, 0.8, random_signal(4, 9));
  const std::vector<double> occ = unicycle_occupancy(p, enumerate_mtsfs(p));
  for (double o : occ) CHECK(o == 0.0);

  const ComplexSignal f_star = oracle_smooth(p);
  const double expect = norm2_sq(p.g) - norm2_sq(f_star);
  const double got = exact_estimator_second_moment(p, EstimatorKind::tilde);
  CHECK(rel_err(got, expect) < 1e-9);
}

TEST_CASE("second moments match the closed forms (heterogeneous q, Q-weighted)") {
  const SmoothingProblem p = pendant_problem();
  const ComplexSignal f_star = oracle_smooth(p);

  const double g_q = weighted_norm2_sq(p.g, p.q);
  const double f_q = weighted_norm2_sq(f_star, p.q);
  cplx cross{0.0, 0.0};  // <g, Q f_*>
  for (int i = 0; i < 5; ++i) cross += std::conj(p.g[i]) * p.q[i] * f_star[i];

  const std::vector<double> occ = unicycle_occupancy(p, enumerate_mtsfs(p));
  double correction = 0.0;
  for (int i = 0; i < 5; ++i) correction += p.q[i] * occ[i] * std::norm(p.g[i]);

  const double got_tilde =
      exact_estimator_second_moment(p, EstimatorKind::tilde, 1.0, /*weighted_by_q=*/true);
  const double got_rb =
      exact_estimator_second_moment(p, EstimatorKind::rao_blackwell, 1.0, true);
  CHECK(rel_err(got_tilde, g_q - f_q - correction) < 1e-9);
  CHECK(rel_err(got_rb, cross.real() - f_q) < 1e-9);
  CHECK(std::abs(cross.imag()) < 1e-10);
}

TEST_CASE("forest keys") {
  const SmoothingProblem p = triangle_problem();
  const ConnectionGraph& g = p.g_ref();
  const auto [rm, em] = forest_key(g, {2}, {{1, 0}, {1, 2}});
  CHECK(rm == 0b100);
  CHECK(em == 0b011);  // edges() order: (0,1), (1,2), (2,0)
  CHECK_THROWS_AS(forest_key(g, {3}, {}), std::invalid_argument);
  CHECK_THROWS_AS(forest_key(g, {0}, {{0, 3}}), std::invalid_argument);

  const MtsfCatalog cat = enumerate_mtsfs(p);
  CHECK(cat.index_of(rm, em) >= 0);
}
