#include "forestsync/sync.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <utility>

#include "forestsync/estimator_kind.hpp"
#include "forestsync/estimators.hpp"
#include "forestsync/operators.hpp"

namespace forestsync {

namespace {

// Entrywise projection to the unit circle; zero entries are left at zero
// (they carry no phase information for the next step to amplify).
void project_phases(ComplexSignal& f) {
  for (auto& v : f) {
    const double a = std::abs(v);
    if (a > 0.0) v /= a;
  }
}

void normalize_or_throw(ComplexSignal& f, int iteration) {
  const double nn = norm2(f);
  if (!std::isfinite(nn) || nn == 0.0) {
    throw std::runtime_error("synchronization iterate vanished or overflowed at iteration " +
                             std::to_string(iteration));
  }
  scale(f, cplx(1.0 / nn, 0.0));
}

}  // namespace

SyncError sync_error(const ComplexSignal& f, const ComplexSignal& x_true) {
  if (f.size() != x_true.size()) {
    throw std::invalid_argument("sync_error: size mismatch");
  }
  if (f.empty()) throw std::invalid_argument("sync_error: empty signals");
  const double n = static_cast<double>(f.size());
  const cplx c = inner(x_true, f);  // Re(conj(r)·c) is maximized by r = c/|c|
  const double ca = std::abs(c);
  SyncError out;
  if (ca > 0.0) {
    out.phase = c / ca;
  } else {
    out.degenerate = true;  // every phase is optimal; report r = 1
  }
  // Evaluate ||f - r x|| entrywise rather than by the expanded form
  // ||f||² + ||x||² − 2|c|, which cancels catastrophically near alignment
  // and would floor the error at ~sqrt(n·eps)/n instead of machine level.
  double sq = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) sq += std::norm(f[i] - out.phase * x_true[i]);
  out.value = std::sqrt(sq) / n;
  return out;
}

SyncError sync_error_rescaled(const ComplexSignal& f, const ComplexSignal& x_true) {
  const double nf = norm2(f);
  if (nf == 0.0) throw std::invalid_argument("sync_error_rescaled: zero signal");
  ComplexSignal scaled = f;
  scale(scaled, cplx(std::sqrt(static_cast<double>(f.size())) / nf, 0.0));
  return sync_error(scaled, x_true);
}

ComplexSignal random_phase_state(int n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("random_phase_state: n must be positive");
  ComplexSignal f(n);
  const double root_n = std::sqrt(static_cast<double>(n));
  for (auto& v : f) {
    v = std::polar(1.0 / root_n, rng.uniform(0.0, 2.0 * std::numbers::pi));
  }
  return f;
}

SyncResult power_iterate(const SmoothingProblem& p, const SyncOptions& opt, int k,
                         const ComplexSignal& f0, Rng& rng, const ComplexSignal* x_true) {
  const ConnectionGraph& g = p.g_ref();
  const int n = g.n_nodes();
  if (k < 1) throw std::invalid_argument("power_iterate: k must be positive");
  if (static_cast<int>(f0.size()) != n) {
    throw std::invalid_argument("power_iterate: initial state has wrong size");
  }
  if (x_true != nullptr && static_cast<int>(x_true->size()) != n) {
    throw std::invalid_argument("power_iterate: ground truth has wrong size");
  }

  {
    const double nf = norm2(f0);
    if (!std::isfinite(nf) || nf == 0.0) {
      throw std::invalid_argument("power_iterate: initial state must be nonzero");
    }
  }
  ComplexSignal f = f0;
  normalize_or_throw(f, 0);

  // Per-iteration state that is fixed across the run is built once: the
  // system (L_θ+Q) never changes — only the right-hand side does — so the
  // exact arm factors it a single time, and the adjacency arm (s = D f −
  // L_θ f = A_θ f) assembles its operator a single time.
  const bool uses_forests =
      opt.smoother == SmootherKind::mtsf_rb || opt.smoother == SmootherKind::mtsf_gs;
  std::optional<ExactSmoother> exact;
  if (opt.smoother == SmootherKind::exact) exact.emplace(p.graph, p.q);
  SparseHermitianOperator laplacian =
      opt.smoother == SmootherKind::adjacency ? build_connection_laplacian(g)
                                              : SparseHermitianOperator();
  const std::vector<double>& deg = g.degrees();

  WalkConfig cfg = opt.walk;
  if (uses_forests && opt.reuse_forests) cfg.seed = rng.raw();

  SyncResult out;
  out.history.reserve(k);
  double elapsed = 0.0;
  ComplexSignal next;
  for (int r = 1; r <= k; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    switch (opt.smoother) {
      case SmootherKind::exact: {
        next = exact->smooth(f);
        break;
      }
      case SmootherKind::cg: {
        next = solve_cg(SmoothingProblem(p.graph, p.q, f), opt.m, opt.preconditioner).f;
        break;
      }
      case SmootherKind::mtsf_rb:
      case SmootherKind::mtsf_gs: {
        if (!opt.reuse_forests) cfg.seed = rng.raw();
        const EstimatorKind kind = opt.smoother == SmootherKind::mtsf_rb
                                       ? EstimatorKind::rao_blackwell
                                       : EstimatorKind::gradient_step;
        next = smooth_mtsf(SmoothingProblem(p.graph, p.q, f), kind, opt.m, cfg, opt.alpha).f;
        break;
      }
      case SmootherKind::adjacency: {
        laplacian.matvec(f, next);
        for (int i = 0; i < n; ++i) next[i] = deg[i] * f[i] - next[i];
        break;
      }
    }
    if (opt.componentwise) project_phases(next);
    normalize_or_throw(next, r);
    f.swap(next);
    elapsed += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    SyncStep step;
    step.k = r;
    step.seconds_total = elapsed;
    if (x_true != nullptr) {
      step.e_s = sync_error_rescaled(f, *x_true).value;  // outside the timed region
      step.has_error = true;
    }
    out.history.push_back(step);
  }
  out.f = std::move(f);
  out.k = k;
  return out;
}

ComplexSignal sync_ust_baseline(const SmoothingProblem& p, Rng& rng) {
  const ConnectionGraph& g = p.g_ref();
  if (!g.is_connected()) {
    throw std::invalid_argument("sync_ust_baseline: graph must be connected");
  }
  const int n = g.n_nodes();

  // Wilson's algorithm (Wilson 1996) rooted at node 0: loop-erased random
  // walks, weighted by edge weight. A zero interruption weight makes the
  // shared walk-step helper a plain weighted step (it can never absorb).
  const std::vector<double> no_interruption(n, 0.0);
  std::vector<char> in_tree(n, 0);
  std::vector<int> parent_slot(n, -1);  // slot at u pointing to u's parent
  std::vector<int> next_slot(n, -1);    // walk scratch: latest exit slot
  in_tree[0] = 1;
  for (int start = 1; start < n; ++start) {
    if (in_tree[start]) continue;
    int u = start;
    while (!in_tree[u]) {
      const int slot = interrupted_step_slot(g, no_interruption, u, rng);
      next_slot[u] = slot;
      u = g.neighbor(slot);
    }
    u = start;  // retrace, keeping the loop-erased path
    while (!in_tree[u]) {
      in_tree[u] = 1;
      parent_slot[u] = next_slot[u];
      u = g.neighbor(next_slot[u]);
    }
  }

  // Transport phase 1 from the root along tree paths: slot angles are
  // θ_(u, parent), and transporting the parent's value to u contributes
  // e^{-ι θ_(u, parent)} = e^{ι θ_(parent, u)}.
  std::vector<double> rot(n, 0.0);
  std::vector<char> have_rot(n, 0);
  have_rot[0] = 1;
  std::vector<int> chain;
  for (int i = 0; i < n; ++i) {
    if (have_rot[i]) continue;
    chain.clear();
    int u = i;
    while (!have_rot[u]) {
      chain.push_back(u);
      u = g.neighbor(parent_slot[u]);
    }
    for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
      const int v = *it;
      rot[v] = rot[g.neighbor(parent_slot[v])] - g.angle(parent_slot[v]);
      have_rot[v] = 1;
    }
  }
  ComplexSignal f(n);
  for (int i = 0; i < n; ++i) f[i] = std::polar(1.0, rot[i]);
  return f;
}

ComplexSignal sync_mst_baseline(const SmoothingProblem& p) {
  const ConnectionGraph& g = p.g_ref();
  if (!g.is_connected()) {
    throw std::invalid_argument("sync_mst_baseline: graph must be connected");
  }
  const int n = g.n_nodes();
  const auto edges = g.edges();

  // Kruskal on coherence score |cos θ_e|, descending; ties resolved by edge
  // id so the result is a deterministic function of the graph.
  std::vector<int> order(edges.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double sa = std::abs(std::cos(edges[a].angle));
    const double sb = std::abs(std::cos(edges[b].angle));
    if (sa != sb) return sa > sb;
    return a < b;
  });
  std::vector<int> uf(n);
  std::iota(uf.begin(), uf.end(), 0);
  auto find = [&](int x) {
    while (uf[x] != x) {
      uf[x] = uf[uf[x]];
      x = uf[x];
    }
    return x;
  };
  std::vector<std::vector<std::pair<int, double>>> tree(n);  // (nbr, θ_(u,nbr))
  int joined = 0;
  for (const int e : order) {
    const int ra = find(edges[e].u);
    const int rb = find(edges[e].v);
    if (ra == rb) continue;
    uf[ra] = rb;
    tree[edges[e].u].emplace_back(edges[e].v, edges[e].angle);
    tree[edges[e].v].emplace_back(edges[e].u, -edges[e].angle);
    if (++joined == n - 1) break;
  }

  std::vector<double> rot(n, 0.0);
  std::vector<char> seen(n, 0);
  std::queue<int> bfs;
  bfs.push(0);
  seen[0] = 1;
  while (!bfs.empty()) {
    const int u = bfs.front();
    bfs.pop();
    for (const auto& [v, ang] : tree[u]) {
      if (seen[v]) continue;
      seen[v] = 1;
      rot[v] = rot[u] + ang;  // f(v) ≈ e^{ι θ_(u,v)} f(u)
      bfs.push(v);
    }
  }
  ComplexSignal f(n);
  for (int i = 0; i < n; ++i) f[i] = std::polar(1.0, rot[i]);
  return f;
}

}  // namespace forestsync
