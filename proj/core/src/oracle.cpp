#include "forestsync/oracle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>
#include <string>

namespace forestsync {

OracleMatrix OracleMatrix::identity(int n) {
  OracleMatrix m(n, n);
  for (int i = 0; i < n; ++i) m.at(i, i) = cplx{1.0, 0.0};
  return m;
}

namespace {

// In-place LU factorization with partial pivoting. Returns the permutation
// sign; rows of `m` hold L (unit diagonal, below) and U (on and above).
int lu_factor(OracleMatrix& m, std::vector<int>& perm) {
  const int n = m.rows;
  perm.resize(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  int sign = 1;
  for (int k = 0; k < n; ++k) {
    int piv = k;
    double best = std::abs(m.at(k, k));
    for (int i = k + 1; i < n; ++i) {
      const double cand = std::abs(m.at(i, k));
      if (cand > best) {
        best = cand;
        piv = i;
      }
    }
    if (piv != k) {
      for (int j = 0; j < n; ++j) std::swap(m.at(k, j), m.at(piv, j));
      std::swap(perm[k], perm[piv]);
      sign = -sign;
    }
    const cplx pivot = m.at(k, k);
    if (pivot == cplx{0.0, 0.0}) continue;  // singular; determinant will be 0
    for (int i = k + 1; i < n; ++i) {
      const cplx factor = m.at(i, k) / pivot;
      m.at(i, k) = factor;
      for (int j = k + 1; j < n; ++j) m.at(i, j) -= factor * m.at(k, j);
    }
  }
  return sign;
}

void lu_solve_inplace(const OracleMatrix& lu, const std::vector<int>& perm, ComplexSignal& x) {
  const int n = lu.rows;
  ComplexSignal b(n);
  for (int i = 0; i < n; ++i) b[i] = x[perm[i]];
  // Forward substitution with unit lower triangle.
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < i; ++j) b[i] -= lu.at(i, j) * b[j];
  // Back substitution.
  for (int i = n - 1; i >= 0; --i) {
    for (int j = i + 1; j < n; ++j) b[i] -= lu.at(i, j) * b[j];
    b[i] /= lu.at(i, i);
  }
  x = std::move(b);
}

void require_square(const OracleMatrix& m) {
  if (m.rows != m.cols) throw std::invalid_argument("oracle matrix must be square");
}

}  // namespace

cplx oracle_determinant(OracleMatrix m) {
  require_square(m);
  std::vector<int> perm;
  const int sign = lu_factor(m, perm);
  cplx det{static_cast<double>(sign), 0.0};
  for (int i = 0; i < m.rows; ++i) det *= m.at(i, i);
  return det;
}

ComplexSignal oracle_solve(OracleMatrix m, ComplexSignal rhs) {
  require_square(m);
  if (static_cast<int>(rhs.size()) != m.rows)
    throw std::invalid_argument("rhs dimension mismatch");
  std::vector<int> perm;
  lu_factor(m, perm);
  for (int i = 0; i < m.rows; ++i)
    if (m.at(i, i) == cplx{0.0, 0.0})
      throw std::runtime_error("oracle_solve: matrix is singular");
  lu_solve_inplace(m, perm, rhs);
  return rhs;
}

OracleMatrix oracle_inverse(OracleMatrix m) {
  require_square(m);
  const int n = m.rows;
  std::vector<int> perm;
  lu_factor(m, perm);
  for (int i = 0; i < n; ++i)
    if (m.at(i, i) == cplx{0.0, 0.0})
      throw std::runtime_error("oracle_inverse: matrix is singular");
  OracleMatrix inv(n, n);
  ComplexSignal col(n);
  for (int j = 0; j < n; ++j) {
    std::fill(col.begin(), col.end(), cplx{0.0, 0.0});
    col[j] = cplx{1.0, 0.0};
    lu_solve_inplace(m, perm, col);
    for (int i = 0; i < n; ++i) inv.at(i, j) = col[i];
  }
  return inv;
}

OracleMatrix oracle_multiply(const OracleMatrix& x, const OracleMatrix& y) {
  if (x.cols != y.rows) throw std::invalid_argument("matrix product dimension mismatch");
  OracleMatrix out(x.rows, y.cols);
  for (int i = 0; i < x.rows; ++i)
    for (int k = 0; k < x.cols; ++k) {
      const cplx xv = x.at(i, k);
      if (xv == cplx{0.0, 0.0}) continue;
      for (int j = 0; j < y.cols; ++j) out.at(i, j) += xv * y.at(k, j);
    }
  return out;
}

OracleMatrix oracle_dense_operator(const SmoothingProblem& p) {
  const ConnectionGraph& g = p.g_ref();
  const int n = g.n_nodes();
  OracleMatrix m(n, n);
  for (const EdgeRecord& e : g.edges()) {
    // (L_θ)_{uv} = −w e^{−ιθ_(u,v)} and the conjugate on the mirror entry.
    const cplx entry = -e.weight * std::exp(cplx{0.0, -e.angle});
    m.at(e.u, e.v) += entry;
    m.at(e.v, e.u) += std::conj(entry);
    m.at(e.u, e.u) += e.weight;
    m.at(e.v, e.v) += e.weight;
  }
  for (int i = 0; i < n; ++i) m.at(i, i) += p.q[i];
  return m;
}

ComplexSignal oracle_smooth(const SmoothingProblem& p) {
  const int n = p.g_ref().n_nodes();
  ComplexSignal rhs(n);
  for (int i = 0; i < n; ++i) rhs[i] = p.q[i] * p.g[i];
  return oracle_solve(oracle_dense_operator(p), std::move(rhs));
}

namespace {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) {
    for (int i = 0; i < n; ++i) parent[i] = i;
  }
  int find(int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

// Holonomy of the unique cycle in a unicyclic component, found by stripping
// leaves until only the cycle remains, then traversing it once.
double unicycle_holonomy(const ConnectionGraph& g, const std::vector<int>& comp_nodes,
                         const std::vector<std::pair<int, int>>& comp_edges) {
  std::vector<int> deg_index(g.n_nodes(), -1);
  const int k = static_cast<int>(comp_nodes.size());
  for (int t = 0; t < k; ++t) deg_index[comp_nodes[t]] = t;

  std::vector<std::vector<int>> adj(k);
  for (const auto& [a, b] : comp_edges) {
    adj[deg_index[a]].push_back(deg_index[b]);
    adj[deg_index[b]].push_back(deg_index[a]);
  }
  std::vector<int> deg(k);
  for (int t = 0; t < k; ++t) deg[t] = static_cast<int>(adj[t].size());
  std::vector<bool> removed(k, false);
  std::vector<int> queue;
  for (int t = 0; t < k; ++t)
    if (deg[t] == 1) queue.push_back(t);
  while (!queue.empty()) {
    const int t = queue.back();
    queue.pop_back();
    removed[t] = true;
    for (int s : adj[t])
      if (!removed[s] && --deg[s] == 1) queue.push_back(s);
  }

  int start = -1;
  for (int t = 0; t < k; ++t)
    if (!removed[t]) {
      start = t;
      break;
    }
  if (start < 0) throw std::logic_error("unicycle component without a cycle");

  double sum = 0.0;
  int prev = -1, cur = start;
  do {
    int next = -1;
    for (int s : adj[cur])
      if (!removed[s] && s != prev) {
        next = s;
        break;
      }
    if (next == -1) next = prev;  // 2-cycle guard (cannot happen: no multi-edges)
    sum += g.angle_between(comp_nodes[cur], comp_nodes[next]);
    prev = cur;
    cur = next;
  } while (cur != start);
  return canonical_angle(sum);
}

}  // namespace

int MtsfCatalog::index_of(std::uint32_t root_mask, std::uint32_t edge_mask) const {
  const std::uint64_t key = (static_cast<std::uint64_t>(root_mask) << 32) | edge_mask;
  auto it = std::lower_bound(
      sorted_keys_.begin(), sorted_keys_.end(), std::make_pair(key, 0),
      [](const auto& a, const auto& b) { return a.first < b.first; });
  if (it == sorted_keys_.end() || it->first != key) return -1;
  return it->second;
}

MtsfCatalog enumerate_mtsfs(const SmoothingProblem& p) {
  const ConnectionGraph& g = p.g_ref();
  const int n = g.n_nodes();
  const int ne = g.n_edges();
  if (n > 8 || ne > 16)
    throw std::invalid_argument("enumeration cap exceeded: need |V| <= 8 and |E| <= 16, got " +
                                std::to_string(n) + " nodes, " + std::to_string(ne) + " edges");

  MtsfCatalog catalog;
  catalog.n_nodes = n;
  catalog.n_edges = ne;

  const auto& edges = g.edges();
  for (std::uint32_t edge_mask = 0; edge_mask < (1u << ne); ++edge_mask) {
    const int n_sel = std::popcount(edge_mask);
    if (n_sel > n) continue;

    UnionFind uf(n);
    for (int e = 0; e < ne; ++e)
      if (edge_mask & (1u << e)) uf.unite(edges[e].u, edges[e].v);

    // Component statistics: node count and selected-edge count per root.
    std::vector<int> comp_nodes_count(n, 0), comp_edges_count(n, 0);
    for (int v = 0; v < n; ++v) ++comp_nodes_count[uf.find(v)];
    for (int e = 0; e < ne; ++e)
      if (edge_mask & (1u << e)) ++comp_edges_count[uf.find(edges[e].u)];

    bool valid = true;
    std::vector<int> tree_comp_reps;      // representatives of tree components
    std::vector<int> unicycle_comp_reps;  // representatives of unicyclic components
    for (int v = 0; v < n && valid; ++v) {
      if (uf.find(v) != v) continue;
      const int kn = comp_nodes_count[v], km = comp_edges_count[v];
      if (km == kn - 1)
        tree_comp_reps.push_back(v);
      else if (km == kn)
        unicycle_comp_reps.push_back(v);
      else
        valid = false;  // more than one independent cycle in a component
    }
    if (!valid) continue;

    // Cycle factors Π (2 − 2cos θ_C) over the unicyclic components.
    double cycle_factor = 1.0;
    std::vector<double> cycle_angles;
    for (int rep : unicycle_comp_reps) {
      std::vector<int> comp_nodes;
      std::vector<std::pair<int, int>> comp_edges;
      for (int v = 0; v < n; ++v)
        if (uf.find(v) == rep) comp_nodes.push_back(v);
      for (int e = 0; e < ne; ++e)
        if ((edge_mask & (1u << e)) && uf.find(edges[e].u) == rep)
          comp_edges.emplace_back(edges[e].u, edges[e].v);
      const double theta_c = unicycle_holonomy(g, comp_nodes, comp_edges);
      cycle_angles.push_back(theta_c);
      cycle_factor *= 2.0 - 2.0 * std::cos(theta_c);
    }

    double edge_factor = 1.0;
    for (int e = 0; e < ne; ++e)
      if (edge_mask & (1u << e)) edge_factor *= edges[e].weight;

    // Every tree component carries exactly one root; enumerate all
    // placements with an odometer over components (deterministic order).
    std::vector<std::vector<int>> candidates;
    for (int rep : tree_comp_reps) {
      std::vector<int> nodes;
      for (int v = 0; v < n; ++v)
        if (uf.find(v) == rep) nodes.push_back(v);
      candidates.push_back(std::move(nodes));
    }
    std::vector<std::size_t> pick(candidates.size(), 0);
    while (true) {
      std::uint32_t root_mask = 0;
      double root_factor = 1.0;
      for (std::size_t c = 0; c < candidates.size(); ++c) {
        const int r = candidates[c][pick[c]];
        root_mask |= 1u << r;
        root_factor *= p.q[r];
      }
      CatalogEntry entry;
      entry.root_mask = root_mask;
      entry.edge_mask = edge_mask;
      entry.weight = root_factor * edge_factor * cycle_factor;
      entry.cycle_angles = cycle_angles;
      catalog.partition_constant += entry.weight;
      catalog.entries.push_back(std::move(entry));

      // Advance the odometer.
      std::size_t c = 0;
      for (; c < candidates.size(); ++c) {
        if (++pick[c] < candidates[c].size()) break;
        pick[c] = 0;
      }
      if (c == candidates.size()) break;
      if (candidates.empty()) break;  // single all-unicycle configuration
    }
  }

  if (catalog.partition_constant <= 0.0)
    throw std::runtime_error("enumeration found no positive-weight MTSF (singular problem)");
  for (CatalogEntry& e : catalog.entries)
    e.probability = e.weight / catalog.partition_constant;

  catalog.sorted_keys_.reserve(catalog.entries.size());
  for (int i = 0; i < static_cast<int>(catalog.entries.size()); ++i) {
    const CatalogEntry& e = catalog.entries[i];
    catalog.sorted_keys_.emplace_back(
        (static_cast<std::uint64_t>(e.root_mask) << 32) | e.edge_mask, i);
  }
  std::sort(catalog.sorted_keys_.begin(), catalog.sorted_keys_.end());
  return catalog;
}

OracleMatrix build_kernel(const SmoothingProblem& p) {
  const ConnectionGraph& g = p.g_ref();
  const int n = g.n_nodes();
  const int ne = g.n_edges();

  // ∇_Q stacked over V ∪ E: node row i carries √q_i; edge row e = (s→t)
  // carries +√w_e on t and −√w_e e^{ιθ_e} on s.
  OracleMatrix nabla(n + ne, n);
  for (int i = 0; i < n; ++i) nabla.at(i, i) = std::sqrt(p.q[i]);
  const auto& edges = g.edges();
  for (int e = 0; e < ne; ++e) {
    const double sw = std::sqrt(edges[e].weight);
    nabla.at(n + e, edges[e].v) = cplx{sw, 0.0};
    nabla.at(n + e, edges[e].u) = -sw * std::exp(cplx{0.0, edges[e].angle});
  }

  const OracleMatrix inv = oracle_inverse(oracle_dense_operator(p));

  // K = ∇_Q inv ∇_Q^*.
  OracleMatrix tmp = oracle_multiply(nabla, inv);
  OracleMatrix nabla_h(n, n + ne);
  for (int i = 0; i < n + ne; ++i)
    for (int j = 0; j < n; ++j) nabla_h.at(j, i) = std::conj(nabla.at(i, j));
  return oracle_multiply(tmp, nabla_h);
}

double kernel_minor(const OracleMatrix& k, int n_nodes, std::uint32_t root_mask,
                    std::uint32_t edge_mask) {
  std::vector<int> idx;
  for (int v = 0; v < 32; ++v)
    if (root_mask & (1u << v)) idx.push_back(v);
  for (int e = 0; e < 32; ++e)
    if (edge_mask & (1u << e)) idx.push_back(n_nodes + e);
  const int m = static_cast<int>(idx.size());
  OracleMatrix sub(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) sub.at(i, j) = k.at(idx[i], idx[j]);
  const cplx det = oracle_determinant(std::move(sub));
  return det.real();  // principal minors of a Hermitian matrix are real
}

ComplexSignal oracle_estimator_value(const SmoothingProblem& p, const CatalogEntry& entry,
                                     EstimatorKind kind, double alpha) {
  const ConnectionGraph& g = p.g_ref();
  const int n = g.n_nodes();
  const auto& edges = g.edges();

  // Adjacency restricted to the entry's edges.
  std::vector<std::vector<std::pair<int, double>>> adj(n);  // (neighbor, θ transport)
  for (int e = 0; e < g.n_edges(); ++e) {
    if (!(entry.edge_mask & (1u << e))) continue;
    adj[edges[e].u].emplace_back(edges[e].v, edges[e].angle);
    adj[edges[e].v].emplace_back(edges[e].u, canonical_angle(-edges[e].angle));
  }

  // BFS from each root assigns rotations ψ_{root→i}; unvisited nodes belong
  // to unicyclic components, where the estimator vanishes.
  std::vector<double> rot(n, 0.0);
  std::vector<int> root_of(n, -1);
  std::vector<int> order;  // visitation order, grouped by component
  std::vector<int> comp_begin;

  for (int r = 0; r < n; ++r) {
    if (!(entry.root_mask & (1u << r))) continue;
    comp_begin.push_back(static_cast<int>(order.size()));
    root_of[r] = r;
    rot[r] = 0.0;
    order.push_back(r);
    for (std::size_t head = order.size() - 1; head < order.size(); ++head) {
      const int u = order[head];
      for (const auto& [v, theta] : adj[u]) {
        if (root_of[v] >= 0) continue;
        root_of[v] = r;
        rot[v] = rot[u] + theta;  // ψ_{r→v} = ψ_{u→v} ∘ ψ_{r→u}
        order.push_back(v);
      }
    }
  }
  comp_begin.push_back(static_cast<int>(order.size()));

  ComplexSignal est(n, cplx{0.0, 0.0});
  if (kind == EstimatorKind::tilde) {
    for (int i = 0; i < n; ++i)
      if (root_of[i] >= 0)
        est[i] = std::exp(cplx{0.0, rot[i]}) * p.g[root_of[i]];
    return est;
  }

  // Rao-Blackwell root average per tree component: the conditional law of
  // the root given the edges weights node j by q_j.
  for (std::size_t c = 0; c + 1 < comp_begin.size(); ++c) {
    cplx h{0.0, 0.0};
    double qsum = 0.0;
    for (int t = comp_begin[c]; t < comp_begin[c + 1]; ++t) {
      const int j = order[t];
      h += p.q[j] * std::exp(cplx{0.0, -rot[j]}) * p.g[j];
      qsum += p.q[j];
    }
    if (qsum > 0.0) h /= qsum;
    for (int t = comp_begin[c]; t < comp_begin[c + 1]; ++t) {
      const int i = order[t];
      est[i] = std::exp(cplx{0.0, rot[i]}) * h;
    }
  }
  if (kind == EstimatorKind::rao_blackwell) return est;

  // Gradient step: est − α (D+Q)^{-1} ((L_θ+Q) est − Q g).
  const OracleMatrix op = oracle_dense_operator(p);
  ComplexSignal residual(n, cplx{0.0, 0.0});
  for (int i = 0; i < n; ++i) {
    cplx acc{0.0, 0.0};
    for (int j = 0; j < n; ++j) acc += op.at(i, j) * est[j];
    residual[i] = acc - p.q[i] * p.g[i];
  }
  for (int i = 0; i < n; ++i) {
    const double denom = g.degree(i) + p.q[i];
    if (!(denom > 0.0))
      throw std::invalid_argument("gradient step undefined: node " + std::to_string(i) +
                                  " has zero degree and zero q");
    est[i] -= alpha * residual[i] / denom;
  }
  return est;
}

ComplexSignal exact_estimator_expectation(const SmoothingProblem& p, EstimatorKind kind,
                                          double alpha) {
  const MtsfCatalog catalog = enumerate_mtsfs(p);
  const int n = p.g_ref().n_nodes();
  ComplexSignal mean(n, cplx{0.0, 0.0});
  for (const CatalogEntry& entry : catalog.entries) {
    if (entry.probability == 0.0) continue;
    const ComplexSignal value = oracle_estimator_value(p, entry, kind, alpha);
    for (int i = 0; i < n; ++i) mean[i] += entry.probability * value[i];
  }
  return mean;
}

double exact_estimator_second_moment(const SmoothingProblem& p, EstimatorKind kind,
                                     double alpha, bool weighted_by_q) {
  const MtsfCatalog catalog = enumerate_mtsfs(p);
  const ComplexSignal f_star = oracle_smooth(p);
  const int n = p.g_ref().n_nodes();
  double moment = 0.0;
  for (const CatalogEntry& entry : catalog.entries) {
    if (entry.probability == 0.0) continue;
    const ComplexSignal value = oracle_estimator_value(p, entry, kind, alpha);
    double dist = 0.0;
    for (int i = 0; i < n; ++i) {
      const double term = std::norm(value[i] - f_star[i]);
      dist += weighted_by_q ? p.q[i] * term : term;
    }
    moment += entry.probability * dist;
  }
  return moment;
}

double catalog_expected_roots(const MtsfCatalog& catalog) {
  double s = 0.0;
  for (const CatalogEntry& e : catalog.entries)
    s += e.probability * std::popcount(e.root_mask);
  return s;
}

std::vector<double> unicycle_occupancy(const SmoothingProblem& p, const MtsfCatalog& catalog) {
  const ConnectionGraph& g = p.g_ref();
  const int n = g.n_nodes();
  const auto& edges = g.edges();
  std::vector<double> occupancy(n, 0.0);
  std::vector<std::vector<int>> adj(n);
  std::vector<int> in_tree(n), stack;
  for (const CatalogEntry& entry : catalog.entries) {
    if (entry.probability == 0.0) continue;
    for (auto& row : adj) row.clear();
    for (int e = 0; e < g.n_edges(); ++e)
      if (entry.edge_mask & (1u << e)) {
        adj[edges[e].u].push_back(edges[e].v);
        adj[edges[e].v].push_back(edges[e].u);
      }
    // Nodes unreachable from every root form the unicyclic components.
    std::fill(in_tree.begin(), in_tree.end(), 0);
    stack.clear();
    for (int r = 0; r < n; ++r)
      if (entry.root_mask & (1u << r)) {
        in_tree[r] = 1;
        stack.push_back(r);
      }
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      for (int v : adj[u])
        if (!in_tree[v]) {
          in_tree[v] = 1;
          stack.push_back(v);
        }
    }
    for (int i = 0; i < n; ++i)
      if (!in_tree[i]) occupancy[i] += entry.probability;
  }
  return occupancy;
}

double oracle_min_cycle_cos(const ConnectionGraph& g) {
  const int n = g.n_nodes();
  double min_cos = 1.0;
  // Depth-first enumeration of simple cycles, each found exactly once: the
  // cycle is rooted at its smallest node s, every other node on it exceeds
  // s, and the two neighbors of s on the cycle are ordered to fix the
  // orientation (the reverse orientation only flips the holonomy sign, and
  // cos is even, so one orientation suffices).
  std::vector<int> path;
  std::vector<char> on_path(n, 0);
  std::vector<double> angle_to;  // holonomy accumulated along the path

  const auto walk = [&](auto&& self, int u, double ang) -> void {
    for (int k = g.row_begin(u); k < g.row_end(u); ++k) {
      const int v = g.neighbor(k);
      const int s = path.front();
      if (v == s && path.size() >= 3 && path[1] < u) {
        min_cos = std::min(min_cos, std::cos(ang + g.angle(k)));
        continue;
      }
      if (v <= s || on_path[v]) continue;
      path.push_back(v);
      on_path[v] = 1;
      self(self, v, ang + g.angle(k));
      on_path[v] = 0;
      path.pop_back();
    }
  };

  for (int s = 0; s < n; ++s) {
    path.assign(1, s);
    on_path[s] = 1;
    walk(walk, s, 0.0);
    on_path[s] = 0;
  }
  return min_cos;
}

std::pair<std::uint32_t, std::uint32_t> forest_key(
    const ConnectionGraph& g, const std::vector<int>& roots,
    const std::vector<std::pair<int, int>>& edge_pairs) {
  if (g.n_nodes() > 32 || g.n_edges() > 32)
    throw std::invalid_argument("forest_key requires <= 32 nodes and edges");
  std::uint32_t root_mask = 0, edge_mask = 0;
  for (int r : roots) {
    if (r < 0 || r >= g.n_nodes()) throw std::invalid_argument("root id out of range");
    root_mask |= 1u << r;
  }
  for (const auto& [a, b] : edge_pairs) {
    const int slot = g.find_slot(a, b);
    if (slot < 0)
      throw std::invalid_argument("forest edge (" + std::to_string(a) + "," +
                                  std::to_string(b) + ") is not a graph edge");
    edge_mask |= 1u << g.edge_id(slot);
  }
  return {root_mask, edge_mask};
}

}  // namespace forestsync
