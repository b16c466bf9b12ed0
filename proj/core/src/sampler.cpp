#include "forestsync/sampler.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "forestsync/config.hpp"

namespace forestsync {

namespace {

// Holonomies below this are treated as coherent: a cycle with |θ_C| ≤ 1e-9
// would be kept with probability 1 − cos θ_C < 1e-18, so it cannot be relied
// on for termination in any realistic run.
constexpr double kCoherenceTol = 1e-9;

// Exact mode tolerates cos θ_C marginally below zero to absorb floating-point
// noise at the weak-inconsistency boundary (θ_C = ±π/2).
constexpr double kExactCosSlack = 1e-12;

// Era-table growth limit for the multi-counter detector. One era is retired
// per discarded cycle within a single walk, so this is effectively a cap on
// discards between spanning events; on overflow the table is compacted by
// restamping the retained path (same predicate, bounded memory).
constexpr std::int64_t kEraLimit = std::int64_t{1} << 20;

// Per connected component: total regularization mass and whether some cycle
// carries a holonomy that can terminate a walk. With a spanning-tree prefix
// angle at each node, every non-tree edge's defect is the holonomy of its
// fundamental cycle, and cycle space additivity extends coherence from the
// fundamental cycles to all of them.
struct ComponentTermination {
  std::vector<int> label;
  std::vector<double> q_sum;
  std::vector<std::uint8_t> incoherent;
  int first_dead_component = -1;  // q_sum == 0 and coherent, else -1
};

ComponentTermination analyze_termination(const SmoothingProblem& p) {
  const ConnectionGraph& g = p.g_ref();
  const int n = g.n_nodes();
  ComponentTermination out;
  out.label = g.component_labels();
  const int n_comp = out.label.empty() ? 0 : *std::max_element(out.label.begin(), out.label.end()) + 1;
  out.q_sum.assign(n_comp, 0.0);
  out.incoherent.assign(n_comp, 0);
  for (int i = 0; i < n; ++i) out.q_sum[out.label[i]] += p.q[i];

  // BFS prefix angles from each component's first node.
  std::vector<double> pre(n, 0.0);
  std::vector<std::uint8_t> seen(n, 0);
  std::vector<int> queue;
  for (int s = 0; s < n; ++s) {
    if (seen[s]) continue;
    seen[s] = 1;
    queue.assign(1, s);
    for (std::size_t h = 0; h < queue.size(); ++h) {
      const int u = queue[h];
      for (int k = g.row_begin(u); k < g.row_end(u); ++k) {
        const int v = g.neighbor(k);
        if (seen[v]) continue;
        seen[v] = 1;
        pre[v] = pre[u] + g.angle(k);
        queue.push_back(v);
      }
    }
  }
  for (const EdgeRecord& e : g.edges()) {
    const double defect = canonical_angle(pre[e.u] + e.angle - pre[e.v]);
    if (std::abs(defect) > kCoherenceTol) out.incoherent[out.label[e.u]] = 1;
  }
  for (int c = 0; c < n_comp; ++c) {
    if (out.q_sum[c] <= 0.0 && !out.incoherent[c]) {
      out.first_dead_component = c;
      break;
    }
  }
  return out;
}

int first_node_with_label(const std::vector<int>& label, int target) {
  for (std::size_t i = 0; i < label.size(); ++i) {
    if (label[i] == target) return static_cast<int>(i);
  }
  return -1;
}

}  // namespace

std::vector<std::pair<int, int>> Mtsf::edge_pairs() const {
  std::vector<std::pair<int, int>> out;
  out.reserve(parent.size());
  for (std::size_t i = 0; i < parent.size(); ++i) {
    if (parent[i] >= 0) out.emplace_back(static_cast<int>(i), parent[i]);
  }
  return out;
}

void dump_mtsf(std::ostream& out, const Mtsf& m) {
  std::ostringstream line;
  line.precision(17);
  for (int i = 0; i < m.n_nodes(); ++i) {
    line.str("");
    line << i << ' ' << (m.kind[i] == ComponentKind::tree ? "tree" : "unicycle") << ' '
         << m.root[i] << ' ' << m.parent[i] << ' ' << m.rotation[i] << '\n';
    out << line.str();
  }
  line.str("");
  line << "cycles:";
  for (double a : m.accepted_cycles) line << ' ' << a;
  if (m.accepted_cycles.empty()) line << " none";
  line << '\n';
  if (m.importance_log_weight != 0.0) line << "log_weight: " << m.importance_log_weight << '\n';
  out << line.str();
}

MtsfSampler::MtsfSampler(const SmoothingProblem& p, const WalkConfig& cfg)
    : graph_(p.graph), q_(p.q), cfg_(cfg), rng_(cfg.seed) {
  const ComponentTermination term = analyze_termination(p);
  if (term.first_dead_component >= 0) {
    const int witness = first_node_with_label(term.label, term.first_dead_component);
    throw std::invalid_argument(
        "MtsfSampler: the connected component containing node " + std::to_string(witness) +
        " has zero total regularization weight and only coherent cycles; walks there can never "
        "terminate");
  }
  const int n = graph_->n_nodes();
  pos_.assign(n, 0);
  spanned_.assign(n, 0);
  mark_.assign(n, 0);
  stamp_.assign(n, Stamp{});
}

int interrupted_step_slot(const ConnectionGraph& g, const std::vector<double>& q, int node,
                          Rng& rng) {
  const double d = g.degree(node);
  const double total = d + q[node];
  if (total <= 0.0) {
    throw std::runtime_error("interrupted walk: node " + std::to_string(node) +
                             " has no edges and no regularization weight");
  }
  // One uniform decides both the boundary event (mass q) and the neighbor
  // (mass w each): y < 0 absorbs, otherwise y indexes the weight prefix sums.
  const double y = rng.uniform01() * total - q[node];
  if (y < 0.0) return -1;
  const int b = g.row_begin(node);
  const int e = g.row_end(node);
  if (g.is_unweighted()) {
    int idx = static_cast<int>(y);
    if (idx > e - b - 1) idx = e - b - 1;
    return b + idx;
  }
  int lo = b;
  int hi = e - 1;
  while (lo < hi) {
    const int mid = lo + (hi - lo) / 2;
    if (g.cum_weight(mid) > y) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return lo;
}

int MtsfSampler::successor_slot(int node) {
  ++stats_.successor_calls;
  ++last_calls_;
  return interrupted_step_slot(*graph_, q_, node, rng_);
}

int MtsfSampler::random_successor(int node) {
  const int slot = successor_slot(node);
  return slot == kBoundary ? kBoundary : graph_->neighbor(slot);
}

template <CycleDetection D>
void MtsfSampler::begin_walk() {
  ++walk_no_;
  if constexpr (D == CycleDetection::multi_counter) {
    era_cap_.assign(1, std::numeric_limits<std::int64_t>::max());
    live_.assign(1, 0);
    next_val_ = 1;
  }
}

template <CycleDetection D>
void MtsfSampler::stamp(int node) {
  if constexpr (D == CycleDetection::one_counter) {
    mark_[node] = walk_no_;
  } else {
    stamp_[node] = Stamp{walk_no_, static_cast<std::int64_t>(live_.back()), next_val_++};
  }
}

template <CycleDetection D>
bool MtsfSampler::on_path(int node) const {
  if constexpr (D == CycleDetection::one_counter) {
    return mark_[node] == walk_no_;
  } else {
    const Stamp& s = stamp_[node];
    return s.walk == walk_no_ && s.val <= era_cap_[s.era];
  }
}

template <CycleDetection D>
void MtsfSampler::discard_suffix(int keep_index) {
  if constexpr (D == CycleDetection::one_counter) {
    // Eagerly clear the erased suffix, one node at a time.
    for (std::size_t t = keep_index + 1; t < path_.size(); ++t) mark_[path_[t].node] = 0;
  } else {
    // O(1) amortized: retire every era opened after the keep node's, cap the
    // keep node's era at its serial (so later serials in it turn invalid),
    // and open a fresh era for the walk's continuation.
    const Stamp& s = stamp_[path_[keep_index].node];
    while (live_.back() > s.era) {
      era_cap_[live_.back()] = 0;
      live_.pop_back();
    }
    era_cap_[s.era] = s.val;
    const std::int64_t fresh = static_cast<std::int64_t>(era_cap_.size());
    era_cap_.push_back(std::numeric_limits<std::int64_t>::max());
    live_.push_back(fresh);
  }
}

void MtsfSampler::compact_eras() {
  // Rebuild the stamp table for the retained path only; the membership
  // predicate is unchanged, the era table shrinks back to one entry.
  ++walk_no_;
  era_cap_.assign(1, std::numeric_limits<std::int64_t>::max());
  live_.assign(1, 0);
  next_val_ = 1;
  for (const PathEntry& pe : path_) stamp<CycleDetection::multi_counter>(pe.node);
}

template <CycleDetection D>
Mtsf MtsfSampler::sample_impl() {
  const ConnectionGraph& g = *graph_;
  const int n = g.n_nodes();
  Mtsf m;
  m.kind.assign(n, ComponentKind::tree);
  m.root.assign(n, -1);
  m.parent.assign(n, -1);
  m.rotation.assign(n, 0.0);
  m.on_cycle.assign(n, 0);
  spanned_.assign(n, 0);

  for (int start = 0; start < n; ++start) {
    if (spanned_[start]) continue;
    begin_walk<D>();
    path_.clear();
    path_.push_back(PathEntry{start, -1, 0.0});
    pos_[start] = 0;
    stamp<D>(start);

    for (bool walking = true; walking;) {
      const int u = path_.back().node;
      const double u_prefix = path_.back().prefix;
      const int slot = successor_slot(u);

      if (slot == kBoundary) {
        // The walk roots a tree where it stands.
        for (std::size_t t = 0; t < path_.size(); ++t) {
          const int x = path_[t].node;
          spanned_[x] = 1;
          m.kind[x] = ComponentKind::tree;
          m.root[x] = u;
          m.rotation[x] = canonical_angle(path_[t].prefix - u_prefix);
          if (t + 1 < path_.size()) m.parent[x] = path_[t + 1].node;
        }
        walking = false;
        continue;
      }

      const int v = g.neighbor(slot);
      const double step_angle = g.angle(slot);

      if (spanned_[v]) {
        // Attach the whole path below v, composing rotations through the
        // entry edge: ψ(anchor → w_t) = ψ(anchor → v) − θ_(u,v) + prefix(t) − prefix(u).
        const double base = m.rotation[v] - step_angle - u_prefix;
        for (std::size_t t = 0; t < path_.size(); ++t) {
          const int x = path_[t].node;
          spanned_[x] = 1;
          m.kind[x] = m.kind[v];
          m.root[x] = m.root[v];
          m.rotation[x] = canonical_angle(base + path_[t].prefix);
          m.parent[x] = t + 1 < path_.size() ? path_[t + 1].node : v;
        }
        walking = false;
        continue;
      }

      if (on_path<D>(v)) {
        // The walk closed a cycle at v; keep it with the holonomy-driven
        // probability, else loop-erase and continue from v.
        ++stats_.cycles_closed;
        const int j = pos_[v];
        const double theta = canonical_angle(u_prefix + step_angle - path_[j].prefix);
        const double c = std::cos(theta);
        double keep_p;
        if (cfg_.mode == SampleMode::exact) {
          if (c < -kExactCosSlack) {
            std::ostringstream msg;
            msg.precision(17);
            msg << "exact sampling requires weak inconsistency (cos θ_C ≥ 0 for every cycle); "
                   "closed a cycle with holonomy "
                << theta << " (cos = " << c << "). Use importance mode for this graph.";
            throw std::runtime_error(msg.str());
          }
          keep_p = std::min(1.0, 1.0 - c);
        } else {
          keep_p = c <= 0.0 ? 1.0 : 1.0 - c;
        }
        const double coin = rng_.uniform01();
        if (coin < keep_p) {
          ++stats_.cycles_kept;
          m.accepted_cycles.push_back(theta);
          if (cfg_.mode == SampleMode::importance && c < 0.0) {
            m.importance_log_weight += std::log1p(-c);
          }
          // Freeze the component: path_[j..] is the cycle, path_[0..j) a
          // branch hanging off it; rotations are path angles from v.
          const std::size_t last = path_.size() - 1;
          for (std::size_t t = 0; t <= last; ++t) {
            const int x = path_[t].node;
            spanned_[x] = 1;
            m.kind[x] = ComponentKind::unicycle;
            m.root[x] = -1;
            m.rotation[x] = canonical_angle(path_[t].prefix - path_[j].prefix);
            m.on_cycle[x] = t >= static_cast<std::size_t>(j) ? 1 : 0;
            m.parent[x] = t < last ? path_[t + 1].node : v;
          }
          walking = false;
          continue;
        }
        ++stats_.cycles_discarded;
        discard_suffix<D>(j);
        path_.resize(j + 1);
        if constexpr (D == CycleDetection::multi_counter) {
          if (static_cast<std::int64_t>(era_cap_.size()) > kEraLimit) compact_eras();
        }
        continue;
      }

      // Fresh node: extend the path.
      path_.push_back(PathEntry{v, slot, u_prefix + step_angle});
      pos_[v] = static_cast<int>(path_.size()) - 1;
      stamp<D>(v);
    }
  }

  for (int i = 0; i < n; ++i) {
    if (m.kind[i] == ComponentKind::tree && m.parent[i] == -1) m.roots.push_back(i);
  }
  return m;
}

Mtsf MtsfSampler::sample() {
  last_calls_ = 0;
  Mtsf m = cfg_.detection == CycleDetection::one_counter
               ? sample_impl<CycleDetection::one_counter>()
               : sample_impl<CycleDetection::multi_counter>();
  ++stats_.samples;
  return m;
}

double MtsfSampler::expected_steps_bound(const SmoothingProblem& p) {
  const ConnectionGraph& g = p.g_ref();
  const int n = g.n_nodes();
  if (n > dense_size_cap()) {
    throw std::runtime_error("expected_steps_bound: graph has " + std::to_string(n) +
                             " nodes, above the dense cap of " + std::to_string(dense_size_cap()));
  }
  // The bound needs L + Q (combinatorial) nonsingular, i.e. positive q mass
  // in every component; cycle-driven termination has no trace formula.
  const ComponentTermination term = analyze_termination(p);
  for (std::size_t c = 0; c < term.q_sum.size(); ++c) {
    if (term.q_sum[c] <= 0.0) {
      const int witness = first_node_with_label(term.label, static_cast<int>(c));
      throw std::runtime_error(
          "expected_steps_bound: component containing node " + std::to_string(witness) +
          " has zero regularization mass, so the walk-length trace bound is infinite");
    }
  }
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
  for (const EdgeRecord& e : g.edges()) {
    M(e.u, e.v) -= e.weight;
    M(e.v, e.u) -= e.weight;
  }
  for (int i = 0; i < n; ++i) M(i, i) = g.degree(i) + p.q[i];
  Eigen::LLT<Eigen::MatrixXd> llt(M);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("expected_steps_bound: L + Q is not positive definite");
  }
  const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(n, n));
  double trace = 0.0;
  for (int i = 0; i < n; ++i) trace += (g.degree(i) + p.q[i]) * inv(i, i);
  return trace;
}

}  // namespace forestsync
