#include "forestsync/estimators.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace forestsync {

void EstimateAccumulator::add(const ComplexSignal& estimate, double log_weight) {
  if (estimate.size() != sum_.size()) {
    throw std::invalid_argument("EstimateAccumulator: estimate size mismatch");
  }
  if (m_ == 0) {
    log_scale_ = log_weight;
  } else if (log_weight > log_scale_) {
    // New heaviest sample: rescale the running sums down to its scale.
    const double r = std::exp(log_scale_ - log_weight);
    scale(sum_, cplx(r, 0.0));
    weight_sum_ *= r;
    weight_sq_sum_ *= r * r;
    log_scale_ = log_weight;
  }
  const double w = std::exp(log_weight - log_scale_);  // ≤ 1
  axpy(cplx(w, 0.0), estimate, sum_);
  weight_sum_ += w;
  weight_sq_sum_ += w * w;
  ++m_;
}

void EstimateAccumulator::merge(const EstimateAccumulator& other) {
  if (other.sum_.size() != sum_.size()) {
    throw std::invalid_argument("EstimateAccumulator: merge size mismatch");
  }
  if (other.m_ == 0) return;
  if (m_ == 0) {
    *this = other;
    return;
  }
  if (other.log_scale_ > log_scale_) {
    const double r = std::exp(log_scale_ - other.log_scale_);
    scale(sum_, cplx(r, 0.0));
    weight_sum_ *= r;
    weight_sq_sum_ *= r * r;
    log_scale_ = other.log_scale_;
  }
  const double r = std::exp(other.log_scale_ - log_scale_);  // ≤ 1
  axpy(cplx(r, 0.0), other.sum_, sum_);
  weight_sum_ += r * other.weight_sum_;
  weight_sq_sum_ += r * r * other.weight_sq_sum_;
  m_ += other.m_;
}

ComplexSignal EstimateAccumulator::mean() const {
  if (!(weight_sum_ > 0.0)) {
    throw std::runtime_error("EstimateAccumulator: no weight accumulated");
  }
  ComplexSignal out = sum_;
  scale(out, cplx(1.0 / weight_sum_, 0.0));
  return out;
}

double EstimateAccumulator::effective_sample_size() const {
  if (!(weight_sq_sum_ > 0.0)) return 0.0;
  return weight_sum_ * weight_sum_ / weight_sq_sum_;
}

ComplexSignal estimate_tilde(const Mtsf& phi, const ComplexSignal& g) {
  const int n = phi.n_nodes();
  if (static_cast<int>(g.size()) != n) {
    throw std::invalid_argument("estimate_tilde: signal size mismatch");
  }
  ComplexSignal out(n, cplx(0.0, 0.0));
  for (int i = 0; i < n; ++i) {
    if (phi.kind[i] == ComponentKind::tree) {
      out[i] = std::polar(1.0, phi.rotation[i]) * g[phi.root[i]];
    }
  }
  return out;
}

ComplexSignal estimate_rao_blackwell(const Mtsf& phi, const ComplexSignal& g,
                                     const std::vector<double>& q) {
  const int n = phi.n_nodes();
  if (static_cast<int>(g.size()) != n || static_cast<int>(q.size()) != n) {
    throw std::invalid_argument("estimate_rao_blackwell: size mismatch");
  }
  // Tree components are labeled by their root id.
  std::vector<cplx> num(n, cplx(0.0, 0.0));
  std::vector<double> den(n, 0.0);
  for (int i = 0; i < n; ++i) {
    if (phi.kind[i] != ComponentKind::tree || q[i] == 0.0) continue;
    num[phi.root[i]] += q[i] * std::polar(1.0, -phi.rotation[i]) * g[i];
    den[phi.root[i]] += q[i];
  }
  ComplexSignal out(n, cplx(0.0, 0.0));
  for (int i = 0; i < n; ++i) {
    if (phi.kind[i] != ComponentKind::tree) continue;
    const int r = phi.root[i];
    if (!(den[r] > 0.0)) {
      throw std::invalid_argument(
          "estimate_rao_blackwell: tree rooted at node " + std::to_string(r) +
          " carries no q mass; such a root has sampling probability zero");
    }
    out[i] = std::polar(1.0, phi.rotation[i]) * (num[r] / den[r]);
  }
  return out;
}

ComplexSignal estimate_gradient_step(const ComplexSignal& rb_estimate, const SmoothingProblem& p,
                                     double alpha) {
  const ConnectionGraph& g = p.g_ref();
  const int n = g.n_nodes();
  if (static_cast<int>(rb_estimate.size()) != n) {
    throw std::invalid_argument("estimate_gradient_step: estimate size mismatch");
  }
  for (int i = 0; i < n; ++i) {
    if (g.degree(i) + p.q[i] <= 0.0) {
      throw std::invalid_argument("estimate_gradient_step: node " + std::to_string(i) +
                                  " has d_i + q_i = 0, preconditioner undefined");
    }
  }
  // Residual (L_θ+Q) f̄ − Q g, assembled edge-wise.
  ComplexSignal residual(n, cplx(0.0, 0.0));
  for (int i = 0; i < n; ++i) {
    residual[i] = (g.degree(i) + p.q[i]) * rb_estimate[i] - p.q[i] * p.g[i];
  }
  for (int i = 0; i < n; ++i) {
    for (int k = g.row_begin(i); k < g.row_end(i); ++k) {
      // (L_θ)_{i,v} = −w e^{−ιθ_(i,v)}
      residual[i] -= g.weight(k) * std::polar(1.0, -g.angle(k)) * rb_estimate[g.neighbor(k)];
    }
  }
  ComplexSignal out = rb_estimate;
  for (int i = 0; i < n; ++i) {
    out[i] -= alpha * residual[i] / (g.degree(i) + p.q[i]);
  }
  return out;
}

cplx feynman_kac_point(const SmoothingProblem& p, int node, int m, Rng& rng) {
  const ConnectionGraph& g = p.g_ref();
  const int n = g.n_nodes();
  if (node < 0 || node >= n) throw std::invalid_argument("feynman_kac_point: node out of range");
  if (m < 1) throw std::invalid_argument("feynman_kac_point: need m >= 1");

  // The raw walk has no cycle absorption, so it stalls forever unless the
  // starting component carries q mass.
  {
    std::vector<std::uint8_t> seen(n, 0);
    std::vector<int> queue{node};
    seen[node] = 1;
    double mass = 0.0;
    for (std::size_t h = 0; h < queue.size(); ++h) {
      const int u = queue[h];
      mass += p.q[u];
      for (int k = g.row_begin(u); k < g.row_end(u); ++k) {
        const int v = g.neighbor(k);
        if (!seen[v]) {
          seen[v] = 1;
          queue.push_back(v);
        }
      }
    }
    if (!(mass > 0.0)) {
      throw std::runtime_error("feynman_kac_point: the component of node " +
                               std::to_string(node) +
                               " has no regularization mass; the walk cannot stop");
    }
  }

  cplx acc(0.0, 0.0);
  for (int k = 0; k < m; ++k) {
    int u = node;
    double phase = 0.0;
    for (;;) {
      const int slot = interrupted_step_slot(g, p.q, u, rng);
      if (slot < 0) break;
      phase += g.angle(slot);
      u = g.neighbor(slot);
    }
    // Transport the observation at the stopping node back to the start.
    acc += std::polar(1.0, -phase) * p.g[u];
  }
  return acc / static_cast<double>(m);
}

double estimate_dof(const SmoothingProblem& p, int m, const WalkConfig& cfg) {
  if (m < 1) throw std::invalid_argument("estimate_dof: need m >= 1");
  MtsfSampler sampler(p, cfg);
  // Exact mode: plain mean of root counts. Importance mode: the same
  // self-normalized combiner as for signals, Σ w_k·|roots_k| / Σ w_k, kept at
  // a floating log-scale.
  double num = 0.0, den = 0.0, log_scale = 0.0;
  for (int k = 0; k < m; ++k) {
    const Mtsf phi = sampler.sample();
    const double lw = cfg.mode == SampleMode::importance ? phi.importance_log_weight : 0.0;
    if (k == 0) {
      log_scale = lw;
    } else if (lw > log_scale) {
      const double r = std::exp(log_scale - lw);
      num *= r;
      den *= r;
      log_scale = lw;
    }
    const double w = std::exp(lw - log_scale);
    num += w * static_cast<double>(phi.roots.size());
    den += w;
  }
  return num / den;
}

MtsfSmoothingResult smooth_mtsf(const SmoothingProblem& p, EstimatorKind kind, int m,
                                const WalkConfig& cfg, double alpha) {
  if (m < 1) throw std::invalid_argument("smooth_mtsf: need m >= 1");
  MtsfSampler sampler(p, cfg);
  EstimateAccumulator acc(p.g_ref().n_nodes());
  for (int k = 0; k < m; ++k) {
    const Mtsf phi = sampler.sample();
    ComplexSignal est = kind == EstimatorKind::tilde
                            ? estimate_tilde(phi, p.g)
                            : estimate_rao_blackwell(phi, p.g, p.q);
    acc.add(est, cfg.mode == SampleMode::importance ? phi.importance_log_weight : 0.0);
  }
  MtsfSmoothingResult out;
  out.f = acc.mean();
  if (kind == EstimatorKind::gradient_step) {
    // Affine in f̄, so applying it to the combined mean equals the mean of
    // per-replicate refinements (also under self-normalized weights).
    out.f = estimate_gradient_step(out.f, p, alpha);
  }
  out.m = m;
  out.stats = sampler.stats();
  out.mean_steps = static_cast<double>(out.stats.successor_calls) / static_cast<double>(m);
  out.effective_sample_size = acc.effective_sample_size();
  return out;
}

NormalizedSmoothing make_normalized_smoothing(std::shared_ptr<const ConnectionGraph> g, double q,
                                              const ComplexSignal& signal) {
  if (!g) throw std::invalid_argument("make_normalized_smoothing: null graph");
  const int n = g->n_nodes();
  if (static_cast<int>(signal.size()) != n) {
    throw std::invalid_argument("make_normalized_smoothing: signal size mismatch");
  }
  if (!(q > 0.0)) throw std::invalid_argument("make_normalized_smoothing: need q > 0");
  std::vector<double> qd(n);
  std::vector<double> post(n);
  ComplexSignal gprime(n);
  for (int i = 0; i < n; ++i) {
    const double d = g->degree(i);
    if (!(d > 0.0)) {
      throw std::invalid_argument("make_normalized_smoothing: node " + std::to_string(i) +
                                  " is isolated; the normalized Laplacian is undefined");
    }
    qd[i] = q * d;
    post[i] = std::sqrt(d);
    gprime[i] = signal[i] / post[i];
  }
  return NormalizedSmoothing{SmoothingProblem(std::move(g), std::move(qd), std::move(gprime)),
                             std::move(post)};
}

ComplexSignal finish_normalized(const NormalizedSmoothing& ns, const ComplexSignal& f) {
  if (f.size() != ns.post_scale.size()) {
    throw std::invalid_argument("finish_normalized: size mismatch");
  }
  ComplexSignal out = f;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= ns.post_scale[i];
  return out;
}

}  // namespace forestsync
