#include "forestsync/synthetic.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "forestsync/config.hpp"

namespace forestsync {

namespace {

// Keep the largest connected component (ties broken towards the component
// holding the smallest node id) and relabel survivors in ascending order.
// Isolated nodes form singleton components, so they never survive as long
// as at least one edge exists.
Skeleton largest_component(int n, std::vector<std::pair<int, int>> edges) {
  if (edges.empty()) throw std::runtime_error("generated graph has no edges");

  std::vector<std::vector<int>> adj(n);
  for (const auto& [u, v] : edges) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  std::vector<int> label(n, -1);
  std::vector<int> comp_size;
  std::vector<int> stack;
  for (int s = 0; s < n; ++s) {
    if (label[s] >= 0) continue;
    const int c = static_cast<int>(comp_size.size());
    comp_size.push_back(0);
    stack.push_back(s);
    label[s] = c;
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      ++comp_size[c];
      for (int v : adj[u]) {
        if (label[v] < 0) {
          label[v] = c;
          stack.push_back(v);
        }
      }
    }
  }
  const int keep = static_cast<int>(
      std::max_element(comp_size.begin(), comp_size.end()) - comp_size.begin());

  std::vector<int> new_id(n, -1);
  int next = 0;
  for (int v = 0; v < n; ++v) {
    if (label[v] == keep) new_id[v] = next++;
  }
  Skeleton out;
  out.n_nodes = next;
  for (const auto& [u, v] : edges) {
    if (label[u] == keep) out.edges.emplace_back(new_id[u], new_id[v]);
  }
  return out;
}

void check_blocks(int n, const std::vector<int>& sizes,
                  const std::vector<std::vector<double>>& c) {
  if (n < 2) throw std::invalid_argument("block model needs n >= 2");
  const std::size_t k = sizes.size();
  if (k == 0) throw std::invalid_argument("block model needs at least one block");
  long long total = 0;
  for (int s : sizes) {
    if (s < 0) throw std::invalid_argument("block sizes must be non-negative");
    total += s;
  }
  if (total != n) throw std::invalid_argument("block sizes must sum to n");
  if (c.size() != k)
    throw std::invalid_argument("rate matrix must be blocks x blocks");
  for (std::size_t a = 0; a < k; ++a) {
    if (c[a].size() != k)
      throw std::invalid_argument("rate matrix must be blocks x blocks");
    for (std::size_t b = 0; b < k; ++b) {
      if (!(c[a][b] >= 0.0))
        throw std::invalid_argument("rate matrix entries must be >= 0");
      if (c[a][b] != c[b][a])
        throw std::invalid_argument("rate matrix must be symmetric");
    }
  }
}

std::vector<int> block_of(int n, const std::vector<int>& sizes) {
  std::vector<int> label(n);
  int v = 0;
  for (std::size_t b = 0; b < sizes.size(); ++b) {
    for (int i = 0; i < sizes[b]; ++i) label[v++] = static_cast<int>(b);
  }
  return label;
}

}  // namespace

Skeleton gen_er(int n, double mean_degree, Rng& rng) {
  if (n < 2) throw std::invalid_argument("gen_er needs n >= 2");
  if (!(mean_degree > 0.0) || !(mean_degree < n))
    throw std::invalid_argument("gen_er needs 0 < mean_degree < n");
  const double p = std::min(1.0, mean_degree / (n - 1));
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (rng.uniform01() < p) edges.emplace_back(i, j);
    }
  }
  return largest_component(n, std::move(edges));
}

Skeleton gen_sbm(int n, const std::vector<int>& sizes,
                 const std::vector<std::vector<double>>& c, Rng& rng) {
  check_blocks(n, sizes, c);
  const std::vector<int> label = block_of(n, sizes);
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double p = std::min(c[label[i]][label[j]] / n, 1.0);
      if (rng.uniform01() < p) edges.emplace_back(i, j);
    }
  }
  return largest_component(n, std::move(edges));
}

std::vector<double> sample_connectivity(int n, const GaussianMixture& law,
                                        Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample_connectivity needs n >= 1");
  if (law.empty()) throw std::invalid_argument("empty connectivity mixture");
  double total_weight = 0.0;
  for (const auto& comp : law) {
    if (!(comp.weight >= 0.0) || !(comp.variance >= 0.0))
      throw std::invalid_argument("mixture weights and variances must be >= 0");
    total_weight += comp.weight;
  }
  if (!(total_weight > 0.0))
    throw std::invalid_argument("connectivity mixture has zero total weight");

  std::vector<double> p(n);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    double value = 0.0;
    // Resample until positive; the preset component means sit many standard
    // deviations above zero, so this loop is all but a formality.
    for (int tries = 0;; ++tries) {
      if (tries >= 10000)
        throw std::runtime_error(
            "connectivity mixture kept producing non-positive draws");
      double pick = rng.uniform01() * total_weight;
      std::size_t k = 0;
      while (k + 1 < law.size() && pick >= law[k].weight) {
        pick -= law[k].weight;
        ++k;
      }
      value = law[k].mean + std::sqrt(law[k].variance) * rng.normal();
      if (value > 0.0) break;
    }
    p[i] = value;
    sum += value;
  }
  // Normalize by the sample mean: the profile is only identified up to
  // scale (it multiplies a rate matrix), and this makes the empirical mean
  // exactly one.
  const double inv_mean = n / sum;
  for (double& v : p) v *= inv_mean;
  return p;
}

Skeleton gen_dcsbm(int n, const std::vector<int>& sizes,
                   const std::vector<std::vector<double>>& c,
                   const GaussianMixture& law, Rng& rng) {
  check_blocks(n, sizes, c);
  const std::vector<int> label = block_of(n, sizes);
  const std::vector<double> p = sample_connectivity(n, law, rng);
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double prob =
          std::min(p[i] * p[j] * c[label[i]][label[j]] / n, 1.0);
      if (rng.uniform01() < prob) edges.emplace_back(i, j);
    }
  }
  return largest_component(n, std::move(edges));
}

Skeleton gen_eps_graph(int n, double radius, Rng& rng) {
  if (n < 2) throw std::invalid_argument("gen_eps_graph needs n >= 2");
  if (!(radius > 0.0)) throw std::invalid_argument("radius must be positive");

  std::vector<double> x(n), y(n), z(n);
  for (int i = 0; i < n; ++i) {
    x[i] = rng.uniform01();
    y[i] = rng.uniform01();
    z[i] = rng.uniform01();
  }

  // Bucket points on a grid of cell width >= radius, so all neighbors of a
  // point live in the 27 surrounding cells.
  const int grid = std::max(1, static_cast<int>(std::floor(1.0 / radius)));
  const auto cell_of = [&](double t) {
    return std::min(grid - 1, static_cast<int>(t * grid));
  };
  const auto key_of = [&](int cx, int cy, int cz) {
    return (static_cast<std::int64_t>(cx) * grid + cy) * grid + cz;
  };
  std::unordered_map<std::int64_t, std::vector<int>> buckets;
  for (int i = 0; i < n; ++i) {
    buckets[key_of(cell_of(x[i]), cell_of(y[i]), cell_of(z[i]))].push_back(i);
  }

  const double r2 = radius * radius;
  std::vector<std::pair<int, int>> edges;
  std::vector<int> candidates;
  for (int i = 0; i < n; ++i) {
    const int cx = cell_of(x[i]), cy = cell_of(y[i]), cz = cell_of(z[i]);
    candidates.clear();
    for (int dx = -1; dx <= 1; ++dx) {
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dz = -1; dz <= 1; ++dz) {
          const int nx = cx + dx, ny = cy + dy, nz = cz + dz;
          if (nx < 0 || ny < 0 || nz < 0 || nx >= grid || ny >= grid ||
              nz >= grid)
            continue;
          auto it = buckets.find(key_of(nx, ny, nz));
          if (it == buckets.end()) continue;
          for (int j : it->second) {
            if (j > i) candidates.push_back(j);
          }
        }
      }
    }
    std::sort(candidates.begin(), candidates.end());
    for (int j : candidates) {
      const double dx = x[i] - x[j], dy = y[i] - y[j], dz = z[i] - z[j];
      if (dx * dx + dy * dy + dz * dz < r2) edges.emplace_back(i, j);
    }
  }
  return largest_component(n, std::move(edges));
}

Skeleton gen_sbm_preset(int n, Rng& rng) {
  const std::vector<int> sizes = {n / 2, n - n / 2};
  const std::vector<std::vector<double>> c = {{72.0, 8.0}, {8.0, 72.0}};
  return gen_sbm(n, sizes, c, rng);
}

Skeleton gen_dcsbm_moderate(int n, Rng& rng) {
  const std::vector<int> sizes = {n / 2, n - n / 2};
  const std::vector<std::vector<double>> c = {{72.0, 8.0}, {8.0, 72.0}};
  return gen_dcsbm(n, sizes, c, connectivity_mixture_moderate(), rng);
}

Skeleton gen_dcsbm_dense(int n, Rng& rng) {
  const std::vector<int> sizes = {n / 2, n - n / 2};
  const std::vector<std::vector<double>> c = {{960.0, 40.0}, {40.0, 960.0}};
  return gen_dcsbm(n, sizes, c, connectivity_mixture_dense(), rng);
}

Skeleton gen_eps_preset(int n, Rng& rng) {
  // Radius shrinks as n^(-1/3) so the expected number of points within
  // range stays constant across sizes (reference: 0.1 at n = 10^4).
  const double radius = 0.1 * std::cbrt(10000.0 / n);
  return gen_eps_graph(n, radius, rng);
}

GaussianMixture connectivity_mixture_moderate() {
  return {{50.0, 20.0, 0.59}, {500.0, 100.0, 0.40}, {10000.0, 100.0, 0.01}};
}

GaussianMixture connectivity_mixture_dense() {
  return {{50.0, 20.0, 0.45},
          {1000.0, 50.0, 0.10},
          {5000.0, 100.0, 0.44},
          {10000.0, 100.0, 0.01}};
}

ConnectionInstance gen_connection(const Skeleton& s, double eta, Rng& rng) {
  if (s.n_nodes < 1) throw std::invalid_argument("empty skeleton");
  if (!(eta >= 0.0)) throw std::invalid_argument("eta must be >= 0");

  ConnectionInstance out;
  out.omega.resize(s.n_nodes);
  for (double& w : out.omega) w = rng.uniform(0.0, 2.0 * std::numbers::pi);

  std::vector<EdgeRecord> edges;
  edges.reserve(s.edges.size());
  for (const auto& [u, v] : s.edges) {
    const double eps = rng.uniform(-1.0, 1.0);
    EdgeRecord e;
    e.u = u;
    e.v = v;
    e.weight = 1.0;
    e.angle = canonical_angle(out.omega[v] - out.omega[u] + eta * eps);
    edges.push_back(e);
  }
  out.graph = std::make_shared<ConnectionGraph>(
      ConnectionGraph::build(s.n_nodes, std::move(edges)));
  // Holonomies telescope to the noise terms alone, so |theta_C| <= n * eta
  // around any simple cycle; below pi/(2n) every cycle cosine is >= 0.
  out.weak_inconsistency_guaranteed =
      eta <= std::numbers::pi / (2.0 * s.n_nodes) * (1.0 + 1e-12);
  return out;
}

ComplexSignal gen_bandlimited(const ConnectionGraph& g, int band, Rng& rng) {
  const int n = g.n_nodes();
  if (band < 1 || band > n)
    throw std::invalid_argument("band must lie in [1, n_nodes]");
  if (n > dense_size_cap())
    throw std::runtime_error("graph too large for the dense eigensolve cap");

  Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    a(i, i) = g.degree(i);
    for (int k = g.row_begin(i); k < g.row_end(i); ++k) {
      a(i, g.neighbor(k)) = -g.weight(k) * std::polar(1.0, -g.angle(k));
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(a);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("eigensolve failed on the connection Laplacian");

  Eigen::VectorXcd f = Eigen::VectorXcd::Zero(n);
  for (int k = 0; k < band; ++k) {
    const cplx coeff = rng.complex_normal();
    f += coeff * es.eigenvectors().col(k);
  }
  return ComplexSignal(f.data(), f.data() + n);
}

ComplexSignal add_noise(const ComplexSignal& f, double snr, Rng& rng) {
  if (!(snr > 0.0)) throw std::invalid_argument("snr must be positive");
  if (std::isinf(snr) || f.empty()) return f;
  const double sigma =
      std::sqrt(norm2_sq(f) / (static_cast<double>(f.size()) * snr));
  ComplexSignal g = f;
  for (cplx& value : g) value += sigma * rng.complex_normal();
  return g;
}

}  // namespace forestsync
