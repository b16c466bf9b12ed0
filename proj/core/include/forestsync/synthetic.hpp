#pragma once
// Random instance generation for the smoothing / synchronization
// experiments: graph skeletons (Erdős–Rényi, two-block stochastic block
// models with and without degree correction, random geometric graphs),
// U(1) connections planted from node potentials, and band-limited test
// signals with calibrated additive noise.
//
// All generators are deterministic functions of (parameters, rng state).

#include <memory>
#include <utility>
#include <vector>

#include "forestsync/complex_signal.hpp"
#include "forestsync/graph.hpp"
#include "forestsync/rng.hpp"

namespace forestsync {

// Unweighted simple graph before a connection is attached. Generators drop
// isolated nodes and keep only the largest connected component, relabeling
// the survivors to 0..n_nodes-1 in their original order, so n_nodes can
// come out smaller than requested.
struct Skeleton {
  int n_nodes = 0;
  std::vector<std::pair<int, int>> edges;
};

// G(n, p) with p = mean_degree/(n-1), clipped to 1. Requires n >= 2 and
// 0 < mean_degree; throws std::runtime_error if the draw comes out with no
// edges at all.
Skeleton gen_er(int n, double mean_degree, Rng& rng);

// Block model: nodes i in block k and j in block l are adjacent
// independently with probability min(c[k][l]/n, 1). sizes must sum to n and
// c must be square, symmetric and non-negative.
Skeleton gen_sbm(int n, const std::vector<int>& sizes,
                 const std::vector<std::vector<double>>& c, Rng& rng);

// Positive mixture law for per-node connectivity profiles in the
// degree-corrected model. Component draws are N(mean, variance).
struct MixtureComponent {
  double mean = 0.0;
  double variance = 1.0;
  double weight = 1.0;
};
using GaussianMixture = std::vector<MixtureComponent>;

// Draws n connectivity parameters from the mixture, resampling any
// non-positive value, then divides by the sample mean so the returned
// profile has empirical mean exactly 1.
std::vector<double> sample_connectivity(int n, const GaussianMixture& law,
                                        Rng& rng);

// Degree-corrected block model: edge {i,j} present independently with
// probability min(p_i p_j c[k][l]/n, 1), where p = sample_connectivity(law).
Skeleton gen_dcsbm(int n, const std::vector<int>& sizes,
                   const std::vector<std::vector<double>>& c,
                   const GaussianMixture& law, Rng& rng);

// Random geometric graph: n points uniform in [0,1]^3, an edge whenever the
// Euclidean distance is strictly below radius.
Skeleton gen_eps_graph(int n, double radius, Rng& rng);

// Experiment presets, parameterized by node count. The block rates scale
// with n so the expected mean degree stays at the reference values
// (~40 for the two moderate presets, ~10x that for the dense one, before
// degree-correction clipping); the geometric preset shrinks the radius as
// n^(-1/3) to hold neighborhood density constant (~37 at the reference
// size 10^4).
Skeleton gen_sbm_preset(int n, Rng& rng);
Skeleton gen_dcsbm_moderate(int n, Rng& rng);
Skeleton gen_dcsbm_dense(int n, Rng& rng);
Skeleton gen_eps_preset(int n, Rng& rng);

// Connectivity mixtures used by the degree-corrected presets: a handful of
// well-separated components whose means span two to three orders of
// magnitude, giving the heavy-tailed degree profiles the presets are for.
GaussianMixture connectivity_mixture_moderate();
GaussianMixture connectivity_mixture_dense();

// A connection over a skeleton together with the potential it was planted
// from: omega_v uniform on [0,2*pi), edge angles
//   theta_(u,v) = omega_v - omega_u + eta * eps_e,  eps_e uniform on [-1,1].
// Potentials telescope around any cycle, so a cycle of length L carries
// holonomy at most L*eta in magnitude; eta <= pi/(2n) therefore keeps every
// cycle cosine non-negative, which is what exact-mode sampling requires.
struct ConnectionInstance {
  std::shared_ptr<ConnectionGraph> graph;
  std::vector<double> omega;                   // ground-truth potential
  bool weak_inconsistency_guaranteed = false;  // eta <= pi/(2 n)
};

ConnectionInstance gen_connection(const Skeleton& s, double eta, Rng& rng);

// Band-limited signal: combination of the `band` eigenvectors of the
// connection Laplacian with smallest eigenvalues, with independent standard
// complex-normal coefficients. Dense eigensolve — throws when the graph
// exceeds dense_size_cap().
ComplexSignal gen_bandlimited(const ConnectionGraph& g, int band, Rng& rng);

// Additive complex white noise calibrated to a target signal-to-noise
// ratio, defined as snr = ||f||^2 / (n * sigma^2) with sigma^2 the
// per-entry noise power E|eps_i|^2. An infinite snr returns f unchanged.
ComplexSignal add_noise(const ComplexSignal& f, double snr, Rng& rng);

}  // namespace forestsync
