#pragma once

// Weighted undirected graph carrying a U(1) connection: every oriented edge
// (i,j) holds an angle θ_(i,j) with θ_(j,i) = −θ_(i,j), so transporting a
// complex fiber value across an edge multiplies it by e^{ιθ}. This is the
// single read-only substrate shared by samplers, operators and solvers.

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "forestsync/complex_signal.hpp"

namespace forestsync {

struct EdgeRecord {
  int u = 0;          // stored orientation u -> v
  int v = 0;
  double weight = 1.0;
  double angle = 0.0;  // θ_(u,v), canonicalized to (−π, π]
};

// Reduce an angle to the canonical interval (−π, π].
double canonical_angle(double a);

class ConnectionGraph {
 public:
  // Builds from an undirected edge list. Each undirected pair must appear
  // exactly once, in either orientation; the reverse direction is implied
  // with negated angle. Rejects self-loops, duplicate pairs and weights ≤ 0.
  static ConnectionGraph build(int n_nodes, std::vector<EdgeRecord> edges);

  int n_nodes() const { return n_; }
  int n_edges() const { return static_cast<int>(edges_.size()); }
  const std::vector<EdgeRecord>& edges() const { return edges_; }

  double degree(int i) const { return degree_[i]; }
  const std::vector<double>& degrees() const { return degree_; }
  double max_degree() const;
  double mean_degree() const;

  // CSR-style adjacency, neighbors sorted by id within each row.
  int row_begin(int i) const { return offset_[i]; }
  int row_end(int i) const { return offset_[i + 1]; }
  int row_degree_count(int i) const { return offset_[i + 1] - offset_[i]; }
  int neighbor(int k) const { return nbr_[k]; }
  double weight(int k) const { return w_[k]; }
  double angle(int k) const { return ang_[k]; }        // θ_(i, nbr): transport i -> nbr
  int edge_id(int k) const { return edge_id_[k]; }     // index into edges()
  // Prefix sums of weights within row i (cum_weight(row_end(i)-1) == degree(i)).
  double cum_weight(int k) const { return cumw_[k]; }

  // Angle θ_(i,j); throws if (i,j) is not an edge.
  double angle_between(int i, int j) const;
  // Adjacency slot of j in row i, or -1.
  int find_slot(int i, int j) const;

  // Holonomy of a closed walk given as a node sequence v0, v1, ..., vk = v0:
  // sum of traversed angles reduced to (−π, π].
  double cycle_angle(const std::vector<int>& closed_path) const;

  bool is_unweighted() const { return unweighted_; }
  bool is_connected() const;
  // Connected-component label per node (labels are 0-based, ordered by
  // smallest member id).
  std::vector<int> component_labels() const;

  // Edge-list text I/O: one `i j w theta` line per edge, '#' comments.
  static ConnectionGraph load(const std::string& path);
  static ConnectionGraph parse(std::istream& in, const std::string& origin);
  void save(const std::string& path) const;

 private:
  int n_ = 0;
  std::vector<EdgeRecord> edges_;
  std::vector<int> offset_;
  std::vector<int> nbr_;
  std::vector<double> w_, ang_, cumw_;
  std::vector<int> edge_id_;
  std::vector<double> degree_;
  bool unweighted_ = true;
};

// Regularization weights q_i and an observed signal g bound to a graph.
struct SmoothingProblem {
  std::shared_ptr<const ConnectionGraph> graph;
  std::vector<double> q;  // per-node, ≥ 0, at least one strictly positive
  ComplexSignal g;

  SmoothingProblem(std::shared_ptr<const ConnectionGraph> graph_in,
                   std::vector<double> q_in, ComplexSignal g_in);
  // Uniform q convenience.
  SmoothingProblem(std::shared_ptr<const ConnectionGraph> graph_in, double q_uniform,
                   ComplexSignal g_in);

  const ConnectionGraph& g_ref() const { return *graph; }
};

// Signal CSV I/O (`node,re,im` lines, optional header).
ComplexSignal load_signal(const std::string& path, int expected_n);
void save_signal(const std::string& path, const ComplexSignal& f);

}  // namespace forestsync
