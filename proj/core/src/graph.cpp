#include "forestsync/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace forestsync {

double canonical_angle(double a) {
  double r = std::remainder(a, 2.0 * std::numbers::pi);
  if (r <= -std::numbers::pi) r += 2.0 * std::numbers::pi;  // map −π to +π
  return r;
}

ConnectionGraph ConnectionGraph::build(int n_nodes, std::vector<EdgeRecord> edges) {
  if (n_nodes <= 0) throw std::invalid_argument("graph must have at least one node");
  ConnectionGraph g;
  g.n_ = n_nodes;

  // Validate and canonicalize.
  std::vector<std::pair<std::int64_t, int>> seen;  // (packed pair, edge index)
  seen.reserve(edges.size());
  for (int e = 0; e < static_cast<int>(edges.size()); ++e) {
    EdgeRecord& r = edges[e];
    if (r.u < 0 || r.u >= n_nodes || r.v < 0 || r.v >= n_nodes)
      throw std::invalid_argument("edge (" + std::to_string(r.u) + "," + std::to_string(r.v) +
                                  ") references a node outside [0," + std::to_string(n_nodes) + ")");
    if (r.u == r.v)
      throw std::invalid_argument("self-loop at node " + std::to_string(r.u) + " is not allowed");
    if (!(r.weight > 0.0))
      throw std::invalid_argument("edge (" + std::to_string(r.u) + "," + std::to_string(r.v) +
                                  ") has nonpositive weight " + std::to_string(r.weight));
    r.angle = canonical_angle(r.angle);
    const int a = std::min(r.u, r.v), b = std::max(r.u, r.v);
    seen.emplace_back(static_cast<std::int64_t>(a) * n_nodes + b, e);
    if (r.weight != 1.0) g.unweighted_ = false;
  }
  std::sort(seen.begin(), seen.end());
  for (std::size_t k = 1; k < seen.size(); ++k) {
    if (seen[k].first == seen[k - 1].first) {
      const EdgeRecord& r = edges[seen[k].second];
      throw std::invalid_argument("duplicate edge between nodes " +
                                  std::to_string(std::min(r.u, r.v)) + " and " +
                                  std::to_string(std::max(r.u, r.v)));
    }
  }
  g.edges_ = std::move(edges);

  // CSR assembly, neighbors sorted by id (counting sort over two passes).
  g.offset_.assign(n_nodes + 1, 0);
  for (const EdgeRecord& r : g.edges_) {
    ++g.offset_[r.u + 1];
    ++g.offset_[r.v + 1];
  }
  for (int i = 0; i < n_nodes; ++i) g.offset_[i + 1] += g.offset_[i];
  const int half_edges = g.offset_[n_nodes];
  g.nbr_.resize(half_edges);
  g.w_.resize(half_edges);
  g.ang_.resize(half_edges);
  g.edge_id_.resize(half_edges);
  g.cumw_.resize(half_edges);

  // Scatter entries, then sort each row by neighbor id.
  std::vector<int> cursor(g.offset_.begin(), g.offset_.end() - 1);
  for (int e = 0; e < static_cast<int>(g.edges_.size()); ++e) {
    const EdgeRecord& r = g.edges_[e];
    int k = cursor[r.u]++;
    g.nbr_[k] = r.v;
    g.w_[k] = r.weight;
    g.ang_[k] = r.angle;
    g.edge_id_[k] = e;
    k = cursor[r.v]++;
    g.nbr_[k] = r.u;
    g.w_[k] = r.weight;
    g.ang_[k] = canonical_angle(-r.angle);
    g.edge_id_[k] = e;
  }
  std::vector<int> order;
  for (int i = 0; i < n_nodes; ++i) {
    const int lo = g.offset_[i], hi = g.offset_[i + 1];
    order.resize(hi - lo);
    for (int k = 0; k < hi - lo; ++k) order[k] = lo + k;
    std::sort(order.begin(), order.end(), [&](int a, int b) { return g.nbr_[a] < g.nbr_[b]; });
    std::vector<int> nbr(hi - lo);
    std::vector<double> w(hi - lo), ang(hi - lo);
    std::vector<int> eid(hi - lo);
    for (int k = 0; k < hi - lo; ++k) {
      nbr[k] = g.nbr_[order[k]];
      w[k] = g.w_[order[k]];
      ang[k] = g.ang_[order[k]];
      eid[k] = g.edge_id_[order[k]];
    }
    std::copy(nbr.begin(), nbr.end(), g.nbr_.begin() + lo);
    std::copy(w.begin(), w.end(), g.w_.begin() + lo);
    std::copy(ang.begin(), ang.end(), g.ang_.begin() + lo);
    std::copy(eid.begin(), eid.end(), g.edge_id_.begin() + lo);
  }

  g.degree_.assign(n_nodes, 0.0);
  for (int i = 0; i < n_nodes; ++i) {
    double cum = 0.0;
    for (int k = g.offset_[i]; k < g.offset_[i + 1]; ++k) {
      cum += g.w_[k];
      g.cumw_[k] = cum;
    }
    g.degree_[i] = cum;
  }
  return g;
}

double ConnectionGraph::max_degree() const {
  double d = 0.0;
  for (double x : degree_) d = std::max(d, x);
  return d;
}

double ConnectionGraph::mean_degree() const {
  double s = 0.0;
  for (double x : degree_) s += x;
  return n_ > 0 ? s / n_ : 0.0;
}

int ConnectionGraph::find_slot(int i, int j) const {
  const int lo = offset_[i], hi = offset_[i + 1];
  auto it = std::lower_bound(nbr_.begin() + lo, nbr_.begin() + hi, j);
  if (it == nbr_.begin() + hi || *it != j) return -1;
  return static_cast<int>(it - nbr_.begin());
}

double ConnectionGraph::angle_between(int i, int j) const {
  const int k = find_slot(i, j);
  if (k < 0)
    throw std::invalid_argument("nodes " + std::to_string(i) + " and " + std::to_string(j) +
                                " are not adjacent");
  return ang_[k];
}

double ConnectionGraph::cycle_angle(const std::vector<int>& closed_path) const {
  if (closed_path.size() < 2 || closed_path.front() != closed_path.back())
    throw std::invalid_argument("cycle_angle requires a closed node path (first == last)");
  double sum = 0.0;
  for (std::size_t t = 0; t + 1 < closed_path.size(); ++t)
    sum += angle_between(closed_path[t], closed_path[t + 1]);
  return canonical_angle(sum);
}

std::vector<int> ConnectionGraph::component_labels() const {
  std::vector<int> label(n_, -1);
  std::vector<int> stack;
  int next = 0;
  for (int s = 0; s < n_; ++s) {
    if (label[s] >= 0) continue;
    label[s] = next;
    stack.push_back(s);
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      for (int k = offset_[u]; k < offset_[u + 1]; ++k) {
        const int v = nbr_[k];
        if (label[v] < 0) {
          label[v] = next;
          stack.push_back(v);
        }
      }
    }
    ++next;
  }
  return label;
}

bool ConnectionGraph::is_connected() const {
  const std::vector<int> label = component_labels();
  for (int l : label)
    if (l != 0) return false;
  return true;
}

ConnectionGraph ConnectionGraph::parse(std::istream& in, const std::string& origin) {
  std::vector<EdgeRecord> edges;
  std::string line;
  int line_no = 0;
  int max_node = -1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    EdgeRecord r;
    if (!(ls >> r.u >> r.v >> r.weight >> r.angle))
      throw std::runtime_error(origin + ":" + std::to_string(line_no) +
                               ": expected `i j w theta`, got: " + line);
    std::string extra;
    if (ls >> extra)
      throw std::runtime_error(origin + ":" + std::to_string(line_no) +
                               ": trailing content after 4 fields: " + extra);
    max_node = std::max({max_node, r.u, r.v});
    edges.push_back(r);
  }
  if (edges.empty()) throw std::runtime_error(origin + ": no edges found");
  try {
    return build(max_node + 1, std::move(edges));
  } catch (const std::invalid_argument& err) {
    throw std::runtime_error(origin + ": " + err.what());
  }
}

ConnectionGraph ConnectionGraph::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open graph file: " + path);
  return parse(in, path);
}

void ConnectionGraph::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write graph file: " + path);
  out << "# i j w theta\n";
  out.precision(17);
  for (const EdgeRecord& r : edges_)
    out << r.u << ' ' << r.v << ' ' << r.weight << ' ' << r.angle << '\n';
  if (!out) throw std::runtime_error("failed while writing: " + path);
}

SmoothingProblem::SmoothingProblem(std::shared_ptr<const ConnectionGraph> graph_in,
                                   std::vector<double> q_in, ComplexSignal g_in)
    : graph(std::move(graph_in)), q(std::move(q_in)), g(std::move(g_in)) {
  if (!graph) throw std::invalid_argument("SmoothingProblem requires a graph");
  const int n = graph->n_nodes();
  if (static_cast<int>(q.size()) != n)
    throw std::invalid_argument("q has " + std::to_string(q.size()) + " entries, graph has " +
                                std::to_string(n) + " nodes");
  if (static_cast<int>(g.size()) != n)
    throw std::invalid_argument("signal has " + std::to_string(g.size()) + " entries, graph has " +
                                std::to_string(n) + " nodes");
  bool any_positive = false;
  for (double x : q) {
    if (x < 0.0) throw std::invalid_argument("q entries must be nonnegative");
    any_positive = any_positive || x > 0.0;
  }
  if (!any_positive)
    throw std::invalid_argument("at least one q_i must be strictly positive");
}

SmoothingProblem::SmoothingProblem(std::shared_ptr<const ConnectionGraph> graph_in,
                                   double q_uniform, ComplexSignal g_in)
    : SmoothingProblem(graph_in,
                       std::vector<double>(graph_in ? graph_in->n_nodes() : 0, q_uniform),
                       std::move(g_in)) {}

ComplexSignal load_signal(const std::string& path, int expected_n) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open signal file: " + path);
  ComplexSignal f(expected_n, cplx{0.0, 0.0});
  std::vector<bool> set(expected_n, false);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    for (char& c : line)
      if (c == ',') c = ' ';
    std::istringstream ls(line);
    int node;
    double re, im;
    if (!(ls >> node >> re >> im)) {
      if (line_no == 1) continue;  // tolerate a header line
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected `node,re,im`, got: " + line);
    }
    if (node < 0 || node >= expected_n)
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": node " +
                               std::to_string(node) + " outside [0," +
                               std::to_string(expected_n) + ")");
    f[node] = cplx{re, im};
    set[node] = true;
  }
  for (int i = 0; i < expected_n; ++i)
    if (!set[i])
      throw std::runtime_error(path + ": no value for node " + std::to_string(i));
  return f;
}

void save_signal(const std::string& path, const ComplexSignal& f) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write signal file: " + path);
  out << "node,re,im\n";
  out.precision(17);
  for (std::size_t i = 0; i < f.size(); ++i)
    out << i << ',' << f[i].real() << ',' << f[i].imag() << '\n';
  if (!out) throw std::runtime_error("failed while writing: " + path);
}

}  // namespace forestsync
