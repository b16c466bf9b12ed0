// forestsync: command-line front door for connection-graph smoothing and
// angular synchronization. Subcommands generate experiment instances, run
// any solver arm on them, check the sampler against exhaustive enumeration
// on tiny graphs, and produce the runtime-precision tables behind the
// experiment figures.
//
// Conventions shared by all subcommands:
//   - one JSON metrics line on stdout per run (schema-stable keys; wall-clock
//     fields are the only non-deterministic ones under a fixed --seed);
//   - data files are deterministic functions of the seed, byte for byte;
//   - wall time is measured around the solver call only, never around I/O.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "forestsync/complex_signal.hpp"
#include "forestsync/config.hpp"
#include "forestsync/estimators.hpp"
#include "forestsync/graph.hpp"
#include "forestsync/oracle.hpp"
#include "forestsync/rng.hpp"
#include "forestsync/sampler.hpp"
#include "forestsync/solvers.hpp"
#include "forestsync/sync.hpp"
#include "forestsync/synthetic.hpp"

namespace fs = forestsync;
using json = nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;

// Exit code 2: a problem with the request itself (bad config file), as
// opposed to a runtime failure while executing a well-formed request.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

// JSON-safe double: infinities are legal inputs (--snr inf) but not legal
// JSON numbers, so they serialize as strings.
json json_number(double x) {
  if (std::isfinite(x)) return x;
  return x > 0 ? "inf" : "-inf";
}

void emit_metrics(const json& j) { std::cout << j.dump() << "\n"; }

// ---------------------------------------------------------------------------
// Potential (omega) sidecar I/O: `node,omega` CSV, same conventions as the
// signal files (optional header, '#' comments, errors carry line numbers).

void save_omega(const std::string& path, const std::vector<double>& omega) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write omega file: " + path);
  out << "node,omega\n";
  out.precision(17);
  for (std::size_t i = 0; i < omega.size(); ++i) out << i << ',' << omega[i] << '\n';
  if (!out) throw std::runtime_error("failed while writing: " + path);
}

std::vector<double> load_omega(const std::string& path, int expected_n) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open omega file: " + path);
  std::vector<double> omega(expected_n, 0.0);
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
    double w;
    if (!(ls >> node >> w)) {
      if (line_no == 1) continue;  // tolerate a header line
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected `node,omega`, got: " + line);
    }
    if (node < 0 || node >= expected_n)
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": node " +
                               std::to_string(node) + " outside [0," + std::to_string(expected_n) +
                               ")");
    omega[node] = w;
    set[node] = true;
  }
  for (int i = 0; i < expected_n; ++i)
    if (!set[i]) throw std::runtime_error(path + ": no value for node " + std::to_string(i));
  return omega;
}

fs::ComplexSignal phases_of(const std::vector<double>& omega) {
  fs::ComplexSignal x(omega.size());
  for (std::size_t i = 0; i < omega.size(); ++i) x[i] = std::polar(1.0, omega[i]);
  return x;
}

// ---------------------------------------------------------------------------
// Instance construction shared by `generate` and `bench`.

struct InstanceSpec {
  std::string model;  // er | sbm | dcsbm | dcsbm-dense | geometric
  int n = 0;
  double eta = -1.0;          // < 0: default to pi/(2n)
  double mean_degree = 10.0;  // er only
  int band = 0;               // 0: model default (2 for block models, 5 otherwise)
  double snr = 2.0;
  std::uint64_t seed = 1;
  bool with_signal = true;  // band-limited truth + noisy observation
};

struct Instance {
  fs::ConnectionInstance conn;
  fs::ComplexSignal truth;   // f_top, empty when not generated
  fs::ComplexSignal signal;  // g = f_top + noise, empty when not generated
  double eta = 0.0;
  int band = 0;
};

int default_band(const std::string& model) {
  return (model == "sbm" || model == "dcsbm" || model == "dcsbm-dense") ? 2 : 5;
}

Instance make_instance(const InstanceSpec& spec) {
  fs::Rng rng(spec.seed);
  fs::Skeleton sk;
  if (spec.model == "er") {
    sk = fs::gen_er(spec.n, spec.mean_degree, rng);
  } else if (spec.model == "sbm") {
    sk = fs::gen_sbm_preset(spec.n, rng);
  } else if (spec.model == "dcsbm") {
    sk = fs::gen_dcsbm_moderate(spec.n, rng);
  } else if (spec.model == "dcsbm-dense") {
    sk = fs::gen_dcsbm_dense(spec.n, rng);
  } else if (spec.model == "geometric") {
    sk = fs::gen_eps_preset(spec.n, rng);
  } else {
    throw ConfigError("unknown graph model: " + spec.model +
                      " (expected er|sbm|dcsbm|dcsbm-dense|geometric)");
  }

  Instance out;
  out.eta = spec.eta >= 0.0 ? spec.eta : kPi / (2.0 * spec.n);
  out.band = spec.band > 0 ? spec.band : default_band(spec.model);
  out.conn = fs::gen_connection(sk, out.eta, rng);
  if (spec.with_signal && out.conn.graph->n_nodes() <= fs::dense_size_cap()) {
    out.truth = fs::gen_bandlimited(*out.conn.graph, out.band, rng);
    out.signal = fs::add_noise(out.truth, spec.snr, rng);
  }
  return out;
}

// ---------------------------------------------------------------------------
// generate

struct GenerateArgs {
  InstanceSpec spec;
  std::string out_base;
};

int run_generate(const GenerateArgs& a) {
  const Instance inst = make_instance(a.spec);
  const fs::ConnectionGraph& g = *inst.conn.graph;

  const std::string edges_path = a.out_base + ".edges";
  const std::string omega_path = a.out_base + ".omega.csv";
  g.save(edges_path);
  save_omega(omega_path, inst.conn.omega);
  json files = json::array({edges_path, omega_path});

  const bool signal_written = !inst.signal.empty();
  if (signal_written) {
    fs::save_signal(a.out_base + ".truth.csv", inst.truth);
    fs::save_signal(a.out_base + ".signal.csv", inst.signal);
    files.push_back(a.out_base + ".truth.csv");
    files.push_back(a.out_base + ".signal.csv");
  } else {
    std::cerr << "forestsync: n exceeds the dense cap (" << fs::dense_size_cap()
              << "); skipping band-limited signal files\n";
  }

  json j;
  j["cmd"] = "generate";
  j["model"] = a.spec.model;
  j["n_requested"] = a.spec.n;
  j["n_nodes"] = g.n_nodes();
  j["n_edges"] = g.n_edges();
  j["mean_degree"] = g.mean_degree();
  j["eta"] = inst.eta;
  j["band"] = inst.band;
  j["snr"] = json_number(a.spec.snr);
  j["seed"] = a.spec.seed;
  j["weak_inconsistency_guaranteed"] = inst.conn.weak_inconsistency_guaranteed;
  j["signal_files"] = signal_written;
  j["files"] = files;
  emit_metrics(j);
  return 0;
}

// ---------------------------------------------------------------------------
// smooth

struct SmoothArgs {
  std::string graph_path;
  std::string signal_path;
  std::string truth_path;  // optional
  std::string out_path;    // optional
  std::string method;      // exact | cg | cg_diag | mtsf | mtsf_rb | mtsf_gs
  std::string mode = "exact";
  double q = 0.0;
  int m = 100;
  double alpha = 1.0;
  double tol = 0.0;
  std::uint64_t seed = 1;
};

fs::EstimatorKind estimator_kind_of(const std::string& method) {
  if (method == "mtsf") return fs::EstimatorKind::tilde;
  if (method == "mtsf_rb") return fs::EstimatorKind::rao_blackwell;
  return fs::EstimatorKind::gradient_step;
}

fs::SampleMode sample_mode_of(const std::string& mode) {
  return mode == "importance" ? fs::SampleMode::importance : fs::SampleMode::exact;
}

int run_smooth(const SmoothArgs& a) {
  auto graph = std::make_shared<fs::ConnectionGraph>(fs::ConnectionGraph::load(a.graph_path));
  const int n = graph->n_nodes();
  const fs::ComplexSignal g = fs::load_signal(a.signal_path, n);
  const fs::SmoothingProblem p(graph, a.q, g);

  json j;
  j["cmd"] = "smooth";
  j["method"] = a.method;
  j["n"] = n;
  j["n_edges"] = graph->n_edges();
  j["q"] = a.q;
  j["m"] = a.m;
  j["seed"] = a.seed;

  fs::ComplexSignal f;
  double wall_ms = 0.0;
  if (a.method == "exact") {
    const auto t0 = std::chrono::steady_clock::now();
    f = fs::solve_exact(p);
    wall_ms = ms_since(t0);
  } else if (a.method == "cg" || a.method == "cg_diag") {
    const auto pre =
        a.method == "cg_diag" ? fs::Preconditioner::diagonal : fs::Preconditioner::none;
    const auto t0 = std::chrono::steady_clock::now();
    const fs::CgResult r = fs::solve_cg(p, a.m, pre, a.tol);
    wall_ms = ms_since(t0);
    f = r.f;
    j["iterations"] = r.iterations;
    j["residual_norm"] = r.residual_norm;
    j["converged"] = r.converged;
  } else {
    fs::WalkConfig cfg;
    cfg.mode = sample_mode_of(a.mode);
    cfg.seed = a.seed;
    j["mode"] = a.mode;
    j["alpha"] = a.alpha;
    const auto t0 = std::chrono::steady_clock::now();
    const fs::MtsfSmoothingResult r =
        fs::smooth_mtsf(p, estimator_kind_of(a.method), a.m, cfg, a.alpha);
    wall_ms = ms_since(t0);
    f = r.f;
    j["mean_steps"] = r.mean_steps;
    j["effective_sample_size"] = r.effective_sample_size;
  }
  j["wall_ms"] = wall_ms;

  // Approximation error against the dense reference (exact output is its own
  // reference, making e_a identically zero there).
  if (n <= fs::dense_size_cap()) {
    const fs::ComplexSignal f_ref = a.method == "exact" ? f : fs::solve_exact(p);
    j["e_a"] = fs::dist2(f, f_ref) / n;
  }
  if (!a.truth_path.empty()) {
    const fs::ComplexSignal truth = fs::load_signal(a.truth_path, n);
    j["e_r"] = fs::dist2(f, truth) / n;
  }
  if (!a.out_path.empty()) {
    fs::save_signal(a.out_path, f);
    j["out"] = a.out_path;
  }
  emit_metrics(j);
  return 0;
}

// ---------------------------------------------------------------------------
// sync

struct SyncArgs {
  std::string graph_path;
  std::string truth_path;  // omega CSV, optional
  std::string out_path;    // optional
  std::string method = "exact";  // exact | cg | mtsf_rb | mtsf_gs | adjacency | ust | mst
  std::string mode = "exact";
  double q = -1.0;  // < 0: default to 1e-2 * mean degree
  int m = 3;
  int k = 100;
  double alpha = 1.0;
  bool componentwise = false;
  bool reuse_forests = false;
  std::uint64_t seed = 1;
};

fs::SmootherKind smoother_kind_of(const std::string& method) {
  if (method == "exact") return fs::SmootherKind::exact;
  if (method == "cg") return fs::SmootherKind::cg;
  if (method == "mtsf_rb") return fs::SmootherKind::mtsf_rb;
  if (method == "mtsf_gs") return fs::SmootherKind::mtsf_gs;
  return fs::SmootherKind::adjacency;
}

int run_sync(const SyncArgs& a) {
  auto graph = std::make_shared<fs::ConnectionGraph>(fs::ConnectionGraph::load(a.graph_path));
  const int n = graph->n_nodes();
  const double q = a.q >= 0.0 ? a.q : 1e-2 * graph->mean_degree();
  const fs::SmoothingProblem p(graph, q, fs::ComplexSignal(n, fs::cplx(0.0, 0.0)));

  std::optional<fs::ComplexSignal> x;
  if (!a.truth_path.empty()) x = phases_of(load_omega(a.truth_path, n));

  json j;
  j["cmd"] = "sync";
  j["method"] = a.method;
  j["n"] = n;
  j["n_edges"] = graph->n_edges();
  j["q"] = q;
  j["seed"] = a.seed;

  fs::Rng rng(a.seed);
  fs::ComplexSignal f;
  if (a.method == "ust" || a.method == "mst") {
    // Constant arms: one tree, no iteration count.
    const auto t0 = std::chrono::steady_clock::now();
    f = a.method == "ust" ? fs::sync_ust_baseline(p, rng) : fs::sync_mst_baseline(p);
    j["wall_ms"] = ms_since(t0);
    if (x) j["e_s"] = fs::sync_error_rescaled(f, *x).value;
  } else {
    fs::SyncOptions opt;
    opt.smoother = smoother_kind_of(a.method);
    opt.m = a.m;
    opt.walk.mode = sample_mode_of(a.mode);
    opt.alpha = a.alpha;
    opt.componentwise = a.componentwise;
    opt.reuse_forests = a.reuse_forests;
    const fs::ComplexSignal f0 = fs::random_phase_state(n, rng);
    const fs::SyncResult res =
        fs::power_iterate(p, opt, a.k, f0, rng, x ? &*x : nullptr);
    f = res.f;
    j["m"] = a.m;
    j["k"] = res.k;
    j["mode"] = a.mode;
    j["wall_ms"] = res.history.empty() ? 0.0 : res.history.back().seconds_total * 1e3;
    json hist = json::array();
    for (const fs::SyncStep& s : res.history) {
      json h;
      h["k"] = s.k;
      h["seconds"] = s.seconds_total;
      if (s.has_error) h["e_s"] = s.e_s;
      hist.push_back(std::move(h));
    }
    j["history"] = std::move(hist);
    if (x && !res.history.empty()) j["e_s"] = res.history.back().e_s;
  }

  if (!a.out_path.empty()) {
    fs::save_signal(a.out_path, f);
    j["out"] = a.out_path;
  }
  emit_metrics(j);
  return 0;
}

// ---------------------------------------------------------------------------
// bench

// The paper's logarithmic budget ladder, used for both m (smoothing
// replicates / CG iterations) and k (synchronization iterations).
const std::vector<int> kBudgetLadder = {1, 2, 3, 5, 8, 13, 22, 36, 60, 100};

const json& require_field(const json& j, const char* name) {
  const auto it = j.find(name);
  if (it == j.end()) throw ConfigError(std::string("bench config: missing field \"") + name + "\"");
  return *it;
}

template <typename T>
T field_as(const json& j, const char* name) {
  try {
    return require_field(j, name).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("bench config: invalid field \"") + name + "\"");
  }
}

template <typename T>
T field_or(const json& j, const char* name, T fallback) {
  const auto it = j.find(name);
  if (it == j.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("bench config: invalid field \"") + name + "\"");
  }
}

struct BenchArm {
  std::string name;
  std::string method;
  std::vector<int> params;  // m for smoothing, k for synchronization
  int inner_m = 3;          // per-iteration budget for sync mtsf/cg arms
  std::string mode = "exact";
  double alpha = 1.0;
};

struct BenchPlan {
  std::string task;  // smooth | sync
  InstanceSpec graph;
  double q = 0.0;
  std::string q_source;  // "config" | "auto" | "factor"
  std::string error_metric;
  std::vector<BenchArm> arms;
  int trials = 10;
  int workers = 1;
  std::uint64_t seed = 1;
};

bool arm_is_constant(const std::string& method) {
  return method == "exact" || method == "ust" || method == "mst";
}

BenchPlan parse_bench_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open bench config: " + path);
  json cfg;
  try {
    in >> cfg;
  } catch (const json::exception& e) {
    throw ConfigError("bench config: " + path + ": " + e.what());
  }

  BenchPlan plan;
  plan.task = field_as<std::string>(cfg, "task");
  if (plan.task != "smooth" && plan.task != "sync")
    throw ConfigError("bench config: invalid field \"task\" (expected smooth|sync)");

  const json& gj = require_field(cfg, "graph");
  plan.graph.model = field_as<std::string>(gj, "model");
  plan.graph.n = field_as<int>(gj, "n");
  if (plan.graph.n < 2) throw ConfigError("bench config: invalid field \"n\"");
  plan.graph.seed = field_or<std::uint64_t>(gj, "seed", 1);
  plan.graph.eta = field_or<double>(gj, "eta", -1.0);
  plan.graph.mean_degree = field_or<double>(gj, "mean_degree", 10.0);
  plan.graph.band = field_or<int>(gj, "band", 0);
  plan.graph.snr = field_or<double>(gj, "snr", 2.0);
  plan.graph.with_signal = plan.task == "smooth";

  plan.trials = field_or<int>(cfg, "trials", 10);
  if (plan.trials < 1) throw ConfigError("bench config: invalid field \"trials\"");
  plan.workers = field_or<int>(cfg, "workers", 1);
  if (plan.workers < 1) throw ConfigError("bench config: invalid field \"workers\"");
  plan.seed = field_or<std::uint64_t>(cfg, "seed", 1);
  plan.error_metric =
      field_or<std::string>(cfg, "error_metric", plan.task == "smooth" ? "e_a" : "e_s");
  const bool metric_ok = plan.task == "smooth"
                             ? (plan.error_metric == "e_a" || plan.error_metric == "e_r")
                             : plan.error_metric == "e_s";
  if (!metric_ok) throw ConfigError("bench config: invalid field \"error_metric\"");

  // q: explicit number, "auto" grid search (smoothing), or mean-degree factor.
  if (const auto it = cfg.find("q"); it != cfg.end()) {
    if (it->is_number()) {
      plan.q = it->get<double>();
      if (plan.q <= 0.0) throw ConfigError("bench config: invalid field \"q\"");
      plan.q_source = "config";
    } else if (*it == json("auto") && plan.task == "smooth") {
      plan.q_source = "auto";
    } else {
      throw ConfigError("bench config: invalid field \"q\"");
    }
  } else if (plan.task == "smooth") {
    plan.q_source = "auto";
  } else {
    const double factor = field_or<double>(cfg, "q_factor", 1e-2);
    if (factor <= 0.0) throw ConfigError("bench config: invalid field \"q_factor\"");
    plan.q = -factor;  // resolved against the generated graph's mean degree
    plan.q_source = "factor";
  }

  const json& arms = require_field(cfg, "arms");
  if (!arms.is_array() || arms.empty())
    throw ConfigError("bench config: invalid field \"arms\" (expected non-empty array)");
  for (const json& aj : arms) {
    BenchArm arm;
    arm.method = field_as<std::string>(aj, "method");
    const bool known =
        arm.method == "exact" || arm.method == "cg" || arm.method == "cg_diag" ||
        arm.method == "mtsf" || arm.method == "mtsf_rb" || arm.method == "mtsf_gs" ||
        (plan.task == "sync" && (arm.method == "adjacency" || arm.method == "ust" ||
                                 arm.method == "mst"));
    if (!known) throw ConfigError("bench config: invalid field \"method\" (" + arm.method + ")");
    if (plan.task == "sync" && (arm.method == "mtsf" || arm.method == "cg_diag"))
      throw ConfigError("bench config: invalid field \"method\" (" + arm.method +
                        " is not a synchronization arm)");
    arm.name = field_or<std::string>(aj, "name", arm.method);
    arm.params = field_or<std::vector<int>>(
        aj, "params", arm_is_constant(arm.method) ? std::vector<int>{0} : kBudgetLadder);
    for (int v : arm.params)
      if (v < 0 || (v == 0 && !arm_is_constant(arm.method)))
        throw ConfigError("bench config: invalid field \"params\"");
    arm.inner_m = field_or<int>(aj, "m", 3);
    if (arm.inner_m < 1) throw ConfigError("bench config: invalid field \"m\"");
    arm.mode = field_or<std::string>(aj, "mode", "exact");
    if (arm.mode != "exact" && arm.mode != "importance")
      throw ConfigError("bench config: invalid field \"mode\"");
    arm.alpha = field_or<double>(aj, "alpha", 1.0);
    plan.arms.push_back(std::move(arm));
  }
  return plan;
}

// Grid search for the error-optimal regularization: e_r of the exact
// smoother over 60 log-spaced q values spanning (1e-3 * mean degree, 30).
double search_q_star(const fs::ConnectionGraph& graph, const fs::ComplexSignal& g,
                     const fs::ComplexSignal& truth) {
  auto shared = std::make_shared<fs::ConnectionGraph>(graph);
  const double lo = std::log(1e-3 * graph.mean_degree());
  const double hi = std::log(30.0);
  const int points = 60;
  double best_q = std::exp(lo), best_err = std::numeric_limits<double>::infinity();
  for (int i = 0; i < points; ++i) {
    const double q = std::exp(lo + (hi - lo) * i / (points - 1));
    const fs::ComplexSignal f = fs::solve_exact(fs::SmoothingProblem(shared, q, g));
    const double err = fs::dist2(f, truth) / graph.n_nodes();
    if (err < best_err) {
      best_err = err;
      best_q = q;
    }
  }
  return best_q;
}

struct BenchCell {
  int arm = 0;
  int param_index = 0;
  int trial = 0;
  std::uint64_t seed = 0;
  bool warmup = false;
};

struct CellResult {
  double wall_ms = 0.0;
  double error = 0.0;
};

struct BenchArgs {
  std::string config_path;
  std::string out_path;
};

int run_bench(const BenchArgs& args) {
  BenchPlan plan = parse_bench_config(args.config_path);
  const Instance inst = make_instance(plan.graph);
  auto graph = inst.conn.graph;
  const int n = graph->n_nodes();

  if (plan.q_source == "factor") plan.q = -plan.q * graph->mean_degree();
  if (plan.task == "smooth" && inst.signal.empty())
    throw ConfigError("bench config: smoothing benchmarks need band-limited signals; n exceeds "
                      "the dense cap of " +
                      std::to_string(fs::dense_size_cap()));
  if (plan.q_source == "auto") plan.q = search_q_star(*graph, inst.signal, inst.truth);

  // References shared by every cell.
  const fs::SmoothingProblem problem(graph, plan.q,
                                     plan.task == "smooth"
                                         ? inst.signal
                                         : fs::ComplexSignal(n, fs::cplx(0.0, 0.0)));
  fs::ComplexSignal f_ref;
  if (plan.task == "smooth" && plan.error_metric == "e_a") {
    if (n > fs::dense_size_cap())
      throw ConfigError("bench config: error_metric e_a needs a dense reference; use e_r");
    f_ref = fs::solve_exact(problem);
  }
  const fs::ComplexSignal x_true = phases_of(inst.conn.omega);

  // Per-cell pseudo-random seeds, drawn in a fixed order so results do not
  // depend on worker scheduling.
  fs::Rng seeder(plan.seed);
  std::vector<BenchCell> cells;
  for (int a = 0; a < static_cast<int>(plan.arms.size()); ++a) {
    BenchCell warm{a, 0, 0, seeder.raw(), true};  // discarded timing warm-up
    cells.push_back(warm);
    for (int pi = 0; pi < static_cast<int>(plan.arms[a].params.size()); ++pi)
      for (int t = 0; t < plan.trials; ++t)
        cells.push_back(BenchCell{a, pi, t, seeder.raw(), false});
  }

  auto run_cell = [&](const BenchCell& cell) -> CellResult {
    const BenchArm& arm = plan.arms[cell.arm];
    const int param = arm.params[cell.param_index];
    CellResult out;
    if (plan.task == "smooth") {
      fs::ComplexSignal f;
      if (arm.method == "exact") {
        const auto t0 = std::chrono::steady_clock::now();
        f = fs::solve_exact(problem);
        out.wall_ms = ms_since(t0);
      } else if (arm.method == "cg" || arm.method == "cg_diag") {
        const auto pre = arm.method == "cg_diag" ? fs::Preconditioner::diagonal
                                                 : fs::Preconditioner::none;
        const auto t0 = std::chrono::steady_clock::now();
        f = fs::solve_cg(problem, param, pre).f;
        out.wall_ms = ms_since(t0);
      } else {
        fs::WalkConfig cfg;
        cfg.mode = sample_mode_of(arm.mode);
        cfg.seed = cell.seed;
        const auto t0 = std::chrono::steady_clock::now();
        f = fs::smooth_mtsf(problem, estimator_kind_of(arm.method), param, cfg, arm.alpha).f;
        out.wall_ms = ms_since(t0);
      }
      out.error = plan.error_metric == "e_a" ? fs::dist2(f, f_ref) / n
                                             : fs::dist2(f, inst.truth) / n;
    } else {
      fs::Rng rng(cell.seed);
      if (arm.method == "ust" || arm.method == "mst") {
        const auto t0 = std::chrono::steady_clock::now();
        const fs::ComplexSignal f =
            arm.method == "ust" ? fs::sync_ust_baseline(problem, rng)
                                : fs::sync_mst_baseline(problem);
        out.wall_ms = ms_since(t0);
        out.error = fs::sync_error_rescaled(f, x_true).value;
      } else {
        fs::SyncOptions opt;
        opt.smoother = smoother_kind_of(arm.method);
        opt.m = arm.inner_m;
        opt.walk.mode = sample_mode_of(arm.mode);
        opt.alpha = arm.alpha;
        const fs::ComplexSignal f0 = fs::random_phase_state(n, rng);
        const fs::SyncResult res = fs::power_iterate(problem, opt, param, f0, rng, &x_true);
        out.wall_ms = res.history.back().seconds_total * 1e3;
        out.error = res.history.back().e_s;
      }
    }
    return out;
  };

  std::vector<CellResult> results(cells.size());
  if (plan.workers == 1) {
    for (std::size_t i = 0; i < cells.size(); ++i) results[i] = run_cell(cells[i]);
  } else {
    // Trials run concurrently; per-cell seeds were fixed above, so only the
    // wall-clock columns feel the contention. Timing-grade runs should keep
    // workers = 1.
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i = next.fetch_add(1); i < cells.size(); i = next.fetch_add(1))
        results[i] = run_cell(cells[i]);
    };
    std::vector<std::thread> pool;
    const int count = std::min<int>(plan.workers, static_cast<int>(cells.size()));
    pool.reserve(count);
    for (int w = 0; w < count; ++w) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  // Aggregate in (arm, param) order; warm-up cells are dropped.
  std::ofstream csv(args.out_path);
  if (!csv) throw std::runtime_error("cannot write bench output: " + args.out_path);
  csv << "arm,param,mean_wall_ms,mean_error,std_error\n";
  csv.precision(12);
  int rows = 0;
  std::size_t idx = 0;
  for (const BenchArm& arm : plan.arms) {
    ++idx;  // skip the warm-up cell
    for (int param : arm.params) {
      double mean_ms = 0.0, mean_err = 0.0;
      std::vector<double> errs(plan.trials);
      for (int t = 0; t < plan.trials; ++t, ++idx) {
        mean_ms += results[idx].wall_ms;
        mean_err += results[idx].error;
        errs[t] = results[idx].error;
      }
      mean_ms /= plan.trials;
      mean_err /= plan.trials;
      double var = 0.0;
      for (double e : errs) var += (e - mean_err) * (e - mean_err);
      const double std_err = plan.trials > 1 ? std::sqrt(var / (plan.trials - 1)) : 0.0;
      csv << arm.name << ',' << param << ',' << mean_ms << ',' << mean_err << ',' << std_err
          << '\n';
      ++rows;
    }
  }
  if (!csv) throw std::runtime_error("failed while writing: " + args.out_path);

  json j;
  j["cmd"] = "bench";
  j["task"] = plan.task;
  j["n"] = n;
  j["n_edges"] = graph->n_edges();
  j["q"] = plan.q;
  j["q_source"] = plan.q_source;
  j["error_metric"] = plan.error_metric;
  j["trials"] = plan.trials;
  j["workers"] = plan.workers;
  j["rows"] = rows;
  j["out"] = args.out_path;
  emit_metrics(j);
  return 0;
}

// ---------------------------------------------------------------------------
// oracle-check: exhaustive-enumeration validation of the sampler and the
// estimators on one tiny graph.

struct OracleCheckArgs {
  std::string graph_path;
  std::string mode = "auto";  // auto | exact | importance
  double q = 1.0;
  std::int64_t draws = 100000;
  std::uint64_t seed = 1;
};

int run_oracle_check(const OracleCheckArgs& a) {
  auto graph = std::make_shared<fs::ConnectionGraph>(fs::ConnectionGraph::load(a.graph_path));
  const int n = graph->n_nodes();

  // Any fixed generic signal exercises the estimator identities; complex
  // normal entries avoid accidental symmetry.
  fs::Rng rng(a.seed);
  fs::ComplexSignal g(n);
  for (int i = 0; i < n; ++i) g[i] = fs::cplx(rng.normal(), rng.normal());
  const fs::SmoothingProblem p(graph, a.q, g);

  const double min_cos = fs::oracle_min_cycle_cos(*graph);
  fs::SampleMode mode;
  if (a.mode == "exact")
    mode = fs::SampleMode::exact;
  else if (a.mode == "importance")
    mode = fs::SampleMode::importance;
  else
    mode = min_cos >= 0.0 ? fs::SampleMode::exact : fs::SampleMode::importance;
  std::cout << "oracle-check: n=" << n << " edges=" << graph->n_edges() << " q=" << a.q
            << " min_cycle_cos=" << min_cos << " mode="
            << (mode == fs::SampleMode::exact ? "exact" : "importance") << " draws=" << a.draws
            << "\n";

  const fs::MtsfCatalog catalog = fs::enumerate_mtsfs(p);
  bool all_pass = true;
  const auto report = [&](const std::string& name, bool pass, const std::string& detail) {
    all_pass = all_pass && pass;
    std::cout << "oracle-check " << name << ": " << (pass ? "PASS" : "FAIL") << " (" << detail
              << ")\n";
  };

  // 1. Partition function against the matrix-forest identity Z = det(L+Q).
  {
    const fs::cplx det = fs::oracle_determinant(fs::oracle_dense_operator(p));
    const double rel = std::abs(det - fs::cplx(catalog.partition_constant, 0.0)) / std::abs(det);
    std::ostringstream d;
    d << "Z=" << catalog.partition_constant << " det=" << det.real() << " rel=" << rel;
    report("partition-function", rel <= 1e-8, d.str());
  }

  // 2. Every forest probability equals the matching principal minor of the
  // marginal kernel.
  {
    const fs::OracleMatrix kernel = fs::build_kernel(p);
    double worst = 0.0;
    for (const fs::CatalogEntry& e : catalog.entries) {
      const double minor = fs::kernel_minor(kernel, n, e.root_mask, e.edge_mask);
      worst = std::max(worst, std::abs(minor - e.probability));
    }
    std::ostringstream d;
    d << "max |det minor - P(phi)| = " << worst << " over " << catalog.entries.size()
      << " forests";
    report("kernel-minors", worst <= 1e-8, d.str());
  }

  // 3. Exact estimator expectations all equal the dense solution.
  {
    const fs::ComplexSignal f_star = fs::oracle_smooth(p);
    double worst = 0.0;
    for (const fs::EstimatorKind kind :
         {fs::EstimatorKind::tilde, fs::EstimatorKind::rao_blackwell,
          fs::EstimatorKind::gradient_step}) {
      const fs::ComplexSignal ef = fs::exact_estimator_expectation(p, kind);
      for (int i = 0; i < n; ++i) worst = std::max(worst, std::abs(ef[i] - f_star[i]));
    }
    std::ostringstream d;
    d << "max deviation " << worst << " across tilde/rb/gs";
    report("estimator-expectations", worst <= 1e-9, d.str());
  }

  // 4+5. Sampling: every draw must land on a positive-probability forest and
  // the frequencies must match the mode's law (the target law in exact mode;
  // in importance mode the proposal differs by the kept negative-cosine
  // cycle factors, which the estimators reweight away).
  {
    std::vector<double> law(catalog.entries.size(), 0.0);
    double law_total = 0.0;
    for (std::size_t i = 0; i < law.size(); ++i) {
      double v = catalog.entries[i].probability;
      if (mode == fs::SampleMode::importance && v > 0.0) {
        for (double angle : catalog.entries[i].cycle_angles) {
          const double c = std::cos(angle);
          if (c < 0.0) v /= 1.0 - c;
        }
      }
      law[i] = v;
      law_total += v;
    }
    for (double& v : law) v /= law_total;

    fs::WalkConfig cfg;
    cfg.mode = mode;
    cfg.seed = rng.raw();
    fs::MtsfSampler sampler(p, cfg);
    std::vector<std::int64_t> hits(catalog.entries.size(), 0);
    std::int64_t missed = 0;
    for (std::int64_t t = 0; t < a.draws; ++t) {
      const fs::Mtsf phi = sampler.sample();
      const auto [root_mask, edge_mask] = fs::forest_key(*graph, phi.roots, phi.edge_pairs());
      const int id = catalog.index_of(root_mask, edge_mask);
      if (id < 0 || law[id] <= 0.0) {
        ++missed;
        continue;
      }
      ++hits[id];
    }
    std::ostringstream ds;
    ds << missed << " draws outside the catalog's support";
    report("sample-support", missed == 0, ds.str());

    // Pool bins with expected count below 5, the usual chi-square guidance.
    double stat = 0.0, pooled_expected = 0.0;
    std::int64_t pooled_observed = 0;
    int bins = 0;
    for (std::size_t i = 0; i < law.size(); ++i) {
      if (law[i] <= 0.0) continue;
      const double expected = law[i] * static_cast<double>(a.draws);
      if (expected < 5.0) {
        pooled_expected += expected;
        pooled_observed += hits[i];
        continue;
      }
      stat += (hits[i] - expected) * (hits[i] - expected) / expected;
      ++bins;
    }
    if (pooled_expected > 0.0) {
      stat +=
          (pooled_observed - pooled_expected) * (pooled_observed - pooled_expected) /
          pooled_expected;
      ++bins;
    }
    double p_value = 1.0;
    if (bins >= 2) {
      const boost::math::chi_squared dist(bins - 1);
      p_value = boost::math::cdf(boost::math::complement(dist, stat));
    }
    std::ostringstream dc;
    dc << "chi2=" << stat << " bins=" << bins << " p=" << p_value;
    report("sampling-frequencies", p_value > 1e-3, dc.str());
  }

  json j;
  j["cmd"] = "oracle-check";
  j["n"] = n;
  j["q"] = a.q;
  j["draws"] = a.draws;
  j["seed"] = a.seed;
  j["min_cycle_cos"] = min_cos;
  j["mode"] = mode == fs::SampleMode::exact ? "exact" : "importance";
  j["forests"] = catalog.entries.size();
  j["pass"] = all_pass;
  emit_metrics(j);
  return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"connection-graph smoothing and angular synchronization"};
  app.require_subcommand(1);

  GenerateArgs gen;
  CLI::App* cmd_gen = app.add_subcommand("generate", "generate a connection-graph instance");
  cmd_gen->add_option("--model", gen.spec.model, "graph family")
      ->required()
      ->check(CLI::IsMember({"er", "sbm", "dcsbm", "dcsbm-dense", "geometric"}));
  cmd_gen->add_option("--n", gen.spec.n, "requested node count")->required()->check(CLI::Range(2, 1 << 24));
  cmd_gen->add_option("--seed", gen.spec.seed, "RNG seed")->capture_default_str();
  cmd_gen->add_option("--eta", gen.spec.eta, "connection noise level (default pi/(2n))");
  cmd_gen->add_option("--mean-degree", gen.spec.mean_degree, "target mean degree (er only)")
      ->capture_default_str();
  cmd_gen->add_option("--band", gen.spec.band,
                      "band limit of the truth signal (default 2 for block models, 5 otherwise)");
  cmd_gen->add_option("--snr", gen.spec.snr, "signal-to-noise ratio, `inf` for noiseless")
      ->capture_default_str();
  cmd_gen->add_option("--out", gen.out_base, "output base path")->required();

  SmoothArgs sm;
  CLI::App* cmd_smooth = app.add_subcommand("smooth", "solve the regularized smoothing problem");
  cmd_smooth->add_option("--graph", sm.graph_path, "edge-list file")->required();
  cmd_smooth->add_option("--signal", sm.signal_path, "observed signal CSV")->required();
  cmd_smooth->add_option("--q", sm.q, "regularization weight")
      ->required()
      ->check(CLI::PositiveNumber);
  cmd_smooth->add_option("--method", sm.method, "solver arm")
      ->required()
      ->check(CLI::IsMember({"exact", "cg", "cg_diag", "mtsf", "mtsf_rb", "mtsf_gs"}));
  cmd_smooth->add_option("--m", sm.m, "replicates (mtsf*) or iterations (cg*)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd_smooth->add_option("--alpha", sm.alpha, "gradient-step damping")->capture_default_str();
  cmd_smooth->add_option("--mode", sm.mode, "forest sampling mode")
      ->capture_default_str()
      ->check(CLI::IsMember({"exact", "importance"}));
  cmd_smooth->add_option("--tol", sm.tol, "CG residual tolerance (0 = fixed budget)")
      ->capture_default_str();
  cmd_smooth->add_option("--seed", sm.seed, "RNG seed")->capture_default_str();
  cmd_smooth->add_option("--truth", sm.truth_path, "truth signal CSV, enables e_r");
  cmd_smooth->add_option("--out", sm.out_path, "write the smoothed signal here");

  SyncArgs sy;
  CLI::App* cmd_sync = app.add_subcommand("sync", "angular synchronization");
  cmd_sync->add_option("--graph", sy.graph_path, "edge-list file")->required();
  cmd_sync->add_option("--method", sy.method, "smoother arm or baseline")
      ->capture_default_str()
      ->check(CLI::IsMember({"exact", "cg", "mtsf_rb", "mtsf_gs", "adjacency", "ust", "mst"}));
  cmd_sync->add_option("--q", sy.q, "regularization weight (default 1e-2 * mean degree)");
  cmd_sync->add_option("--m", sy.m, "per-iteration budget (forests or CG steps)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd_sync->add_option("--k", sy.k, "power-iteration count")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd_sync->add_option("--alpha", sy.alpha, "gradient-step damping")->capture_default_str();
  cmd_sync->add_option("--mode", sy.mode, "forest sampling mode")
      ->capture_default_str()
      ->check(CLI::IsMember({"exact", "importance"}));
  cmd_sync->add_flag("--componentwise", sy.componentwise, "entrywise normalization per step");
  cmd_sync->add_flag("--reuse-forests", sy.reuse_forests, "reuse one forest batch across steps");
  cmd_sync->add_option("--seed", sy.seed, "RNG seed")->capture_default_str();
  cmd_sync->add_option("--truth", sy.truth_path, "omega CSV with ground-truth angles");
  cmd_sync->add_option("--out", sy.out_path, "write the recovered phases here");

  BenchArgs be;
  CLI::App* cmd_bench = app.add_subcommand("bench", "runtime-precision sweep from a JSON config");
  cmd_bench->add_option("--config", be.config_path, "bench config JSON")
      ->required()
      ->check(CLI::ExistingFile);
  cmd_bench->add_option("--out", be.out_path, "output CSV path")->required();

  OracleCheckArgs oc;
  CLI::App* cmd_oracle =
      app.add_subcommand("oracle-check", "validate sampling and estimators by enumeration");
  cmd_oracle->add_option("--graph", oc.graph_path, "edge-list file (<= 8 nodes, <= 16 edges)")
      ->required();
  cmd_oracle->add_option("--q", oc.q, "uniform regularization weight")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd_oracle->add_option("--draws", oc.draws, "sample count for the frequency test")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd_oracle->add_option("--mode", oc.mode, "sampling mode")
      ->capture_default_str()
      ->check(CLI::IsMember({"auto", "exact", "importance"}));
  cmd_oracle->add_option("--seed", oc.seed, "RNG seed")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*cmd_gen) return run_generate(gen);
    if (*cmd_smooth) return run_smooth(sm);
    if (*cmd_sync) return run_sync(sy);
    if (*cmd_bench) return run_bench(be);
    if (*cmd_oracle) return run_oracle_check(oc);
  } catch (const ConfigError& e) {
    std::cerr << "forestsync: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "forestsync: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
