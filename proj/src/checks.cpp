#include "sdgt/checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <sstream>

#include <unistd.h>

#include "sdgt/algorithms.hpp"
#include "sdgt/cooptimizer.hpp"
#include "sdgt/diagnostics.hpp"
#include "sdgt/error.hpp"
#include "sdgt/harness.hpp"
#include "sdgt/io.hpp"
#include "sdgt/problems.hpp"
#include "sdgt/reference.hpp"
#include "sdgt/rng.hpp"
#include "sdgt/topology.hpp"

namespace sdgt {

namespace {

using Clock = std::chrono::steady_clock;
using TopoPtr = std::shared_ptr<const SubnetTopology>;
using ProblemPtr = std::shared_ptr<const Problem>;

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}
std::string sci(double v) { return fmt("%.3e", v); }

struct Check {
  std::string id;
  std::string name;
  double budget = 0.0;
  // Returns (passed, detail).
  std::function<std::pair<bool, std::string>()> body;
};

CheckResult execute(const Check& c) {
  CheckResult r;
  r.id = c.id;
  r.name = c.name;
  r.budget_seconds = c.budget;
  const auto start = Clock::now();
  try {
    auto [ok, detail] = c.body();
    r.passed = ok;
    r.detail = detail;
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("error: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  if (c.budget > 0.0 && r.seconds > c.budget) {
    r.passed = false;
    r.detail += "; runtime " + fmt("%.2f", r.seconds) + " s exceeds budget " + fmt("%.0f", c.budget) + " s";
  }
  return r;
}

std::vector<CheckResult> execute_all(const std::vector<Check>& checks) {
  std::vector<CheckResult> out;
  for (const auto& c : checks) out.push_back(execute(c));
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Tracks the worst tracker-conservation residual across every SD-GT run the
// suite performs.
struct ConservationLog {
  double psi = 0.0;
  double z = 0.0;
  int runs = 0;
  void add(const RunSummary& s) {
    psi = std::max(psi, s.max_psi_residual);
    z = std::max(z, s.max_z_residual);
    ++runs;
  }
};

ProblemPtr least_squares(double omega, double noise, std::uint64_t seed, int n = 30, int d = 200,
                         int samples = 30) {
  LeastSquaresParams p;
  p.n = n;
  p.d = d;
  p.samples_per_client = samples;
  p.omega = omega;
  p.noise_std = noise;
  p.seed = seed;
  return generate_least_squares(p);
}

TopoPtr topology(int n, int subnets, std::uint64_t seed) {
  TopologySpec t;
  t.n = n;
  t.subnets = subnets;
  t.seed = seed;
  auto topo = std::make_shared<const SubnetTopology>(build_topology(t));
  validate_topology(*topo);
  return topo;
}

struct ConvergenceRun {
  std::vector<double> rel_error;  // ||x_g - x*||^2 / ||x*||^2 per round
  std::vector<MetricsRecord> records;
  RunSummary summary;
  std::string csv;
};

// Runs until the relative error drops to `stop_below` (if > 0) or T rounds.
ConvergenceRun run_convergence(const RunConfig& cfg, const TopoPtr& topo, const ProblemPtr& problem,
                               double stop_below, ConservationLog* log) {
  Trainer trainer(cfg, topo, problem);
  const double scale = problem->x_star()->squaredNorm();
  ConvergenceRun out;
  try {
    while (trainer.server().round < cfg.T) {
      const MetricsRecord& r = trainer.step();
      out.rel_error.push_back(r.dist_to_opt_sq / scale);
      if (stop_below > 0.0 && out.rel_error.back() <= stop_below) break;
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kDiverged) throw;
  }
  out.records = trainer.records();
  out.summary = trainer.summary();
  out.csv = metrics_to_csv(out.records);
  if (log && cfg.algorithm == Algorithm::kSdgt) log->add(out.summary);
  return out;
}

double last_half_slope(const std::vector<double>& v) {
  const std::size_t half = v.size() / 2;
  return reference::log_slope(std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(half), v.end()));
}

RunConfig base_config(Algorithm algo, int K, int T, double gamma, const SubnetTopology& topo,
                      double rate) {
  RunConfig cfg;
  cfg.algorithm = algo;
  cfg.K = K;
  cfg.T = T;
  cfg.gamma = gamma;
  cfg.samples_per_subnet = samples_from_rate(topo, rate);
  return cfg;
}

// ---------------------------------------------------------------------------
// Shared check bodies

std::pair<bool, std::string> case1_reduction(ConservationLog* log) {
  // Every client is its own subnet: the in-subnet tracker must stay zero.
  const auto problem = least_squares(kOmegaKappa80, 0.2, 11, 8, 20, 30);
  const auto topo = topology(8, 8, 11);
  double worst = 0.0;
  for (int K = 1; K <= 5; ++K)
    for (double rate : {1.0, 0.5}) {
      RunConfig cfg = base_config(Algorithm::kSdgt, K, 20, 0.01, *topo, rate);
      // With one client per subnet every subnet is fully sampled; vary the
      // sampling seed anyway to exercise the code path.
      cfg.sampling_seed = static_cast<std::uint64_t>(K);
      Trainer trainer(cfg, topo, problem);
      for (int t = 0; t < cfg.T; ++t) {
        trainer.step();
        worst = std::max(worst, trainer.clients().z.colwise().norm().maxCoeff());
      }
      if (log) log->add(trainer.summary());
    }
  return {worst <= 1e-12, "S = n = 8, K = 1..5, T = 20: max_t max_i ||z_i|| = " + sci(worst)};
}

std::pair<bool, std::string> case2_reduction(ConservationLog* log) {
  // One subnet, one D2D step, full sampling: SD-GT is gradient tracking with
  // the server averaging the iterates.
  const auto problem = least_squares(kOmegaKappa80, 0.2, 12, 6, 20, 30);
  const auto topo = topology(6, 1, 12);
  const double gamma = 0.05;
  const int T = 50;
  RunConfig cfg = base_config(Algorithm::kSdgt, 1, T, gamma, *topo, 1.0);
  Trainer trainer(cfg, topo, problem);
  const reference::GtTrace ref = reference::gradient_tracking(*problem, topo->weights[0], gamma, T);
  const auto& members = topo->subnets[0];
  double worst = 0.0;
  for (int t = 0; t < T; ++t) {
    trainer.step();
    const Vec& xg = trainer.server().x_global;
    for (std::size_t a = 0; a < members.size(); ++a) {
      const int i = members[a];
      const double scale = std::max(1.0, ref.pre_broadcast[t].col(a).norm());
      worst = std::max(worst, (trainer.last_round_end().col(i) - ref.pre_broadcast[t].col(a)).norm() / scale);
      worst = std::max(worst, (trainer.clients().x.col(i) - ref.x[t]).norm() / std::max(1.0, ref.x[t].norm()));
      Vec g;
      problem->gradient(i, xg, {}, g);
      const Vec zhat = trainer.clients().z.col(i) + g;
      worst = std::max(worst, (zhat - ref.zhat[t].col(a)).norm() / std::max(1.0, ref.zhat[t].col(a).norm()));
    }
  }
  if (log) log->add(trainer.summary());
  return {worst <= 1e-10, "S = 1, K = 1, n = 6, T = 50: max per-client deviation from the GT recursion = " + sci(worst)};
}

std::pair<bool, std::string> mixing_properties(int count, int trials) {
  RandomStream rng(2024, StreamId::kTest, 4);
  double worst_stoch = 0.0;
  int failures = 0;
  std::string first;
  for (int g = 0; g < count; ++g) {
    const int m = 3 + static_cast<int>(rng.below(8));
    const double radius = rng.uniform(0.5, 3.5);
    const Adjacency adj = generate_geometric_subnet(m, radius, rng.next_u64());
    const Eigen::MatrixXd w = metropolis_hastings_weights(adj);
    const double rho = mixing_rate(w);
    const double stoch = max_stochasticity_error(w);
    worst_stoch = std::max(worst_stoch, stoch);
    const bool symmetric = w == w.transpose();
    const bool nonneg = (w.array() >= 0.0).all();
    const MixingCheckReport rep = verify_mixing_inequality(w, rho, trials, 1000 + g);
    if (!symmetric || !nonneg || stoch > 1e-12 || !rep.passed) {
      if (failures == 0)
        first = "graph " + std::to_string(g) + " (m=" + std::to_string(m) + "): symmetric=" +
                std::to_string(symmetric) + " stoch=" + sci(stoch) + " mixing=" + rep.detail;
      ++failures;
    }
  }
  return {failures == 0, std::to_string(count) + " graphs, " + std::to_string(trials) +
                             " samples each: max |row/col sum - 1| = " + sci(worst_stoch) +
                             (failures ? "; first failure " + first : "")};
}

std::pair<bool, std::string> gradient_fd() {
  const auto ls = least_squares(kOmegaKappa80, 0.2, 5);
  ClassificationParams cp;
  cp.seed = 5;
  const auto cls = generate_cluster_classification(cp);
  RandomStream rng(77, StreamId::kTest, 5);
  double worst_ls = 0.0, worst_cls = 0.0;
  for (int k = 0; k < 10; ++k) {
    Vec x(ls->dim());
    for (auto& v : x) v = rng.normal();
    const int client = static_cast<int>(rng.below(ls->num_clients()));
    worst_ls = std::max(worst_ls, reference::check_gradient(*ls, client, x, 1e-5).relative_error);
    Vec y(cls->dim());
    for (auto& v : y) v = 0.5 * rng.normal();
    const int c2 = static_cast<int>(rng.below(cls->num_clients()));
    worst_cls = std::max(worst_cls, reference::check_gradient(*cls, c2, y, 1e-5).relative_error);
  }
  return {worst_ls <= 1e-5 && worst_cls <= 1e-5,
          "10 points each: max relative error least squares " + sci(worst_ls) + ", classification " +
              sci(worst_cls)};
}

CoOptProblem random_coopt(RandomStream& rng, int max_s, int max_m, int max_k) {
  CoOptProblem p;
  const int S = 1 + static_cast<int>(rng.below(max_s));
  const double delta = std::pow(10.0, rng.uniform(-4.0, 0.0));
  for (int s = 0; s < S; ++s) {
    p.subnet_sizes.push_back(1 + static_cast<int>(rng.below(max_m)));
    p.ds_cost.push_back(rng.uniform(1.0, 100.0));
    p.d2d_cost.push_back(delta * p.ds_cost.back());
  }
  p.lambda = {rng.uniform(0.0, 2.0), rng.uniform(0.0, 2.0), rng.uniform(0.0, 0.2), rng.uniform(0.0, 0.02)};
  p.k_max = 1 + static_cast<int>(rng.below(max_k));
  return p;
}

std::pair<bool, std::string> coopt_exactness(int instances) {
  RandomStream rng(99, StreamId::kTest, 10);
  int mismatches = 0;
  long long points = 0;
  std::string first;
  for (int k = 0; k < instances; ++k) {
    const CoOptProblem p = random_coopt(rng, 3, 6, 50);
    const CoOptSolution sol = solve(p);
    const reference::BruteForceResult bf = reference::coopt_brute_force(p);
    points += bf.points;
    if (sol.objective != bf.objective) {
      if (!mismatches) first = "instance " + std::to_string(k) + ": solve " + format_double(sol.objective) +
                               " vs brute force " + format_double(bf.objective);
      ++mismatches;
    }
  }
  return {mismatches == 0, std::to_string(instances) + " instances, " + std::to_string(points) +
                               " enumerated points, exact objective mismatches: " +
                               std::to_string(mismatches) + (mismatches ? " (" + first + ")" : "")};
}

// ---------------------------------------------------------------------------
// Suites

std::vector<CheckResult> invariants_suite() {
  std::vector<Check> checks;
  checks.push_back({"I1", "Philox known-answer vectors", 0, [] {
    const auto a = philox4x32_10({0, 0, 0, 0}, {0, 0});
    const auto b = philox4x32_10({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
    const auto c = philox4x32_10({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
    const bool ok = a == std::array<std::uint32_t, 4>{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u} &&
                    b == std::array<std::uint32_t, 4>{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu} &&
                    c == std::array<std::uint32_t, 4>{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u};
    return std::pair{ok, std::string("3 reference blocks")};
  }});
  checks.push_back({"I2", "seed separation between streams", 0, [] {
    // Consuming one stream must not perturb another with the same seed.
    RandomStream data(7, StreamId::kData);
    const double first = data.uniform();
    RandomStream sampling(7, StreamId::kSampling);
    for (int i = 0; i < 1000; ++i) sampling.next_u64();
    RandomStream data2(7, StreamId::kData);
    const bool independent = data2.uniform() == first && sampling.uniform() != first;
    // Topology does not depend on the problem seed and vice versa.
    const auto t1 = topology(12, 3, 4);
    const auto p1 = least_squares(0.3, 0.1, 4, 12, 10, 20);
    const auto p2 = least_squares(0.3, 0.1, 5, 12, 10, 20);
    const auto t2 = topology(12, 3, 4);
    const bool topo_same = topology_to_json(*t1) == topology_to_json(*t2);
    const auto* l1 = dynamic_cast<const LeastSquaresProblem*>(p1.get());
    const auto* l2 = dynamic_cast<const LeastSquaresProblem*>(p2.get());
    const bool data_differs = !l1->sensing(0).isApprox(l2->sensing(0));
    return std::pair{independent && topo_same && data_differs,
                     std::string("stream reuse, topology/data isolation")};
  }});
  checks.push_back({"I3", "generated topologies validate", 0, [] {
    int count = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed)
      for (auto [n, s] : {std::pair{30, 6}, std::pair{12, 4}, std::pair{10, 3}}) {
        TopologySpec spec;
        spec.n = n;
        spec.subnets = s;
        spec.seed = seed;
        validate_topology(build_topology(spec));
        ++count;
      }
    return std::pair{true, std::to_string(count) + " topologies: partition, connectivity, symmetry, stochasticity, rho"};
  }});
  checks.push_back({"I4", "mixing matrices (small sample)", 0, [] { return mixing_properties(20, 200); }});
  checks.push_back({"I5", "tracker conservation across sampling rates", 0, [] {
    ConservationLog log;
    const auto problem = least_squares(kOmegaKappa80, 0.2, 3, 12, 20, 30);
    const auto topo = topology(12, 3, 3);
    for (double rate : {0.25, 0.5, 1.0})
      for (int batch : {0, 5}) {
        RunConfig cfg = base_config(Algorithm::kSdgt, 4, 30, 0.01, *topo, rate);
        cfg.batch_size = batch;
        Trainer trainer(cfg, topo, problem);
        trainer.run();
        log.add(trainer.summary());
      }
    return std::pair{log.psi <= 1e-9 && log.z <= 1e-9,
                     std::to_string(log.runs) + " runs: max psi residual " + sci(log.psi) +
                         ", max z residual " + sci(log.z)};
  }});
  checks.push_back({"I6", "metrics CSV contract and round trip", 0, [] {
    const auto problem = least_squares(0.5, 0.1, 2, 6, 8, 12);
    const auto topo = topology(6, 2, 2);
    RunConfig cfg = base_config(Algorithm::kSdgt, 3, 5, 0.02, *topo, 0.5);
    cfg.diagnostics = true;
    Trainer trainer(cfg, topo, problem);
    trainer.run();
    const std::string csv = metrics_to_csv(trainer.records());
    const CsvTable table = parse_csv(csv);
    bool ok = csv.rfind(std::string(kCsvHeader) + "\n", 0) == 0 && table.rows.size() == 5;
    for (std::size_t r = 0; ok && r < table.rows.size(); ++r) {
      const MetricsRecord& m = trainer.records()[r];
      ok = table.rows[r][1] == m.loss && table.rows[r][4] == m.delta && table.rows[r][7] == m.z;
    }
    return std::pair{ok, std::string("header, row count, bit-exact reparse")};
  }});
  checks.push_back({"I7", "topology and problem documents round trip", 0, [] {
    const auto topo = topology(12, 3, 8);
    const SubnetTopology back = topology_from_json(topology_to_json(*topo));
    bool ok = back.subnets == topo->subnets;
    for (int s = 0; ok && s < topo->num_subnets(); ++s)
      ok = back.weights[s] == topo->weights[s] && back.rho[s] == topo->rho[s];
    const auto problem = least_squares(0.4, 0.2, 8, 6, 10, 12);
    const auto reloaded = problem_from_snapshot(problem->snapshot());
    Vec x = Vec::LinSpaced(problem->dim(), -1.0, 1.0);
    ok = ok && reloaded->global_loss(x) == problem->global_loss(x);
    return std::pair{ok, std::string("weights, rho, loss values bit-identical")};
  }});
  checks.push_back({"I8", "co-optimizer constraints, relaxation bound, monotonicity", 0, [] {
    RandomStream rng(5, StreamId::kTest, 8);
    int bad = 0;
    std::string first;
    for (int k = 0; k < 30; ++k) {
      CoOptProblem p = random_coopt(rng, 3, 6, 30);
      const CoOptSolution sol = solve(p);
      double pmin = 1.0;
      bool feasible = sol.K >= 1 && sol.K <= p.k_max;
      for (std::size_t s = 0; s < sol.samples.size(); ++s) {
        feasible = feasible && sol.samples[s] >= 1 && sol.samples[s] <= p.subnet_sizes[s];
        pmin = std::min(pmin, 1.0 - sol.beta[s] * sol.beta[s]);
      }
      feasible = feasible && pmin == sol.p &&
                 std::abs(objective(sol.beta, sol.p, sol.K, p) - sol.objective) <= 1e-12 * std::abs(sol.objective);
      const RelaxedSolution rel = solve_relaxed(p);
      const bool bound = rel.objective <= sol.objective * (1.0 + 1e-12) && rel.constraint_active;
      CoOptProblem pricier = p;
      pricier.ds_cost[0] *= 3.0;
      const CoOptSolution s2 = solve(pricier);
      CoOptProblem d2d_heavy = p;
      d2d_heavy.lambda[3] = p.lambda[3] * 5.0 + 1e-3;
      const CoOptSolution s3 = solve(d2d_heavy);
      const bool mono = s2.samples[0] <= sol.samples[0] && s3.K <= sol.K;
      if (!(feasible && bound && mono)) {
        if (!bad)
          first = "instance " + std::to_string(k) + ": feasible=" + std::to_string(feasible) +
                  " bound=" + std::to_string(bound) + " monotone=" + std::to_string(mono);
        ++bad;
      }
    }
    return std::pair{bad == 0, "30 instances" + (bad ? "; " + first : std::string())};
  }});
  checks.push_back({"I9", "experiment spec validation", 0, [] {
    nlohmann::json doc = experiment_to_json(preset("fig4-like"));
    bool ok = true;
    auto rejects = [&](nlohmann::json d) {
      try {
        experiment_from_json(d);
        return false;
      } catch (const Error&) {
        return true;
      }
    };
    nlohmann::json empty_axis = doc;
    empty_axis["sweep"]["sample_rate"] = nlohmann::json::array();
    nlohmann::json empty_sweep = doc;
    empty_sweep["sweep"] = nlohmann::json::object();
    nlohmann::json indivisible = doc;
    indivisible["topology"]["n"] = 31;
    nlohmann::json no_seed = doc;
    no_seed["problem"].erase("seed");
    ok = rejects(empty_axis) && rejects(empty_sweep) && rejects(indivisible) && rejects(no_seed);
    ok = ok && spec_hash(experiment_from_json(doc)) == spec_hash(preset("fig4-like"));
    return std::pair{ok, std::string("empty axes, n mod S, missing seed rejected; hash stable")};
  }});
  return execute_all(checks);
}

std::vector<CheckResult> reductions_suite() {
  return execute_all({
      {"R1", "Case 1: every client is its own subnet (z stays zero)", 1.0, [] { return case1_reduction(nullptr); }},
      {"R2", "Case 2: single subnet, K = 1 matches gradient tracking", 1.0, [] { return case2_reduction(nullptr); }},
  });
}

std::vector<CheckResult> oracles_suite() {
  std::vector<Check> checks;
  checks.push_back({"O1", "Metropolis-Hastings weights vs hand computation", 0, [] {
    RandomStream rng(31, StreamId::kTest, 1);
    double worst = 0.0;
    for (int g = 0; g < 50; ++g) {
      const int m = 2 + static_cast<int>(rng.below(9));
      const Adjacency adj = generate_geometric_subnet(m, rng.uniform(0.5, 3.5), rng.next_u64());
      std::vector<std::pair<int, int>> edges;
      for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j)
          if (adj(i, j)) edges.emplace_back(i, j);
      worst = std::max(worst, (metropolis_hastings_weights(adj) - reference::mh_weights(m, edges)).cwiseAbs().maxCoeff());
    }
    return std::pair{worst <= 1e-15, "50 graphs: max entry difference " + sci(worst)};
  }});
  checks.push_back({"O2", "mixing rate: SVD vs eigen-decomposition", 0, [] {
    RandomStream rng(32, StreamId::kTest, 2);
    double worst = 0.0;
    for (int g = 0; g < 50; ++g) {
      const int m = 2 + static_cast<int>(rng.below(9));
      const Eigen::MatrixXd w = metropolis_hastings_weights(
          generate_geometric_subnet(m, rng.uniform(0.5, 3.5), rng.next_u64()));
      worst = std::max(worst, std::abs(mixing_rate(w) - reference::mixing_rate_eig(w)));
    }
    return std::pair{worst <= 1e-10, "50 graphs: max |rho_svd - rho_eig| = " + sci(worst)};
  }});
  checks.push_back({"O3", "gradients vs central finite differences", 5.0, gradient_fd});
  checks.push_back({"O4", "co-optimizer objective vs hand evaluation", 0, [] {
    CoOptProblem p;
    p.subnet_sizes = {5};
    p.ds_cost = {1.0};
    p.d2d_cost = {1.0};
    p.lambda = {1.0, 1.0, 0.0, 0.0};
    const std::vector<double> zero{0.0};
    const double full = objective(zero, 1.0, 1, p);
    const double beta = sampling_ratio(5, 2);
    CoOptProblem two;
    two.subnet_sizes = {2, 4};
    two.ds_cost = {10.0, 20.0};
    two.d2d_cost = {1.0, 2.0};
    two.lambda = {1.0, 1.0, 0.1, 0.01};
    const std::vector<int> h{1, 2};
    const CoOptSolution pt = evaluate_point(h, 4, two);
    const double hand = reference::coopt_objective(two.subnet_sizes, h, 4, two);
    // Frozen value: 1/0.75^4 + 1/2 + (1/2.25)^(2/3) + 0.1*15 + 0.01*4*3.
    const double frozen = 5.862880803651359;
    const bool ok = full == 3.0 && beta == 0.6 && 1.0 - beta * beta == 0.64 &&
                    std::abs(pt.objective - hand) <= 1e-12 && std::abs(pt.objective - frozen) <= 1e-12;
    return std::pair{ok, "full sampling K=1 -> " + format_double(full) + "; two-subnet config -> " +
                             format_double(pt.objective)};
  }});
  checks.push_back({"O5", "co-optimizer: reference instance vs brute force and relaxation", 0, [] {
    const CoOptProblem p = CoOptProblem::from_delta({4, 5, 6}, {10, 55, 90}, 1e-3, {1, 1, 0.1, 0.01}, 50);
    const CoOptSolution sol = solve(p);
    const auto bf = reference::coopt_brute_force(p);
    const RelaxedSolution rel = solve_relaxed(p);
    const bool ok = sol.objective == bf.objective && bf.points == 6000 &&
                    rel.objective <= sol.objective * (1.0 + 1e-12) &&
                    rel.rounded.objective <= 1.05 * sol.objective && rel.constraint_active;
    return std::pair{ok, "solve " + format_double(sol.objective) + " (K=" + std::to_string(sol.K) +
                             "), brute force " + format_double(bf.objective) + ", relaxed " +
                             format_double(rel.objective) + ", rounded " + format_double(rel.rounded.objective)};
  }});
  checks.push_back({"O6", "co-optimizer exactness on random instances", 10.0, [] { return coopt_exactness(50); }});
  checks.push_back({"O7", "least-squares optimum solves the normal equations", 0, [] {
    const auto problem = least_squares(kOmegaKappa80, 0.2, 1);
    const double g = problem->global_gradient(*problem->x_star()).norm();
    const double kappa = condition_number(*dynamic_cast<const LeastSquaresProblem*>(problem.get()));
    return std::pair{g <= 1e-10 && std::abs(kappa / 80.0 - 1.0) <= 0.1,
                     "||grad f(x*)|| = " + sci(g) + ", kappa = " + fmt("%.2f", kappa)};
  }});
  return execute_all(checks);
}

std::vector<CheckResult> acceptance_suite() {
  ConservationLog log;
  std::map<int, CheckResult> results;
  auto record = [&](int n, const Check& c) { results[n] = execute(c); };

  record(1, {"A1", "Case-1 reduction: z stays zero when every client is its own subnet", 1.0,
             [&] { return case1_reduction(&log); }});
  record(2, {"A2", "Case-2 reduction: matches decentralized gradient tracking", 1.0,
             [&] { return case2_reduction(&log); }});
  record(4, {"A4", "mixing matrices: doubly stochastic, symmetric, contraction", 5.0,
             [] { return mixing_properties(100, 1000); }});
  record(5, {"A5", "gradient correctness by finite differences", 5.0, gradient_fd});

  std::string det_csv_a, det_csv_b;  // criterion 6 run, repeated for criterion 12
  record(6, {"A6", "linear convergence (noiseless LS, kappa~80, K=40, full sampling)", 60.0, [&] {
    const auto problem = least_squares(kOmegaKappa80, 0.0, 1);
    const auto topo = topology(30, 6, 1);
    const RunConfig cfg = base_config(Algorithm::kSdgt, 40, 5000, 0.02, *topo, 1.0);
    const ConvergenceRun run = run_convergence(cfg, topo, problem, 1e-12, &log);
    det_csv_a = run.csv;
    const double final_err = run.rel_error.back();
    std::size_t hit = 0;
    while (hit < run.rel_error.size() && run.rel_error[hit] > 1e-10) ++hit;
    const double slope = last_half_slope(run.rel_error);
    const double kappa = condition_number(*dynamic_cast<const LeastSquaresProblem*>(problem.get()));
    const bool ok = !run.summary.diverged && hit < run.rel_error.size() && slope < -1e-4;
    return std::pair{ok, "kappa " + fmt("%.1f", kappa) + ", gamma 0.02: rel. error <= 1e-10 at t = " +
                             std::to_string(hit + 1) + ", final " + sci(final_err) + " at t = " +
                             std::to_string(run.rel_error.size()) + ", last-half log slope " + sci(slope)};
  }});

  record(7, {"A7", "heterogeneity robustness at 40% sampling (SD-GT vs SD-FedAvg)", 120.0, [&] {
    // Observation noise makes the local optima differ; without it every
    // client's loss is minimized by the same signal and SD-FedAvg has no drift.
    const auto problem = least_squares(kOmegaKappa80, 0.2, 1);
    const auto topo = topology(30, 6, 1);
    const int T = 300;
    const auto gt = run_convergence(base_config(Algorithm::kSdgt, 40, T, 0.02, *topo, 0.4), topo, problem, 0, &log);
    const auto fa = run_convergence(base_config(Algorithm::kSdFedAvg, 40, T, 0.02, *topo, 0.4), topo, problem, 0, &log);
    const double e_gt = gt.rel_error.back(), e_fa = fa.rel_error.back();
    const bool ok = !gt.summary.diverged && !fa.summary.diverged && e_gt <= 1e-2 * e_fa;
    return std::pair{ok, "T = " + std::to_string(T) + ": SD-GT " + sci(e_gt) + ", SD-FedAvg " + sci(e_fa) +
                             ", ratio " + sci(e_gt / e_fa)};
  }});

  record(8, {"A8", "D2D benefit on non-iid classification (K=10 vs K=3)", 120.0, [&] {
    const double target = 0.3;
    const int T = 300;
    std::vector<double> r3, r10;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      ClassificationParams cp;
      cp.seed = seed;
      const ProblemPtr problem = generate_cluster_classification(cp);
      const auto topo = topology(30, 6, seed);
      for (int K : {3, 10}) {
        RunConfig cfg = base_config(Algorithm::kSdgt, K, T, 0.1, *topo, 0.4);
        cfg.batch_size = 10;
        cfg.sampling_seed = seed;
        cfg.batching_seed = seed;
        Trainer trainer(cfg, topo, problem);
        int reached = T + 1;
        while (trainer.server().round < T)
          if (trainer.step().loss <= target) {
            reached = trainer.server().round;
            break;
          }
        log.add(trainer.summary());
        (K == 3 ? r3 : r10).push_back(reached);
      }
    }
    const double m3 = median(r3), m10 = median(r10);
    std::string per;
    for (std::size_t i = 0; i < r3.size(); ++i)
      per += (i ? ", " : "") + fmt("%.0f", r3[i]) + "/" + fmt("%.0f", r10[i]);
    return std::pair{m10 < m3, "rounds to loss <= " + fmt("%.2f", target) + " (K=3/K=10 per seed: " + per +
                                   "); median K=3 " + fmt("%.0f", m3) + ", K=10 " + fmt("%.0f", m10)};
  }});

  record(9, {"A9", "SD-GT vs SCAFFOLD at kappa~800 (fitted log-error slope)", 120.0, [&] {
    // Each algorithm gets the step size with the steepest fitted rate on a
    // grid, scanned upward until the first divergence.
    const std::vector<double> grid = {0.004, 0.005, 0.006, 0.007, 0.008, 0.009, 0.01, 0.012};
    const int T = 150;
    std::vector<double> s_gt, s_sc;
    std::string per;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const auto problem = least_squares(kOmegaKappa800, 0.0, seed);
      const auto topo = topology(30, 6, seed);
      for (Algorithm algo : {Algorithm::kSdgt, Algorithm::kScaffold}) {
        double slope = 0.0, chosen = 0.0;
        for (double g : grid) {
          const auto run = run_convergence(base_config(algo, 40, T, g, *topo, 1.0), topo, problem, 0, &log);
          if (run.summary.diverged) break;
          const double s = last_half_slope(run.rel_error);
          if (s < slope) {
            slope = s;
            chosen = g;
          }
        }
        (algo == Algorithm::kSdgt ? s_gt : s_sc).push_back(slope);
        per += std::string(per.empty() ? "" : "; ") + "seed " + std::to_string(seed) + " " +
               algorithm_name(algo) + " gamma " + fmt("%g", chosen) + " slope " + sci(slope);
      }
    }
    const double mg = median(s_gt), ms = median(s_sc);
    return std::pair{mg < ms, "median slope SD-GT " + sci(mg) + " vs SCAFFOLD " + sci(ms) + " (" + per + ")"};
  }});

  record(10, {"A10", "co-optimizer exactness vs brute force (50 instances)", 10.0, [] { return coopt_exactness(50); }});

  record(11, {"A11", "co-optimized vs naive configuration under cost ratios", 0, [&] {
    const auto problem = least_squares(kOmegaKappa80, 0.2, 1);
    const auto topo = topology(30, 6, 1);
    const std::vector<double> ds = ds_costs_from_json({{"uniform", {1.0, 100.0}}, {"seed", 6}}, 6);
    std::vector<int> sizes;
    for (int s = 0; s < 6; ++s) sizes.push_back(topo->subnet_size(s));
    const double target = 1e-6;
    auto cost_to_target = [&](const std::vector<int>& h, int K, const CostModel& costs, int& rounds) {
      RunConfig cfg = base_config(Algorithm::kSdgt, K, 20000, 0.02, *topo, 1.0);
      cfg.samples_per_subnet = h;
      cfg.costs = costs;
      const auto run = run_convergence(cfg, topo, problem, target, &log);
      rounds = static_cast<int>(run.rel_error.size());
      if (run.summary.diverged || run.rel_error.back() > target) return std::numeric_limits<double>::infinity();
      return run.records.back().comm_cost_cum;
    };
    const CoOptProblem small = CoOptProblem::from_delta(sizes, ds, 1e-3, {1, 1, 0.1, 0.01}, 50);
    const CoOptSolution sol = solve(small);
    const CostModel costs = CostModel::from_delta(ds, 1e-3);
    int r_opt = 0, r_naive = 0;
    const double c_opt = cost_to_target(sol.samples, sol.K, costs, r_opt);
    const double c_naive = cost_to_target(sizes, 1, costs, r_naive);
    const CoOptSolution large = solve(CoOptProblem::from_delta(sizes, ds, 1.0, {1, 1, 0.1, 0.01}, 50));
    std::string h;
    for (int v : sol.samples) h += (h.empty() ? "" : ",") + std::to_string(v);
    const bool ok = c_opt <= 0.5 * c_naive && large.K <= 3;
    return std::pair{ok, "delta 1e-3: co-optimized (h=" + h + ", K=" + std::to_string(sol.K) + ") cost " +
                             fmt("%.1f", c_opt) + " in " + std::to_string(r_opt) + " rounds vs naive cost " +
                             fmt("%.1f", c_naive) + " in " + std::to_string(r_naive) + " rounds (ratio " +
                             fmt("%.3f", c_opt / c_naive) + "); delta 1: K = " + std::to_string(large.K)};
  }});

  record(12, {"A12", "determinism: repeated runs give bit-identical CSVs", 0, [&] {
    // (a) the criterion-6 run repeated in-process
    {
      const auto problem = least_squares(kOmegaKappa80, 0.0, 1);
      const auto topo = topology(30, 6, 1);
      det_csv_b = run_convergence(base_config(Algorithm::kSdgt, 40, 5000, 0.02, *topo, 1.0), topo, problem, 1e-12, nullptr).csv;
    }
    // (b) stochastic minibatches and partial sampling, every algorithm
    bool same_stochastic = true;
    {
      ClassificationParams cp;
      cp.seed = 3;
      const ProblemPtr problem = generate_cluster_classification(cp);
      const auto topo = topology(30, 6, 3);
      for (Algorithm a : {Algorithm::kSdgt, Algorithm::kSdFedAvg, Algorithm::kScaffold}) {
        RunConfig cfg = base_config(a, 3, 20, 0.1, *topo, 0.4);
        cfg.batch_size = 10;
        cfg.diagnostics = true;
        std::string first;
        for (int rep = 0; rep < 2; ++rep) {
          Trainer t(cfg, topo, problem);
          t.run();
          const std::string csv = metrics_to_csv(t.records());
          if (rep == 0) first = csv;
          else same_stochastic = same_stochastic && csv == first;
        }
      }
    }
    // (c) the harness writing files with 1 vs 4 threads
    namespace fs = std::filesystem;
    const fs::path base = fs::temp_directory_path() / ("sdgt-determinism-" + std::to_string(::getpid()));
    nlohmann::json doc = {{"name", "determinism"},
                          {"problem", {{"kind", "least_squares"}, {"d", 20}, {"omega", 0.5}, {"seed", 2}}},
                          {"topology", {{"n", 12}, {"subnets", 3}, {"seed", 2}}},
                          {"algorithms", {"sdgt", "sd_fedavg", "scaffold"}},
                          {"run", {{"T", 30}, {"gamma", 0.02}, {"batch_size", 5}}},
                          {"sweep", {{"K", {2, 5}}, {"sample_rate", {0.5, 1.0}}, {"seed", {1, 2}}}}};
    const ExperimentSpec spec = experiment_from_json(doc);
    ExperimentOptions o1, o4;
    o1.output_dir = (base / "a").string();
    o1.threads = 1;
    o4.output_dir = (base / "b").string();
    o4.threads = 4;
    const ExperimentResult ra = run_experiment(spec, o1);
    const ExperimentResult rb = run_experiment(spec, o4);
    int files = 0, differing = 0;
    for (const auto& entry : fs::directory_iterator(ra.directory)) {
      ++files;
      const fs::path other = fs::path(rb.directory) / entry.path().filename();
      if (!fs::exists(other) ||
          fnv1a_hex(read_text_file(entry.path().string())) != fnv1a_hex(read_text_file(other.string())))
        ++differing;
    }
    fs::remove_all(base);
    const bool same6 = !det_csv_a.empty() && det_csv_a == det_csv_b;
    return std::pair{same6 && same_stochastic && differing == 0,
                     std::string("criterion-6 CSV ") + (same6 ? "identical" : "DIFFERS") +
                         "; stochastic runs " + (same_stochastic ? "identical" : "DIFFER") + "; harness " +
                         std::to_string(files) + " files, " + std::to_string(differing) +
                         " differ between 1 and 4 threads"};
  }});

  // Criterion 3 aggregates every SD-GT run above plus dedicated stress runs.
  record(3, {"A3", "tracker conservation on every run", 0, [&] {
    const auto problem = least_squares(kOmegaKappa80, 0.2, 2);
    const auto topo = topology(30, 6, 2);
    for (double rate : {0.2, 0.6})
      for (int batch : {0, 5}) {
        RunConfig cfg = base_config(Algorithm::kSdgt, 10, 40, 0.02, *topo, rate);
        cfg.batch_size = batch;
        Trainer trainer(cfg, topo, problem);
        trainer.run();
        log.add(trainer.summary());
      }
    return std::pair{log.psi <= 1e-9 && log.z <= 1e-9,
                     std::to_string(log.runs) + " SD-GT runs: max |sum_s psi_s| rel. " + sci(log.psi) +
                         ", max |sum_{i in C_s} z_i| rel. " + sci(log.z)};
  }});

  std::vector<CheckResult> out;
  for (auto& [n, r] : results) out.push_back(std::move(r));
  return out;
}

}  // namespace

std::vector<std::string> suite_names() { return {"invariants", "reductions", "oracles", "acceptance"}; }

std::vector<CheckResult> run_suite(const std::string& suite) {
  if (suite == "invariants") return invariants_suite();
  if (suite == "reductions") return reductions_suite();
  if (suite == "oracles") return oracles_suite();
  if (suite == "acceptance") return acceptance_suite();
  fail(ErrorCode::kInvalidArgument,
       "unknown suite '" + suite + "' (expected invariants, reductions, oracles, or acceptance)");
}

bool all_passed(const std::vector<CheckResult>& results) {
  return std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.passed; });
}

std::string format_report(const std::string& suite, const std::vector<CheckResult>& results) {
  std::ostringstream out;
  int failed = 0;
  for (const auto& r : results) {
    char head[160];
    std::snprintf(head, sizeof(head), "%s  %-4s %-66s %7.2fs  ", r.passed ? "PASS" : "FAIL", r.id.c_str(),
                  r.name.c_str(), r.seconds);
    out << head << r.detail << '\n';
    failed += r.passed ? 0 : 1;
  }
  out << suite << ": " << results.size() - failed << "/" << results.size() << " passed\n";
  return out.str();
}

}  // namespace sdgt
