#include "sdgt/cooptimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "sdgt/error.hpp"
#include "sdgt/io.hpp"
#include "sdgt/rng.hpp"

namespace sdgt {

CoOptProblem CoOptProblem::from_delta(std::vector<int> sizes, std::vector<double> ds_cost,
                                      double delta, std::array<double, 4> lambda, int k_max) {
  CoOptProblem p;
  p.subnet_sizes = std::move(sizes);
  for (double e : ds_cost) p.d2d_cost.push_back(delta * e);
  p.ds_cost = std::move(ds_cost);
  p.lambda = lambda;
  p.k_max = k_max;
  return p;
}

void validate(const CoOptProblem& problem) {
  const std::size_t s = problem.subnet_sizes.size();
  require(s >= 1, "co-optimization needs at least one subnet");
  require(problem.ds_cost.size() == s && problem.d2d_cost.size() == s,
          "co-optimization needs one DS and one D2D cost per subnet");
  for (int m : problem.subnet_sizes) require(m >= 1, "subnet sizes must be at least 1");
  for (double e : problem.ds_cost) require(e > 0.0 && std::isfinite(e), "DS costs must be positive");
  for (double e : problem.d2d_cost)
    require(e > 0.0 && std::isfinite(e), "D2D costs must be positive");
  for (double l : problem.lambda) require(l >= 0.0 && std::isfinite(l), "lambdas must be non-negative");
  require(problem.k_max >= 1, "K_max must be at least 1");
}

double sampling_ratio(int m, int h) {
  return static_cast<double>(m - h) / static_cast<double>(m);
}

namespace {

double learning_term(double p, double K, const CoOptProblem& pr) {
  return 1.0 / std::pow(p, 4) + pr.lambda[0] * std::sqrt(1.0 / K) +
         pr.lambda[1] * std::pow(1.0 / (K * p * p), 2.0 / 3.0);
}

double d2d_total(const CoOptProblem& pr) {
  double total = 0.0;
  for (double e : pr.d2d_cost) total += e;
  return total;
}

}  // namespace

double objective(std::span<const double> beta, double p, double K, const CoOptProblem& problem) {
  require(p > 0.0, "objective undefined for p <= 0");
  require(K > 0.0, "objective undefined for K <= 0");
  require(beta.size() == problem.ds_cost.size(), "one beta per subnet required");
  double sampling = 0.0;
  for (std::size_t s = 0; s < beta.size(); ++s) sampling += (1.0 - beta[s]) * problem.ds_cost[s];
  return learning_term(p, K, problem) + problem.lambda[2] * sampling +
         problem.lambda[3] * K * d2d_total(problem);
}

CoOptSolution evaluate_point(std::span<const int> samples, int K, const CoOptProblem& problem) {
  require(samples.size() == problem.subnet_sizes.size(), "one sample count per subnet required");
  require(K >= 1, "K must be at least 1");
  CoOptSolution sol;
  sol.samples.assign(samples.begin(), samples.end());
  sol.K = K;
  sol.p = 1.0;
  double ds = 0.0;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const int m = problem.subnet_sizes[s];
    require(samples[s] >= 1 && samples[s] <= m, "h_s must lie in 1..m_s");
    const double b = sampling_ratio(m, samples[s]);
    sol.beta.push_back(b);
    sol.p = std::min(sol.p, 1.0 - b * b);
    ds += (1.0 - b) * problem.ds_cost[s];
  }
  sol.objective = objective(sol.beta, sol.p, K, problem);
  sol.round_cost = ds + K * d2d_total(problem);
  return sol;
}

bool better(const CoOptSolution& a, const CoOptSolution& b) {
  if (a.objective != b.objective) return a.objective < b.objective;
  if (a.round_cost != b.round_cost) return a.round_cost < b.round_cost;
  if (a.K != b.K) return a.K < b.K;
  return a.samples < b.samples;
}

namespace {

// Candidate p values and, for each, the greedy sample vector (smallest h_s
// with 1 - beta_s^2 >= p).
std::vector<std::vector<int>> candidate_sample_vectors(const CoOptProblem& problem) {
  std::set<double> levels;
  for (int m : problem.subnet_sizes)
    for (int h = 1; h <= m; ++h) {
      const double b = sampling_ratio(m, h);
      levels.insert(1.0 - b * b);
    }
  std::vector<std::vector<int>> out;
  for (double p : levels) {
    std::vector<int> h;
    for (int m : problem.subnet_sizes) {
      int pick = m;
      for (int cand = 1; cand <= m; ++cand) {
        const double b = sampling_ratio(m, cand);
        if (1.0 - b * b >= p) {
          pick = cand;
          break;
        }
      }
      h.push_back(pick);
    }
    out.push_back(std::move(h));
  }
  return out;
}

}  // namespace

CoOptSolution solve(const CoOptProblem& problem) {
  validate(problem);
  CoOptSolution best;
  bool have = false;
  for (const auto& h : candidate_sample_vectors(problem))
    for (int K = 1; K <= problem.k_max; ++K) {
      CoOptSolution cand = evaluate_point(h, K, problem);
      if (!have || better(cand, best)) {
        best = std::move(cand);
        have = true;
      }
    }
  return best;
}

// ---------------------------------------------------------------------------
// Continuous relaxation

namespace {

struct RelaxedEval {
  double value = std::numeric_limits<double>::infinity();
  double K = 1.0;
};

std::vector<double> relaxed_beta(double p, const CoOptProblem& pr) {
  std::vector<double> beta;
  const double free = std::sqrt(std::max(0.0, 1.0 - p));
  for (int m : pr.subnet_sizes) beta.push_back(std::min(free, sampling_ratio(m, 1)));
  return beta;
}

// K-dependent part is convex on [1, K_max]: golden section plus endpoints.
RelaxedEval best_k(double p, const CoOptProblem& pr) {
  const double d2d = d2d_total(pr);
  auto f = [&](double K) {
    return pr.lambda[0] / std::sqrt(K) + pr.lambda[1] * std::pow(1.0 / (K * p * p), 2.0 / 3.0) +
           pr.lambda[3] * K * d2d;
  };
  double lo = 1.0;
  double hi = static_cast<double>(pr.k_max);
  RelaxedEval best{f(lo), lo};
  if (const double v = f(hi); v < best.value) best = {v, hi};
  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = hi - ratio * (hi - lo);
  double b = lo + ratio * (hi - lo);
  double fa = f(a);
  double fb = f(b);
  for (int it = 0; it < 200 && hi - lo > 1e-12 * std::max(1.0, hi); ++it) {
    if (fa < fb) {
      hi = b;
      b = a;
      fb = fa;
      a = hi - ratio * (hi - lo);
      fa = f(a);
    } else {
      lo = a;
      a = b;
      fa = fb;
      b = lo + ratio * (hi - lo);
      fb = f(b);
    }
  }
  for (double K : {a, b, std::floor(a), std::ceil(b)})
    if (K >= 1.0 && K <= pr.k_max)
      if (const double v = f(K); v < best.value) best = {v, K};
  return best;
}

struct PEval {
  double p = 1.0;
  double value = std::numeric_limits<double>::infinity();
  double K = 1.0;
};

PEval eval_p(double p, const CoOptProblem& pr) {
  const auto beta = relaxed_beta(p, pr);
  double sampling = 0.0;
  for (std::size_t s = 0; s < beta.size(); ++s) sampling += (1.0 - beta[s]) * pr.ds_cost[s];
  const RelaxedEval k = best_k(p, pr);
  return {p, 1.0 / std::pow(p, 4) + pr.lambda[2] * sampling + k.value, k.K};
}

}  // namespace

RelaxedSolution solve_relaxed(const CoOptProblem& problem) {
  validate(problem);
  double p_lo = 1.0;
  for (int m : problem.subnet_sizes) {
    const double b = sampling_ratio(m, 1);
    p_lo = std::min(p_lo, 1.0 - b * b);
  }

  // Grid in log p, plus the breakpoints of beta_s(p) and the p values of
  // integer sample vectors.
  std::vector<double> grid = {p_lo, 1.0};
  constexpr int kGrid = 512;
  if (p_lo < 1.0)
    for (int g = 1; g < kGrid; ++g)
      grid.push_back(std::exp(std::log(p_lo) * (1.0 - static_cast<double>(g) / kGrid)));
  for (int m : problem.subnet_sizes)
    for (int h = 1; h <= m; ++h) {
      const double b = sampling_ratio(m, h);
      grid.push_back(1.0 - b * b);
    }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  std::size_t best_idx = 0;
  PEval best;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const PEval e = eval_p(grid[g], problem);
    if (e.value < best.value) {
      best = e;
      best_idx = g;
    }
  }
  // Golden-section refinement in log p between the grid neighbours.
  if (grid.size() > 2) {
    double lo = std::log(grid[best_idx > 0 ? best_idx - 1 : 0]);
    double hi = std::log(grid[std::min(best_idx + 1, grid.size() - 1)]);
    const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int it = 0; it < 100 && hi - lo > 1e-14; ++it) {
      const double a = hi - ratio * (hi - lo);
      const double b = lo + ratio * (hi - lo);
      const PEval ea = eval_p(std::exp(a), problem);
      const PEval eb = eval_p(std::exp(b), problem);
      if (ea.value < best.value) best = ea;
      if (eb.value < best.value) best = eb;
      if (ea.value < eb.value)
        hi = b;
      else
        lo = a;
    }
  }

  RelaxedSolution out;
  out.p = best.p;
  out.K = best.K;
  out.beta = relaxed_beta(best.p, problem);
  out.objective = objective(out.beta, out.p, out.K, problem);
  double min_phi = 1.0;
  for (double b : out.beta) min_phi = std::min(min_phi, 1.0 - b * b);
  out.constraint_active = std::abs(min_phi - out.p) <= 1e-12;

  // Round to the best integer neighbour: K in {floor, ceil}, each h_s in
  // {floor, ceil} of m_s (1 - beta_s).
  const std::size_t s_count = problem.subnet_sizes.size();
  std::vector<std::array<int, 2>> h_opts(s_count);
  for (std::size_t s = 0; s < s_count; ++s) {
    const int m = problem.subnet_sizes[s];
    const double h_real = m * (1.0 - out.beta[s]);
    h_opts[s] = {std::clamp(static_cast<int>(std::floor(h_real + 1e-9)), 1, m),
                 std::clamp(static_cast<int>(std::ceil(h_real - 1e-9)), 1, m)};
  }
  const std::array<int, 2> k_opts = {
      std::clamp(static_cast<int>(std::floor(out.K + 1e-9)), 1, problem.k_max),
      std::clamp(static_cast<int>(std::ceil(out.K - 1e-9)), 1, problem.k_max)};
  const std::size_t combos = s_count < 20 ? (std::size_t{1} << s_count) : 1;
  bool have = false;
  std::vector<int> h(s_count);
  for (std::size_t mask = 0; mask < combos; ++mask) {
    for (std::size_t s = 0; s < s_count; ++s) h[s] = h_opts[s][(mask >> s) & 1u];
    for (int K : k_opts) {
      CoOptSolution cand = evaluate_point(h, K, problem);
      if (!have || better(cand, out.rounded)) {
        out.rounded = std::move(cand);
        have = true;
      }
    }
  }
  return out;
}

std::vector<ParetoPoint> pareto_frontier(const CoOptProblem& problem) {
  validate(problem);
  std::vector<ParetoPoint> all;
  for (const auto& h : candidate_sample_vectors(problem))
    for (int K = 1; K <= problem.k_max; ++K) {
      const CoOptSolution sol = evaluate_point(h, K, problem);
      all.push_back({sol.round_cost, learning_term(sol.p, K, problem), sol.objective, sol.p, K, h});
    }
  std::sort(all.begin(), all.end(), [](const ParetoPoint& a, const ParetoPoint& b) {
    if (a.round_cost != b.round_cost) return a.round_cost < b.round_cost;
    return a.learning_term < b.learning_term;
  });
  std::vector<ParetoPoint> frontier;
  double best_learning = std::numeric_limits<double>::infinity();
  for (auto& pt : all)
    if (pt.learning_term < best_learning) {
      best_learning = pt.learning_term;
      frontier.push_back(std::move(pt));
    }
  return frontier;
}

std::string pareto_to_csv(std::span<const ParetoPoint> frontier) {
  std::string out = "round_cost,learning_term,objective,p,K,samples\n";
  for (const auto& pt : frontier) {
    std::string h;
    for (std::size_t s = 0; s < pt.samples.size(); ++s) {
      if (s) h += ';';
      h += std::to_string(pt.samples[s]);
    }
    out += format_double(pt.round_cost) + ',' + format_double(pt.learning_term) + ',' +
           format_double(pt.objective) + ',' + format_double(pt.p) + ',' + std::to_string(pt.K) +
           ',' + h + '\n';
  }
  return out;
}

std::vector<double> ds_costs_from_json(const nlohmann::json& doc, int subnets) {
  try {
    if (doc.is_array()) {
      auto costs = doc.get<std::vector<double>>();
      require(static_cast<int>(costs.size()) == subnets, "expected one DS cost per subnet");
      return costs;
    }
    const auto range = doc.at("uniform").get<std::array<double, 2>>();
    require(range[0] <= range[1], "uniform cost range must be ordered");
    RandomStream rng(doc.value("seed", std::uint64_t{1}), StreamId::kCosts);
    std::vector<double> costs;
    for (int s = 0; s < subnets; ++s) costs.push_back(rng.uniform(range[0], range[1]));
    return costs;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("malformed DS cost specification: ") + e.what());
  }
}

CoOptProblem coopt_problem_from_json(const nlohmann::json& doc) {
  try {
    CoOptProblem p;
    p.subnet_sizes = doc.at("subnet_sizes").get<std::vector<int>>();
    p.ds_cost = ds_costs_from_json(doc.at("ds_cost"), static_cast<int>(p.subnet_sizes.size()));
    if (doc.contains("d2d_cost")) {
      p.d2d_cost = doc.at("d2d_cost").get<std::vector<double>>();
    } else {
      const double delta = doc.at("delta").get<double>();
      for (double e : p.ds_cost) p.d2d_cost.push_back(delta * e);
    }
    if (doc.contains("lambda")) p.lambda = doc.at("lambda").get<std::array<double, 4>>();
    p.k_max = doc.value("k_max", p.k_max);
    validate(p);
    return p;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("malformed co-optimization problem: ") + e.what());
  }
}

nlohmann::json coopt_problem_to_json(const CoOptProblem& problem) {
  return {{"subnet_sizes", problem.subnet_sizes},
          {"ds_cost", problem.ds_cost},
          {"d2d_cost", problem.d2d_cost},
          {"lambda", problem.lambda},
          {"k_max", problem.k_max}};
}

nlohmann::json solution_to_json(const CoOptSolution& solution) {
  return {{"samples", solution.samples}, {"beta", solution.beta},
          {"p", solution.p},             {"K", solution.K},
          {"objective", solution.objective}, {"round_cost", solution.round_cost}};
}

}  // namespace sdgt
