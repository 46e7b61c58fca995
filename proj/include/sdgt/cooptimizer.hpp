#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace sdgt {

// Learning-efficiency trade-off over per-subnet sample counts and the number
// of D2D rounds:
//
//   min  1/p^4 + l1 sqrt(1/K) + l2 (1/(K p^2))^(2/3)
//        + l3 sum_s (1 - beta_s) E_s + l4 K sum_s E_s^D2D
//   s.t. 0 <= beta_s <= (m_s - 1)/m_s,  p = min_s (1 - beta_s^2)
//
// with beta_s = (m_s - h_s)/m_s the unsampled fraction of subnet s.
struct CoOptProblem {
  std::vector<int> subnet_sizes;      // m_s
  std::vector<double> ds_cost;        // E_s
  std::vector<double> d2d_cost;       // E_s^D2D
  std::array<double, 4> lambda{1.0, 1.0, 0.1, 0.01};
  int k_max = 50;

  static CoOptProblem from_delta(std::vector<int> sizes, std::vector<double> ds_cost, double delta,
                                 std::array<double, 4> lambda, int k_max);
};

void validate(const CoOptProblem& problem);

struct CoOptSolution {
  std::vector<int> samples;   // h_s
  std::vector<double> beta;   // (m_s - h_s)/m_s
  double p = 1.0;             // min_s (1 - beta_s^2)
  int K = 1;
  double objective = 0.0;
  double round_cost = 0.0;    // sum_s (h_s/m_s) E_s + K sum_s E_s^D2D
};

double sampling_ratio(int m, int h);  // beta = (m - h)/m

// Objective at (beta, p, K); K may be fractional for the relaxation.
double objective(std::span<const double> beta, double p, double K, const CoOptProblem& problem);

// Builds the solution record for an integer point (h, K).
CoOptSolution evaluate_point(std::span<const int> samples, int K, const CoOptProblem& problem);

// Strict ordering used for ties: objective, then round cost, then K, then h
// lexicographically.
bool better(const CoOptSolution& a, const CoOptSolution& b);

// Exact minimizer over {1..m_s}^S x {1..K_max}. For a fixed p every beta_s is
// pushed to the largest value keeping 1 - beta_s^2 >= p, so only the finitely
// many p values 1 - ((m_s - h)/m_s)^2 need to be enumerated.
CoOptSolution solve(const CoOptProblem& problem);

struct RelaxedSolution {
  std::vector<double> beta;
  double p = 1.0;
  double K = 1.0;
  double objective = 0.0;
  bool constraint_active = true;  // min_s (1 - beta_s^2) == p at the optimum
  CoOptSolution rounded;          // best integer neighbour of the continuous optimum
};

// Continuous relaxation (beta_s real, K real in [1, K_max]) solved by a search
// over log p with closed-form beta_s(p) and a golden-section search in K,
// followed by rounding to the best neighbouring integer point.
RelaxedSolution solve_relaxed(const CoOptProblem& problem);

struct ParetoPoint {
  double round_cost = 0.0;
  double learning_term = 0.0;  // 1/p^4 + l1 sqrt(1/K) + l2 (1/(K p^2))^(2/3)
  double objective = 0.0;
  double p = 1.0;
  int K = 1;
  std::vector<int> samples;
};

// Non-dominated (round_cost, learning_term) pairs among the reduced candidate
// set, sorted by increasing cost.
std::vector<ParetoPoint> pareto_frontier(const CoOptProblem& problem);
std::string pareto_to_csv(std::span<const ParetoPoint> frontier);

// Either an explicit array of S costs or {"uniform": [lo, hi], "seed": s},
// drawn from the cost stream.
std::vector<double> ds_costs_from_json(const nlohmann::json& doc, int subnets);

CoOptProblem coopt_problem_from_json(const nlohmann::json& doc);
nlohmann::json coopt_problem_to_json(const CoOptProblem& problem);
nlohmann::json solution_to_json(const CoOptSolution& solution);

}  // namespace sdgt
