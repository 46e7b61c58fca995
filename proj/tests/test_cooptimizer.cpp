#include <cmath>

#include "doctest.h"
#include "sdgt/cooptimizer.hpp"
#include "sdgt/error.hpp"
#include "sdgt/reference.hpp"
#include "sdgt/rng.hpp"

using namespace sdgt;

namespace {

CoOptProblem random_instance(RandomStream& rng) {
  CoOptProblem p;
  const int S = 1 + static_cast<int>(rng.below(3));
  for (int s = 0; s < S; ++s) {
    p.subnet_sizes.push_back(1 + static_cast<int>(rng.below(6)));
    p.ds_cost.push_back(rng.uniform(1.0, 100.0));
    p.d2d_cost.push_back(p.ds_cost.back() * std::pow(10.0, rng.uniform(-4.0, 0.0)));
  }
  p.lambda = {rng.uniform(0.1, 2.0), rng.uniform(0.1, 2.0), rng.uniform(0.0, 0.3),
              rng.uniform(0.0, 0.05)};
  p.k_max = 1 + static_cast<int>(rng.below(30));
  return p;
}

}  // namespace

TEST_SUITE("cooptimizer") {

TEST_CASE("solver matches exhaustive enumeration on random instances") {
  RandomStream rng(99, StreamId::kTest);
  for (int trial = 0; trial < 40; ++trial) {
    const CoOptProblem p = random_instance(rng);
    const CoOptSolution sol = solve(p);
    const auto brute = reference::coopt_brute_force(p);
    CHECK(sol.objective == doctest::Approx(brute.objective).epsilon(1e-14));
    CHECK(reference::coopt_objective(p.subnet_sizes, sol.samples, sol.K, p) ==
          doctest::Approx(sol.objective).epsilon(1e-14));
  }
}

TEST_CASE("solutions respect the constraints") {
  RandomStream rng(5, StreamId::kTest);
  for (int trial = 0; trial < 20; ++trial) {
    const CoOptProblem p = random_instance(rng);
    const CoOptSolution sol = solve(p);
    REQUIRE(sol.samples.size() == p.subnet_sizes.size());
    double pmin = 1.0;
    for (std::size_t s = 0; s < sol.samples.size(); ++s) {
      CHECK(sol.samples[s] >= 1);
      CHECK(sol.samples[s] <= p.subnet_sizes[s]);
      CHECK(sol.beta[s] <= (p.subnet_sizes[s] - 1.0) / p.subnet_sizes[s] + 1e-15);
      pmin = std::min(pmin, 1.0 - sol.beta[s] * sol.beta[s]);
    }
    CHECK(sol.p == doctest::Approx(pmin).epsilon(1e-15));
    CHECK(sol.K >= 1);
    CHECK(sol.K <= p.k_max);
  }
}

TEST_CASE("relaxation lower-bounds the integer optimum") {
  RandomStream rng(6, StreamId::kTest);
  for (int trial = 0; trial < 20; ++trial) {
    const CoOptProblem p = random_instance(rng);
    const RelaxedSolution r = solve_relaxed(p);
    const CoOptSolution sol = solve(p);
    CHECK(r.objective <= sol.objective * (1.0 + 1e-12));
    CHECK(r.K >= 1.0);
    CHECK(r.K <= p.k_max + 1e-12);
    CHECK(r.rounded.objective >= sol.objective * (1.0 - 1e-14));
  }
}

TEST_CASE("limiting cost weights") {
  CoOptProblem p = CoOptProblem::from_delta({4, 5, 6}, {10, 55, 90}, 1e-3, {1, 1, 1e-12, 1e-12}, 50);
  CoOptSolution sol = solve(p);
  CHECK(sol.p == 1.0);
  CHECK(sol.K == 50);
  p.lambda[3] = 1e6;
  CHECK(solve(p).K == 1);
}

TEST_CASE("objective is monotone in the cost weights") {
  CoOptProblem p = CoOptProblem::from_delta({3, 4}, {20, 80}, 0.01, {1, 1, 0.1, 0.01}, 20);
  double prev = solve(p).objective;
  for (double l3 : {0.2, 0.4, 0.8}) {
    p.lambda[2] = l3;
    const double now = solve(p).objective;
    CHECK(now >= prev);
    prev = now;
  }
}

TEST_CASE("Pareto frontier is non-dominated and sorted") {
  const CoOptProblem p =
      CoOptProblem::from_delta({4, 5, 6}, {10, 55, 90}, 1e-3, {1, 1, 0.1, 0.01}, 50);
  const auto front = pareto_frontier(p);
  REQUIRE(front.size() >= 2);
  for (std::size_t i = 1; i < front.size(); ++i) {
    CHECK(front[i].round_cost > front[i - 1].round_cost);
    CHECK(front[i].learning_term < front[i - 1].learning_term);
  }
  const std::string csv = pareto_to_csv(front);
  CHECK(csv.rfind("round_cost,learning_term,objective,p,K,samples\n", 0) == 0);
}

TEST_CASE("invalid problems are rejected") {
  CoOptProblem p;
  p.subnet_sizes = {3, 0};
  p.ds_cost = {1, 1};
  p.d2d_cost = {0.1, 0.1};
  CHECK_THROWS_AS(solve(p), Error);
  p.subnet_sizes = {3, 3};
  p.k_max = 0;
  CHECK_THROWS_AS(solve(p), Error);
  p.k_max = 5;
  p.lambda[1] = -1.0;
  CHECK_THROWS_AS(solve(p), Error);
  p.lambda[1] = 1.0;
  p.ds_cost = {1};
  CHECK_THROWS_AS(solve(p), Error);
  CHECK_THROWS_AS(objective(std::vector<double>{0.0}, 0.0, 1.0, p), Error);
}

TEST_CASE("JSON problems and cost draws") {
  const nlohmann::json doc = {{"subnet_sizes", {5, 5, 5}},
                              {"ds_cost", {{"uniform", {1, 100}}, {"seed", 6}}},
                              {"delta", 1e-3}};
  const CoOptProblem p = coopt_problem_from_json(doc);
  REQUIRE(p.ds_cost.size() == 3);
  for (double e : p.ds_cost) CHECK((e >= 1.0 && e < 100.0));
  CHECK(p.ds_cost == ds_costs_from_json(doc.at("ds_cost"), 3));
  CHECK(p.d2d_cost[1] == doctest::Approx(p.ds_cost[1] * 1e-3));
  const CoOptProblem back = coopt_problem_from_json(coopt_problem_to_json(p));
  CHECK(back.ds_cost == p.ds_cost);
  CHECK(back.d2d_cost == p.d2d_cost);
  CHECK(back.lambda == p.lambda);
  CHECK_THROWS_AS(ds_costs_from_json(nlohmann::json::array({1.0, 2.0}), 3), Error);
  const auto sol = solution_to_json(solve(p));
  CHECK(sol.contains("samples"));
  CHECK(sol.contains("K"));
}

}  // TEST_SUITE
