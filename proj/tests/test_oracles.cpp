// Frozen expected values. Every derived number below was produced by the
// independent numpy oracle in tests/oracle/derive_oracles.py (or by hand where
// noted) and pasted verbatim; the library is never used to generate them.

#include <cmath>
#include <vector>

#include "doctest.h"
#include "sdgt/algorithms.hpp"
#include "sdgt/cooptimizer.hpp"
#include "sdgt/diagnostics.hpp"
#include "sdgt/problems.hpp"
#include "sdgt/rng.hpp"
#include "sdgt/topology.hpp"
#include "test_support.hpp"

using namespace sdgt;

namespace {

bool close(double actual, double expected, double tol = 1e-12) {
  return std::abs(actual - expected) <= tol * std::max(1.0, std::abs(expected));
}

void check_vec(const Vec& actual, std::initializer_list<double> expected, double tol = 1e-12) {
  REQUIRE(actual.size() == static_cast<Eigen::Index>(expected.size()));
  int k = 0;
  for (double e : expected) {
    CHECK_MESSAGE(close(actual(k), e, tol), "entry " << k << ": " << actual(k) << " vs " << e);
    ++k;
  }
}

RunConfig tiny_config(Algorithm algorithm, int T) {
  RunConfig cfg;
  cfg.algorithm = algorithm;
  cfg.K = 2;
  cfg.T = T;
  cfg.gamma = 0.05;
  cfg.samples_per_subnet = {3, 3};
  cfg.diagnostics = true;
  return cfg;
}

}  // namespace

TEST_SUITE("oracles") {

TEST_CASE("Philox4x32-10 known-answer vectors") {
  using W4 = std::array<std::uint32_t, 4>;
  CHECK(philox4x32_10({0, 0, 0, 0}, {0, 0}) == W4{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  CHECK(philox4x32_10({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                      {0xffffffffu, 0xffffffffu}) ==
        W4{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  CHECK(philox4x32_10({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                      {0xa4093822u, 0x299f31d0u}) ==
        W4{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("Metropolis-Hastings weights of small graphs") {
  // Two nodes, one edge: symmetry forces 1/2 everywhere.
  Adjacency two = test::path_graph(2);
  CHECK(metropolis_hastings_weights(two).isApprox(Eigen::MatrixXd::Constant(2, 2, 0.5), 1e-15));

  // Path 1-2-3 with degrees (1,2,1), by hand.
  Eigen::MatrixXd path(3, 3);
  path << 2.0 / 3, 1.0 / 3, 0, 1.0 / 3, 1.0 / 3, 1.0 / 3, 0, 1.0 / 3, 2.0 / 3;
  CHECK((metropolis_hastings_weights(test::path_graph(3)) - path).cwiseAbs().maxCoeff() < 1e-15);

  // Complete graph on m nodes: every entry 1/m.
  for (int m : {3, 5, 8})
    CHECK((metropolis_hastings_weights(test::complete_graph(m)).array() - 1.0 / m)
              .abs()
              .maxCoeff() < 1e-15);

  // Star on 4 nodes (oracle): hub row 1/4, leaves keep 3/4.
  Adjacency star = Adjacency::Zero(4, 4);
  for (int j = 1; j < 4; ++j) star(0, j) = star(j, 0) = 1;
  Eigen::MatrixXd expected(4, 4);
  expected << 0.25, 0.25, 0.25, 0.25, 0.25, 0.75, 0, 0, 0.25, 0, 0.75, 0, 0.25, 0, 0, 0.75;
  const Eigen::MatrixXd w = metropolis_hastings_weights(star);
  CHECK((w - expected).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(close(mixing_rate(w), 0.4375000000000001));
}

TEST_CASE("mixing rate of small graphs") {
  CHECK(close(mixing_rate(metropolis_hastings_weights(test::path_graph(3))), 5.0 / 9.0));
  CHECK(mixing_rate(Eigen::MatrixXd::Constant(2, 2, 0.5)) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(mixing_rate(Eigen::MatrixXd::Constant(4, 4, 0.25)) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("mixing inequality on hand examples") {
  const Eigen::MatrixXd path = metropolis_hastings_weights(test::path_graph(3));
  CHECK(verify_mixing_inequality(path, 5.0 / 9.0, 1000, 11).passed);
  CHECK(verify_mixing_inequality(Eigen::MatrixXd::Constant(3, 3, 1.0 / 3), 1.0, 200, 3).passed);
  // Identity on two nodes has disconnected support; rho = 0.5 is a false claim.
  CHECK_FALSE(verify_mixing_inequality(Eigen::MatrixXd::Identity(2, 2), 0.5, 100, 5).passed);
}

TEST_CASE("geometric subnets at the boundary radii") {
  const Adjacency one = generate_geometric_subnet(1, 0.5, 1);
  CHECK(one.rows() == 1);
  CHECK(one(0, 0) == 0);
  // Radius 3.5 exceeds the square's diagonal: complete graph.
  const Adjacency five = generate_geometric_subnet(5, 3.5, 1);
  CHECK(five == test::complete_graph(5));
}

TEST_CASE("tiny least squares: loss, gradient, optimum") {
  const auto problem = test::tiny_least_squares();
  Vec x(2);
  x << 0.3, -0.7;
  CHECK(close(problem->loss(0, x), 3.5433333333333326));
  check_vec(problem->full_gradient(0, x), {1.0333333333333332, -6.3});
  REQUIRE(problem->x_star().has_value());
  check_vec(*problem->x_star(), {-0.16666666666666669, -0.08333333333333336});
  CHECK(close(*problem->f_star(), 0.9722222222222223));
  CHECK(close(condition_number(*problem), 4.34421349697345, 1e-11));
}

TEST_CASE("condition numbers of hand Gram matrices") {
  CHECK(condition_number(Eigen::MatrixXd::Identity(3, 3)) == doctest::Approx(1.0));
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(2, 2);
  g(0, 0) = 4.0;
  g(1, 1) = 1.0;
  CHECK(condition_number(g) == doctest::Approx(4.0));
}

TEST_CASE("classification loss and gradient at a fixed point") {
  ClassificationParams params;
  params.input_dim = 2;
  params.classes = 3;
  params.hidden_width = 2;
  Eigen::MatrixXd feats(2, 3);
  feats << 0.5, -1.0, 2.0, 1.5, 0.25, -0.75;
  const ClassificationProblem problem(params, {feats}, {{0, 2, 1}});
  REQUIRE(problem.dim() == 15);
  Vec theta(15);
  for (int k = 0; k < 15; ++k) theta(k) = 0.1 * (k + 1) * ((k % 2 == 0) ? 1.0 : -1.0);
  CHECK(close(problem.loss(0, theta), 1.8897716998232552));
  // Oracle gradient comes from central differences (accurate to ~1e-10).
  check_vec(problem.full_gradient(0, theta),
            {0.690709708206505, -0.5020595184035415, -0.21064891297939425, 0.17343775104983195,
             0.3302610219746427, -0.23309438679230965, 0.0021121429050197094,
             -0.30611279311365536, 0.30400064998659104, 0.07352852582354075,
             -0.12896306278431524, 0.055434536960774494, 0.07676965696479243,
             -0.3200950601245367, 0.24332540282667736},
            1e-8);
  CHECK(close(problem.loss(0, Vec::Zero(15)), std::log(3.0)));
}

TEST_CASE("in-subnet tracker update on a 2-client subnet") {
  const SubnetTopology topo = make_topology({{0, 1}}, {test::path_graph(2)});
  ClientStates states = ClientStates::init(2, Vec::Zero(2));
  states.z_accum(0, 0) = 1.0;
  update_in_subnet_tracker(states, topo, 1, 1.0);
  check_vec(states.z.col(0), {0.5, 0.0});
  check_vec(states.z.col(1), {-0.5, 0.0});
  CHECK(states.z.rowwise().sum().norm() == 0.0);
  CHECK(states.z_accum.isZero());
}

TEST_CASE("global aggregation on two subnets with hand-set increments") {
  const SubnetTopology topo =
      make_topology({{0, 1}, {2, 3}}, {test::path_graph(2), test::path_graph(2)});
  for (auto [K, gamma] : {std::pair{1, 1.0}, std::pair{2, 0.25}}) {
    ClientStates states = ClientStates::init(4, Vec::Zero(1));
    states.x << 2.0, 0.0, -1.0, -1.0;  // x~ = x - round_start + K gamma y with y = 0
    ServerState server = ServerState::init(2, Vec::Zero(1));
    const Vec inc = global_aggregate(server, states, topo, {{0, 1}, {2, 3}}, K, gamma);
    CHECK(inc(0) == 0.0);
    CHECK(server.x_global(0) == 0.0);
    CHECK(close(server.psi(0, 0), 1.0 / (K * gamma)));
    CHECK(close(server.psi(0, 1), -1.0 / (K * gamma)));
    CHECK(server.psi.sum() == 0.0);
    for (int i = 0; i < 4; ++i) CHECK(states.x(0, i) == 0.0);
  }
}

TEST_CASE("adapt-then-combine step on a 2-client subnet") {
  const SubnetTopology topo = make_topology({{0, 1}}, {test::path_graph(2)});
  ClientStates states = ClientStates::init(2, Vec::Zero(2));
  states.x << 1.0, 3.0, -2.0, 4.0;
  const double gamma = 0.1;
  Eigen::MatrixXd g(2, 2);
  g << 0.5, -1.5, 2.0, 1.0;
  const GradientFn grad = [&](int i, const Vec&, Vec& out) { out = g.col(i); };
  d2d_round(states, topo, grad, gamma, true);
  // Both end at mean(x) - gamma mean(g): (2 - 0.1*(-0.5), 1 - 0.1*1.5) by hand.
  for (int i = 0; i < 2; ++i) check_vec(states.x.col(i), {2.05, 0.85}, 1e-14);
}

TEST_CASE("SD-GT trajectory on the tiny instance") {
  Trainer trainer(tiny_config(Algorithm::kSdgt, 3), test::tiny_topology(),
                  test::tiny_least_squares());
  trainer.step();
  check_vec(trainer.server().x_global, {-0.028811728395061735, -0.00246913580246913});
  trainer.step();
  check_vec(trainer.server().x_global, {-0.05094973136716964, -0.009210344031016622});
  const MetricsRecord rec = trainer.step();
  check_vec(trainer.server().x_global, {-0.0686083699965011, -0.017329325537933808});

  check_vec(trainer.server().psi.col(0), {-0.19785169064043723, 1.3273802691101222});
  check_vec(trainer.server().psi.col(1), {0.19785169064043723, -1.3273802691101222});
  const Eigen::MatrixXd& z = trainer.clients().z;
  check_vec(z.col(0), {0.2638336082764685, -0.38631264082113514}, 1e-11);
  check_vec(z.col(1), {1.6104630248786436, -0.024881641573408775}, 1e-11);
  check_vec(z.col(2), {-1.874296633155112, 0.4111942823945447}, 1e-11);
  check_vec(z.col(3), {1.879320655935569, -0.4491444521344004}, 1e-11);
  check_vec(z.col(4), {-1.469269550882133, 0.02609367321834033}, 1e-11);
  check_vec(z.col(5), {-0.4100511050534361, 0.42305077891605974}, 1e-11);

  // Diagnostics of round 3.
  CHECK(close(rec.delta, 0.0006287780258729729, 1e-11));
  CHECK(close(rec.gamma, 0.0011793009515022796, 1e-11));
  CHECK(close(rec.y, 0.00022364695202025295, 1e-11));
  CHECK(close(rec.z, 0.21834292745619513, 1e-11));
}

TEST_CASE("SD-GT reaches the optimum of the tiny instance") {
  RunConfig cfg = tiny_config(Algorithm::kSdgt, 400);
  cfg.K = 3;
  const auto records = run_sdgt(cfg, test::tiny_topology(), test::tiny_least_squares());
  // Oracle: squared distance 9.9e-32 after 400 rounds.
  CHECK(records.back().dist_to_opt_sq < 1e-24);
}

TEST_CASE("SD-FedAvg trajectory on the tiny instance") {
  const auto records = run_sd_fedavg(tiny_config(Algorithm::kSdFedAvg, 3),
                                     test::tiny_topology(), test::tiny_least_squares());
  REQUIRE(records.size() == 3);
  Trainer trainer(tiny_config(Algorithm::kSdFedAvg, 3), test::tiny_topology(),
                  test::tiny_least_squares());
  trainer.step();
  check_vec(trainer.server().x_global, {-0.028811728395061735, -0.00246913580246913});
  trainer.step();
  check_vec(trainer.server().x_global, {-0.050159472165066304, -0.009378296705913738});
  trainer.step();
  check_vec(trainer.server().x_global, {-0.06693078549702822, -0.017580414989662993});
}

TEST_CASE("SCAFFOLD trajectory on the tiny instance") {
  Trainer trainer(tiny_config(Algorithm::kScaffold, 3), test::tiny_topology(),
                  test::tiny_least_squares());
  trainer.step();
  check_vec(trainer.server().x_global, {-0.02810185185185185, -0.0019444444444444292});
  trainer.step();
  check_vec(trainer.server().x_global, {-0.051130107596021934, -0.008466135116598076});
  trainer.step();
  check_vec(trainer.server().x_global, {-0.06927113618102787, -0.016702290080986747});
}

TEST_CASE("SCAFFOLD with K = 1 and full sampling takes centralized gradient steps") {
  RunConfig cfg = tiny_config(Algorithm::kScaffold, 2);
  cfg.K = 1;
  Trainer trainer(cfg, test::tiny_topology(), test::tiny_least_squares());
  trainer.step();
  check_vec(trainer.server().x_global, {-0.016666666666666666, 9.251858538542971e-19});
  trainer.step();
  check_vec(trainer.server().x_global, {-0.03069444444444444, -0.0019444444444444414});
}

TEST_CASE("diagnostics on hand traces") {
  // Gamma: models (0), (2) around x_g = (1).
  Eigen::MatrixXd ends(1, 2);
  ends << 0.0, 2.0;
  CHECK(compute_gamma(ends, Vec::Constant(1, 1.0)) == 1.0);

  // Delta: one client one unit away.
  Eigen::MatrixXd it = Eigen::MatrixXd::Zero(3, 1);
  it(0, 0) = 1.0;
  std::vector<Eigen::MatrixXd> iterates{it};
  CHECK(compute_delta(iterates, Vec::Zero(3)) == 1.0);

  // Two clients, two steps: by hand (5 + 0 + 9 + 2) / 2 = 8.
  Eigen::MatrixXd a(2, 2), b(2, 2);
  a << 1, 0, 2, 0;
  b << 3, 1, 0, 1;
  std::vector<Eigen::MatrixXd> two{a, b};
  CHECK(compute_delta(two, Vec::Zero(2)) == 8.0);
}

TEST_CASE("round communication cost by hand") {
  const CostModel costs = CostModel::from_delta({10.0}, 0.1);
  const std::vector<int> sizes{4}, full{4}, one{1};
  CHECK(close(round_communication_cost(costs, sizes, full, 1, true, false), 11.0));
  // Minimum sampling still pays E_s / m_s.
  CHECK(close(round_communication_cost(costs, sizes, one, 1, false, false), 2.5));
}

TEST_CASE("co-optimizer objective by hand") {
  CoOptProblem problem;
  problem.subnet_sizes = {4};
  problem.ds_cost = {10.0};
  problem.d2d_cost = {1.0};
  problem.lambda = {1.0, 1.0, 0.0, 0.0};
  const std::vector<double> zero{0.0};
  CHECK(objective(zero, 1.0, 1.0, problem) == doctest::Approx(3.0).epsilon(1e-15));

  CHECK(sampling_ratio(5, 2) == doctest::Approx(0.6).epsilon(1e-15));
  const CoOptSolution point = evaluate_point(std::vector<int>{2}, 4, [] {
    CoOptProblem p;
    p.subnet_sizes = {5};
    p.ds_cost = {10.0};
    p.d2d_cost = {1.0};
    return p;
  }());
  CHECK(point.p == doctest::Approx(0.64).epsilon(1e-15));
  CHECK(close(point.objective, 7.620001879617264));

  CoOptProblem two;
  two.subnet_sizes = {3, 7};
  two.ds_cost = {5.0, 40.0};
  two.d2d_cost = {0.2, 0.1};
  CHECK(close(evaluate_point(std::vector<int>{2, 4}, 5, two).objective, 5.781401554650391));
}

TEST_CASE("co-optimizer matches brute force on frozen instances") {
  CoOptProblem two;
  two.subnet_sizes = {3, 7};
  two.ds_cost = {5.0, 40.0};
  two.d2d_cost = {0.2, 0.1};
  two.k_max = 30;
  const CoOptSolution a = solve(two);
  CHECK(close(a.objective, 5.151580060447477));
  CHECK(a.samples == std::vector<int>{3, 5});
  CHECK(a.K == 30);

  const CoOptProblem ref =
      CoOptProblem::from_delta({4, 5, 6}, {10.0, 55.0, 90.0}, 1e-3, {1.0, 1.0, 0.1, 0.01}, 50);
  const CoOptSolution b = solve(ref);
  CHECK(close(b.objective, 11.787543218874665));
  CHECK(b.samples == std::vector<int>{2, 3, 3});
  CHECK(b.K == 50);
}

}  // TEST_SUITE
