#include <cmath>

#include "doctest.h"
#include "sdgt/algorithms.hpp"
#include "sdgt/diagnostics.hpp"
#include "sdgt/error.hpp"
#include "test_support.hpp"

using namespace sdgt;

TEST_SUITE("diagnostics") {

TEST_CASE("Delta and Gamma vanish when everyone sits at x_g") {
  const Vec xg = Vec::LinSpaced(3, 1.0, 3.0);
  const Eigen::MatrixXd at = xg.replicate(1, 4);
  std::vector<Eigen::MatrixXd> iterates{at, at};
  CHECK(compute_delta(iterates, xg) == 0.0);
  CHECK(compute_gamma(at, xg) == 0.0);
}

TEST_CASE("orthogonal decomposition of the tracking errors") {
  const auto topo = test::tiny_topology();
  RandomStream rng(8, StreamId::kTest);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd g(4, 6);
    for (auto& v : g.reshaped()) v = rng.normal();
    const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(4, 6);
    const TrackerErrors e = compute_y_z(zero, zero, g, *topo);
    const Eigen::MatrixXd centered = g.colwise() - g.rowwise().mean();
    const double total = centered.squaredNorm() / 6.0;
    CHECK(std::abs(e.y + e.z - total) <= 1e-9 * total);
    // Pieces computed directly.
    const Eigen::MatrixXd jc = subnet_average(g, *topo);
    CHECK(e.z == doctest::Approx((g - jc).squaredNorm() / 6.0).epsilon(1e-12));
  }
}

TEST_CASE("homogeneous gradients with zero trackers give Y = Z = 0") {
  const auto topo = test::tiny_topology();
  const Eigen::MatrixXd g = Vec::LinSpaced(3, -1.0, 1.0).replicate(1, 6);
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(3, 6);
  const TrackerErrors e = compute_y_z(zero, zero, g, *topo);
  CHECK(e.y < 1e-30);
  CHECK(e.z < 1e-30);
}

TEST_CASE("diagnostics are pure functions of a serialized trace") {
  const auto topo = test::tiny_topology();
  RunConfig cfg;
  cfg.K = 3;
  cfg.T = 4;
  cfg.gamma = 0.05;
  cfg.samples_per_subnet = {2, 3};
  cfg.diagnostics = true;
  Trainer trainer(cfg, topo, test::tiny_least_squares());
  trainer.run();
  REQUIRE(trainer.last_trace().has_value());
  const RoundTrace& trace = *trainer.last_trace();
  const RoundTrace back = trace_from_json(nlohmann::json::parse(trace_to_json(trace).dump()));
  const TraceDiagnostics a = diagnostics_from_trace(trace, *topo);
  const TraceDiagnostics b = diagnostics_from_trace(back, *topo);
  CHECK(a.delta == b.delta);
  CHECK(a.gamma == b.gamma);
  CHECK(a.y == b.y);
  CHECK(a.z == b.z);
  const MetricsRecord& last = trainer.records().back();
  CHECK(last.delta == a.delta);
  CHECK(last.gamma == a.gamma);
  CHECK(last.y == a.y);
  CHECK(last.z == a.z);
}

TEST_CASE("converged SD-GT drives every diagnostic to zero") {
  const auto topo = test::tiny_topology();
  RunConfig cfg;
  cfg.K = 3;
  cfg.T = 400;
  cfg.gamma = 0.05;
  cfg.samples_per_subnet = {3, 3};
  cfg.diagnostics = true;
  const auto records = run_sdgt(cfg, topo, test::tiny_least_squares());
  const MetricsRecord& last = records.back();
  CHECK(last.grad_norm_sq <= 1e-8);
  CHECK(last.y <= 1e-8);
  CHECK(last.z <= 1e-8);
  CHECK(last.gamma <= 1e-8);
  CHECK(last.delta <= 1e-8);
}

TEST_CASE("diagnostics are NaN unless enabled") {
  const auto topo = test::tiny_topology();
  RunConfig cfg;
  cfg.K = 2;
  cfg.T = 2;
  cfg.gamma = 0.05;
  cfg.samples_per_subnet = {3, 3};
  const auto records = run_sdgt(cfg, topo, test::tiny_least_squares());
  CHECK(std::isnan(records.back().delta));
  CHECK(std::isnan(records.back().z));
}

TEST_CASE("metrics CSV has the fixed header and round-trips") {
  MetricsRecord r;
  r.t = 3;
  r.loss = 0.1;
  r.grad_norm_sq = 1e-300;
  r.dist_to_opt_sq = 2.5;
  r.comm_cost_cum = 12.0;
  const std::vector<MetricsRecord> rows{r};
  const std::string csv = metrics_to_csv(rows);
  CHECK(csv.rfind(std::string(kCsvHeader) + "\n", 0) == 0);
  const CsvTable table = parse_csv(csv);
  CHECK(table.columns.size() == 10);
  REQUIRE(table.rows.size() == 1);
  CHECK(table.column("grad_norm_sq")[0] == 1e-300);
  CHECK(std::isnan(table.column("Delta")[0]));
  CHECK(table.column_index("nope") == -1);
  CHECK_THROWS_AS(table.column("nope"), Error);
}

TEST_CASE("cost model validation") {
  CostModel c = CostModel::from_delta({1.0, 2.0}, 0.5);
  CHECK(c.d2d_cost == std::vector<double>{0.5, 1.0});
  CHECK_THROWS_AS(CostModel::from_delta({1.0}, -1.0), Error);
  c.d2d_cost[0] = -0.1;
  CHECK_THROWS_AS(validate_costs(c, 2), Error);
  CHECK_THROWS_AS(validate_costs(CostModel::from_delta({1.0}, 0.1), 2), Error);
  const std::vector<int> sizes{4}, zero{0};
  CHECK_THROWS_AS(round_communication_cost(CostModel::from_delta({1.0}, 0.1), sizes, zero, 1,
                                           true, false),
                  Error);
  // Tracker exchange surcharge.
  CostModel t = CostModel::from_delta({10.0}, 0.1);
  t.tracker_exchange_rounds = 1.0;
  const std::vector<int> full{4};
  CHECK(round_communication_cost(t, sizes, full, 2, true, true) == doctest::Approx(13.0));
}

}  // TEST_SUITE
