#include <cmath>
#include <deque>

#include "doctest.h"
#include "sdgt/error.hpp"
#include "sdgt/topology.hpp"
#include "test_support.hpp"

using namespace sdgt;

namespace {

// Breadth-first search, written independently of is_connected().
bool bfs_connected(const Adjacency& adj) {
  const int m = static_cast<int>(adj.rows());
  std::vector<bool> seen(m, false);
  std::deque<int> queue{0};
  seen[0] = true;
  int count = 1;
  while (!queue.empty()) {
    const int u = queue.front();
    queue.pop_front();
    for (int v = 0; v < m; ++v)
      if (adj(u, v) && !seen[v]) {
        seen[v] = true;
        ++count;
        queue.push_back(v);
      }
  }
  return count == m;
}

}  // namespace

TEST_SUITE("topology") {

TEST_CASE("geometric subnet with seed 7 is connected and symmetric") {
  const Adjacency adj = generate_geometric_subnet(5, 0.9, 7);
  CHECK(bfs_connected(adj));
  CHECK(is_symmetric(adj));
  CHECK(adj.diagonal().cast<int>().sum() == 0);
}

TEST_CASE("generation is deterministic") {
  CHECK(generate_geometric_subnet(8, 0.8, 3) == generate_geometric_subnet(8, 0.8, 3));
  TopologySpec spec;
  const SubnetTopology a = build_topology(spec);
  const SubnetTopology b = build_topology(spec);
  for (int s = 0; s < a.num_subnets(); ++s) {
    CHECK(a.adjacency[s] == b.adjacency[s]);
    CHECK(a.weights[s] == b.weights[s]);
  }
}

TEST_CASE("hopeless radius reports a disconnected graph") {
  try {
    generate_geometric_subnet(20, 1e-3, 1, 5);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDisconnected);
  }
}

TEST_CASE("connectivity and symmetry helpers") {
  CHECK(is_connected(test::path_graph(4)));
  Adjacency split = Adjacency::Zero(4, 4);
  split(0, 1) = split(1, 0) = split(2, 3) = split(3, 2) = 1;
  CHECK_FALSE(is_connected(split));
  Adjacency asym = test::path_graph(3);
  asym(0, 1) = 0;
  CHECK_FALSE(is_symmetric(asym));
}

TEST_CASE("default topology partitions 30 clients into 6 valid subnets") {
  const SubnetTopology topo = build_topology(TopologySpec{});
  CHECK(topo.num_clients() == 30);
  CHECK(topo.num_subnets() == 6);
  CHECK(topo.equal_sizes());
  CHECK_NOTHROW(validate_topology(topo));
  std::vector<int> owner(30, -1);
  for (int s = 0; s < topo.num_subnets(); ++s) {
    for (int c : topo.subnets[s]) {
      CHECK(owner[c] == -1);
      owner[c] = s;
    }
    const auto& w = topo.weights[s];
    CHECK(max_stochasticity_error(w) < 1e-12);
    CHECK((w - w.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(topo.rho[s] > 0.0);
    CHECK(topo.rho[s] <= 1.0 + 1e-12);
    CHECK(verify_mixing_inequality(w, topo.rho[s], 200, 9).passed);
  }
  const Eigen::MatrixXd g = topo.global_weights();
  CHECK(g.rows() == 30);
  CHECK(max_stochasticity_error(g) < 1e-12);
}

TEST_CASE("uneven splits keep sizes within one") {
  TopologySpec spec;
  spec.n = 14;
  spec.subnets = 4;
  const SubnetTopology topo = build_topology(spec);
  CHECK_FALSE(topo.equal_sizes());
  for (int s = 0; s < 4; ++s) CHECK((topo.subnet_size(s) == 3 || topo.subnet_size(s) == 4));
}

TEST_CASE("invalid topologies are rejected") {
  CHECK_THROWS_AS(make_topology({{0, 1}, {1, 2}}, {test::path_graph(2), test::path_graph(2)}),
                  Error);
  SubnetTopology topo = make_topology({{0, 1, 2}}, {test::path_graph(3)});
  topo.weights[0](0, 0) += 0.1;
  CHECK_THROWS_AS(validate_topology(topo), Error);
  TopologySpec bad;
  bad.subnets = 40;
  CHECK_THROWS_AS(build_topology(bad), Error);
}

TEST_CASE("topology documents round-trip") {
  const SubnetTopology topo = build_topology(TopologySpec{});
  const std::string dir = test::temp_dir("topology");
  save_topology(topo, dir + "/t.json");
  const SubnetTopology back = load_topology(dir + "/t.json");
  REQUIRE(back.num_subnets() == topo.num_subnets());
  for (int s = 0; s < topo.num_subnets(); ++s) {
    CHECK(back.subnets[s] == topo.subnets[s]);
    CHECK(back.adjacency[s] == topo.adjacency[s]);
    CHECK(back.weights[s] == topo.weights[s]);
    CHECK(back.rho[s] == topo.rho[s]);
  }
  CHECK(topology_to_json(back) == topology_to_json(topo));
}

}  // TEST_SUITE
