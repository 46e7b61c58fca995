#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "sdgt/rng.hpp"

namespace sdgt {

using Adjacency = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

// Disjoint D2D groups of clients. Client indices are global (0..n-1); the
// matrices of subnet s are indexed by position within subnets[s].
struct SubnetTopology {
  std::vector<std::vector<int>> subnets;
  std::vector<Adjacency> adjacency;
  std::vector<Eigen::MatrixXd> weights;
  std::vector<double> rho;

  int num_clients() const;
  int num_subnets() const { return static_cast<int>(subnets.size()); }
  int subnet_size(int s) const { return static_cast<int>(subnets[s].size()); }
  bool equal_sizes() const;

  // Block-diagonal mixing matrix over all clients (n x n).
  Eigen::MatrixXd global_weights() const;
};

struct TopologySpec {
  int n = 30;
  int subnets = 6;
  double radius_min = 0.5;
  double radius_max = 3.5;
  std::uint64_t seed = 1;
  int max_retries = 1000;
};

// Points uniform in [0,2]^2, edges between points within `radius`, redrawn
// from the same stream until the graph is connected.
Adjacency generate_geometric_subnet(int m, double radius, RandomStream& rng,
                                    int max_retries = 1000);
Adjacency generate_geometric_subnet(int m, double radius, std::uint64_t seed,
                                    int max_retries = 1000);

bool is_connected(const Adjacency& adj);
bool is_symmetric(const Adjacency& adj);

// w_ij = 1 / (1 + max(deg_i, deg_j)) on edges, diagonal takes the remainder.
Eigen::MatrixXd metropolis_hastings_weights(const Adjacency& adj);

// 1 - ||W - J||_2^2. Fails when the spectral norm reaches 1 (disconnected or
// periodic support).
double mixing_rate(const Eigen::MatrixXd& w);

struct MixingCheckReport {
  bool passed = true;
  int trials = 0;
  int violations = 0;
  double worst_ratio = 0.0;  // max LHS / RHS over trials with RHS > 0
  std::string detail;
};

// Samples X (8 x m, standard normal) and tests
// ||X (W - J)||_F^2 <= (1 - rho) ||X (I - J)||_F^2 with relative slack 1e-9
// plus an absolute floor of 1e-12 ||X (I - J)||_F^2.
MixingCheckReport verify_mixing_inequality(const Eigen::MatrixXd& w, double rho,
                                           int trials, std::uint64_t seed);

// Contiguous equal-as-possible blocks, one random geometric graph per block
// with radius uniform in [radius_min, radius_max].
SubnetTopology build_topology(const TopologySpec& spec);

// Assembles a topology from explicit subnets/adjacency (e.g. hand-built test
// graphs); computes W and rho.
SubnetTopology make_topology(std::vector<std::vector<int>> subnets,
                             std::vector<Adjacency> adjacency);

// Throws sdgt::Error describing the first violated invariant.
void validate_topology(const SubnetTopology& topo);

double max_stochasticity_error(const Eigen::MatrixXd& w);

nlohmann::json topology_to_json(const SubnetTopology& topo);
SubnetTopology topology_from_json(const nlohmann::json& doc);
void save_topology(const SubnetTopology& topo, const std::string& path);
SubnetTopology load_topology(const std::string& path);

}  // namespace sdgt
