#include "sdgt/topology.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <set>

#include "sdgt/error.hpp"
#include "sdgt/io.hpp"

namespace sdgt {

int SubnetTopology::num_clients() const {
  int n = 0;
  for (const auto& s : subnets) n += static_cast<int>(s.size());
  return n;
}

bool SubnetTopology::equal_sizes() const {
  for (const auto& s : subnets)
    if (s.size() != subnets.front().size()) return false;
  return true;
}

Eigen::MatrixXd SubnetTopology::global_weights() const {
  const int n = num_clients();
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (int s = 0; s < num_subnets(); ++s) {
    const auto& members = subnets[s];
    for (std::size_t a = 0; a < members.size(); ++a)
      for (std::size_t b = 0; b < members.size(); ++b)
        w(members[a], members[b]) = weights[s](a, b);
  }
  return w;
}

bool is_symmetric(const Adjacency& adj) {
  if (adj.rows() != adj.cols()) return false;
  return adj == adj.transpose();
}

bool is_connected(const Adjacency& adj) {
  const Eigen::Index m = adj.rows();
  if (m <= 1) return true;
  std::vector<bool> seen(m, false);
  std::queue<Eigen::Index> frontier;
  frontier.push(0);
  seen[0] = true;
  Eigen::Index visited = 1;
  while (!frontier.empty()) {
    const Eigen::Index i = frontier.front();
    frontier.pop();
    for (Eigen::Index j = 0; j < m; ++j) {
      if (adj(i, j) && !seen[j]) {
        seen[j] = true;
        ++visited;
        frontier.push(j);
      }
    }
  }
  return visited == m;
}

Adjacency generate_geometric_subnet(int m, double radius, RandomStream& rng, int max_retries) {
  require(m >= 1, "subnet size must be at least 1");
  require(radius > 0.0, "radius must be positive");
  require(max_retries >= 1, "retry limit must be at least 1");
  for (int attempt = 0; attempt < max_retries; ++attempt) {
    Eigen::MatrixX2d pts(m, 2);
    for (int i = 0; i < m; ++i) {
      pts(i, 0) = rng.uniform(0.0, 2.0);
      pts(i, 1) = rng.uniform(0.0, 2.0);
    }
    Adjacency adj = Adjacency::Zero(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = i + 1; j < m; ++j)
        if ((pts.row(i) - pts.row(j)).norm() <= radius) adj(i, j) = adj(j, i) = 1;
    if (is_connected(adj)) return adj;
  }
  fail(ErrorCode::kDisconnected,
       "cannot produce connected graph: m=" + std::to_string(m) + " radius=" +
           format_double(radius) + " after " + std::to_string(max_retries) + " attempts");
}

Adjacency generate_geometric_subnet(int m, double radius, std::uint64_t seed, int max_retries) {
  RandomStream rng(seed, StreamId::kTopology);
  return generate_geometric_subnet(m, radius, rng, max_retries);
}

Eigen::MatrixXd metropolis_hastings_weights(const Adjacency& adj) {
  require(adj.rows() == adj.cols(), "adjacency must be square");
  require(is_symmetric(adj), "adjacency must be symmetric");
  const Eigen::Index m = adj.rows();
  for (Eigen::Index i = 0; i < m; ++i)
    require(adj(i, i) == 0, "adjacency must have zero diagonal");
  if (!is_connected(adj)) fail(ErrorCode::kDisconnected, "adjacency graph is disconnected");

  Eigen::VectorXi deg(m);
  for (Eigen::Index i = 0; i < m; ++i) deg(i) = adj.row(i).cast<int>().sum();

  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    double off = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      if (i == j || !adj(i, j)) continue;
      w(i, j) = 1.0 / (1.0 + std::max(deg(i), deg(j)));
      off += w(i, j);
    }
    w(i, i) = 1.0 - off;
  }
  return w;
}

double mixing_rate(const Eigen::MatrixXd& w) {
  require(w.rows() == w.cols() && w.rows() >= 1, "mixing matrix must be square and non-empty");
  const Eigen::Index m = w.rows();
  const Eigen::MatrixXd dev = w - Eigen::MatrixXd::Constant(m, m, 1.0 / static_cast<double>(m));
  const double sigma = Eigen::JacobiSVD<Eigen::MatrixXd>(dev).singularValues()(0);
  if (sigma >= 1.0 - 1e-12)
    fail(ErrorCode::kDisconnected,
         "||W - J||_2 = " + format_double(sigma) + " >= 1: support is disconnected or periodic");
  return 1.0 - sigma * sigma;
}

MixingCheckReport verify_mixing_inequality(const Eigen::MatrixXd& w, double rho, int trials,
                                           std::uint64_t seed) {
  constexpr int kRows = 8;
  constexpr double kSlack = 1e-9;
  constexpr double kFloor = 1e-12;
  const Eigen::Index m = w.rows();
  const Eigen::MatrixXd j = Eigen::MatrixXd::Constant(m, m, 1.0 / static_cast<double>(m));
  const Eigen::MatrixXd w_dev = w - j;
  const Eigen::MatrixXd i_dev = Eigen::MatrixXd::Identity(m, m) - j;

  MixingCheckReport report;
  report.trials = trials;
  RandomStream rng(seed, StreamId::kTest);
  Eigen::MatrixXd x(kRows, m);
  for (int t = 0; t < trials; ++t) {
    for (Eigen::Index c = 0; c < m; ++c)
      for (int r = 0; r < kRows; ++r) x(r, c) = rng.normal();
    const double lhs = (x * w_dev).squaredNorm();
    const double scale = (x * i_dev).squaredNorm();
    const double rhs = (1.0 - rho) * scale;
    if (rhs > 0.0) report.worst_ratio = std::max(report.worst_ratio, lhs / rhs);
    // Absolute floor: when W == J up to rounding (complete graph) rho is 1
    // and the right-hand side vanishes while the left is O(eps^2).
    if (lhs > rhs * (1.0 + kSlack) + kFloor * scale) {
      if (report.violations == 0)
        report.detail = "trial " + std::to_string(t) + ": lhs=" + format_double(lhs) +
                        " rhs=" + format_double(rhs);
      ++report.violations;
    }
  }
  report.passed = report.violations == 0;
  return report;
}

double max_stochasticity_error(const Eigen::MatrixXd& w) {
  const double rows = (w.rowwise().sum().array() - 1.0).abs().maxCoeff();
  const double cols = (w.colwise().sum().array() - 1.0).abs().maxCoeff();
  return std::max(rows, cols);
}

SubnetTopology make_topology(std::vector<std::vector<int>> subnets,
                             std::vector<Adjacency> adjacency) {
  require(subnets.size() == adjacency.size(), "one adjacency matrix per subnet required");
  SubnetTopology topo;
  topo.subnets = std::move(subnets);
  topo.adjacency = std::move(adjacency);
  for (const auto& adj : topo.adjacency) {
    topo.weights.push_back(metropolis_hastings_weights(adj));
    topo.rho.push_back(mixing_rate(topo.weights.back()));
  }
  validate_topology(topo);
  return topo;
}

SubnetTopology build_topology(const TopologySpec& spec) {
  require(spec.n >= 1, "topology needs at least one client");
  require(spec.subnets >= 1 && spec.subnets <= spec.n, "subnet count must be in 1..n");
  require(spec.radius_min > 0.0 && spec.radius_max >= spec.radius_min,
          "radius range must satisfy 0 < radius_min <= radius_max");

  // Radii and each subnet's points come from separate substreams, so the
  // graph of subnet s does not depend on how many retries earlier subnets used.
  RandomStream radii(spec.seed, StreamId::kTopology, 0);
  std::vector<std::vector<int>> subnets(spec.subnets);
  std::vector<Adjacency> adjacency;
  int next = 0;
  for (int s = 0; s < spec.subnets; ++s) {
    const int size = spec.n / spec.subnets + (s < spec.n % spec.subnets ? 1 : 0);
    for (int k = 0; k < size; ++k) subnets[s].push_back(next++);
    const double radius = radii.uniform(spec.radius_min, spec.radius_max);
    RandomStream points(spec.seed, StreamId::kTopology, static_cast<std::uint64_t>(s) + 1);
    adjacency.push_back(generate_geometric_subnet(size, radius, points, spec.max_retries));
  }
  return make_topology(std::move(subnets), std::move(adjacency));
}

void validate_topology(const SubnetTopology& topo) {
  const std::size_t count = topo.subnets.size();
  require(count >= 1, "topology has no subnets");
  require(topo.adjacency.size() == count && topo.weights.size() == count &&
              topo.rho.size() == count,
          "topology arrays disagree on the number of subnets");
  const int n = topo.num_clients();
  std::set<int> seen;
  for (std::size_t s = 0; s < count; ++s) {
    const auto& members = topo.subnets[s];
    const std::string tag = "subnet " + std::to_string(s) + ": ";
    require(!members.empty(), tag + "empty subnet");
    for (int c : members) {
      require(c >= 0 && c < n, tag + "client index out of range");
      require(seen.insert(c).second, tag + "client " + std::to_string(c) + " appears twice");
    }
    const auto m = static_cast<Eigen::Index>(members.size());
    const Adjacency& adj = topo.adjacency[s];
    const Eigen::MatrixXd& w = topo.weights[s];
    require(adj.rows() == m && adj.cols() == m, tag + "adjacency has wrong shape");
    require(w.rows() == m && w.cols() == m, tag + "mixing matrix has wrong shape");
    require(is_symmetric(adj), tag + "adjacency not symmetric");
    if (!is_connected(adj)) fail(ErrorCode::kDisconnected, tag + "graph is disconnected");
    require(max_stochasticity_error(w) < 1e-12, tag + "mixing matrix not doubly stochastic");
    require((w - w.transpose()).cwiseAbs().maxCoeff() == 0.0, tag + "mixing matrix not symmetric");
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < m; ++j) {
        require(w(i, j) >= 0.0, tag + "negative mixing weight");
        if (i != j && !adj(i, j)) require(w(i, j) == 0.0, tag + "weight on a non-edge");
      }
    require(topo.rho[s] > 0.0 && topo.rho[s] <= 1.0, tag + "mixing rate outside (0, 1]");
  }
  require(static_cast<int>(seen.size()) == n, "subnets do not cover all clients");
}

nlohmann::json topology_to_json(const SubnetTopology& topo) {
  nlohmann::json doc;
  doc["format"] = "sdgt-topology/1";
  doc["num_clients"] = topo.num_clients();
  auto& arr = doc["subnets"] = nlohmann::json::array();
  for (int s = 0; s < topo.num_subnets(); ++s) {
    nlohmann::json sub;
    sub["members"] = topo.subnets[s];
    auto edges = nlohmann::json::array();
    const Adjacency& adj = topo.adjacency[s];
    for (Eigen::Index i = 0; i < adj.rows(); ++i)
      for (Eigen::Index j = i + 1; j < adj.cols(); ++j)
        if (adj(i, j)) edges.push_back({i, j});
    sub["edges"] = std::move(edges);
    auto rows = nlohmann::json::array();
    const Eigen::MatrixXd& w = topo.weights[s];
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      std::vector<double> row(w.cols());
      for (Eigen::Index j = 0; j < w.cols(); ++j) row[j] = w(i, j);
      rows.push_back(row);
    }
    sub["W"] = std::move(rows);
    sub["rho"] = topo.rho[s];
    arr.push_back(std::move(sub));
  }
  return doc;
}

SubnetTopology topology_from_json(const nlohmann::json& doc) {
  try {
    SubnetTopology topo;
    for (const auto& sub : doc.at("subnets")) {
      auto members = sub.at("members").get<std::vector<int>>();
      const auto m = static_cast<Eigen::Index>(members.size());
      Adjacency adj = Adjacency::Zero(m, m);
      for (const auto& e : sub.at("edges")) {
        const int i = e.at(0).get<int>();
        const int j = e.at(1).get<int>();
        require(i >= 0 && j >= 0 && i < m && j < m && i != j, "edge index out of range");
        adj(i, j) = adj(j, i) = 1;
      }
      const auto& rows = sub.at("W");
      require(static_cast<Eigen::Index>(rows.size()) == m, "W has wrong number of rows");
      Eigen::MatrixXd w(m, m);
      for (Eigen::Index i = 0; i < m; ++i) {
        const auto row = rows.at(i).get<std::vector<double>>();
        require(static_cast<Eigen::Index>(row.size()) == m, "W row has wrong length");
        for (Eigen::Index j = 0; j < m; ++j) w(i, j) = row[j];
      }
      topo.subnets.push_back(std::move(members));
      topo.adjacency.push_back(std::move(adj));
      topo.weights.push_back(std::move(w));
      topo.rho.push_back(sub.at("rho").get<double>());
    }
    validate_topology(topo);
    return topo;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("malformed topology document: ") + e.what());
  }
}

void save_topology(const SubnetTopology& topo, const std::string& path) {
  write_file_atomic(path, topology_to_json(topo).dump(2) + "\n");
}

SubnetTopology load_topology(const std::string& path) {
  return topology_from_json(read_json_file(path));
}

}  // namespace sdgt
