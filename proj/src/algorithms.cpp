#include "sdgt/algorithms.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "sdgt/error.hpp"
#include "sdgt/io.hpp"

namespace sdgt {

std::string algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::kSdgt: return "sdgt";
    case Algorithm::kSdFedAvg: return "sd_fedavg";
    case Algorithm::kScaffold: return "scaffold";
  }
  return "unknown";
}

Algorithm parse_algorithm(const std::string& name) {
  std::string key;
  for (char c : name)
    if (c != '-' && c != '_') key += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (key == "sdgt") return Algorithm::kSdgt;
  if (key == "sdfedavg" || key == "fedavg") return Algorithm::kSdFedAvg;
  if (key == "scaffold") return Algorithm::kScaffold;
  fail(ErrorCode::kInvalidArgument, "unknown algorithm '" + name + "'");
}

std::vector<int> samples_from_rate(const SubnetTopology& topo, double rate) {
  require(rate > 0.0 && rate <= 1.0, "sample rate must lie in (0, 1]");
  std::vector<int> h;
  for (int s = 0; s < topo.num_subnets(); ++s) {
    const int m = topo.subnet_size(s);
    h.push_back(std::clamp(static_cast<int>(std::lround(rate * m)), 1, m));
  }
  return h;
}

void validate_config(const RunConfig& cfg, const SubnetTopology& topo, const Problem& problem) {
  require(cfg.K >= 1, "K must be a positive integer");
  require(cfg.T >= 0, "T must be non-negative");
  require(std::isfinite(cfg.gamma) && cfg.gamma >= 0.0, "step size must be non-negative");
  if (cfg.algorithm != Algorithm::kSdFedAvg)
    require(cfg.gamma > 0.0, algorithm_name(cfg.algorithm) + " needs a positive step size");
  require(topo.num_clients() == problem.num_clients(),
          "topology and problem disagree on the number of clients");
  require(static_cast<int>(cfg.samples_per_subnet.size()) == topo.num_subnets(),
          "one sample count h_s per subnet required");
  for (int s = 0; s < topo.num_subnets(); ++s)
    require(cfg.samples_per_subnet[s] >= 1 && cfg.samples_per_subnet[s] <= topo.subnet_size(s),
            "h_s must lie in 1..m_s for subnet " + std::to_string(s));
  require(cfg.batch_size >= 0, "batch size must be non-negative");
  for (int i = 0; i < problem.num_clients(); ++i)
    require(cfg.batch_size <= problem.samples(i), "batch size exceeds a client's sample count");
  require(cfg.divergence_guard > 0.0, "divergence guard must be positive");
  if (!cfg.costs.ds_cost.empty() || !cfg.costs.d2d_cost.empty())
    validate_costs(cfg.costs, topo.num_subnets());
}

ClientStates ClientStates::init(int n, const Vec& x0) {
  ClientStates s;
  const Eigen::Index d = x0.size();
  s.x = x0.replicate(1, n);
  s.round_start = s.x;
  s.y = Eigen::MatrixXd::Zero(d, n);
  s.z = Eigen::MatrixXd::Zero(d, n);
  s.z_accum = Eigen::MatrixXd::Zero(d, n);
  s.control = Eigen::MatrixXd::Zero(d, n);
  return s;
}

ServerState ServerState::init(int subnets, const Vec& x0) {
  ServerState s;
  s.x_global = x0;
  s.psi = Eigen::MatrixXd::Zero(x0.size(), subnets);
  s.control = Vec::Zero(x0.size());
  return s;
}

namespace {

Eigen::MatrixXd gather(const Eigen::MatrixXd& m, const std::vector<int>& cols) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t a = 0; a < cols.size(); ++a) out.col(static_cast<Eigen::Index>(a)) = m.col(cols[a]);
  return out;
}

void scatter(Eigen::MatrixXd& m, const std::vector<int>& cols, const Eigen::MatrixXd& src) {
  for (std::size_t a = 0; a < cols.size(); ++a) m.col(cols[a]) = src.col(static_cast<Eigen::Index>(a));
}

}  // namespace

void d2d_round(ClientStates& states, const SubnetTopology& topo, const GradientFn& grad,
               double gamma, bool use_trackers) {
  const int n = states.num_clients();
  Eigen::MatrixXd half(states.x.rows(), n);
  Vec g;
  for (int i = 0; i < n; ++i) {
    grad(i, states.x.col(i), g);
    if (use_trackers) {
      half.col(i) = states.x.col(i) - gamma * (g + states.y.col(i) + states.z.col(i));
      // z~ = x_half - x + gamma*y = -gamma (g + z)
      states.z_accum.col(i) -= gamma * (g + states.z.col(i));
    } else {
      half.col(i) = states.x.col(i) - gamma * g;
    }
  }
  for (int s = 0; s < topo.num_subnets(); ++s) {
    const auto& members = topo.subnets[s];
    scatter(states.x, members, gather(half, members) * topo.weights[s].transpose());
  }
}

void update_in_subnet_tracker(ClientStates& states, const SubnetTopology& topo, int K,
                              double gamma) {
  require(K >= 1, "K must be at least 1");
  require(gamma > 0.0, "tracker update needs a positive step size");
  const double scale = 1.0 / (K * gamma);
  for (int s = 0; s < topo.num_subnets(); ++s) {
    const auto& members = topo.subnets[s];
    const Eigen::MatrixXd acc = gather(states.z_accum, members);
    const Eigen::MatrixXd residual = acc - acc * topo.weights[s].transpose();
    for (std::size_t a = 0; a < members.size(); ++a)
      states.z.col(members[a]) += scale * residual.col(static_cast<Eigen::Index>(a));
  }
  states.z_accum.setZero();
}

Vec global_aggregate(ServerState& server, ClientStates& states, const SubnetTopology& topo,
                     const std::vector<std::vector<int>>& sampled, int K, double gamma) {
  require(K >= 1, "K must be at least 1");
  require(gamma > 0.0, "global aggregation needs a positive step size");
  const int subnets = topo.num_subnets();
  require(static_cast<int>(sampled.size()) == subnets, "one sampled set per subnet required");
  const Eigen::Index d = states.x.rows();

  Eigen::MatrixXd subnet_mean(d, subnets);
  for (int s = 0; s < subnets; ++s) {
    require(!sampled[s].empty(), "every subnet must contribute at least one client");
    Vec acc = Vec::Zero(d);
    for (int j : sampled[s])
      acc += states.x.col(j) - states.round_start.col(j) + (K * gamma) * states.y.col(j);
    subnet_mean.col(s) = acc / static_cast<double>(sampled[s].size());
  }
  const Vec increment = subnet_mean.rowwise().mean();
  server.x_global += increment;
  server.psi = (subnet_mean.colwise() - increment) / (K * gamma);

  for (int s = 0; s < subnets; ++s)
    for (int j : sampled[s]) {
      states.x.col(j) = server.x_global;
      states.y.col(j) = server.psi.col(s);
    }
  states.round_start = states.x;
  return increment;
}

void fedavg_aggregate(ServerState& server, ClientStates& states, const SubnetTopology& topo,
                      const std::vector<std::vector<int>>& sampled) {
  const int subnets = topo.num_subnets();
  require(static_cast<int>(sampled.size()) == subnets, "one sampled set per subnet required");
  Vec total = Vec::Zero(states.x.rows());
  for (int s = 0; s < subnets; ++s) {
    require(!sampled[s].empty(), "every subnet must contribute at least one client");
    Vec acc = Vec::Zero(states.x.rows());
    for (int j : sampled[s]) acc += states.x.col(j);
    total += acc / static_cast<double>(sampled[s].size());
  }
  server.x_global = total / static_cast<double>(subnets);
  for (const auto& picks : sampled)
    for (int j : picks) states.x.col(j) = server.x_global;
  states.round_start = states.x;
}

double psi_conservation_residual(const ServerState& server) {
  const double scale = server.psi.colwise().norm().sum();
  const double resid = server.psi.rowwise().sum().norm();
  if (scale == 0.0) return resid == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return resid / scale;
}

double z_conservation_residual(const ClientStates& states, const SubnetTopology& topo) {
  double worst = 0.0;
  for (const auto& members : topo.subnets) {
    Vec sum = Vec::Zero(states.z.rows());
    double scale = 0.0;
    for (int c : members) {
      sum += states.z.col(c);
      scale += states.z.col(c).norm();
    }
    const double resid = sum.norm();
    if (scale == 0.0) {
      if (resid != 0.0) return std::numeric_limits<double>::infinity();
      continue;
    }
    worst = std::max(worst, resid / scale);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(RunConfig config, std::shared_ptr<const SubnetTopology> topo,
                 std::shared_ptr<const Problem> problem)
    : config_(std::move(config)), topo_(std::move(topo)), problem_(std::move(problem)) {
  require(topo_ != nullptr && problem_ != nullptr, "trainer needs a topology and a problem");
  if (config_.costs.ds_cost.empty() && config_.costs.d2d_cost.empty()) {
    config_.costs.ds_cost.assign(topo_->num_subnets(), 1.0);
    config_.costs.d2d_cost.assign(topo_->num_subnets(), 0.0);
  }
  validate_config(config_, *topo_, *problem_);
  if (config_.algorithm != Algorithm::kScaffold && !topo_->equal_sizes())
    std::clog << "warning: subnets have unequal sizes; the server weights subnet means equally, "
                 "which differs from the client-average objective\n";
  const Vec x0 = problem_->initial_point();
  clients_ = ClientStates::init(problem_->num_clients(), x0);
  server_ = ServerState::init(topo_->num_subnets(), x0);
  round_end_ = clients_.x;
  start_ = std::chrono::steady_clock::now();
}

std::vector<std::vector<int>> Trainer::draw_samples(int round) const {
  RandomStream rng(config_.sampling_seed, StreamId::kSampling, static_cast<std::uint64_t>(round));
  std::vector<std::vector<int>> picks(topo_->num_subnets());
  for (int s = 0; s < topo_->num_subnets(); ++s) {
    const auto& members = topo_->subnets[s];
    for (std::size_t idx : rng.sample_without_replacement(
             members.size(), static_cast<std::size_t>(config_.samples_per_subnet[s])))
      picks[s].push_back(members[idx]);
    std::sort(picks[s].begin(), picks[s].end());
  }
  return picks;
}

GradientFn Trainer::gradient_fn(int round, int step) {
  const Problem* problem = problem_.get();
  const int batch = config_.batch_size;
  const std::uint64_t seed = config_.batching_seed;
  return [=](int client, const Vec& x, Vec& out) {
    if (batch == kFullBatch) {
      problem->gradient(client, x, {}, out);
      return;
    }
    RandomStream rng(seed, StreamId::kBatching,
                     mix_key({static_cast<std::uint64_t>(round), static_cast<std::uint64_t>(step),
                              static_cast<std::uint64_t>(client)}));
    out = stochastic_gradient(*problem, client, x, batch, rng);
  };
}

void Trainer::round_sdgt(int round) {
  for (int k = 0; k < config_.K; ++k) {
    if (config_.diagnostics) step_iterates_.push_back(clients_.x);
    d2d_round(clients_, *topo_, gradient_fn(round, k), config_.gamma, true);
  }
  update_in_subnet_tracker(clients_, *topo_, config_.K, config_.gamma);
  sampled_ = draw_samples(round);
  round_end_ = clients_.x;
  global_aggregate(server_, clients_, *topo_, sampled_, config_.K, config_.gamma);
}

void Trainer::round_fedavg(int round) {
  for (int k = 0; k < config_.K; ++k) {
    if (config_.diagnostics) step_iterates_.push_back(clients_.x);
    d2d_round(clients_, *topo_, gradient_fn(round, k), config_.gamma, false);
  }
  sampled_ = draw_samples(round);
  round_end_ = clients_.x;
  fedavg_aggregate(server_, clients_, *topo_, sampled_);
}

void Trainer::round_scaffold(int round) {
  sampled_ = draw_samples(round);
  const Vec& xg = server_.x_global;
  const Vec& c = server_.control;
  for (const auto& picks : sampled_)
    for (int i : picks) clients_.x.col(i) = xg;

  for (int k = 0; k < config_.K; ++k) {
    if (config_.diagnostics) step_iterates_.push_back(clients_.x);
    const GradientFn grad = gradient_fn(round, k);
    Vec g;
    for (const auto& picks : sampled_)
      for (int i : picks) {
        grad(i, clients_.x.col(i), g);
        clients_.x.col(i) -= config_.gamma * (g + c - clients_.control.col(i));
      }
  }
  round_end_ = clients_.x;

  const double inv_step = 1.0 / (config_.K * config_.gamma);
  const int n = clients_.num_clients();
  Vec model_delta = Vec::Zero(xg.size());
  Vec control_delta = Vec::Zero(xg.size());
  for (const auto& picks : sampled_) {
    Vec subnet_delta = Vec::Zero(xg.size());
    for (int i : picks) {
      const Vec updated = clients_.control.col(i) - c + inv_step * (xg - clients_.x.col(i));
      control_delta += updated - clients_.control.col(i);
      clients_.control.col(i) = updated;
      subnet_delta += clients_.x.col(i) - xg;
    }
    model_delta += subnet_delta / static_cast<double>(picks.size());
  }
  server_.x_global += model_delta / static_cast<double>(sampled_.size());
  server_.control += control_delta / static_cast<double>(n);
  for (int i = 0; i < n; ++i) clients_.y.col(i) = server_.control - clients_.control.col(i);
  clients_.round_start = clients_.x;
}

void Trainer::finish_round(int round, const Vec& x_global_start) {
  server_.round = round + 1;

  const Eigen::MatrixXd& x = clients_.x;
  const bool finite = x.allFinite() && server_.x_global.allFinite();
  const double largest =
      finite ? std::max(x.colwise().norm().maxCoeff(), server_.x_global.norm()) : INFINITY;
  if (!(largest <= config_.divergence_guard)) {
    summary_.diverged = true;
    summary_.divergence_message = algorithm_name(config_.algorithm) + " diverged in round " +
                                  std::to_string(round + 1) + ": model norm " +
                                  format_double(largest) + " exceeds guard " +
                                  format_double(config_.divergence_guard);
    fail(ErrorCode::kDiverged, summary_.divergence_message);
  }

  const int n = problem_->num_clients();
  const Vec& xg = server_.x_global;
  Eigen::MatrixXd grads(xg.size(), n);
  Vec g;
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    problem_->gradient(i, xg, {}, g);
    grads.col(i) = g;
    loss += problem_->loss(i, xg);
  }

  MetricsRecord rec;
  rec.t = server_.round;
  rec.loss = loss / n;
  rec.grad_norm_sq = grads.rowwise().mean().squaredNorm();
  if (const auto xs = problem_->x_star()) rec.dist_to_opt_sq = (xg - *xs).squaredNorm();

  std::vector<int> sizes;
  for (int s = 0; s < topo_->num_subnets(); ++s) sizes.push_back(topo_->subnet_size(s));
  cost_cum_ += round_communication_cost(config_.costs, sizes, config_.samples_per_subnet,
                                        config_.K, config_.algorithm != Algorithm::kScaffold,
                                        config_.algorithm == Algorithm::kSdgt);
  rec.comm_cost_cum = cost_cum_;

  if (config_.diagnostics) {
    RoundTrace trace;
    trace.t = rec.t;
    trace.x_global_start = x_global_start;
    trace.x_global_end = xg;
    trace.iterates = std::move(step_iterates_);
    trace.round_end = round_end_;
    trace.y = clients_.y;
    trace.z = clients_.z;
    trace.grads_at_global = std::move(grads);
    const TraceDiagnostics diag = diagnostics_from_trace(trace, *topo_);
    rec.delta = diag.delta;
    rec.gamma = diag.gamma;
    rec.y = diag.y;
    rec.z = diag.z;
    trace_ = std::move(trace);
  }
  step_iterates_.clear();

  summary_.max_psi_residual = std::max(summary_.max_psi_residual, psi_conservation_residual(server_));
  summary_.max_z_residual =
      std::max(summary_.max_z_residual, z_conservation_residual(clients_, *topo_));

  if (config_.record_wall_clock)
    rec.wall_clock =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  records_.push_back(rec);
}

const MetricsRecord& Trainer::step() {
  require(!summary_.diverged, "run already diverged");
  const int round = server_.round;
  const Vec x_global_start = server_.x_global;
  switch (config_.algorithm) {
    case Algorithm::kSdgt: round_sdgt(round); break;
    case Algorithm::kSdFedAvg: round_fedavg(round); break;
    case Algorithm::kScaffold: round_scaffold(round); break;
  }
  finish_round(round, x_global_start);
  return records_.back();
}

const std::vector<MetricsRecord>& Trainer::run() {
  try {
    while (server_.round < config_.T) step();
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kDiverged) throw;
  }
  return records_;
}

namespace {

std::vector<MetricsRecord> run_with(Algorithm algo, RunConfig config,
                                    std::shared_ptr<const SubnetTopology> topo,
                                    std::shared_ptr<const Problem> problem) {
  config.algorithm = algo;
  Trainer trainer(std::move(config), std::move(topo), std::move(problem));
  while (trainer.server().round < trainer.config().T) trainer.step();
  return trainer.records();
}

}  // namespace

std::vector<MetricsRecord> run_sdgt(RunConfig config, std::shared_ptr<const SubnetTopology> topo,
                                    std::shared_ptr<const Problem> problem) {
  return run_with(Algorithm::kSdgt, std::move(config), std::move(topo), std::move(problem));
}

std::vector<MetricsRecord> run_sd_fedavg(RunConfig config,
                                         std::shared_ptr<const SubnetTopology> topo,
                                         std::shared_ptr<const Problem> problem) {
  return run_with(Algorithm::kSdFedAvg, std::move(config), std::move(topo), std::move(problem));
}

std::vector<MetricsRecord> run_scaffold(RunConfig config,
                                        std::shared_ptr<const SubnetTopology> topo,
                                        std::shared_ptr<const Problem> problem) {
  return run_with(Algorithm::kScaffold, std::move(config), std::move(topo), std::move(problem));
}

}  // namespace sdgt
