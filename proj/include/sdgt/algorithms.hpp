#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sdgt/diagnostics.hpp"
#include "sdgt/problems.hpp"
#include "sdgt/topology.hpp"

namespace sdgt {

enum class Algorithm { kSdgt, kSdFedAvg, kScaffold };

std::string algorithm_name(Algorithm a);
Algorithm parse_algorithm(const std::string& name);

struct RunConfig {
  Algorithm algorithm = Algorithm::kSdgt;
  int K = 10;                 // D2D (or local) rounds per global round
  int T = 100;                // global rounds
  double gamma = 1e-2;
  std::vector<int> samples_per_subnet;  // h_s, 1 <= h_s <= m_s
  int batch_size = kFullBatch;
  std::uint64_t sampling_seed = 3;
  std::uint64_t batching_seed = 4;
  bool diagnostics = false;   // retain per-step iterates and compute Delta/Gamma/Y/Z
  bool record_wall_clock = false;
  double divergence_guard = 1e12;
  CostModel costs;            // empty vectors mean unit DS cost and zero D2D cost
};

// h_s = max(1, round(rate * m_s)) for every subnet.
std::vector<int> samples_from_rate(const SubnetTopology& topo, double rate);

void validate_config(const RunConfig& cfg, const SubnetTopology& topo, const Problem& problem);

// Column i of each matrix belongs to client i.
struct ClientStates {
  Eigen::MatrixXd x;            // current model
  Eigen::MatrixXd y;            // inter-subnet tracker (SD-GT); c - c_i (SCAFFOLD)
  Eigen::MatrixXd z;            // in-subnet tracker
  Eigen::MatrixXd round_start;  // model at the start of the current global round
  Eigen::MatrixXd z_accum;      // sum over k of the half-step increments z~
  Eigen::MatrixXd control;      // SCAFFOLD client control variates c_i

  static ClientStates init(int n, const Vec& x0);
  int num_clients() const { return static_cast<int>(x.cols()); }
};

struct ServerState {
  Vec x_global;
  Eigen::MatrixXd psi;  // d x S per-subnet trackers
  Vec control;          // SCAFFOLD server control variate c
  int round = 0;        // completed global rounds

  static ServerState init(int subnets, const Vec& x0);
};

// (client, point, out) -> gradient used by a local step.
using GradientFn = std::function<void(int, const Vec&, Vec&)>;

// One synchronous adapt-then-combine step in every subnet. With trackers the
// adapt step uses grad + y + z and z~ = x_half - x + gamma*y is accumulated;
// without trackers it is a plain gradient step. All half-steps are formed
// before any mixing.
void d2d_round(ClientStates& states, const SubnetTopology& topo, const GradientFn& grad,
               double gamma, bool use_trackers);

// z_i += 1/(K gamma) * (acc_i - sum_j w_ij acc_j), then clears the accumulators.
void update_in_subnet_tracker(ClientStates& states, const SubnetTopology& topo, int K,
                              double gamma);

// SD-GT server step for the given sampled clients (global indices, one list
// per subnet). Returns the global increment x~_g. Sampled clients receive
// x_g and psi_s; every client's round_start is reset to its current model.
Vec global_aggregate(ServerState& server, ClientStates& states, const SubnetTopology& topo,
                     const std::vector<std::vector<int>>& sampled, int K, double gamma);

// SD-FedAvg: x_g becomes the mean of the sampled subnet means, then broadcast.
void fedavg_aggregate(ServerState& server, ClientStates& states, const SubnetTopology& topo,
                      const std::vector<std::vector<int>>& sampled);

// Conservation of the trackers: |sum| / sum of norms (0 when all are zero).
double psi_conservation_residual(const ServerState& server);
double z_conservation_residual(const ClientStates& states, const SubnetTopology& topo);

struct RunSummary {
  double max_psi_residual = 0.0;
  double max_z_residual = 0.0;
  bool diverged = false;
  std::string divergence_message;
};

// Runs one algorithm round by round. Deterministic given the config seeds.
class Trainer {
 public:
  Trainer(RunConfig config, std::shared_ptr<const SubnetTopology> topo,
          std::shared_ptr<const Problem> problem);

  // Executes one global round; throws sdgt::Error(kDiverged) past the guard.
  const MetricsRecord& step();
  // Runs until `config.T` rounds are done. Divergence is recorded in the
  // summary instead of thrown; records up to the failing round are kept.
  const std::vector<MetricsRecord>& run();

  const RunConfig& config() const { return config_; }
  const ClientStates& clients() const { return clients_; }
  const ServerState& server() const { return server_; }
  const std::vector<MetricsRecord>& records() const { return records_; }
  const RunSummary& summary() const { return summary_; }
  // Trace of the last completed round (diagnostic mode only).
  const std::optional<RoundTrace>& last_trace() const { return trace_; }
  // Pre-broadcast models of the last round, x_i^{t,K+1}.
  const Eigen::MatrixXd& last_round_end() const { return round_end_; }
  // Sampled clients of the last round, per subnet.
  const std::vector<std::vector<int>>& last_sampled() const { return sampled_; }

 private:
  std::vector<std::vector<int>> draw_samples(int round) const;
  GradientFn gradient_fn(int round, int step);
  void round_sdgt(int round);
  void round_fedavg(int round);
  void round_scaffold(int round);
  void finish_round(int round, const Vec& x_global_start);

  RunConfig config_;
  std::shared_ptr<const SubnetTopology> topo_;
  std::shared_ptr<const Problem> problem_;
  ClientStates clients_;
  ServerState server_;
  std::vector<std::vector<int>> sampled_;
  Eigen::MatrixXd round_end_;
  std::vector<Eigen::MatrixXd> step_iterates_;
  std::optional<RoundTrace> trace_;
  std::vector<MetricsRecord> records_;
  RunSummary summary_;
  double cost_cum_ = 0.0;
  std::chrono::steady_clock::time_point start_;
};

std::vector<MetricsRecord> run_sdgt(RunConfig config, std::shared_ptr<const SubnetTopology> topo,
                                    std::shared_ptr<const Problem> problem);
std::vector<MetricsRecord> run_sd_fedavg(RunConfig config,
                                         std::shared_ptr<const SubnetTopology> topo,
                                         std::shared_ptr<const Problem> problem);
std::vector<MetricsRecord> run_scaffold(RunConfig config,
                                        std::shared_ptr<const SubnetTopology> topo,
                                        std::shared_ptr<const Problem> problem);

}  // namespace sdgt
