#pragma once

#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "sdgt/topology.hpp"

namespace sdgt {

// One row of a run's metric stream, describing the state after global round t.
struct MetricsRecord {
  int t = 0;
  double loss = 0.0;
  double grad_norm_sq = 0.0;
  double dist_to_opt_sq = std::numeric_limits<double>::quiet_NaN();
  double delta = std::numeric_limits<double>::quiet_NaN();
  double gamma = std::numeric_limits<double>::quiet_NaN();
  double y = std::numeric_limits<double>::quiet_NaN();
  double z = std::numeric_limits<double>::quiet_NaN();
  double comm_cost_cum = 0.0;
  double wall_clock = 0.0;
};

// Fixed column order.
inline constexpr const char* kCsvHeader =
    "t,loss,grad_norm_sq,dist_to_opt_sq,Delta,Gamma,Y,Z,comm_cost_cum,wall_clock";

std::string to_csv_row(const MetricsRecord& r);
std::string metrics_to_csv(std::span<const MetricsRecord> records);

// Parsed CSV: header names and numeric columns.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  int column_index(const std::string& name) const;  // -1 when absent
  std::vector<double> column(const std::string& name) const;  // throws naming the column
};
CsvTable parse_csv(const std::string& text);

// Everything the diagnostics need from one global round.
struct RoundTrace {
  int t = 0;
  Eigen::Vector<double, Eigen::Dynamic> x_global_start;  // x_g^t
  Eigen::Vector<double, Eigen::Dynamic> x_global_end;    // x_g^{t+1}
  std::vector<Eigen::MatrixXd> iterates;                  // x^{t,k}, k = 1..K (d x n each)
  Eigen::MatrixXd round_end;                              // x^{t,K+1}, before broadcast
  Eigen::MatrixXd y;                                      // trackers after the round
  Eigen::MatrixXd z;
  Eigen::MatrixXd grads_at_global;                        // column i = grad f_i(x_g^{t+1})
};

nlohmann::json trace_to_json(const RoundTrace& trace);
RoundTrace trace_from_json(const nlohmann::json& doc);

// (1/n) sum_i sum_k ||x_i^{t,k} - x_g^t||^2
double compute_delta(std::span<const Eigen::MatrixXd> iterates,
                     const Eigen::Vector<double, Eigen::Dynamic>& x_global);

// (1/n) sum_i ||x_i^{end} - x_g||^2
double compute_gamma(const Eigen::MatrixXd& round_end,
                     const Eigen::Vector<double, Eigen::Dynamic>& x_global);

struct TrackerErrors {
  double y = 0.0;
  double z = 0.0;
};

// Y = (1/n)||y + G(J_c - J)||_F^2, Z = (1/n)||z + G(I - J_c)||_F^2 where G
// holds one gradient column per client, J_c averages inside each subnet and J
// averages over all clients.
TrackerErrors compute_y_z(const Eigen::MatrixXd& y, const Eigen::MatrixXd& z,
                          const Eigen::MatrixXd& grads, const SubnetTopology& topo);

// G J_c: every column replaced by its subnet mean.
Eigen::MatrixXd subnet_average(const Eigen::MatrixXd& g, const SubnetTopology& topo);

struct TraceDiagnostics {
  double delta = 0.0;
  double gamma = 0.0;
  double y = 0.0;
  double z = 0.0;
};
TraceDiagnostics diagnostics_from_trace(const RoundTrace& trace, const SubnetTopology& topo);

// Per-subnet communication prices in abstract cost units.
struct CostModel {
  std::vector<double> ds_cost;   // E_s: one pull+push with the server, whole subnet
  std::vector<double> d2d_cost;  // E_s^D2D: one D2D round in the subnet
  // Extra D2D rounds' worth of cost charged to SD-GT for the tracker exchange
  // of its in-subnet update (0 keeps the accounting identical to SD-FedAvg).
  double tracker_exchange_rounds = 0.0;

  static CostModel from_delta(std::vector<double> ds_cost, double delta);
};

// K * sum_s E_s^D2D (when D2D is used) + sum_s (h_s/m_s) E_s + tracker
// exchange surcharge.
double round_communication_cost(const CostModel& costs, std::span<const int> subnet_sizes,
                                std::span<const int> samples, int K, bool uses_d2d,
                                bool tracker_exchange);

void validate_costs(const CostModel& costs, int subnets);

}  // namespace sdgt
