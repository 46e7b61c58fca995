#include "sdgt/diagnostics.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "sdgt/error.hpp"
#include "sdgt/io.hpp"

namespace sdgt {

std::string to_csv_row(const MetricsRecord& r) {
  std::string row = std::to_string(r.t);
  for (double v : {r.loss, r.grad_norm_sq, r.dist_to_opt_sq, r.delta, r.gamma, r.y, r.z,
                   r.comm_cost_cum, r.wall_clock}) {
    row += ',';
    row += format_double(v);
  }
  return row;
}

std::string metrics_to_csv(std::span<const MetricsRecord> records) {
  std::string out = kCsvHeader;
  out += '\n';
  for (const auto& r : records) {
    out += to_csv_row(r);
    out += '\n';
  }
  return out;
}

int CsvTable::column_index(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == name) return static_cast<int>(i);
  return -1;
}

std::vector<double> CsvTable::column(const std::string& name) const {
  const int idx = column_index(name);
  if (idx < 0) fail(ErrorCode::kInvalidArgument, "missing column '" + name + "'");
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& row : rows) out.push_back(row[idx]);
  return out;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_cell(const std::string& cell) {
  if (cell == "nan" || cell.empty()) return std::numeric_limits<double>::quiet_NaN();
  if (cell == "inf") return std::numeric_limits<double>::infinity();
  if (cell == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size())
    fail(ErrorCode::kParse, "bad numeric CSV cell '" + cell + "'");
  return v;
}

}  // namespace

CsvTable parse_csv(const std::string& text) {
  CsvTable table;
  std::istringstream in(text);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (header) {
      table.columns = std::move(cells);
      header = false;
      continue;
    }
    if (cells.size() != table.columns.size())
      fail(ErrorCode::kParse, "CSV row has " + std::to_string(cells.size()) + " cells, expected " +
                                  std::to_string(table.columns.size()));
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(parse_cell(c));
    table.rows.push_back(std::move(row));
  }
  if (header) fail(ErrorCode::kParse, "empty CSV");
  return table;
}

double compute_delta(std::span<const Eigen::MatrixXd> iterates,
                     const Eigen::Vector<double, Eigen::Dynamic>& x_global) {
  if (iterates.empty()) return 0.0;
  double total = 0.0;
  for (const auto& x : iterates) total += (x.colwise() - x_global).squaredNorm();
  return total / static_cast<double>(iterates.front().cols());
}

double compute_gamma(const Eigen::MatrixXd& round_end,
                     const Eigen::Vector<double, Eigen::Dynamic>& x_global) {
  return (round_end.colwise() - x_global).squaredNorm() / static_cast<double>(round_end.cols());
}

Eigen::MatrixXd subnet_average(const Eigen::MatrixXd& g, const SubnetTopology& topo) {
  Eigen::MatrixXd out(g.rows(), g.cols());
  for (const auto& members : topo.subnets) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(g.rows());
    for (int c : members) mean += g.col(c);
    mean /= static_cast<double>(members.size());
    for (int c : members) out.col(c) = mean;
  }
  return out;
}

TrackerErrors compute_y_z(const Eigen::MatrixXd& y, const Eigen::MatrixXd& z,
                          const Eigen::MatrixXd& grads, const SubnetTopology& topo) {
  const double n = static_cast<double>(grads.cols());
  const Eigen::MatrixXd g_jc = subnet_average(grads, topo);
  const Eigen::VectorXd g_mean = grads.rowwise().mean();
  const Eigen::MatrixXd between = g_jc.colwise() - g_mean;  // G (J_c - J)
  const Eigen::MatrixXd within = grads - g_jc;              // G (I - J_c)
  return {(y + between).squaredNorm() / n, (z + within).squaredNorm() / n};
}

TraceDiagnostics diagnostics_from_trace(const RoundTrace& trace, const SubnetTopology& topo) {
  TraceDiagnostics out;
  out.delta = compute_delta(trace.iterates, trace.x_global_start);
  out.gamma = compute_gamma(trace.round_end, trace.x_global_end);
  const auto yz = compute_y_z(trace.y, trace.z, trace.grads_at_global, topo);
  out.y = yz.y;
  out.z = yz.z;
  return out;
}

namespace {

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  return {{"rows", m.rows()},
          {"cols", m.cols()},
          {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  require(static_cast<Eigen::Index>(data.size()) == rows * cols, "trace matrix size mismatch");
  return Eigen::Map<const Eigen::MatrixXd>(data.data(), rows, cols);
}

}  // namespace

nlohmann::json trace_to_json(const RoundTrace& trace) {
  nlohmann::json doc;
  doc["t"] = trace.t;
  doc["x_global_start"] = matrix_to_json(trace.x_global_start);
  doc["x_global_end"] = matrix_to_json(trace.x_global_end);
  auto its = nlohmann::json::array();
  for (const auto& m : trace.iterates) its.push_back(matrix_to_json(m));
  doc["iterates"] = std::move(its);
  doc["round_end"] = matrix_to_json(trace.round_end);
  doc["y"] = matrix_to_json(trace.y);
  doc["z"] = matrix_to_json(trace.z);
  doc["grads_at_global"] = matrix_to_json(trace.grads_at_global);
  return doc;
}

RoundTrace trace_from_json(const nlohmann::json& doc) {
  try {
    RoundTrace trace;
    trace.t = doc.at("t").get<int>();
    trace.x_global_start = matrix_from_json(doc.at("x_global_start"));
    trace.x_global_end = matrix_from_json(doc.at("x_global_end"));
    for (const auto& m : doc.at("iterates")) trace.iterates.push_back(matrix_from_json(m));
    trace.round_end = matrix_from_json(doc.at("round_end"));
    trace.y = matrix_from_json(doc.at("y"));
    trace.z = matrix_from_json(doc.at("z"));
    trace.grads_at_global = matrix_from_json(doc.at("grads_at_global"));
    return trace;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("malformed round trace: ") + e.what());
  }
}

CostModel CostModel::from_delta(std::vector<double> ds_cost, double delta) {
  require(delta >= 0.0, "cost ratio delta must be non-negative");
  CostModel c;
  c.d2d_cost.reserve(ds_cost.size());
  for (double e : ds_cost) c.d2d_cost.push_back(delta * e);
  c.ds_cost = std::move(ds_cost);
  return c;
}

void validate_costs(const CostModel& costs, int subnets) {
  require(static_cast<int>(costs.ds_cost.size()) == subnets &&
              static_cast<int>(costs.d2d_cost.size()) == subnets,
          "cost model needs one DS and one D2D cost per subnet");
  for (double e : costs.ds_cost) require(e >= 0.0 && std::isfinite(e), "negative DS cost");
  for (double e : costs.d2d_cost) require(e >= 0.0 && std::isfinite(e), "negative D2D cost");
  require(costs.tracker_exchange_rounds >= 0.0, "negative tracker exchange charge");
}

double round_communication_cost(const CostModel& costs, std::span<const int> subnet_sizes,
                                std::span<const int> samples, int K, bool uses_d2d,
                                bool tracker_exchange) {
  const int s_count = static_cast<int>(subnet_sizes.size());
  validate_costs(costs, s_count);
  require(static_cast<int>(samples.size()) == s_count, "one sample count per subnet required");
  require(K >= 1, "K must be at least 1");
  double d2d = 0.0;
  double ds = 0.0;
  for (int s = 0; s < s_count; ++s) {
    require(samples[s] >= 1 && samples[s] <= subnet_sizes[s], "sample count outside 1..m_s");
    d2d += costs.d2d_cost[s];
    ds += static_cast<double>(samples[s]) / subnet_sizes[s] * costs.ds_cost[s];
  }
  double total = ds;
  if (uses_d2d) total += K * d2d;
  if (tracker_exchange) total += costs.tracker_exchange_rounds * d2d;
  return total;
}

}  // namespace sdgt
