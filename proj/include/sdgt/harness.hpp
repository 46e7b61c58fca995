#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sdgt/algorithms.hpp"
#include "sdgt/cooptimizer.hpp"
#include "sdgt/topology.hpp"

namespace sdgt {

// Values swept as a cross product. An axis left out of the document takes its
// single value from the "run" block; an axis that is present must be
// non-empty.
struct SweepAxes {
  std::vector<int> K;
  std::vector<double> sample_rate;
  std::vector<std::uint64_t> seed;
  std::vector<double> delta;
  bool delta_swept = false;
};

// Co-optimized vs. naive comparison: for every (delta, seed) the solver picks
// (h_s, K) and each algorithm runs twice, once with the solver's choice and
// once with full sampling and K = 1.
struct CoOptMode {
  std::array<double, 4> lambda{1.0, 1.0, 0.1, 0.01};
  int k_max = 50;
};

// Experiment document, format "sdgt-experiment/1":
//
// {
//   "name": "fig4-like",
//   "problem":  {"kind": "least_squares", "kappa_preset": 80, "noise_std": 0.2, "seed": 1},
//   "topology": {"n": 30, "subnets": 6, "radius_min": 0.5, "radius_max": 3.5,
//                "seed": 1, "equal_sizes": true},
//   "algorithms": ["sdgt", "sd_fedavg", "scaffold"],
//   "run": {"T": 300, "gamma": 0.02, "K": 10, "sample_rate": 1.0, "seed": 1,
//           "batch_size": 0, "divergence_guard": 1e12},
//   "per_algorithm": {"scaffold": {"gamma": 0.01}},
//   "costs": {"ds_cost": [..] | {"uniform": [1, 100], "seed": 6},
//             "delta": 0.001 | "d2d_cost": [..], "tracker_exchange_rounds": 0},
//   "sweep": {"K": [40], "sample_rate": [0.2, 0.4, 1.0], "seed": [1], "delta": [..]},
//   "seed_scope": "run" | "all",
//   "cooptimize": {"lambda": [1, 1, 0.1, 0.01], "k_max": 50},
//   "diagnostics": false,
//   "write_snapshots": true,
//   "output_dir": "results"
// }
//
// A swept seed r sets the sampling and batching seeds; with seed_scope "all"
// it also replaces the problem and topology seeds.
struct ExperimentSpec {
  std::string name;
  nlohmann::json problem;
  TopologySpec topology;
  bool equal_sizes = true;
  std::vector<Algorithm> algorithms;
  nlohmann::json run = nlohmann::json::object();
  std::map<std::string, nlohmann::json> per_algorithm;
  nlohmann::json costs = nlohmann::json::object();
  SweepAxes sweep;
  bool seed_scope_all = false;
  std::optional<CoOptMode> cooptimize;
  bool diagnostics = false;
  bool write_snapshots = true;
  std::string output_dir = "results";
};

ExperimentSpec experiment_from_json(const nlohmann::json& doc);
nlohmann::json experiment_to_json(const ExperimentSpec& spec);
void validate(const ExperimentSpec& spec);
// FNV-1a of the normalized document (output_dir excluded).
std::string spec_hash(const ExperimentSpec& spec);

std::vector<std::string> preset_names();
bool is_preset(const std::string& name);
ExperimentSpec preset(const std::string& name);

// Loads a spec file, or a preset when `path_or_preset` names one and no such
// file exists. Relative output directories resolve against the file's folder.
ExperimentSpec load_experiment(const std::string& path_or_preset);

// One entry of the cross product.
struct RunPlan {
  std::string label;       // algorithm name, suffixed with _coopt/_naive in co-optimizer mode
  Algorithm algorithm = Algorithm::kSdgt;
  int K = 1;
  double sample_rate = 1.0;
  std::uint64_t seed = 1;
  std::optional<double> delta;
  std::string file;        // CSV file name inside the experiment directory
  std::string problem_key;
  std::string topology_key;
  RunConfig config;
};

struct RunOutcome {
  RunPlan plan;
  std::vector<MetricsRecord> records;
  RunSummary summary;
  std::string csv;
};

struct CoOptRecord {
  std::optional<double> delta;
  std::uint64_t seed = 1;
  CoOptProblem problem;
  CoOptSolution solution;
};

struct ExperimentResult {
  std::string directory;
  std::string manifest_path;
  nlohmann::json manifest;
  std::vector<RunOutcome> runs;
  std::vector<CoOptRecord> cooptimizations;
};

struct ExperimentOptions {
  std::optional<std::string> output_dir;  // overrides the spec
  int threads = 0;                        // 0: hardware concurrency
  bool write_summary = false;             // summary.csv with one row per run
};

// SDGT_OUTPUT_DIR and SDGT_THREADS.
ExperimentOptions options_from_env();

// Executes every run (in parallel across runs), writes one CSV per run, the
// topology and problem documents, and manifest.json. Diverged runs keep their
// partial CSV and are flagged in the manifest. Output does not depend on the
// thread count or execution order.
ExperimentResult run_experiment(const ExperimentSpec& spec, const ExperimentOptions& options = {});

std::string summary_csv(const ExperimentResult& result);
// Fixed-width table for terminals.
std::string summary_table(const ExperimentResult& result);

}  // namespace sdgt
