// extern "C" surface over the C++ core. Every entry point converts
// exceptions into status codes and a thread-local message.

#include "sdgt/sdgt.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>
#include <set>
#include <string>

#include "sdgt/algorithms.hpp"
#include "sdgt/checks.hpp"
#include "sdgt/cooptimizer.hpp"
#include "sdgt/error.hpp"
#include "sdgt/harness.hpp"
#include "sdgt/io.hpp"
#include "sdgt/plot.hpp"
#include "sdgt/problems.hpp"
#include "sdgt/rng.hpp"
#include "sdgt/topology.hpp"

struct sdgt_topology {
  std::shared_ptr<const sdgt::SubnetTopology> topo;
};

struct sdgt_problem {
  std::shared_ptr<const sdgt::Problem> problem;
};

struct sdgt_run {
  std::unique_ptr<sdgt::Trainer> trainer;
};

namespace {

thread_local std::string g_last_error;

sdgt_status to_status(sdgt::ErrorCode code) {
  switch (code) {
    case sdgt::ErrorCode::kInvalidArgument: return SDGT_ERR_INVALID_ARGUMENT;
    case sdgt::ErrorCode::kDisconnected: return SDGT_ERR_DISCONNECTED;
    case sdgt::ErrorCode::kSingular: return SDGT_ERR_SINGULAR;
    case sdgt::ErrorCode::kDiverged: return SDGT_ERR_DIVERGED;
    case sdgt::ErrorCode::kIo: return SDGT_ERR_IO;
    case sdgt::ErrorCode::kParse: return SDGT_ERR_PARSE;
    case sdgt::ErrorCode::kCheckFailed: return SDGT_ERR_CHECK_FAILED;
    case sdgt::ErrorCode::kInternal: return SDGT_ERR_INTERNAL;
  }
  return SDGT_ERR_INTERNAL;
}

template <typename F>
sdgt_status guarded(F&& body) {
  try {
    g_last_error.clear();
    body();
    return SDGT_OK;
  } catch (const sdgt::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const nlohmann::json::exception& e) {
    g_last_error = std::string("malformed JSON: ") + e.what();
    return SDGT_ERR_PARSE;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return SDGT_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SDGT_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return SDGT_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (!p) sdgt::fail(sdgt::ErrorCode::kInvalidArgument, std::string(what) + " must not be NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

nlohmann::json parse(const char* text, const char* what) {
  need(text, what);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    sdgt::fail(sdgt::ErrorCode::kParse, std::string(what) + ": " + e.what());
  }
}

sdgt::RunConfig run_config_from_json(const nlohmann::json& j, const sdgt::SubnetTopology& topo) {
  static const std::set<std::string> kKeys = {
      "algorithm",  "K",           "T",          "gamma",          "samples_per_subnet",
      "sample_rate", "batch_size", "sampling_seed", "batching_seed", "diagnostics",
      "record_wall_clock", "divergence_guard", "ds_cost", "d2d_cost", "delta",
      "tracker_exchange_rounds"};
  sdgt::require(j.is_object(), "run config must be a JSON object");
  for (const auto& [key, value] : j.items())
    sdgt::require(kKeys.count(key) == 1, "unknown run config key '" + key + "'");
  sdgt::RunConfig cfg;
  cfg.algorithm = sdgt::parse_algorithm(j.value("algorithm", std::string("sdgt")));
  cfg.K = j.value("K", cfg.K);
  cfg.T = j.value("T", cfg.T);
  cfg.gamma = j.value("gamma", cfg.gamma);
  if (j.contains("samples_per_subnet"))
    cfg.samples_per_subnet = j.at("samples_per_subnet").get<std::vector<int>>();
  else
    cfg.samples_per_subnet = sdgt::samples_from_rate(topo, j.value("sample_rate", 1.0));
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.sampling_seed = j.value("sampling_seed", cfg.sampling_seed);
  cfg.batching_seed = j.value("batching_seed", cfg.batching_seed);
  cfg.diagnostics = j.value("diagnostics", cfg.diagnostics);
  cfg.divergence_guard = j.value("divergence_guard", cfg.divergence_guard);
  cfg.record_wall_clock = j.value("record_wall_clock", cfg.record_wall_clock);
  if (j.contains("ds_cost") || j.contains("d2d_cost")) {
    cfg.costs.ds_cost = j.contains("ds_cost")
                            ? sdgt::ds_costs_from_json(j.at("ds_cost"), topo.num_subnets())
                            : std::vector<double>(topo.num_subnets(), 1.0);
    if (j.contains("d2d_cost"))
      cfg.costs.d2d_cost = j.at("d2d_cost").get<std::vector<double>>();
    else
      cfg.costs.d2d_cost.assign(topo.num_subnets(), 0.0);
  }
  if (j.contains("delta")) cfg.costs = sdgt::CostModel::from_delta(
      cfg.costs.ds_cost.empty() ? std::vector<double>(topo.num_subnets(), 1.0) : cfg.costs.ds_cost,
      j.at("delta").get<double>());
  cfg.costs.tracker_exchange_rounds = j.value("tracker_exchange_rounds", 0.0);
  return cfg;
}

}  // namespace

extern "C" {

const char* sdgt_version(void) { return SDGT_VERSION_STRING; }
const char* sdgt_rng_version(void) { return sdgt::RandomStream::kVersion; }
const char* sdgt_last_error(void) { return g_last_error.c_str(); }
void sdgt_string_free(char* s) { std::free(s); }

const char* sdgt_status_name(sdgt_status status) {
  switch (status) {
    case SDGT_OK: return "ok";
    case SDGT_ERR_INVALID_ARGUMENT: return "invalid argument";
    case SDGT_ERR_DISCONNECTED: return "disconnected graph";
    case SDGT_ERR_SINGULAR: return "singular problem";
    case SDGT_ERR_DIVERGED: return "diverged";
    case SDGT_ERR_IO: return "i/o error";
    case SDGT_ERR_PARSE: return "parse error";
    case SDGT_ERR_CHECK_FAILED: return "check failed";
    case SDGT_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

// ---- topology ----------------------------------------------------------

sdgt_status sdgt_topology_generate(const char* spec_json, sdgt_topology** out) {
  return guarded([&] {
    need(out, "out");
    const nlohmann::json j = parse(spec_json, "topology spec");
    sdgt::TopologySpec spec;
    spec.n = j.value("n", spec.n);
    spec.subnets = j.value("subnets", spec.subnets);
    spec.radius_min = j.value("radius_min", spec.radius_min);
    spec.radius_max = j.value("radius_max", spec.radius_max);
    spec.seed = j.value("seed", spec.seed);
    spec.max_retries = j.value("max_retries", spec.max_retries);
    auto topo = std::make_shared<const sdgt::SubnetTopology>(sdgt::build_topology(spec));
    sdgt::validate_topology(*topo);
    *out = new sdgt_topology{std::move(topo)};
  });
}

sdgt_status sdgt_topology_load(const char* path, sdgt_topology** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new sdgt_topology{std::make_shared<const sdgt::SubnetTopology>(sdgt::load_topology(path))};
  });
}

sdgt_status sdgt_topology_save(const sdgt_topology* topo, const char* path) {
  return guarded([&] {
    need(topo, "topology");
    need(path, "path");
    sdgt::save_topology(*topo->topo, path);
  });
}

sdgt_status sdgt_topology_to_json(const sdgt_topology* topo, char** out) {
  return guarded([&] {
    need(topo, "topology");
    need(out, "out");
    *out = dup_string(sdgt::topology_to_json(*topo->topo).dump(1));
  });
}

sdgt_status sdgt_topology_num_clients(const sdgt_topology* topo, int* out) {
  return guarded([&] {
    need(topo, "topology");
    need(out, "out");
    *out = topo->topo->num_clients();
  });
}

sdgt_status sdgt_topology_num_subnets(const sdgt_topology* topo, int* out) {
  return guarded([&] {
    need(topo, "topology");
    need(out, "out");
    *out = topo->topo->num_subnets();
  });
}

sdgt_status sdgt_topology_mixing_rate(const sdgt_topology* topo, int subnet, double* out) {
  return guarded([&] {
    need(topo, "topology");
    need(out, "out");
    sdgt::require(subnet >= 0 && subnet < topo->topo->num_subnets(), "subnet index out of range");
    *out = topo->topo->rho[subnet];
  });
}

void sdgt_topology_free(sdgt_topology* topo) { delete topo; }

// ---- problems ----------------------------------------------------------

sdgt_status sdgt_problem_create(const char* config_json, sdgt_problem** out) {
  return guarded([&] {
    need(out, "out");
    *out = new sdgt_problem{sdgt::problem_from_config(parse(config_json, "problem config"))};
  });
}

sdgt_status sdgt_problem_load(const char* snapshot_path, sdgt_problem** out) {
  return guarded([&] {
    need(snapshot_path, "path");
    need(out, "out");
    *out = new sdgt_problem{sdgt::problem_from_snapshot(sdgt::read_json_file(snapshot_path))};
  });
}

sdgt_status sdgt_problem_snapshot(const sdgt_problem* problem, char** out) {
  return guarded([&] {
    need(problem, "problem");
    need(out, "out");
    *out = dup_string(problem->problem->snapshot().dump());
  });
}

sdgt_status sdgt_problem_dim(const sdgt_problem* problem, int* out) {
  return guarded([&] {
    need(problem, "problem");
    need(out, "out");
    *out = problem->problem->dim();
  });
}

sdgt_status sdgt_problem_num_clients(const sdgt_problem* problem, int* out) {
  return guarded([&] {
    need(problem, "problem");
    need(out, "out");
    *out = problem->problem->num_clients();
  });
}

sdgt_status sdgt_problem_global_loss(const sdgt_problem* problem, const double* x, size_t len,
                                     double* out) {
  return guarded([&] {
    need(problem, "problem");
    need(x, "x");
    need(out, "out");
    sdgt::require(len == static_cast<size_t>(problem->problem->dim()), "x has the wrong length");
    const sdgt::Vec v = Eigen::Map<const sdgt::Vec>(x, static_cast<Eigen::Index>(len));
    *out = problem->problem->global_loss(v);
  });
}

void sdgt_problem_free(sdgt_problem* problem) { delete problem; }

// ---- runs --------------------------------------------------------------

sdgt_status sdgt_run_create(const sdgt_topology* topo, const sdgt_problem* problem,
                            const char* config_json, sdgt_run** out) {
  return guarded([&] {
    need(topo, "topology");
    need(problem, "problem");
    need(out, "out");
    const sdgt::RunConfig cfg = run_config_from_json(parse(config_json, "run config"), *topo->topo);
    *out = new sdgt_run{std::make_unique<sdgt::Trainer>(cfg, topo->topo, problem->problem)};
  });
}

sdgt_status sdgt_run_step(sdgt_run* run) {
  return guarded([&] {
    need(run, "run");
    run->trainer->step();
  });
}

sdgt_status sdgt_run_execute(sdgt_run* run) {
  return guarded([&] {
    need(run, "run");
    run->trainer->run();
    if (run->trainer->summary().diverged)
      sdgt::fail(sdgt::ErrorCode::kDiverged, run->trainer->summary().divergence_message);
  });
}

sdgt_status sdgt_run_rounds(const sdgt_run* run, int* out) {
  return guarded([&] {
    need(run, "run");
    need(out, "out");
    *out = run->trainer->server().round;
  });
}

sdgt_status sdgt_run_metrics_csv(const sdgt_run* run, char** out) {
  return guarded([&] {
    need(run, "run");
    need(out, "out");
    *out = dup_string(sdgt::metrics_to_csv(run->trainer->records()));
  });
}

sdgt_status sdgt_run_global_model(const sdgt_run* run, double* buf, size_t len) {
  return guarded([&] {
    need(run, "run");
    need(buf, "buf");
    const sdgt::Vec& x = run->trainer->server().x_global;
    sdgt::require(len == static_cast<size_t>(x.size()), "buffer has the wrong length");
    std::memcpy(buf, x.data(), len * sizeof(double));
  });
}

void sdgt_run_free(sdgt_run* run) { delete run; }

// ---- co-optimizer ------------------------------------------------------

sdgt_status sdgt_cooptimize(const char* problem_json, char** solution_json, char** pareto_csv) {
  return guarded([&] {
    need(solution_json, "solution_json");
    const sdgt::CoOptProblem problem =
        sdgt::coopt_problem_from_json(parse(problem_json, "co-optimization problem"));
    const sdgt::CoOptSolution sol = sdgt::solve(problem);
    const sdgt::RelaxedSolution rel = sdgt::solve_relaxed(problem);
    nlohmann::json doc = {{"problem", sdgt::coopt_problem_to_json(problem)},
                          {"solution", sdgt::solution_to_json(sol)},
                          {"relaxed",
                           {{"objective", rel.objective},
                            {"p", rel.p},
                            {"K", rel.K},
                            {"beta", rel.beta},
                            {"constraint_active", rel.constraint_active},
                            {"rounded", sdgt::solution_to_json(rel.rounded)}}}};
    std::string csv;
    if (pareto_csv) csv = sdgt::pareto_to_csv(sdgt::pareto_frontier(problem));
    *solution_json = dup_string(doc.dump(2));
    if (pareto_csv) *pareto_csv = dup_string(csv);
  });
}

// ---- experiments, plots, checks -----------------------------------------

sdgt_status sdgt_experiment_run(const char* spec_path, int write_summary, char** report_json) {
  return guarded([&] {
    need(spec_path, "spec_path");
    const sdgt::ExperimentSpec spec = sdgt::load_experiment(spec_path);
    sdgt::ExperimentOptions opts = sdgt::options_from_env();
    opts.write_summary = write_summary != 0;
    const sdgt::ExperimentResult result = sdgt::run_experiment(spec, opts);
    int diverged = 0;
    for (const auto& r : result.runs) diverged += r.summary.diverged ? 1 : 0;
    if (report_json) {
      const nlohmann::json report = {{"directory", result.directory},
                                     {"manifest", result.manifest_path},
                                     {"spec_hash", result.manifest.at("spec_hash")},
                                     {"runs", result.runs.size()},
                                     {"diverged", diverged},
                                     {"table", sdgt::summary_table(result)}};
      *report_json = dup_string(report.dump(2));
    }
  });
}

sdgt_status sdgt_experiment_preset(const char* name, char** spec_json) {
  return guarded([&] {
    need(name, "name");
    need(spec_json, "spec_json");
    *spec_json = dup_string(sdgt::experiment_to_json(sdgt::preset(name)).dump(2));
  });
}

sdgt_status sdgt_plot(const char* plot_spec_path, char** output_path) {
  return guarded([&] {
    need(plot_spec_path, "plot_spec_path");
    const std::string path = sdgt::emit_plot(sdgt::load_plot_spec(plot_spec_path));
    if (output_path) *output_path = dup_string(path);
  });
}

sdgt_status sdgt_check(const char* suite, char** report) {
  return guarded([&] {
    need(suite, "suite");
    const auto results = sdgt::run_suite(suite);
    if (report) *report = dup_string(sdgt::format_report(suite, results));
    if (!sdgt::all_passed(results))
      sdgt::fail(sdgt::ErrorCode::kCheckFailed, std::string("suite '") + suite + "' has failing checks");
  });
}

}  // extern "C"
