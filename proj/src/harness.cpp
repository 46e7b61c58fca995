#include "sdgt/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "sdgt/error.hpp"
#include "sdgt/io.hpp"
#include "sdgt/rng.hpp"

namespace sdgt {

namespace {

using nlohmann::json;

const std::set<std::string> kTopLevelKeys = {
    "format",      "description", "name",       "problem",         "topology",
    "algorithms",  "run",         "per_algorithm", "costs",        "sweep",
    "seed_scope",  "cooptimize",  "diagnostics", "write_snapshots", "output_dir"};

const std::set<std::string> kRunKeys = {"K",          "T",           "gamma",
                                        "sample_rate", "seed",       "batch_size",
                                        "diagnostics", "divergence_guard"};

template <typename T>
std::vector<T> axis_values(const json& sweep, const char* key) {
  const json& axis = sweep.at(key);
  if (!axis.is_array()) fail(ErrorCode::kParse, std::string("sweep axis '") + key + "' must be an array");
  if (axis.empty()) fail(ErrorCode::kInvalidArgument, std::string("sweep axis '") + key + "' is empty");
  return axis.get<std::vector<T>>();
}

// Short, stable label for a sample rate or delta inside a file name.
std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

std::string canonical(const json& j) { return j.dump(); }

}  // namespace

ExperimentSpec experiment_from_json(const json& doc) {
  try {
    require(doc.is_object(), "experiment spec must be an object");
    for (const auto& [key, _] : doc.items())
      if (!kTopLevelKeys.count(key))
        fail(ErrorCode::kInvalidArgument, "unknown experiment key '" + key + "'");
    if (doc.contains("format"))
      require(doc.at("format") == "sdgt-experiment/1", "unsupported experiment format");

    ExperimentSpec spec;
    spec.name = doc.at("name").get<std::string>();

    spec.problem = doc.at("problem");
    require(spec.problem.is_object() && spec.problem.contains("kind"),
            "problem must be an object with a 'kind'");
    require(spec.problem.contains("seed"), "problem.seed is required");

    const json& topo = doc.at("topology");
    require(topo.contains("seed"), "topology.seed is required");
    spec.topology.n = topo.value("n", spec.topology.n);
    spec.topology.subnets = topo.value("subnets", spec.topology.subnets);
    spec.topology.radius_min = topo.value("radius_min", spec.topology.radius_min);
    spec.topology.radius_max = topo.value("radius_max", spec.topology.radius_max);
    spec.topology.seed = topo.at("seed").get<std::uint64_t>();
    spec.topology.max_retries = topo.value("max_retries", spec.topology.max_retries);
    spec.equal_sizes = topo.value("equal_sizes", true);

    for (const auto& a : doc.at("algorithms")) spec.algorithms.push_back(parse_algorithm(a.get<std::string>()));

    if (doc.contains("run")) spec.run = doc.at("run");
    require(spec.run.is_object(), "run must be an object");
    for (const auto& [key, _] : spec.run.items())
      if (!kRunKeys.count(key)) fail(ErrorCode::kInvalidArgument, "unknown run key '" + key + "'");

    if (doc.contains("per_algorithm"))
      for (const auto& [key, value] : doc.at("per_algorithm").items()) {
        require(value.is_object(), "per_algorithm entries must be objects");
        for (const auto& [k, _] : value.items())
          if (!kRunKeys.count(k) || k == "K" || k == "sample_rate" || k == "seed")
            fail(ErrorCode::kInvalidArgument, "per_algorithm key '" + k + "' cannot be overridden");
        spec.per_algorithm[algorithm_name(parse_algorithm(key))] = value;
      }

    if (doc.contains("costs")) spec.costs = doc.at("costs");
    require(spec.costs.is_object(), "costs must be an object");

    const json& sweep = doc.at("sweep");
    require(sweep.is_object(), "sweep must be an object");
    if (sweep.empty()) fail(ErrorCode::kInvalidArgument, "sweep axes are empty");
    for (const auto& [key, _] : sweep.items())
      if (key != "K" && key != "sample_rate" && key != "seed" && key != "delta")
        fail(ErrorCode::kInvalidArgument, "unknown sweep axis '" + key + "'");
    spec.sweep.K = sweep.contains("K") ? axis_values<int>(sweep, "K")
                                       : std::vector<int>{spec.run.value("K", 10)};
    spec.sweep.sample_rate = sweep.contains("sample_rate")
                                 ? axis_values<double>(sweep, "sample_rate")
                                 : std::vector<double>{spec.run.value("sample_rate", 1.0)};
    spec.sweep.seed = sweep.contains("seed")
                          ? axis_values<std::uint64_t>(sweep, "seed")
                          : std::vector<std::uint64_t>{spec.run.value("seed", std::uint64_t{1})};
    if (sweep.contains("delta")) {
      spec.sweep.delta = axis_values<double>(sweep, "delta");
      spec.sweep.delta_swept = true;
    }

    const std::string scope = doc.value("seed_scope", std::string("run"));
    require(scope == "run" || scope == "all", "seed_scope must be 'run' or 'all'");
    spec.seed_scope_all = scope == "all";

    if (doc.contains("cooptimize")) {
      const json& c = doc.at("cooptimize");
      CoOptMode mode;
      if (c.contains("lambda")) mode.lambda = c.at("lambda").get<std::array<double, 4>>();
      mode.k_max = c.value("k_max", mode.k_max);
      spec.cooptimize = mode;
    }
    spec.diagnostics = doc.value("diagnostics", false);
    spec.write_snapshots = doc.value("write_snapshots", true);
    spec.output_dir = doc.value("output_dir", spec.output_dir);
    validate(spec);
    return spec;
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("malformed experiment spec: ") + e.what());
  }
}

json experiment_to_json(const ExperimentSpec& spec) {
  json doc;
  doc["format"] = "sdgt-experiment/1";
  doc["name"] = spec.name;
  doc["problem"] = spec.problem;
  doc["topology"] = {{"n", spec.topology.n},
                     {"subnets", spec.topology.subnets},
                     {"radius_min", spec.topology.radius_min},
                     {"radius_max", spec.topology.radius_max},
                     {"seed", spec.topology.seed},
                     {"max_retries", spec.topology.max_retries},
                     {"equal_sizes", spec.equal_sizes}};
  json algos = json::array();
  for (Algorithm a : spec.algorithms) algos.push_back(algorithm_name(a));
  doc["algorithms"] = algos;
  doc["run"] = spec.run;
  json per = json::object();
  for (const auto& [k, v] : spec.per_algorithm) per[k] = v;
  doc["per_algorithm"] = per;
  doc["costs"] = spec.costs;
  json sweep = {{"K", spec.sweep.K}, {"sample_rate", spec.sweep.sample_rate}, {"seed", spec.sweep.seed}};
  if (spec.sweep.delta_swept) sweep["delta"] = spec.sweep.delta;
  doc["sweep"] = sweep;
  doc["seed_scope"] = spec.seed_scope_all ? "all" : "run";
  if (spec.cooptimize)
    doc["cooptimize"] = {{"lambda", spec.cooptimize->lambda}, {"k_max", spec.cooptimize->k_max}};
  doc["diagnostics"] = spec.diagnostics;
  doc["write_snapshots"] = spec.write_snapshots;
  doc["output_dir"] = spec.output_dir;
  return doc;
}

void validate(const ExperimentSpec& spec) {
  require(!spec.name.empty(), "experiment name must not be empty");
  require(spec.name.find('/') == std::string::npos && spec.name != "." && spec.name != "..",
          "experiment name must be a plain directory name");
  require(spec.topology.subnets >= 1 && spec.topology.n >= spec.topology.subnets,
          "topology needs 1 <= subnets <= n");
  if (spec.equal_sizes)
    require(spec.topology.n % spec.topology.subnets == 0,
            "n = " + std::to_string(spec.topology.n) + " is not divisible by S = " +
                std::to_string(spec.topology.subnets) + " but equal-size subnets were requested");
  require(!spec.algorithms.empty(), "at least one algorithm is required");
  require(!spec.sweep.K.empty() && !spec.sweep.sample_rate.empty() && !spec.sweep.seed.empty(),
          "sweep axes are empty");
  require(!spec.sweep.delta_swept || !spec.sweep.delta.empty(), "sweep axis 'delta' is empty");
  for (int k : spec.sweep.K) require(k >= 1, "swept K must be at least 1");
  for (double r : spec.sweep.sample_rate) require(r > 0.0 && r <= 1.0, "sample rates must lie in (0, 1]");
  for (double d : spec.sweep.delta) require(d >= 0.0, "delta must be non-negative");
  const bool has_delta = spec.sweep.delta_swept || spec.costs.contains("delta");
  require(!(has_delta && spec.costs.contains("d2d_cost")),
          "costs: give either delta or d2d_cost, not both");
  if (spec.cooptimize) {
    require(has_delta || spec.costs.contains("d2d_cost"),
            "co-optimizer mode needs D2D costs (delta or d2d_cost)");
    require(spec.cooptimize->k_max >= 1, "co-optimizer K_max must be at least 1");
  }
}

std::string spec_hash(const ExperimentSpec& spec) {
  json doc = experiment_to_json(spec);
  doc.erase("output_dir");
  return fnv1a_hex(canonical(doc));
}

// ---------------------------------------------------------------------------
// Presets

std::vector<std::string> preset_names() { return {"fig3-like", "fig4-like", "fig5-like"}; }

bool is_preset(const std::string& name) {
  const auto names = preset_names();
  return std::find(names.begin(), names.end(), name) != names.end();
}

ExperimentSpec preset(const std::string& name) {
  json doc;
  const json topology = {{"n", 30}, {"subnets", 6}, {"radius_min", 0.5}, {"radius_max", 3.5}, {"seed", 1}};
  if (name == "fig3-like") {
    doc = {{"name", name},
           {"problem", {{"kind", "classification"}, {"seed", 1}}},
           {"topology", topology},
           {"algorithms", {"sdgt", "sd_fedavg", "scaffold"}},
           {"run", {{"T", 150}, {"gamma", 0.1}, {"batch_size", 10}}},
           {"sweep", {{"K", {3, 10}}, {"sample_rate", {0.4}}, {"seed", {1}}}}};
  } else if (name == "fig4-like") {
    doc = {{"name", name},
           {"problem", {{"kind", "least_squares"}, {"kappa_preset", 80}, {"noise_std", 0.2}, {"seed", 1}}},
           {"topology", topology},
           {"algorithms", {"sdgt", "sd_fedavg", "scaffold"}},
           {"run", {{"T", 300}, {"gamma", 0.02}}},
           {"per_algorithm", {{"scaffold", {{"gamma", 0.01}}}}},
           {"sweep", {{"K", {40}}, {"sample_rate", {0.2, 0.4, 1.0}}, {"seed", {1}}}}};
  } else if (name == "fig5-like") {
    doc = {{"name", name},
           {"problem", {{"kind", "least_squares"}, {"kappa_preset", 80}, {"noise_std", 0.2}, {"seed", 1}}},
           {"topology", topology},
           {"algorithms", {"sdgt"}},
           {"run", {{"T", 300}, {"gamma", 0.02}}},
           {"costs", {{"ds_cost", {{"uniform", {1.0, 100.0}}, {"seed", 6}}}}},
           {"sweep", {{"delta", {1.0, 1e-3}}, {"seed", {1}}}},
           {"cooptimize", {{"lambda", {1.0, 1.0, 0.1, 0.01}}, {"k_max", 50}}}};
  } else {
    fail(ErrorCode::kInvalidArgument, "unknown preset '" + name + "'");
  }
  return experiment_from_json(doc);
}

ExperimentSpec load_experiment(const std::string& path_or_preset) {
  namespace fs = std::filesystem;
  if (!fs::exists(path_or_preset) && is_preset(path_or_preset)) return preset(path_or_preset);
  ExperimentSpec spec = experiment_from_json(read_json_file(path_or_preset));
  const fs::path out(spec.output_dir);
  if (out.is_relative()) {
    const fs::path base = fs::path(path_or_preset).parent_path();
    spec.output_dir = (base / out).lexically_normal().string();
  }
  return spec;
}

ExperimentOptions options_from_env() {
  ExperimentOptions opts;
  if (const char* dir = std::getenv("SDGT_OUTPUT_DIR"); dir && *dir) opts.output_dir = dir;
  if (const char* threads = std::getenv("SDGT_THREADS"); threads && *threads) {
    char* end = nullptr;
    const long v = std::strtol(threads, &end, 10);
    require(end && *end == '\0' && v >= 1 && v <= 1024, "SDGT_THREADS must be an integer in 1..1024");
    opts.threads = static_cast<int>(v);
  }
  return opts;
}

// ---------------------------------------------------------------------------
// Execution

namespace {

struct Context {
  std::map<std::string, std::shared_ptr<const Problem>> problems;
  std::map<std::string, std::shared_ptr<const SubnetTopology>> topologies;
  std::map<std::string, std::uint64_t> problem_seeds;
  std::map<std::string, std::uint64_t> topology_seeds;
};

json problem_config(const ExperimentSpec& spec, std::uint64_t seed) {
  json cfg = spec.problem;
  if (spec.seed_scope_all) cfg["seed"] = seed;
  if (!cfg.contains("n")) cfg["n"] = spec.topology.n;
  return cfg;
}

TopologySpec topology_spec(const ExperimentSpec& spec, std::uint64_t seed) {
  TopologySpec t = spec.topology;
  if (spec.seed_scope_all) t.seed = seed;
  return t;
}

std::string topology_key(const TopologySpec& t) {
  return canonical(json{{"n", t.n}, {"subnets", t.subnets}, {"radius_min", t.radius_min},
                        {"radius_max", t.radius_max}, {"seed", t.seed}, {"max_retries", t.max_retries}});
}

std::vector<double> base_ds_costs(const ExperimentSpec& spec, int subnets) {
  if (spec.costs.contains("ds_cost")) return ds_costs_from_json(spec.costs.at("ds_cost"), subnets);
  return std::vector<double>(subnets, 1.0);
}

CostModel cost_model(const ExperimentSpec& spec, int subnets, std::optional<double> delta) {
  CostModel costs;
  costs.ds_cost = base_ds_costs(spec, subnets);
  if (delta) {
    costs = CostModel::from_delta(costs.ds_cost, *delta);
  } else if (spec.costs.contains("d2d_cost")) {
    costs.d2d_cost = spec.costs.at("d2d_cost").get<std::vector<double>>();
  } else {
    costs.d2d_cost.assign(subnets, 0.0);
  }
  costs.tracker_exchange_rounds = spec.costs.value("tracker_exchange_rounds", 0.0);
  validate_costs(costs, subnets);
  return costs;
}

RunConfig base_config(const ExperimentSpec& spec, Algorithm algo) {
  json merged = spec.run;
  if (auto it = spec.per_algorithm.find(algorithm_name(algo)); it != spec.per_algorithm.end())
    merged.merge_patch(it->second);
  RunConfig cfg;
  cfg.algorithm = algo;
  cfg.T = merged.value("T", cfg.T);
  cfg.gamma = merged.value("gamma", cfg.gamma);
  cfg.batch_size = merged.value("batch_size", cfg.batch_size);
  cfg.divergence_guard = merged.value("divergence_guard", cfg.divergence_guard);
  cfg.diagnostics = spec.diagnostics || merged.value("diagnostics", false);
  return cfg;
}

std::string run_file(const std::string& label, int K, double rate, std::uint64_t seed,
                     std::optional<double> delta, bool delta_swept) {
  std::string f = label + "_K" + std::to_string(K) + "_sr" + short_number(rate) + "_seed" +
                  std::to_string(seed);
  if (delta_swept && delta) f += "_delta" + short_number(*delta);
  return f + ".csv";
}

json final_metrics(const std::vector<MetricsRecord>& records) {
  if (records.empty()) return nullptr;
  const MetricsRecord& r = records.back();
  auto num = [](double v) -> json { return std::isfinite(v) ? json(v) : json(nullptr); };
  return {{"t", r.t},
          {"loss", num(r.loss)},
          {"grad_norm_sq", num(r.grad_norm_sq)},
          {"dist_to_opt_sq", num(r.dist_to_opt_sq)},
          {"Delta", num(r.delta)},
          {"Gamma", num(r.gamma)},
          {"Y", num(r.y)},
          {"Z", num(r.z)},
          {"comm_cost_cum", num(r.comm_cost_cum)}};
}

}  // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec, const ExperimentOptions& options) {
  namespace fs = std::filesystem;
  validate(spec);
  ExperimentResult result;
  const std::string root = options.output_dir.value_or(spec.output_dir);
  result.directory = (fs::path(root) / spec.name).string();

  // Materialize every problem and topology up front (sequential, deterministic).
  Context ctx;
  auto ensure = [&](std::uint64_t seed, std::string& pkey, std::string& tkey) {
    const json pcfg = problem_config(spec, seed);
    pkey = canonical(pcfg);
    if (!ctx.problems.count(pkey)) {
      ctx.problems[pkey] = problem_from_config(pcfg);
      ctx.problem_seeds[pkey] = pcfg.at("seed").get<std::uint64_t>();
    }
    const TopologySpec tspec = topology_spec(spec, seed);
    tkey = topology_key(tspec);
    if (!ctx.topologies.count(tkey)) {
      auto topo = std::make_shared<const SubnetTopology>(build_topology(tspec));
      validate_topology(*topo);
      ctx.topologies[tkey] = topo;
      ctx.topology_seeds[tkey] = tspec.seed;
    }
    require(ctx.problems[pkey]->num_clients() == ctx.topologies[tkey]->num_clients(),
            "problem and topology disagree on the number of clients");
  };

  std::vector<std::optional<double>> deltas;
  if (spec.sweep.delta_swept) {
    for (double d : spec.sweep.delta) deltas.emplace_back(d);
  } else if (spec.costs.contains("delta")) {
    deltas.emplace_back(spec.costs.at("delta").get<double>());
  } else {
    deltas.emplace_back(std::nullopt);
  }

  std::vector<RunPlan> plans;
  for (Algorithm algo : spec.algorithms) {
    if (spec.cooptimize) {
      for (const auto& delta : deltas)
        for (std::uint64_t seed : spec.sweep.seed) {
          RunPlan base;
          ensure(seed, base.problem_key, base.topology_key);
          const SubnetTopology& topo = *ctx.topologies[base.topology_key];
          const CostModel costs = cost_model(spec, topo.num_subnets(), delta);
          CoOptProblem cp;
          for (int s = 0; s < topo.num_subnets(); ++s) cp.subnet_sizes.push_back(topo.subnet_size(s));
          cp.ds_cost = costs.ds_cost;
          cp.d2d_cost = costs.d2d_cost;
          cp.lambda = spec.cooptimize->lambda;
          cp.k_max = spec.cooptimize->k_max;
          validate(cp);
          const CoOptSolution sol = solve(cp);
          if (algo == spec.algorithms.front()) result.cooptimizations.push_back({delta, seed, cp, sol});

          for (int variant = 0; variant < 2; ++variant) {
            RunPlan plan = base;
            plan.algorithm = algo;
            plan.seed = seed;
            plan.delta = delta;
            plan.config = base_config(spec, algo);
            plan.config.costs = costs;
            plan.config.sampling_seed = seed;
            plan.config.batching_seed = seed;
            if (variant == 0) {
              plan.label = algorithm_name(algo) + "_coopt";
              plan.K = sol.K;
              plan.config.samples_per_subnet = sol.samples;
            } else {
              plan.label = algorithm_name(algo) + "_naive";
              plan.K = 1;
              plan.config.samples_per_subnet = cp.subnet_sizes;
            }
            plan.config.K = plan.K;
            int sampled = 0;
            for (int h : plan.config.samples_per_subnet) sampled += h;
            plan.sample_rate = static_cast<double>(sampled) / topo.num_clients();
            plan.file = run_file(plan.label, plan.K, plan.sample_rate, seed, delta, spec.sweep.delta_swept);
            plans.push_back(std::move(plan));
          }
        }
      continue;
    }
    for (int K : spec.sweep.K)
      for (double rate : spec.sweep.sample_rate)
        for (std::uint64_t seed : spec.sweep.seed)
          for (const auto& delta : deltas) {
            RunPlan plan;
            ensure(seed, plan.problem_key, plan.topology_key);
            const SubnetTopology& topo = *ctx.topologies[plan.topology_key];
            plan.label = algorithm_name(algo);
            plan.algorithm = algo;
            plan.K = K;
            plan.sample_rate = rate;
            plan.seed = seed;
            plan.delta = delta;
            plan.config = base_config(spec, algo);
            plan.config.K = K;
            plan.config.samples_per_subnet = samples_from_rate(topo, rate);
            plan.config.sampling_seed = seed;
            plan.config.batching_seed = seed;
            plan.config.costs = cost_model(spec, topo.num_subnets(), delta);
            plan.file = run_file(plan.label, K, rate, seed, delta, spec.sweep.delta_swept);
            plans.push_back(std::move(plan));
          }
  }
  {
    std::set<std::string> names;
    for (const auto& p : plans)
      require(names.insert(p.file).second, "two runs map to the same file name '" + p.file + "'");
  }
  // Configuration errors surface before any run starts.
  for (const auto& p : plans)
    validate_config(p.config, *ctx.topologies[p.topology_key], *ctx.problems[p.problem_key]);

  // Run-level parallelism; each worker owns whole runs and its own output slot.
  result.runs.resize(plans.size());
  std::vector<std::exception_ptr> errors(plans.size());
  int threads = options.threads;
  if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = std::min<int>(threads, static_cast<int>(std::max<std::size_t>(1, plans.size())));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < plans.size(); i = next++) {
      try {
        const RunPlan& plan = plans[i];
        Trainer trainer(plan.config, ctx.topologies.at(plan.topology_key),
                        ctx.problems.at(plan.problem_key));
        trainer.run();
        RunOutcome out;
        out.plan = plan;
        out.records = trainer.records();
        out.summary = trainer.summary();
        out.csv = metrics_to_csv(out.records);
        write_file_atomic((fs::path(result.directory) / plan.file).string(), out.csv);
        result.runs[i] = std::move(out);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  // Auxiliary documents and the manifest.
  json topo_files = json::array();
  for (const auto& [key, topo] : ctx.topologies) {
    const std::string file = "topology_seed" + std::to_string(ctx.topology_seeds[key]) + ".json";
    write_file_atomic((fs::path(result.directory) / file).string(), topology_to_json(*topo).dump(1));
    topo_files.push_back(file);
  }
  json problem_files = json::array();
  if (spec.write_snapshots)
    for (const auto& [key, problem] : ctx.problems) {
      const std::string file = "problem_seed" + std::to_string(ctx.problem_seeds[key]) + ".json";
      write_file_atomic((fs::path(result.directory) / file).string(), problem->snapshot().dump());
      problem_files.push_back(file);
    }

  json runs = json::array();
  for (const auto& r : result.runs) {
    json entry = {{"file", r.plan.file},
                  {"algorithm", algorithm_name(r.plan.algorithm)},
                  {"label", r.plan.label},
                  {"K", r.plan.K},
                  {"sample_rate", r.plan.sample_rate},
                  {"samples_per_subnet", r.plan.config.samples_per_subnet},
                  {"seed", r.plan.seed},
                  {"gamma", r.plan.config.gamma},
                  {"T", r.plan.config.T},
                  {"rounds", r.records.size()},
                  {"diverged", r.summary.diverged},
                  {"csv_fnv1a", fnv1a_hex(r.csv)},
                  {"max_psi_residual", r.summary.max_psi_residual},
                  {"max_z_residual", r.summary.max_z_residual},
                  {"final", final_metrics(r.records)}};
    if (r.plan.delta) entry["delta"] = *r.plan.delta;
    if (r.summary.diverged) entry["divergence_message"] = r.summary.divergence_message;
    runs.push_back(entry);
  }
  json coopt = json::array();
  for (const auto& c : result.cooptimizations) {
    json e = {{"seed", c.seed},
              {"problem", coopt_problem_to_json(c.problem)},
              {"solution", solution_to_json(c.solution)}};
    if (c.delta) e["delta"] = *c.delta;
    coopt.push_back(e);
  }

  json manifest = {{"format", "sdgt-manifest/1"},
                   {"name", spec.name},
                   {"spec_hash", spec_hash(spec)},
                   {"version", SDGT_VERSION_STRING},
                   {"rng", RandomStream::kVersion},
                   {"spec", [&] {
                      json s = experiment_to_json(spec);
                      s.erase("output_dir");
                      return s;
                    }()},
                   {"topologies", topo_files},
                   {"problems", problem_files},
                   {"runs", runs}};
  if (spec.cooptimize) manifest["cooptimize"] = coopt;
  result.manifest = manifest;
  result.manifest_path = (fs::path(result.directory) / "manifest.json").string();
  write_file_atomic(result.manifest_path, manifest.dump(2) + "\n");

  if (options.write_summary)
    write_file_atomic((fs::path(result.directory) / "summary.csv").string(), summary_csv(result));
  return result;
}

std::string summary_csv(const ExperimentResult& result) {
  std::ostringstream out;
  out << "file,algorithm,K,sample_rate,seed,delta,rounds,diverged,loss,grad_norm_sq,"
         "dist_to_opt_sq,comm_cost_cum\n";
  for (const auto& r : result.runs) {
    const MetricsRecord last = r.records.empty() ? MetricsRecord{} : r.records.back();
    out << r.plan.file << ',' << r.plan.label << ',' << r.plan.K << ','
        << format_double(r.plan.sample_rate) << ',' << r.plan.seed << ','
        << (r.plan.delta ? format_double(*r.plan.delta) : std::string()) << ',' << r.records.size()
        << ',' << (r.summary.diverged ? 1 : 0) << ',' << format_double(last.loss) << ','
        << format_double(last.grad_norm_sq) << ',' << format_double(last.dist_to_opt_sq) << ','
        << format_double(last.comm_cost_cum) << '\n';
  }
  return out.str();
}

std::string summary_table(const ExperimentResult& result) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-44s %6s %12s %12s %12s %s\n", "run", "rounds", "loss",
                "dist_to_opt", "comm_cost", "status");
  out << line;
  for (const auto& r : result.runs) {
    const MetricsRecord last = r.records.empty() ? MetricsRecord{} : r.records.back();
    std::snprintf(line, sizeof(line), "%-44s %6zu %12.4e %12.4e %12.4e %s\n", r.plan.file.c_str(),
                  r.records.size(), last.loss, last.dist_to_opt_sq, last.comm_cost_cum,
                  r.summary.diverged ? "DIVERGED" : "ok");
    out << line;
  }
  return out.str();
}

}  // namespace sdgt
