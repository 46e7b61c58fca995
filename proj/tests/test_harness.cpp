#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "sdgt/error.hpp"
#include "sdgt/harness.hpp"
#include "sdgt/io.hpp"
#include "sdgt/plot.hpp"
#include "test_support.hpp"

using namespace sdgt;
namespace fs = std::filesystem;

namespace {

nlohmann::json small_spec() {
  return nlohmann::json::parse(R"({
    "format": "sdgt-experiment/1",
    "name": "unit",
    "problem": {"kind": "least_squares", "n": 12, "d": 10, "samples_per_client": 8,
                "omega": 0.4, "noise_std": 0.1, "seed": 2},
    "topology": {"n": 12, "subnets": 3, "seed": 2},
    "algorithms": ["sdgt", "sd_fedavg", "scaffold"],
    "run": {"T": 6, "gamma": 0.02},
    "per_algorithm": {"scaffold": {"gamma": 0.01}},
    "sweep": {"K": [1, 3], "sample_rate": [0.5, 1.0]}
  })");
}

std::map<std::string, std::string> read_dir(const std::string& dir) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file())
      out[entry.path().filename().string()] = read_text_file(entry.path().string());
  return out;
}

void write(const std::string& path, const std::string& text) {
  std::ofstream(path) << text;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("spec documents parse, normalize, and round-trip") {
  const ExperimentSpec spec = experiment_from_json(small_spec());
  CHECK(spec.name == "unit");
  CHECK(spec.algorithms.size() == 3);
  CHECK(spec.sweep.K == std::vector<int>{1, 3});
  CHECK(spec.sweep.seed.size() == 1);
  const nlohmann::json normalized = experiment_to_json(spec);
  const ExperimentSpec again = experiment_from_json(normalized);
  CHECK(experiment_to_json(again) == normalized);
  CHECK(spec_hash(again) == spec_hash(spec));
  ExperimentSpec moved = spec;
  moved.output_dir = "elsewhere";
  CHECK(spec_hash(moved) == spec_hash(spec));
  moved.run["T"] = 7;
  CHECK(spec_hash(moved) != spec_hash(spec));
}

TEST_CASE("invalid specs are rejected with a message") {
  auto expect_error = [](nlohmann::json doc, const std::string& needle) {
    try {
      validate(experiment_from_json(doc));
      FAIL("expected rejection containing '" << needle << "'");
    } catch (const Error& e) {
      CHECK_MESSAGE(std::string(e.what()).find(needle) != std::string::npos, e.what());
    }
  };
  auto doc = small_spec();
  doc["surprise"] = 1;
  expect_error(doc, "surprise");
  doc = small_spec();
  doc["run"]["gama"] = 0.1;
  expect_error(doc, "gama");
  doc = small_spec();
  doc["sweep"]["K"] = nlohmann::json::array();
  expect_error(doc, "K");
  doc = small_spec();
  doc["algorithms"] = {"sgd"};
  expect_error(doc, "sgd");
  doc = small_spec();
  doc["topology"]["n"] = 13;
  expect_error(doc, "");
  doc = small_spec();
  doc["problem"].erase("seed");
  expect_error(doc, "seed");
}

TEST_CASE("presets are valid specs") {
  CHECK(preset_names().size() == 3);
  for (const auto& name : preset_names()) {
    CHECK(is_preset(name));
    CHECK_NOTHROW(validate(preset(name)));
  }
  CHECK_FALSE(is_preset("fig9-like"));
  CHECK(preset("fig5-like").cooptimize.has_value());
}

TEST_CASE("experiments write CSVs, snapshots, and a manifest independent of thread count") {
  const ExperimentSpec spec = experiment_from_json(small_spec());
  const std::string a = test::temp_dir("harness_a");
  const std::string b = test::temp_dir("harness_b");
  ExperimentOptions opts;
  opts.output_dir = a;
  opts.threads = 1;
  opts.write_summary = true;
  const ExperimentResult ra = run_experiment(spec, opts);
  opts.output_dir = b;
  opts.threads = 3;
  const ExperimentResult rb = run_experiment(spec, opts);

  CHECK(ra.runs.size() == 12);  // 3 algorithms x 2 K x 2 sample rates
  CHECK(ra.directory == (fs::path(a) / "unit").string());
  const auto fa = read_dir(ra.directory), fb = read_dir(rb.directory);
  CHECK(fa == fb);
  CHECK(fa.count("manifest.json") == 1);
  CHECK(fa.count("summary.csv") == 1);
  CHECK(fa.count("topology_seed2.json") == 1);
  CHECK(fa.count("problem_seed2.json") == 1);
  CHECK(fa.count("sdgt_K3_sr0.5_seed1.csv") == 1);

  const auto manifest = nlohmann::json::parse(fa.at("manifest.json"));
  CHECK(manifest.at("format") == "sdgt-manifest/1");
  CHECK(manifest.at("spec_hash") == spec_hash(spec));
  CHECK(manifest.at("runs").size() == 12);
  for (const auto& run : manifest.at("runs")) {
    const std::string file = run.at("file");
    REQUIRE(fa.count(file) == 1);
    CHECK(run.at("csv_fnv1a") == fnv1a_hex(fa.at(file)));
    CHECK(run.at("diverged") == false);
  }
  // Saved documents reproduce the inputs.
  const SubnetTopology topo = load_topology(ra.directory + "/topology_seed2.json");
  CHECK(topo.num_subnets() == 3);
  const auto problem = problem_from_snapshot(read_json_file(ra.directory + "/problem_seed2.json"));
  CHECK(problem->dim() == 10);
  CHECK(!summary_table(ra).empty());
  CHECK(summary_csv(ra) == fa.at("summary.csv"));
}

TEST_CASE("diverging runs are flagged and keep partial output") {
  auto doc = small_spec();
  doc["algorithms"] = {"sdgt"};
  doc["run"]["gamma"] = 50.0;
  doc["run"]["T"] = 40;
  doc["sweep"] = {{"K", {3}}};
  const std::string dir = test::temp_dir("harness_div");
  ExperimentOptions opts;
  opts.output_dir = dir;
  const ExperimentResult r = run_experiment(experiment_from_json(doc), opts);
  REQUIRE(r.runs.size() == 1);
  CHECK(r.runs[0].summary.diverged);
  CHECK(r.manifest.at("runs")[0].at("diverged") == true);
  CHECK(fs::exists(r.directory + "/" + r.runs[0].plan.file));
}

TEST_CASE("co-optimizer mode runs co-optimized and naive configurations") {
  auto doc = small_spec();
  doc["algorithms"] = {"sdgt"};
  doc["costs"] = {{"ds_cost", {{"uniform", {1, 100}}, {"seed", 6}}}};
  doc["sweep"] = {{"delta", {1.0, 1e-3}}};
  doc["cooptimize"] = {{"k_max", 10}};
  const std::string dir = test::temp_dir("harness_coopt");
  ExperimentOptions opts;
  opts.output_dir = dir;
  const ExperimentResult r = run_experiment(experiment_from_json(doc), opts);
  CHECK(r.runs.size() == 4);
  CHECK(r.cooptimizations.size() == 2);
  int naive = 0;
  for (const auto& run : r.runs)
    if (run.plan.label == "sdgt_naive") {
      ++naive;
      CHECK(run.plan.K == 1);
      CHECK(run.plan.sample_rate == 1.0);
    }
  CHECK(naive == 2);
}

TEST_CASE("plots render from run output") {
  const std::string dir = test::temp_dir("plot");
  ExperimentOptions opts;
  opts.output_dir = dir;
  auto doc = small_spec();
  doc["sweep"] = {{"K", {3}}};
  const std::string out_dir = run_experiment(experiment_from_json(doc), opts).directory;

  write(out_dir + "/plot.json", R"({"output": "out.svg", "x": "comm_cost_cum", "y": "loss",
    "title": "loss vs cost", "series": [{"csv": "sdgt_K3_sr1_seed1.csv", "label": "SD-GT"},
    {"csv": "sd_fedavg_K3_sr1_seed1.csv", "label": "SD-FedAvg"}]})");
  const std::string out = emit_plot(load_plot_spec(out_dir + "/plot.json"));
  const std::string svg = read_text_file(out);
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("SD-FedAvg") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);

  write(out_dir + "/all.json", R"({"output": "all.svg", "manifest": "manifest.json"})");
  CHECK(fs::exists(emit_plot(load_plot_spec(out_dir + "/all.json"))));
}

TEST_CASE("plot errors name the problem and write nothing") {
  const std::string dir = test::temp_dir("plot_err");
  write(dir + "/a.csv", std::string(kCsvHeader) + "\n1,0.5,0.1,nan,nan,nan,nan,nan,1,0\n");
  write(dir + "/empty.csv", std::string(kCsvHeader) + "\n");
  write(dir + "/bad.json",
        R"({"output": "bad.svg", "y": "accuracy", "series": [{"csv": "a.csv", "label": "a"}]})");
  try {
    emit_plot(load_plot_spec(dir + "/bad.json"));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("accuracy") != std::string::npos);
  }
  CHECK_FALSE(fs::exists(dir + "/bad.svg"));

  write(dir + "/empty.json",
        R"({"output": "empty.svg", "y": "loss", "series": [{"csv": "empty.csv", "label": "e"}]})");
  CHECK_THROWS_AS(emit_plot(load_plot_spec(dir + "/empty.json")), Error);
  CHECK_FALSE(fs::exists(dir + "/empty.svg"));
}

TEST_CASE("io helpers") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
  CHECK(format_double(std::nan("")) == "nan");
  // FNV-1a 64 reference vectors.
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
  const std::string dir = test::temp_dir("io");
  write_file_atomic(dir + "/x.txt", "hello");
  CHECK(read_text_file(dir + "/x.txt") == "hello");
  CHECK_THROWS_AS(read_text_file(dir + "/missing.txt"), Error);
  write(dir + "/bad.json", "{nope");
  try {
    read_json_file(dir + "/bad.json");
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kParse);
  }
}

}  // TEST_SUITE
