// Command-line front end. Talks to the library exclusively through the C API.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "sdgt/sdgt.h"

namespace {

// Owns a string returned by the library.
struct LibString {
  char* ptr = nullptr;
  ~LibString() { sdgt_string_free(ptr); }
  std::string str() const { return ptr ? ptr : ""; }
};

int report_failure(sdgt_status status) {
  std::cerr << "error (" << sdgt_status_name(status) << "): " << sdgt_last_error() << "\n";
  return status == SDGT_ERR_CHECK_FAILED ? 1 : 2;
}

bool read_file(const std::string& path, std::string& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::ostringstream ss;
  ss << in.rdbuf();
  out = ss.str();
  return true;
}

int run_experiment(const std::string& spec, bool summary) {
  LibString report;
  const sdgt_status st = sdgt_experiment_run(spec.c_str(), summary ? 1 : 0, &report.ptr);
  if (st != SDGT_OK) return report_failure(st);
  const auto doc = nlohmann::json::parse(report.str());
  std::cout << doc.at("table").get<std::string>();
  std::cout << doc.at("runs").get<int>() << " runs written to " << doc.at("directory").get<std::string>()
            << " (manifest " << doc.at("manifest").get<std::string>() << ", spec hash "
            << doc.at("spec_hash").get<std::string>() << ")\n";
  if (const int diverged = doc.at("diverged").get<int>(); diverged > 0)
    std::cout << "warning: " << diverged << " run(s) diverged; partial CSVs are flagged in the manifest\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Subnet-decentralized federated learning simulator"};
  app.set_version_flag("--version", std::string(sdgt_version()) + " (rng " + sdgt_rng_version() + ")");
  app.require_subcommand(1);

  std::string spec_path;
  bool run_summary = false;
  auto* run = app.add_subcommand("run", "Run every configuration of an experiment spec (file or preset name)");
  run->add_option("spec", spec_path, "Experiment spec file, or fig3-like | fig4-like | fig5-like")->required();
  run->add_flag("--summary", run_summary, "Also write summary.csv");

  auto* sweep = app.add_subcommand("sweep", "Run the sweep cross product and write summary.csv");
  sweep->add_option("spec", spec_path, "Experiment spec file or preset name")->required();

  std::string coopt_path, pareto_out;
  auto* coopt = app.add_subcommand("cooptimize", "Choose per-subnet sample counts and D2D rounds");
  coopt->add_option("problem", coopt_path, "Co-optimization problem document")->required()->check(CLI::ExistingFile);
  coopt->add_option("--pareto-out", pareto_out, "Write the Pareto frontier CSV here instead of stdout");

  std::string plot_path;
  auto* plot = app.add_subcommand("plot", "Render an SVG from metrics CSVs");
  plot->add_option("plot-spec", plot_path, "Plot document")->required()->check(CLI::ExistingFile);

  std::string suite;
  auto* check = app.add_subcommand("check", "Run a verification suite");
  check->add_option("suite", suite, "invariants | reductions | oracles | acceptance")->required();

  std::string preset_name;
  auto* preset = app.add_subcommand("preset", "Print the spec document of a preset");
  preset->add_option("name", preset_name, "fig3-like | fig4-like | fig5-like")->required();

  CLI11_PARSE(app, argc, argv);

  if (*run) return run_experiment(spec_path, run_summary);
  if (*sweep) return run_experiment(spec_path, true);

  if (*coopt) {
    std::string text;
    if (!read_file(coopt_path, text)) {
      std::cerr << "error: cannot read '" << coopt_path << "'\n";
      return 2;
    }
    LibString solution, pareto;
    const sdgt_status st = sdgt_cooptimize(text.c_str(), &solution.ptr, &pareto.ptr);
    if (st != SDGT_OK) return report_failure(st);
    std::cout << solution.str() << "\n";
    if (pareto_out.empty()) {
      std::cout << "\n# Pareto frontier (round cost vs. learning term)\n" << pareto.str();
    } else {
      std::ofstream out(pareto_out, std::ios::binary);
      out << pareto.str();
      if (!out) {
        std::cerr << "error: cannot write '" << pareto_out << "'\n";
        return 2;
      }
    }
    return 0;
  }

  if (*plot) {
    LibString out;
    const sdgt_status st = sdgt_plot(plot_path.c_str(), &out.ptr);
    if (st != SDGT_OK) return report_failure(st);
    std::cout << "wrote " << out.str() << "\n";
    return 0;
  }

  if (*check) {
    LibString report;
    const sdgt_status st = sdgt_check(suite.c_str(), &report.ptr);
    std::cout << report.str();
    std::cout.flush();
    return st == SDGT_OK ? 0 : report_failure(st);
  }

  if (*preset) {
    LibString spec;
    const sdgt_status st = sdgt_experiment_preset(preset_name.c_str(), &spec.ptr);
    if (st != SDGT_OK) return report_failure(st);
    std::cout << spec.str() << "\n";
    return 0;
  }
  return 0;
}
