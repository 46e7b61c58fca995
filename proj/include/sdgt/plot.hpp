#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace sdgt {

struct PlotSeries {
  std::string csv_path;
  std::string label;
};

// Plot document, format "sdgt-plot/1":
//
// {
//   "output": "fig4.svg",
//   "x": "t" | "comm_cost_cum",
//   "y": "dist_to_opt_sq",
//   "log_y": true,
//   "title": "...",
//   "series": [{"csv": "fig4-like/sdgt_K40_sr0.4_seed1.csv", "label": "SD-GT"}, ...],
//   "manifest": "fig4-like/manifest.json"   // alternative: one series per run
// }
//
// Relative paths resolve against the plot document's folder.
struct PlotSpec {
  std::string output;
  std::string x = "t";
  std::string y = "dist_to_opt_sq";
  bool log_y = true;
  std::string title;
  std::vector<PlotSeries> series;
};

PlotSpec plot_spec_from_json(const nlohmann::json& doc, const std::string& base_dir);
PlotSpec load_plot_spec(const std::string& path);

// Renders a self-contained SVG. Fails, naming the column, when a CSV lacks
// the requested metric, and fails when a CSV has no data rows.
std::string render_svg(const PlotSpec& spec);

// Renders and writes spec.output atomically; nothing is written on error.
// Returns the output path.
std::string emit_plot(const PlotSpec& spec);

}  // namespace sdgt
