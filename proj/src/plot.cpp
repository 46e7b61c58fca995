#include "sdgt/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <sstream>

#include "sdgt/diagnostics.hpp"
#include "sdgt/error.hpp"
#include "sdgt/io.hpp"

namespace sdgt {

namespace {

namespace fs = std::filesystem;

std::string resolve(const std::string& path, const std::string& base) {
  if (base.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base) / path).lexically_normal().string();
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

// Round step to 1, 2, or 5 times a power of ten.
double nice_step(double span, int target) {
  const double raw = span / std::max(1, target);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double f = raw / mag;
  const double nice = f < 1.5 ? 1.0 : f < 3.5 ? 2.0 : f < 7.5 ? 5.0 : 10.0;
  return nice * mag;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

struct Series {
  std::string label;
  std::vector<double> x, y;
};

}  // namespace

PlotSpec plot_spec_from_json(const nlohmann::json& doc, const std::string& base_dir) {
  try {
    PlotSpec spec;
    spec.output = resolve(doc.at("output").get<std::string>(), base_dir);
    spec.x = doc.value("x", spec.x);
    require(spec.x == "t" || spec.x == "comm_cost_cum", "plot x axis must be 't' or 'comm_cost_cum'");
    spec.y = doc.value("y", spec.y);
    spec.log_y = doc.value("log_y", spec.log_y);
    spec.title = doc.value("title", spec.y);
    if (doc.contains("series"))
      for (const auto& s : doc.at("series")) {
        PlotSeries series;
        series.csv_path = resolve(s.at("csv").get<std::string>(), base_dir);
        series.label = s.value("label", fs::path(series.csv_path).stem().string());
        spec.series.push_back(series);
      }
    if (doc.contains("manifest")) {
      const std::string manifest_path = resolve(doc.at("manifest").get<std::string>(), base_dir);
      const nlohmann::json manifest = read_json_file(manifest_path);
      const std::string dir = fs::path(manifest_path).parent_path().string();
      for (const auto& run : manifest.at("runs")) {
        const std::string file = run.at("file").get<std::string>();
        spec.series.push_back({resolve(file, dir), fs::path(file).stem().string()});
      }
    }
    require(!spec.series.empty(), "plot needs at least one series");
    return spec;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("malformed plot spec: ") + e.what());
  }
}

PlotSpec load_plot_spec(const std::string& path) {
  return plot_spec_from_json(read_json_file(path), fs::path(path).parent_path().string());
}

std::string render_svg(const PlotSpec& spec) {
  std::vector<Series> series;
  for (const auto& s : spec.series) {
    const CsvTable table = parse_csv(read_text_file(s.csv_path));
    if (table.rows.empty()) fail(ErrorCode::kInvalidArgument, "CSV '" + s.csv_path + "' has no data rows");
    for (const std::string& col : {spec.x, spec.y})
      if (table.column_index(col) < 0)
        fail(ErrorCode::kInvalidArgument, "missing column '" + col + "' in '" + s.csv_path + "'");
    Series out;
    out.label = s.label;
    const auto xs = table.column(spec.x);
    const auto ys = table.column(spec.y);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      double y = ys[i];
      if (!std::isfinite(xs[i]) || !std::isfinite(y)) continue;
      if (spec.log_y) {
        if (y <= 0.0) continue;
        y = std::log10(y);
      }
      out.x.push_back(xs[i]);
      out.y.push_back(y);
    }
    series.push_back(std::move(out));
  }

  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  if (!std::isfinite(xmin)) {  // every value was filtered out
    xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  if (spec.log_y) {
    ymin = std::floor(ymin);
    ymax = std::ceil(ymax);
  }

  const double W = 720, H = 460, left = 80, right = 200, top = 40, bottom = 60;
  const double pw = W - left - right, ph = H - top - bottom;
  auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - ymin) / (ymax - ymin)) * ph; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" viewBox=\"0 0 " << W << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << num(left + pw / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
      << xml_escape(spec.title) << "</text>\n";
  svg << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(pw)
      << "\" height=\"" << num(ph) << "\" fill=\"none\" stroke=\"#333\"/>\n";

  // x ticks
  const double xstep = nice_step(xmax - xmin, 6);
  for (double v = std::ceil(xmin / xstep) * xstep; v <= xmax + 1e-9 * xstep; v += xstep) {
    svg << "<line x1=\"" << num(px(v)) << "\" y1=\"" << num(top + ph) << "\" x2=\"" << num(px(v))
        << "\" y2=\"" << num(top + ph + 5) << "\" stroke=\"#333\"/>"
        << "<text x=\"" << num(px(v)) << "\" y=\"" << num(top + ph + 18)
        << "\" text-anchor=\"middle\">" << tick_label(v) << "</text>\n";
  }
  // y ticks (decades in log mode)
  const double ystep = spec.log_y ? std::max(1.0, std::ceil((ymax - ymin) / 8.0)) : nice_step(ymax - ymin, 6);
  for (double v = std::ceil(ymin / ystep) * ystep; v <= ymax + 1e-9 * ystep; v += ystep) {
    const std::string label = spec.log_y ? "1e" + std::to_string(static_cast<int>(std::lround(v)))
                                         : tick_label(v);
    svg << "<line x1=\"" << num(left - 5) << "\" y1=\"" << num(py(v)) << "\" x2=\"" << num(left + pw)
        << "\" y2=\"" << num(py(v)) << "\" stroke=\"#ddd\"/>"
        << "<text x=\"" << num(left - 8) << "\" y=\"" << num(py(v) + 4) << "\" text-anchor=\"end\">"
        << label << "</text>\n";
  }
  svg << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(H - 18) << "\" text-anchor=\"middle\">"
      << (spec.x == "t" ? "global round" : "cumulative communication cost") << "</text>\n";
  svg << "<text transform=\"translate(20," << num(top + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
      << xml_escape(spec.y) << (spec.log_y ? " (log scale)" : "") << "</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kPalette[k % (sizeof(kPalette) / sizeof(kPalette[0]))];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.6\" points=\"";
    for (std::size_t i = 0; i < series[k].x.size(); ++i)
      svg << (i ? " " : "") << num(px(series[k].x[i])) << ',' << num(py(series[k].y[i]));
    svg << "\"/>\n";
    const double ly = top + 10 + 18.0 * static_cast<double>(k);
    svg << "<line x1=\"" << num(left + pw + 12) << "\" y1=\"" << num(ly) << "\" x2=\""
        << num(left + pw + 34) << "\" y2=\"" << num(ly) << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/><text x=\"" << num(left + pw + 40) << "\" y=\"" << num(ly + 4)
        << "\">" << xml_escape(series[k].label) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string emit_plot(const PlotSpec& spec) {
  require(!spec.output.empty(), "plot output path is empty");
  const std::string svg = render_svg(spec);
  write_file_atomic(spec.output, svg);
  return spec.output;
}

}  // namespace sdgt
