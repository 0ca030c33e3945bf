#include "mate/report.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mate/error.hpp"

namespace mate::report {

namespace fs = std::filesystem;

namespace {

std::string escape_xml(const std::string& s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<int>(i);
    }
    return -1;
  }
};

CsvTable read_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::IOFailure, "cannot open: " + path);
  CsvTable table;
  std::string line;
  if (std::getline(f, line)) table.header = split_csv_line(line);
  while (std::getline(f, line)) {
    if (!line.empty()) table.rows.push_back(split_csv_line(line));
  }
  return table;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

}  // namespace

std::string render_line_chart_svg(const std::string& title, const std::string& x_label,
                                  const std::string& y_label,
                                  const std::vector<Series>& series) {
  const double width = 640, height = 420;
  const double left = 70, right = 20, top = 40, bottom = 50;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;

  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series) {
    for (const double v : s.x) {
      xmin = std::min(xmin, v);
      xmax = std::max(xmax, v);
    }
    for (const double v : s.y) {
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  }
  if (xmin > xmax) {
    xmin = 0;
    xmax = 1;
  }
  if (ymin > ymax) {
    ymin = 0;
    ymax = 1;
  }
  if (xmax - xmin < 1e-12) xmax = xmin + 1;
  if (ymax - ymin < 1e-12) ymax = ymin + 1;
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  auto sx = [&](double v) { return left + (v - xmin) / (xmax - xmin) * plot_w; };
  auto sy = [&](double v) { return top + plot_h - (v - ymin) / (ymax - ymin) * plot_h; };

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " " << height
      << "\">\n";
  svg << "<rect width=\"" << width << "\" height=\"" << height
      << "\" fill=\"white\"/>\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"15\">" << escape_xml(title)
      << "</text>\n";

  // axes
  svg << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left
      << "\" y2=\"" << top + plot_h << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\""
      << left + plot_w << "\" y2=\"" << top + plot_h << "\" stroke=\"black\"/>\n";

  for (int i = 0; i <= 5; ++i) {
    const double fx = xmin + (xmax - xmin) * i / 5.0;
    const double fy = ymin + (ymax - ymin) * i / 5.0;
    svg << "<line x1=\"" << sx(fx) << "\" y1=\"" << top + plot_h << "\" x2=\""
        << sx(fx) << "\" y2=\"" << top + plot_h + 4 << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << sx(fx) << "\" y=\"" << top + plot_h + 18
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
        << std::round(fx * 1000) / 1000 << "</text>\n";
    svg << "<line x1=\"" << left - 4 << "\" y1=\"" << sy(fy) << "\" x2=\"" << left
        << "\" y2=\"" << sy(fy) << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << left - 8 << "\" y=\"" << sy(fy) + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
        << std::round(fy * 1000) / 1000 << "</text>\n";
  }
  svg << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 10
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
      << escape_xml(x_label) << "</text>\n";
  svg << "<text x=\"16\" y=\"" << top + plot_h / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
      << "transform=\"rotate(-90 16 " << top + plot_h / 2 << ")\">"
      << escape_xml(y_label) << "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto& ser = series[s];
    const char* color = kPalette[s % 8];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" "
        << "points=\"";
    for (std::size_t i = 0; i < ser.x.size(); ++i) {
      svg << sx(ser.x[i]) << "," << sy(ser.y[i]) << " ";
    }
    svg << "\"/>\n";
    for (std::size_t i = 0; i < ser.x.size(); ++i) {
      svg << "<circle cx=\"" << sx(ser.x[i]) << "\" cy=\"" << sy(ser.y[i])
          << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
    }
    svg << "<text x=\"" << left + plot_w - 6 << "\" y=\"" << top + 14 + 16 * s
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" "
        << "fill=\"" << color << "\">" << escape_xml(ser.name) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

bool svg_well_formed(const std::string& svg) {
  std::vector<std::string> stack;
  std::size_t pos = 0;
  while ((pos = svg.find('<', pos)) != std::string::npos) {
    const std::size_t end = svg.find('>', pos);
    if (end == std::string::npos) return false;
    std::string tag = svg.substr(pos + 1, end - pos - 1);
    pos = end + 1;
    if (tag.empty()) return false;
    if (tag[0] == '?' || tag[0] == '!') continue;  // declaration or comment
    if (tag.back() == '/') continue;               // self-closing
    if (tag[0] == '/') {
      const std::string name = tag.substr(1);
      if (stack.empty() || stack.back() != name) return false;
      stack.pop_back();
    } else {
      const std::size_t space = tag.find_first_of(" \t\n");
      stack.push_back(space == std::string::npos ? tag : tag.substr(0, space));
    }
  }
  return stack.empty();
}

double recompute_accuracy_from_csv(const std::string& report_csv_path) {
  const CsvTable table = read_csv(report_csv_path);
  const int label_col = table.column("label");
  const int pred_col = table.column("pred");
  if (label_col < 0 || pred_col < 0 || table.rows.empty()) {
    throw Error(ErrorCode::IOFailure,
                "report csv lacks label/pred rows: " + report_csv_path);
  }
  int correct = 0;
  for (const auto& row : table.rows) {
    if (row[label_col] == row[pred_col]) ++correct;
  }
  return static_cast<double>(correct) / table.rows.size();
}

std::vector<double> mean_loss_trace_from_csv(const std::string& report_csv_path) {
  const CsvTable table = read_csv(report_csv_path);
  std::vector<int> loss_cols;
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    if (table.header[i].rfind("loss_step_", 0) == 0) {
      loss_cols.push_back(static_cast<int>(i));
    }
  }
  std::vector<double> sums(loss_cols.size(), 0.0);
  std::vector<int> counts(loss_cols.size(), 0);
  for (const auto& row : table.rows) {
    for (std::size_t s = 0; s < loss_cols.size(); ++s) {
      const std::string& cell = row[loss_cols[s]];
      if (!cell.empty()) {
        sums[s] += std::stod(cell);
        counts[s] += 1;
      }
    }
  }
  std::vector<double> trace;
  for (std::size_t s = 0; s < sums.size(); ++s) {
    if (counts[s] > 0) trace.push_back(sums[s] / counts[s]);
  }
  return trace;
}

std::vector<std::string> write_report(const std::vector<std::string>& run_dirs,
                                      const std::string& out_dir) {
  if (run_dirs.empty()) {
    throw Error(ErrorCode::InvalidConfig, "report: no run directories given");
  }
  std::error_code ec;
  fs::create_directories(out_dir, ec);

  struct RunInfo {
    std::string dir;
    double accuracy = 0;
    double mean_accuracy = 0;
    double fps = 0;
    int samples = 0;
    int adapted = 0;
    std::vector<double> loss_trace;
  };

  std::vector<RunInfo> runs;
  std::vector<Series> ablate_series;  // accuracy over an ablation axis
  std::string ablate_axis;

  for (const auto& dir : run_dirs) {
    const fs::path report_csv = fs::path(dir) / "report.csv";
    const fs::path summary_json = fs::path(dir) / "summary.json";
    const fs::path ablate_csv = fs::path(dir) / "ablate.csv";

    if (fs::exists(ablate_csv)) {
      const CsvTable t = read_csv(ablate_csv.string());
      const int axis_col = t.column("axis");
      const int value_col = t.column("value");
      const int acc_col = t.column("accuracy");
      if (axis_col < 0 || value_col < 0 || acc_col < 0 || t.rows.empty()) {
        throw Error(ErrorCode::IOFailure, "bad ablate.csv in " + dir);
      }
      Series s;
      s.name = fs::path(dir).filename().string();
      for (const auto& row : t.rows) {
        s.x.push_back(std::stod(row[value_col]));
        s.y.push_back(std::stod(row[acc_col]));
        ablate_axis = row[axis_col];
      }
      ablate_series.push_back(std::move(s));
      continue;
    }

    if (!fs::exists(report_csv)) {
      throw Error(ErrorCode::IOFailure,
                  "run directory has no report.csv or ablate.csv: " + dir);
    }
    RunInfo info;
    info.dir = dir;
    // accuracy comes from the raw rows, not the stored summary
    info.accuracy = recompute_accuracy_from_csv(report_csv.string());
    info.loss_trace = mean_loss_trace_from_csv(report_csv.string());
    const CsvTable t = read_csv(report_csv.string());
    info.samples = static_cast<int>(t.rows.size());
    const int adapted_col = t.column("adapted");
    for (const auto& row : t.rows) {
      if (adapted_col >= 0 && row[adapted_col] == "1") ++info.adapted;
    }
    if (fs::exists(summary_json)) {
      std::ifstream f(summary_json.string());
      nlohmann::json j;
      f >> j;
      info.mean_accuracy = j.value("mean_accuracy", info.accuracy);
      info.fps = j.value("fps", 0.0);
    } else {
      info.mean_accuracy = info.accuracy;
    }
    runs.push_back(std::move(info));
  }

  std::vector<std::string> written;

  const std::string summary_path = (fs::path(out_dir) / "summary.csv").string();
  {
    std::ofstream f(summary_path, std::ios::trunc);
    if (!f) throw Error(ErrorCode::IOFailure, "cannot write " + summary_path);
    f << "run,samples,adapted,accuracy,mean_accuracy,fps\n";
    for (const auto& r : runs) {
      f << r.dir << ',' << r.samples << ',' << r.adapted << ',' << r.accuracy << ','
        << r.mean_accuracy << ',' << r.fps << "\n";
    }
  }
  written.push_back(summary_path);

  std::vector<Series> traces;
  for (const auto& r : runs) {
    if (r.loss_trace.size() < 2) continue;
    Series s;
    s.name = fs::path(r.dir).filename().string();
    for (std::size_t i = 0; i < r.loss_trace.size(); ++i) {
      s.x.push_back(static_cast<double>(i + 1));
      s.y.push_back(r.loss_trace[i]);
    }
    traces.push_back(std::move(s));
  }
  if (!traces.empty()) {
    const std::string path = (fs::path(out_dir) / "loss_vs_step.svg").string();
    std::ofstream f(path, std::ios::trunc);
    f << render_line_chart_svg("Reconstruction loss per adaptation step", "step",
                               "mean loss", traces);
    written.push_back(path);
  }
  if (!ablate_series.empty()) {
    const std::string path =
        (fs::path(out_dir) / ("accuracy_vs_" + ablate_axis + ".svg")).string();
    std::ofstream f(path, std::ios::trunc);
    f << render_line_chart_svg("Accuracy vs " + ablate_axis, ablate_axis,
                               "top-1 accuracy", ablate_series);
    written.push_back(path);
  }
  return written;
}

}  // namespace mate::report
