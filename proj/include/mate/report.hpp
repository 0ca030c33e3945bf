#pragma once

#include <string>
#include <vector>

namespace mate::report {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

// Static SVG line chart: axes, ticks, legend, one polyline per series.
std::string render_line_chart_svg(const std::string& title, const std::string& x_label,
                                  const std::string& y_label,
                                  const std::vector<Series>& series);

// Tag-balance well-formedness check, sufficient for our own output.
bool svg_well_formed(const std::string& svg);

// Recomputes top-1 accuracy directly from the raw per-sample rows of a
// report.csv, independent of any stored summary.
double recompute_accuracy_from_csv(const std::string& report_csv_path);

// Mean reconstruction loss per gradient step over the adapted rows.
std::vector<double> mean_loss_trace_from_csv(const std::string& report_csv_path);

// Scans run directories (report.csv / summary.json / ablate.csv), writes
// summary.csv plus whatever charts the data supports (accuracy vs stride,
// accuracy vs mask ratio, loss trace vs step). Returns the written paths.
std::vector<std::string> write_report(const std::vector<std::string>& run_dirs,
                                      const std::string& out_dir);

}  // namespace mate::report
