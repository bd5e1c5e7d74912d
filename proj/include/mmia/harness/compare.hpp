#pragma once

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "mmia/evaluation/report.hpp"

namespace mmia::harness {

struct Comparison {
  std::vector<std::string> runs;
  std::vector<std::vector<std::string>> rows;  // run name followed by the report fields, as written
  std::vector<std::string> warnings;
  std::filesystem::path csv, table;
  std::vector<std::filesystem::path> charts;
};

namespace detail {

inline std::vector<std::string> read_report_lines(const std::filesystem::path& csv) {
  std::ifstream in(csv);
  if (!in) throw IngestError("no evaluation report at " + csv.string());
  std::string line;
  std::getline(in, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != eval::kReportHeader) throw IngestError(csv.string() + ":1: unexpected report header");
  std::vector<std::string> out;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

inline std::string bar_label(const std::vector<std::string>& row) {
  // row: run, metric, value, tp, trials, skipped, scenario, mode, models_for_test, alpha, subset, ...
  return row[7] + " {" + row[10] + "}";
}

inline void draw_chart(const std::string& metric, const std::vector<std::vector<std::string>>& rows,
                       const std::filesystem::path& path) {
  const int bar = 70, gap = 70, left = 60, top = 50, plot_h = 300;
  const int width = left + static_cast<int>(rows.size()) * (bar + gap) + 2 * gap;
  const int height = top + plot_h + 90;
  cv::Mat img(height, std::max(width, 360), CV_8UC3, cv::Scalar(255, 255, 255));
  const cv::Scalar ink(40, 40, 40), fill(180, 120, 60);
  cv::putText(img, metric, {left, 30}, cv::FONT_HERSHEY_SIMPLEX, 0.7, ink, 2);
  const int base = top + plot_h;
  cv::line(img, {left - 5, base}, {img.cols - 10, base}, ink, 1);
  cv::line(img, {left - 5, top}, {left - 5, base}, ink, 1);
  for (int tick = 0; tick <= 4; ++tick) {
    const int y = base - tick * plot_h / 4;
    cv::putText(img, std::to_string(tick * 25) + "%", {5, y + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.4, ink, 1);
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double v = std::clamp(std::stod(rows[i][2]), 0.0, 1.0);
    const int x = left + gap + static_cast<int>(i) * (bar + gap);
    const int h = static_cast<int>(v * plot_h);
    cv::rectangle(img, {x, base - h}, {x + bar, base}, fill, cv::FILLED);
    char buf[16];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    cv::putText(img, buf, {x, base - h - 6}, cv::FONT_HERSHEY_SIMPLEX, 0.45, ink, 1);
    cv::putText(img, bar_label(rows[i]), {x - 10, base + 20 + 18 * static_cast<int>(i % 2)},
                cv::FONT_HERSHEY_SIMPLEX, 0.4, ink, 1);
    cv::putText(img, rows[i][0].substr(0, 8), {x, base + 65}, cv::FONT_HERSHEY_SIMPLEX, 0.35, ink, 1);
  }
  if (!cv::imwrite(path.string(), img)) throw IngestError("cannot write chart " + path.string());
}

}  // namespace detail

/// Collects the evaluation reports of several runs into one comparison CSV,
/// a plain-text table and one bar chart per metric.
inline Comparison render_report(const std::vector<std::filesystem::path>& run_dirs, const std::filesystem::path& out_dir) {
  require(!run_dirs.empty(), "report needs at least one run directory");
  Comparison cmp;
  std::vector<std::set<std::string>> metric_sets;
  for (const auto& dir : run_dirs) {
    if (!std::filesystem::is_directory(dir)) throw IngestError("run directory not found: " + dir.string());
    const auto name = dir.filename().empty() ? dir.parent_path().filename().string() : dir.filename().string();
    cmp.runs.push_back(name);
    const auto csv = dir / "evaluation" / "report.csv";
    const auto lines = detail::read_report_lines(csv);
    std::set<std::string> metrics;
    for (std::size_t i = 0; i < lines.size(); ++i) {
      auto fields = mmia::detail::split_csv_line(lines[i]);
      if (fields.size() != 12) {
        throw IngestError(csv.string() + ":" + std::to_string(i + 2) + ": expected 12 fields, got " +
                          std::to_string(fields.size()));
      }
      metrics.insert(fields[0]);
      fields.insert(fields.begin(), name);
      cmp.rows.push_back(std::move(fields));
    }
    metric_sets.push_back(std::move(metrics));
  }
  for (std::size_t i = 1; i < metric_sets.size(); ++i) {
    if (metric_sets[i] != metric_sets.front()) {
      cmp.warnings.push_back("run " + cmp.runs[i] + " reports different metrics than " + cmp.runs.front() +
                             "; only rows with a shared metric are directly comparable");
    }
  }

  std::filesystem::create_directories(out_dir);
  cmp.csv = out_dir / "comparison.csv";
  {
    std::ofstream out(cmp.csv);
    if (!out) throw IngestError("cannot write " + cmp.csv.string());
    out << "run," << eval::kReportHeader << "\n";
    for (const auto& r : cmp.rows) {
      for (std::size_t k = 0; k < r.size(); ++k) out << (k ? "," : "") << r[k];
      out << "\n";
    }
  }

  cmp.table = out_dir / "comparison.txt";
  {
    const std::vector<std::size_t> cols{0, 1, 2, 3, 4, 6, 7, 8, 9, 10};
    const auto header = mmia::detail::split_csv_line(std::string("run,") + eval::kReportHeader);
    std::vector<std::size_t> w(header.size(), 0);
    for (auto c : cols) {
      w[c] = header[c].size();
      for (const auto& r : cmp.rows) w[c] = std::max(w[c], r[c].size());
    }
    std::ofstream out(cmp.table);
    if (!out) throw IngestError("cannot write " + cmp.table.string());
    auto emit = [&](const std::vector<std::string>& r) {
      for (auto c : cols) out << r[c] << std::string(w[c] - r[c].size() + 2, ' ');
      out << "\n";
    };
    emit(header);
    for (const auto& r : cmp.rows) emit(r);
    for (const auto& warn : cmp.warnings) out << "warning: " << warn << "\n";
  }

  std::map<std::string, std::vector<std::vector<std::string>>> by_metric;
  for (const auto& r : cmp.rows) by_metric[r[1]].push_back(r);
  for (const auto& [metric, rows] : by_metric) {
    const auto path = out_dir / (metric + ".png");
    detail::draw_chart(metric, rows, path);
    cmp.charts.push_back(path);
  }
  return cmp;
}

}  // namespace mmia::harness
