#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mmia/evaluation/metrics.hpp"
#include "mmia/incorporation/bank_io.hpp"

namespace mmia::eval {

/// One table cell: a metric value with the counts and context that produced it.
struct EvalReport {
  std::string metric;
  double value = 0;  // tp / trials
  std::size_t tp = 0;
  std::size_t trials = 0;
  std::size_t skipped = 0;
  std::string scenario;
  std::string mode;
  std::string models_for_test;
  std::size_t alpha = 1;
  std::string subset;  // snapshot stage indices joined by '+'
  std::uint64_t seed = 0;
  std::string config_hash;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(EvalReport, metric, value, tp, trials, skipped, scenario, mode, models_for_test,
                                   alpha, subset, seed, config_hash)

struct ReportContext {
  std::string scenario;
  std::string mode;
  std::string models_for_test;
  std::size_t alpha = 1;
  std::string subset;
  std::uint64_t seed = 0;
  std::string config_hash;
};

inline EvalReport make_report(std::string metric, const Count& c, const ReportContext& ctx) {
  return {std::move(metric), c.value(), c.tp,  c.trials,       c.skipped,      ctx.scenario, ctx.mode,
          ctx.models_for_test, ctx.alpha, ctx.subset, ctx.seed, ctx.config_hash};
}

inline std::string subset_label(const std::vector<std::size_t>& indices) {
  std::string s;
  for (auto i : indices) s += (s.empty() ? "" : "+") + std::to_string(i);
  return s;
}

inline constexpr const char* kReportHeader =
    "metric,value,tp,trials,skipped,scenario,mode,models_for_test,alpha,subset,seed,config_hash";

inline void write_reports_csv(const std::vector<EvalReport>& reports, std::ostream& out) {
  out << kReportHeader << "\n";
  for (const auto& r : reports) {
    for (const auto* field : {&r.metric, &r.scenario, &r.mode, &r.models_for_test, &r.subset, &r.config_hash}) {
      require(field->find_first_of(",\n") == std::string::npos, "report field contains a comma or newline: " + *field);
    }
    out << r.metric << ',' << mmia::detail::format_double(r.value) << ',' << r.tp << ',' << r.trials << ','
        << r.skipped << ',' << r.scenario << ',' << r.mode << ',' << r.models_for_test << ',' << r.alpha << ','
        << r.subset << ',' << r.seed << ',' << r.config_hash << "\n";
  }
}

inline void write_reports_csv(const std::vector<EvalReport>& reports, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write " + path.string());
  write_reports_csv(reports, out);
}

inline std::vector<EvalReport> read_reports_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("report not found: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kReportHeader) throw IngestError(path.string() + ":1: unexpected report header");
  std::vector<EvalReport> out;
  for (std::size_t no = 2; std::getline(in, line); ++no) {
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(no);
    const auto f = mmia::detail::split_csv_line(line);
    if (f.size() != 12) throw IngestError(where + ": expected 12 fields, got " + std::to_string(f.size()));
    EvalReport r;
    r.metric = f[0];
    r.value = mmia::detail::parse_number<double>(f[1], where);
    r.tp = mmia::detail::parse_number<std::size_t>(f[2], where);
    r.trials = mmia::detail::parse_number<std::size_t>(f[3], where);
    r.skipped = mmia::detail::parse_number<std::size_t>(f[4], where);
    r.scenario = f[5];
    r.mode = f[6];
    r.models_for_test = f[7];
    r.alpha = mmia::detail::parse_number<std::size_t>(f[8], where);
    r.subset = f[9];
    r.seed = mmia::detail::parse_number<std::uint64_t>(f[10], where);
    r.config_hash = f[11];
    out.push_back(std::move(r));
  }
  return out;
}

inline void write_reports_json(const std::vector<EvalReport>& reports, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write " + path.string());
  out << nlohmann::json(reports).dump(2) << "\n";
}

}  // namespace mmia::eval
