#ifndef MHA_REPORT_HPP
#define MHA_REPORT_HPP

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "mha/harness.hpp"

namespace mha {

struct ReportOptions {
  std::vector<std::uint64_t> budgets;  // empty: default_budgets()
  bool write_trace = false;
  // Wall-clock time is left out by default so identical seeds give
  // byte-identical files.
  bool include_timing = false;
  const Vocabulary* vocab = nullptr;  // adds detokenised text when set
};

struct ReportFiles {
  std::filesystem::path report;
  std::filesystem::path curve;
  std::optional<std::filesystem::path> trace;
};

nlohmann::json report_to_json(const RunReport& report, const ReportOptions& opts = {});
RunReport report_from_json(const nlohmann::json& j);

/// Writes report.json, curve.csv (budget,success) and, when requested,
/// trace.jsonl into `dir`.
ReportFiles write_report(const RunReport& report, const std::filesystem::path& dir,
                         const ReportOptions& opts = {});
RunReport read_report(const std::filesystem::path& path);

void write_curve_csv(const std::filesystem::path& path, std::span<const CurvePoint> curve);
std::vector<CurvePoint> read_curve_csv(const std::filesystem::path& path);

/// One JSON object per line per M-H step, tagged with the example index.
void write_traces(const std::filesystem::path& path, const RunReport& report);

/// 20 evenly spaced budgets up to the largest invocation count in the report.
std::vector<std::uint64_t> default_budgets(const RunReport& report);

}  // namespace mha

#endif  // MHA_REPORT_HPP
