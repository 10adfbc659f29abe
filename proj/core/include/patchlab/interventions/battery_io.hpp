#pragma once

#include <optional>
#include <string>
#include <vector>

#include "patchlab/interventions/battery.hpp"
#include "patchlab/metrics/metrics.hpp"

namespace patchlab {

// One report line aggregated over seeds.
struct ReportRow {
  std::string condition;
  std::string metric = "route_acc";
  double mean = 0.0;
  double std = 0.0;
  int n_seeds = 0;
  std::string control_of;
  std::optional<double> reference;
  std::vector<double> per_seed;
  // Per seed, per query instance; empty for derived rows.
  std::vector<std::vector<double>> per_instance;
};

ReportRow make_row(std::string condition, std::string metric, std::vector<double> per_seed,
                   std::string control_of = {}, std::optional<double> reference = std::nullopt,
                   std::vector<std::vector<double>> per_instance = {});

// The eight battery rows and both closure gaps over per-seed tables.
std::vector<ReportRow> table2_rows(std::span<const Table2> per_seed);

inline constexpr const char* kReportColumns = "condition,metric,mean,std,n_seeds,control_of,reference";

// Comment line first, then kReportColumns and one line per row. `footer`
// lines are emitted as trailing comments.
std::string report_csv(std::span<const ReportRow> rows, const std::string& meta_line,
                       std::span<const std::string> footer = {});

// "# config=<h> manifest=<h> seeds=<a;b> version=<v>"
std::string meta_line(const std::string& config_hash, const std::string& manifest_hash,
                      std::span<const std::uint64_t> seeds);

}  // namespace patchlab
