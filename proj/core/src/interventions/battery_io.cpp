#include "patchlab/interventions/battery_io.hpp"

#include "patchlab/error.hpp"
#include "patchlab/metrics/reference.hpp"
#include "patchlab/numerics/stats.hpp"

namespace patchlab {

ReportRow make_row(std::string condition, std::string metric, std::vector<double> per_seed, std::string control_of,
                   std::optional<double> reference, std::vector<std::vector<double>> per_instance) {
  require(!per_seed.empty(), ErrorCode::kIncompleteReport, "report row '" + condition + "' has no values");
  ReportRow row;
  row.condition = std::move(condition);
  row.metric = std::move(metric);
  row.mean = mean(per_seed);
  row.std = sample_std(per_seed);
  row.n_seeds = static_cast<int>(per_seed.size());
  row.control_of = std::move(control_of);
  row.reference = reference;
  row.per_seed = std::move(per_seed);
  row.per_instance = std::move(per_instance);
  return row;
}

std::vector<ReportRow> table2_rows(std::span<const Table2> per_seed) {
  require(!per_seed.empty(), ErrorCode::kIncompleteReport, "no battery tables");
  std::vector<ReportRow> rows;
  for (const auto& name : table2_conditions()) {
    std::vector<double> values;
    std::vector<std::vector<double>> instances;
    for (const auto& t : per_seed) {
      values.push_back(t.row(name).route_acc);
      instances.push_back(t.row(name).per_instance);
    }
    rows.push_back(make_row(name, "route_acc", values, {}, reference::triop_battery(name), instances));
  }
  std::vector<double> nec;
  std::vector<double> suf;
  for (const auto& t : per_seed) {
    nec.push_back(t.necessity_gap);
    suf.push_back(t.sufficiency_gap);
  }
  rows.push_back(make_row("compiled_KV<-centered", "max_logit_gap_vs_centered", nec, "centered"));
  rows.push_back(make_row("centered_KV<-compiled", "max_logit_gap_vs_compiled", suf, "compiled"));
  return rows;
}

std::string report_csv(std::span<const ReportRow> rows, const std::string& meta, std::span<const std::string> footer) {
  std::string out = meta + "\n" + kReportColumns + "\n";
  for (const auto& r : rows) {
    out += r.condition + "," + r.metric + "," + format_value(r.mean) + "," + format_value(r.std) + "," +
           std::to_string(r.n_seeds) + "," + r.control_of + "," +
           (r.reference ? format_value(*r.reference, 4) : std::string()) + "\n";
  }
  for (const auto& line : footer) out += "# " + line + "\n";
  return out;
}

std::string meta_line(const std::string& config_hash, const std::string& manifest_hash,
                      std::span<const std::uint64_t> seeds) {
  std::string s;
  for (std::size_t i = 0; i < seeds.size(); ++i) s += (i ? ";" : "") + std::to_string(seeds[i]);
  return "# config=" + config_hash + " manifest=" + (manifest_hash.empty() ? "none" : manifest_hash) + " seeds=" + s +
         " version=" + PATCHLAB_VERSION;
}

}  // namespace patchlab
