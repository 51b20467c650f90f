#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "epgd/metrics.hpp"
#include "epgd/pipeline.hpp"

namespace epgd {

struct ReportRow {
  std::string image_id;
  std::string model_id;
  bool success = false;
  double distance = 0.0;
};

struct Report {
  std::vector<ReportRow> rows;
  // Value carried by the trailing "S" row.
  double score = 0.0;
};

// CSV with header "image_id,model_id,success,distance", one row per
// image/model pair, and a final row "S,,,<score>". Distances are written
// with 17 significant digits so they round-trip exactly.
void write_report_csv(std::ostream& out, const Report& report);
Report read_report_csv(const std::filesystem::path& path);
void write_report_table(std::ostream& out, const Report& report);

Report make_report(const std::vector<RunRecord>& records, const std::vector<std::string>& model_ids);
// Mean of the per-pair rows, recomputed independently of the S row.
ScoreReport score_report(const Report& report);

}  // namespace epgd
