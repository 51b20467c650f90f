#include "epgd/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace epgd {

namespace {

std::string format_exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, const std::string& line) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw DecodeError("report: bad number in '" + line + "'");
  }
  if (used != s.size()) throw DecodeError("report: bad number in '" + line + "'");
  return v;
}

}  // namespace

Report make_report(const std::vector<RunRecord>& records, const std::vector<std::string>& model_ids) {
  Report report;
  Eigen::MatrixXd d(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(model_ids.size()));
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& ev = records[i].evaluation;
    if (ev.per_model.size() != model_ids.size()) throw ArgumentError("report: model count mismatch");
    for (std::size_t m = 0; m < model_ids.size(); ++m) {
      report.rows.push_back({records[i].image_id, model_ids[m], !ev.failure[m], ev.per_model[m]});
      d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m)) = ev.per_model[m];
    }
  }
  report.score = final_score(d).score;
  return report;
}

ScoreReport score_report(const Report& report) {
  if (report.rows.empty()) throw ArgumentError("report has no rows");
  std::vector<std::string> images;
  std::vector<std::string> models;
  for (const auto& row : report.rows) {
    if (std::find(images.begin(), images.end(), row.image_id) == images.end()) images.push_back(row.image_id);
    if (std::find(models.begin(), models.end(), row.model_id) == models.end()) models.push_back(row.model_id);
  }
  if (images.size() * models.size() != report.rows.size()) throw ArgumentError("report is not a full image x model table");
  Eigen::VectorXd all(static_cast<Eigen::Index>(report.rows.size()));
  for (std::size_t i = 0; i < report.rows.size(); ++i) all[static_cast<Eigen::Index>(i)] = report.rows[i].distance;
  return {all.mean(), static_cast<int>(images.size()), static_cast<int>(models.size())};
}

void write_report_csv(std::ostream& out, const Report& report) {
  out << "image_id,model_id,success,distance\n";
  for (const auto& row : report.rows) {
    out << row.image_id << ',' << row.model_id << ',' << (row.success ? 1 : 0) << ',' << format_exact(row.distance)
        << '\n';
  }
  out << "S,,," << format_exact(report.score) << '\n';
}

Report read_report_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DecodeError("cannot open report " + path.string());
  Report report;
  std::string line;
  bool header = true;
  bool saw_score = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header) {
      if (line != "image_id,model_id,success,distance") throw DecodeError("report: unexpected header '" + line + "'");
      header = false;
      continue;
    }
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) cols.push_back(col);
    while (cols.size() < 4) cols.emplace_back();
    if (cols.size() != 4) throw DecodeError("report: expected 4 columns in '" + line + "'");
    if (cols[0] == "S" && cols[1].empty()) {
      report.score = parse_double(cols[3], line);
      saw_score = true;
      continue;
    }
    if (saw_score) throw DecodeError("report: rows after the score row");
    if (cols[2] != "0" && cols[2] != "1") throw DecodeError("report: success must be 0 or 1 in '" + line + "'");
    report.rows.push_back({cols[0], cols[1], cols[2] == "1", parse_double(cols[3], line)});
  }
  if (header) throw DecodeError("report: empty file");
  if (!saw_score) throw DecodeError("report: missing score row");
  return report;
}

void write_report_table(std::ostream& out, const Report& report) {
  std::size_t w_img = 8, w_model = 5;
  for (const auto& row : report.rows) {
    w_img = std::max(w_img, row.image_id.size());
    w_model = std::max(w_model, row.model_id.size());
  }
  out << std::left << std::setw(static_cast<int>(w_img)) << "image_id" << "  " << std::setw(static_cast<int>(w_model))
      << "model" << "  " << std::setw(7) << "success" << "  " << "distance\n";
  for (const auto& row : report.rows) {
    out << std::left << std::setw(static_cast<int>(w_img)) << row.image_id << "  "
        << std::setw(static_cast<int>(w_model)) << row.model_id << "  " << std::setw(7) << (row.success ? "yes" : "no")
        << "  " << std::fixed << std::setprecision(4) << row.distance << '\n';
  }
  out << "S = " << std::fixed << std::setprecision(4) << report.score << '\n';
  out.unsetf(std::ios::floatfield);
}

}  // namespace epgd
