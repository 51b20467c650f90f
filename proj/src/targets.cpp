#include "epgd/targets.hpp"

#include <fstream>
#include <sstream>

#include "epgd/errors.hpp"

namespace epgd {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

int parse_label(const std::string& s, const std::string& line) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(s, &used);
  } catch (const std::exception&) {
    throw ArgumentError("targets file: bad label in '" + line + "'");
  }
  if (used != s.size() || v < 0) throw ArgumentError("targets file: bad label in '" + line + "'");
  return v;
}

}  // namespace

std::vector<TargetEntry> read_targets(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open targets file " + path.string());
  std::vector<TargetEntry> out;
  std::string raw;
  bool first = true;
  while (std::getline(in, raw)) {
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) cols.push_back(trim(col));
    if (first && !cols.empty() && cols[0] == "image_id") {
      first = false;
      continue;
    }
    first = false;
    if (cols.size() != 3 || cols[0].empty()) throw ArgumentError("targets file: expected 3 columns in '" + line + "'");
    out.push_back({cols[0], parse_label(cols[1], line), parse_label(cols[2], line)});
  }
  return out;
}

void write_targets(const std::vector<TargetEntry>& entries, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "image_id,true_label,target_label\n";
  for (const auto& e : entries) out << e.image_id << ',' << e.true_label << ',' << e.target_label << '\n';
}

}  // namespace epgd
