#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace epgd {

struct TargetEntry {
  std::string image_id;
  int true_label = 0;
  int target_label = 0;
};

// Comma-separated lines "image_id,true_label,target_label". Blank lines,
// '#' comments and a leading "image_id,..." header are skipped.
std::vector<TargetEntry> read_targets(const std::filesystem::path& path);
void write_targets(const std::vector<TargetEntry>& entries, const std::filesystem::path& path);

}  // namespace epgd
