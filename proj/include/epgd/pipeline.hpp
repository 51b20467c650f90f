#pragma once

// Staged escalation driver: a warm-start EPGD pass against proxy models,
// then a ladder of EPGD stages against the evaluation models, returning at
// the first stage whose submitted bytes fool all of them.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "epgd/attacks.hpp"
#include "epgd/imageio.hpp"
#include "epgd/masks.hpp"
#include "epgd/metrics.hpp"

namespace epgd {

struct AttackStage {
  std::vector<std::string> model_ids;
  double eta_min = 1.0;
  double eta_max = 1.0;
  MaskKind mask_kind = MaskKind::border;
  int mask_border = 0;  // border masks; 0 means full mask
  int grid_block = 7;   // grid masks
  int grid_space = 7;
  int iters = 1;
  double confidence = 0.5;

  StepSchedule schedule() const { return {eta_min, eta_max, confidence}; }
};

struct PipelineConfig {
  std::vector<AttackStage> stages;
  // stages[0] runs against the proxy models when set.
  bool warm_start = true;
  RoundingMode rounding = RoundingMode::toward_raw;
  GoalMode mode = GoalMode::targeted;
  std::optional<double> budget_seconds;
  std::uint64_t seed = 0;
  // Side at which stage eta and border values are expressed; 0 disables
  // rescaling. eta_max and mask_border scale by side / reference_side.
  int reference_side = 0;
  // Lower bound for rescaled eta_min, in pixel units.
  double min_eta = 1.0;
  // Later stages start from the previous stage's output instead of the
  // warm-start image.
  bool chain_restarts = false;
  int workers = 1;
  // Optional cost estimate used only by lint_config.
  std::optional<double> seconds_per_iteration;

  void validate() const;
};

// Shipped ladder at 299x299: proxy warm start, then eta_max
// 100 -> 300 -> 600 with the border shrinking 30 -> 0 -> 0.
PipelineConfig default_config(std::string proxy_id = "proxy", std::vector<std::string> eval_ids = {"eval0", "eval1"});

// Stage parameters for images of the given side.
AttackStage resolve_stage(const AttackStage& stage, const PipelineConfig& cfg, int side);
Mask stage_mask(const AttackStage& resolved, int side);

std::vector<std::string> lint_config(const PipelineConfig& cfg);

nlohmann::json config_to_json(const PipelineConfig& cfg);
PipelineConfig config_from_json(const nlohmann::json& j);
PipelineConfig load_config(const std::filesystem::path& path);
void save_config(const PipelineConfig& cfg, const std::filesystem::path& path);

enum class RunStatus { succeeded, failed, timed_out, error };
const char* to_string(RunStatus s);

struct RunRecord {
  std::string image_id;
  int stage_reached = 0;
  AttackOutcome<double> outcome;
  DistanceReport evaluation;
  // Exact bytes of the submission the evaluation scored.
  QuantizedImage submitted;
  double wall_time = 0.0;
  RunStatus status = RunStatus::failed;
  std::string error;
};

RunRecord run_pipeline(const QuantizedImage& x_raw, const AttackGoal& goal, const PipelineConfig& cfg,
                       std::span<const Network> proxies, std::span<const Network> eval_nets);

struct BatchItem {
  std::string image_id;
  QuantizedImage image;
  int true_label = 0;
  int target_label = 0;

  AttackGoal goal(GoalMode mode) const {
    return mode == GoalMode::targeted ? AttackGoal::targeted(target_label) : AttackGoal::untargeted(true_label);
  }
};

struct BatchResult {
  std::vector<RunRecord> records;
  Eigen::MatrixXd distances;  // images x eval models
  ScoreReport score;
};

BatchResult run_batch(std::span<const BatchItem> items, const PipelineConfig& cfg, std::span<const Network> proxies,
                      std::span<const Network> eval_nets);

}  // namespace epgd
