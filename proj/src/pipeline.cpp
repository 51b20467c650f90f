#include "epgd/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <thread>

namespace epgd {

using json = nlohmann::json;

void PipelineConfig::validate() const {
  if (stages.empty()) throw ArgumentError("pipeline needs at least one stage");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto& s = stages[i];
    const std::string where = "stage " + std::to_string(i) + ": ";
    try {
      s.schedule().validate();
    } catch (const ArgumentError& e) {
      throw ArgumentError(where + e.what());
    }
    if (s.iters < 1) throw ArgumentError(where + "iters must be at least 1");
    if (s.mask_border < 0) throw ArgumentError(where + "mask border must be nonnegative");
    if (s.mask_kind == MaskKind::grid && (s.grid_block < 1 || s.grid_space < 0))
      throw ArgumentError(where + "grid mask needs block >= 1 and space >= 0");
  }
  if (reference_side < 0) throw ArgumentError("reference_side must be nonnegative");
  if (!(min_eta > 0.0)) throw ArgumentError("min_eta must be positive");
  if (budget_seconds && !(*budget_seconds > 0.0)) throw ArgumentError("budget_seconds must be positive");
  if (workers < 1) throw ArgumentError("workers must be at least 1");
}

PipelineConfig default_config(std::string proxy_id, std::vector<std::string> eval_ids) {
  PipelineConfig cfg;
  cfg.reference_side = 299;
  auto stage = [](std::vector<std::string> ids, double eta_min, double eta_max, int border, int iters) {
    AttackStage s;
    s.model_ids = std::move(ids);
    s.eta_min = eta_min;
    s.eta_max = eta_max;
    s.mask_kind = MaskKind::border;
    s.mask_border = border;
    s.iters = iters;
    s.confidence = 0.5;
    return s;
  };
  cfg.stages = {
      stage({proxy_id}, 50, 100, 50, 50),
      stage(eval_ids, 1, 100, 30, 40),
      stage(eval_ids, 1, 300, 0, 40),
      stage(eval_ids, 1, 600, 0, 40),
  };
  return cfg;
}

AttackStage resolve_stage(const AttackStage& stage, const PipelineConfig& cfg, int side) {
  if (cfg.reference_side <= 0 || side == cfg.reference_side) return stage;
  const double ratio = static_cast<double>(side) / cfg.reference_side;
  AttackStage s = stage;
  s.eta_max = stage.eta_max * ratio;
  s.eta_min = std::min(std::max(stage.eta_min * ratio, cfg.min_eta), s.eta_max);
  if (s.mask_kind == MaskKind::border) {
    s.mask_border = static_cast<int>(std::lround(stage.mask_border * ratio));
    s.mask_border = std::min(s.mask_border, (side - 1) / 2);
  }
  return s;
}

Mask stage_mask(const AttackStage& resolved, int side) {
  switch (resolved.mask_kind) {
    case MaskKind::full: return full_mask(side);
    case MaskKind::border: return border_mask(side, resolved.mask_border);
    case MaskKind::grid: return grid_mask(side, resolved.grid_block, resolved.grid_space);
  }
  throw ArgumentError("unknown mask kind");
}

namespace {

// Perturbable fraction of a stage's mask at the reference side, used to
// compare stages independently of the image size.
double active_fraction(const AttackStage& s, int side) {
  if (s.mask_kind == MaskKind::full || (s.mask_kind == MaskKind::border && s.mask_border == 0)) return 1.0;
  if (s.mask_kind == MaskKind::border) {
    const double inner = std::max(0, side - 2 * s.mask_border);
    return inner * inner / (static_cast<double>(side) * side);
  }
  const int period = s.grid_block + s.grid_space;
  const double per_axis = static_cast<double>(side / period * s.grid_block + std::min(side % period, s.grid_block));
  return per_axis * per_axis / (static_cast<double>(side) * side);
}

}  // namespace

std::vector<std::string> lint_config(const PipelineConfig& cfg) {
  std::vector<std::string> warnings;
  const int side = cfg.reference_side > 0 ? cfg.reference_side : 299;
  for (std::size_t i = 1; i < cfg.stages.size(); ++i) {
    const auto& prev = cfg.stages[i - 1];
    const auto& cur = cfg.stages[i];
    if (cur.eta_max < prev.eta_max) {
      warnings.push_back("stage " + std::to_string(i) + " has eta_max " + std::to_string(cur.eta_max) +
                         " below stage " + std::to_string(i - 1) + " (" + std::to_string(prev.eta_max) +
                         "); later stages should allow larger perturbations");
    }
    if (active_fraction(cur, side) < active_fraction(prev, side)) {
      warnings.push_back("stage " + std::to_string(i) + " perturbs a smaller region than stage " +
                         std::to_string(i - 1) + "; masks should relax over the ladder");
    }
  }
  if (cfg.budget_seconds && cfg.seconds_per_iteration) {
    long total_iters = 0;
    for (const auto& s : cfg.stages) total_iters += s.iters;
    const double estimate = total_iters * *cfg.seconds_per_iteration;
    if (estimate > *cfg.budget_seconds) {
      warnings.push_back("worst-case " + std::to_string(total_iters) + " iterations take about " +
                         std::to_string(estimate) + " s, beyond the " + std::to_string(*cfg.budget_seconds) +
                         " s per-image budget");
    }
  }
  return warnings;
}

json config_to_json(const PipelineConfig& cfg) {
  json j;
  j["mode"] = to_string(cfg.mode);
  j["rounding"] = to_string(cfg.rounding);
  j["seed"] = cfg.seed;
  j["warm_start"] = cfg.warm_start;
  j["chain_restarts"] = cfg.chain_restarts;
  j["reference_side"] = cfg.reference_side;
  j["min_eta"] = cfg.min_eta;
  j["workers"] = cfg.workers;
  j["budget_seconds"] = cfg.budget_seconds ? json(*cfg.budget_seconds) : json(nullptr);
  if (cfg.seconds_per_iteration) j["seconds_per_iteration"] = *cfg.seconds_per_iteration;
  j["stages"] = json::array();
  for (const auto& s : cfg.stages) {
    json js;
    js["models"] = s.model_ids;
    js["eta_min"] = s.eta_min;
    js["eta_max"] = s.eta_max;
    js["iters"] = s.iters;
    js["confidence"] = s.confidence;
    json mask;
    mask["kind"] = to_string(s.mask_kind);
    if (s.mask_kind == MaskKind::border) mask["border"] = s.mask_border;
    if (s.mask_kind == MaskKind::grid) {
      mask["block"] = s.grid_block;
      mask["space"] = s.grid_space;
    }
    js["mask"] = mask;
    j["stages"].push_back(js);
  }
  return j;
}

PipelineConfig config_from_json(const json& j) {
  PipelineConfig cfg;
  try {
    cfg.mode = parse_goal_mode(j.value("mode", std::string("targeted")));
    cfg.rounding = parse_rounding_mode(j.value("rounding", std::string("toward_raw")));
    cfg.seed = j.value("seed", std::uint64_t{0});
    cfg.warm_start = j.value("warm_start", true);
    cfg.chain_restarts = j.value("chain_restarts", false);
    cfg.reference_side = j.value("reference_side", 0);
    cfg.min_eta = j.value("min_eta", 1.0);
    cfg.workers = j.value("workers", 1);
    if (j.contains("budget_seconds") && !j["budget_seconds"].is_null()) cfg.budget_seconds = j["budget_seconds"].get<double>();
    if (j.contains("seconds_per_iteration")) cfg.seconds_per_iteration = j["seconds_per_iteration"].get<double>();
    for (const auto& js : j.at("stages")) {
      AttackStage s;
      s.model_ids = js.value("models", std::vector<std::string>{});
      s.eta_min = js.at("eta_min").get<double>();
      s.eta_max = js.at("eta_max").get<double>();
      s.iters = js.at("iters").get<int>();
      s.confidence = js.value("confidence", 0.5);
      if (js.contains("mask")) {
        const auto& m = js["mask"];
        const auto kind = m.value("kind", std::string("border"));
        if (kind == "full") {
          s.mask_kind = MaskKind::full;
        } else if (kind == "border") {
          s.mask_kind = MaskKind::border;
          s.mask_border = m.value("border", 0);
        } else if (kind == "grid") {
          s.mask_kind = MaskKind::grid;
          s.grid_block = m.value("block", 7);
          s.grid_space = m.value("space", 7);
        } else {
          throw ArgumentError("unknown mask kind '" + kind + "'");
        }
      }
      cfg.stages.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw ArgumentError(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ArgumentError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void save_config(const PipelineConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << config_to_json(cfg).dump(2) << '\n';
}

const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::succeeded: return "succeeded";
    case RunStatus::failed: return "failed";
    case RunStatus::timed_out: return "timed_out";
    case RunStatus::error: return "error";
  }
  return "?";
}

RunRecord run_pipeline(const QuantizedImage& x_raw, const AttackGoal& goal, const PipelineConfig& cfg,
                       std::span<const Network> proxies, std::span<const Network> eval_nets) {
  cfg.validate();
  if (eval_nets.empty()) throw ArgumentError("pipeline needs at least one evaluation model");
  if (cfg.warm_start && proxies.empty()) throw ArgumentError("warm start needs at least one proxy model");

  const auto started = std::chrono::steady_clock::now();
  const int side = x_raw.side;
  const Image origin = dequantize<double>(x_raw);

  AttackOptions<double> opts;
  opts.origin = origin;
  opts.submission_rounding = cfg.rounding;
  if (cfg.budget_seconds) {
    opts.deadline = started + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                  std::chrono::duration<double>(*cfg.budget_seconds));
  }

  auto run_stage = [&](std::size_t index, std::span<const Network> nets, const Image& from) {
    const AttackStage s = resolve_stage(cfg.stages[index], cfg, side);
    const Mask mask = stage_mask(s, side);
    return epgd<double>(nets, apply_mask(from, origin, mask), goal, mask, s.schedule(), s.iters, opts);
  };

  RunRecord record;
  Image warm = origin;
  std::size_t first = 0;
  if (cfg.warm_start) {
    record.outcome = run_stage(0, proxies, origin);
    warm = record.outcome.adv;
    first = 1;
  }
  Image previous = warm;
  for (std::size_t t = first; t < cfg.stages.size(); ++t) {
    record.outcome = run_stage(t, eval_nets, cfg.chain_restarts ? previous : warm);
    record.stage_reached = static_cast<int>(t);
    if (record.outcome.success() || record.outcome.status == AttackStatus::timed_out) break;
    previous = record.outcome.adv;
  }

  record.submitted = quantize(record.outcome.adv, x_raw, cfg.rounding);
  record.evaluation = evaluate_quantized(record.submitted, x_raw, eval_nets, goal);
  if (record.evaluation.all_fooled()) {
    record.status = RunStatus::succeeded;
  } else if (record.outcome.status == AttackStatus::timed_out) {
    record.status = RunStatus::timed_out;
  } else {
    record.status = RunStatus::failed;
  }
  record.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return record;
}

BatchResult run_batch(std::span<const BatchItem> items, const PipelineConfig& cfg, std::span<const Network> proxies,
                      std::span<const Network> eval_nets) {
  if (items.empty()) throw ArgumentError("batch is empty");
  cfg.validate();
  if (eval_nets.empty()) throw ArgumentError("batch needs at least one evaluation model");

  BatchResult result;
  result.records.resize(items.size());
  auto process = [&](std::size_t i) {
    const auto& item = items[i];
    RunRecord rec;
    try {
      rec = run_pipeline(item.image, item.goal(cfg.mode), cfg, proxies, eval_nets);
    } catch (const Error& e) {
      rec = RunRecord{};
      rec.status = RunStatus::error;
      rec.error = e.what();
      rec.evaluation.per_model.assign(eval_nets.size(), kFailureDistance);
      rec.evaluation.failure.assign(eval_nets.size(), true);
      rec.evaluation.distance = kFailureDistance;
    }
    rec.image_id = item.image_id;
    result.records[i] = std::move(rec);
  };

  const int workers = std::min<int>(cfg.workers, static_cast<int>(items.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < items.size(); ++i) process(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < items.size(); i = next++) process(i);
      });
    }
  }

  result.distances.resize(static_cast<Eigen::Index>(items.size()), static_cast<Eigen::Index>(eval_nets.size()));
  for (std::size_t i = 0; i < items.size(); ++i)
    for (std::size_t m = 0; m < eval_nets.size(); ++m)
      result.distances(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m)) = result.records[i].evaluation.per_model[m];
  result.score = final_score(result.distances);
  return result;
}

}  // namespace epgd
