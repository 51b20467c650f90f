// Command-line front end: build fixture models, run the staged attack over a
// directory of PNGs, re-score submissions, aggregate reports.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "epgd/fixtures.hpp"
#include "epgd/model_io.hpp"
#include "epgd/pipeline.hpp"
#include "epgd/report.hpp"
#include "epgd/targets.hpp"

namespace fs = std::filesystem;
using namespace epgd;

namespace {

std::vector<std::string> split_ids(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string id;
  while (std::getline(ss, id, ',')) {
    if (!id.empty()) out.push_back(id);
  }
  return out;
}

void append_unique(std::vector<std::string>& ids, const std::vector<std::string>& more) {
  for (const auto& id : more)
    if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
}

std::vector<std::string> proxy_ids(const PipelineConfig& cfg) {
  return cfg.warm_start ? cfg.stages.front().model_ids : std::vector<std::string>{};
}

std::vector<std::string> eval_ids(const PipelineConfig& cfg) {
  std::vector<std::string> ids;
  for (std::size_t i = cfg.warm_start ? 1 : 0; i < cfg.stages.size(); ++i) append_unique(ids, cfg.stages[i].model_ids);
  return ids;
}

std::vector<Network> load_models(const fs::path& dir, const std::vector<std::string>& ids) {
  std::vector<Network> nets;
  for (const auto& id : ids) nets.push_back(load_network(dir / (id + ".net")));
  return nets;
}

std::vector<BatchItem> load_items(const fs::path& images, const fs::path& targets, const std::string& only) {
  std::vector<BatchItem> items;
  for (const auto& t : read_targets(targets)) {
    if (!only.empty() && t.image_id != only) continue;
    items.push_back({t.image_id, load_png(images / (t.image_id + ".png")), t.true_label, t.target_label});
  }
  if (items.empty()) throw ArgumentError("no images selected");
  return items;
}

void write_reports(const Report& report, const fs::path& csv) {
  std::ofstream out(csv);
  if (!out) throw Error("cannot write " + csv.string());
  write_report_csv(out, report);
  fs::path txt = csv;
  txt.replace_extension(".txt");
  std::ofstream table(txt);
  write_report_table(table, report);
}

int cmd_fixtures(const fs::path& out, const FixtureSuiteOptions& opts) {
  fs::create_directories(out / "models");
  fs::create_directories(out / "images");
  const FixtureSuite suite = make_fixture_suite(opts);

  std::vector<std::string> eval;
  for (std::size_t i = 0; i < suite.eval.size(); ++i) {
    eval.push_back("eval" + std::to_string(i));
    save_network(suite.eval[i], out / "models" / (eval.back() + ".net"));
    std::cout << eval.back() << ": test accuracy " << accuracy<double>(suite.eval[i], suite.test) << '\n';
  }
  for (std::size_t i = 0; i < suite.proxies.size(); ++i) {
    const std::string id = i == 0 ? "proxy" : "proxy" + std::to_string(i);
    save_network(suite.proxies[i], out / "models" / (id + ".net"));
  }

  std::vector<TargetEntry> targets;
  for (std::size_t i = 0; i < suite.test.size(); ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "img_%03zu", i);
    save_png(to_quantized_exact(suite.test[i].image), out / "images" / (std::string(id) + ".png"));
    targets.push_back({id, suite.test[i].label, suite.targets[i]});
  }
  write_targets(targets, out / "targets.csv");

  PipelineConfig cfg = default_config("proxy", eval);
  cfg.seed = opts.seed;
  save_config(cfg, out / "config.json");
  std::cout << "wrote " << suite.eval.size() + suite.proxies.size() << " models, " << targets.size()
            << " images and config.json to " << out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Minimal-perturbation L2 adversarial examples against classifier ensembles"};
  app.require_subcommand(1);

  FixtureSuiteOptions fx;
  std::string fx_out;
  auto* fixtures = app.add_subcommand("fixtures", "Build and train fixture models, write images, targets and a config");
  fixtures->add_option("--out", fx_out, "Output directory")->required();
  fixtures->add_option("--seed", fx.seed, "Seed");
  fixtures->add_option("--side", fx.side, "Image side")->check(CLI::Range(4, 512));
  fixtures->add_option("--classes", fx.classes, "Number of classes")->check(CLI::Range(2, 64));
  fixtures->add_option("--train", fx.train_images, "Training images")->check(CLI::PositiveNumber);
  fixtures->add_option("--images", fx.test_images, "Attack images to write")->check(CLI::PositiveNumber);
  fixtures->add_option("--epochs", fx.epochs, "Training epochs")->check(CLI::NonNegativeNumber);
  fixtures->add_option("--lr", fx.lr, "Learning rate");

  std::string config_path, images_dir, targets_path, out_dir, models_dir, mode, only_image;
  std::optional<std::uint64_t> seed;
  std::optional<double> budget;
  std::optional<int> workers;
  auto* attack = app.add_subcommand("attack", "Run the staged attack on a directory of PNG images");
  attack->add_option("--config", config_path, "Pipeline config (JSON)")->required()->check(CLI::ExistingFile);
  attack->add_option("--images", images_dir, "Directory of <image_id>.png")->required()->check(CLI::ExistingDirectory);
  attack->add_option("--targets", targets_path, "CSV image_id,true_label,target_label")->required()->check(CLI::ExistingFile);
  attack->add_option("--out", out_dir, "Output directory")->required();
  attack->add_option("--models", models_dir, "Directory of <model_id>.net (default: <config dir>/models)");
  attack->add_option("--mode", mode, "targeted|untargeted (overrides config)")->check(CLI::IsMember({"targeted", "untargeted"}));
  attack->add_option("--seed", seed, "Seed recorded with the run (overrides config)");
  attack->add_option("--budget-seconds", budget, "Per-image time budget")->check(CLI::PositiveNumber);
  attack->add_option("--workers", workers, "Images attacked in parallel")->check(CLI::PositiveNumber);
  attack->add_option("--image", only_image, "Attack a single image id");

  std::string adv_dir, report_path, eval_models;
  auto* evaluate = app.add_subcommand("evaluate", "Score an output directory of PNGs against model files");
  evaluate->add_option("--images", images_dir, "Directory of raw images")->required()->check(CLI::ExistingDirectory);
  evaluate->add_option("--adv", adv_dir, "Directory of adversarial images")->required()->check(CLI::ExistingDirectory);
  evaluate->add_option("--targets", targets_path, "Targets file")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--models", models_dir, "Directory of <model_id>.net")->required()->check(CLI::ExistingDirectory);
  evaluate->add_option("--eval-models", eval_models, "Comma-separated model ids (default: from --config)");
  evaluate->add_option("--config", config_path, "Pipeline config supplying model ids and mode")->check(CLI::ExistingFile);
  evaluate->add_option("--mode", mode, "targeted|untargeted")->check(CLI::IsMember({"targeted", "untargeted"}));
  evaluate->add_option("--report", report_path, "Report CSV to write")->required();

  std::string score_path;
  auto* score = app.add_subcommand("score", "Aggregate a report file into the final score");
  score->add_option("report", score_path, "Report CSV")->required()->check(CLI::ExistingFile);

  auto* lint = app.add_subcommand("lint", "Check a pipeline config for suspicious stage ladders");
  lint->add_option("--config", config_path, "Pipeline config (JSON)")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*fixtures) return cmd_fixtures(fx_out, fx);

    if (*attack) {
      PipelineConfig cfg = load_config(config_path);
      if (!mode.empty()) cfg.mode = parse_goal_mode(mode);
      if (seed) cfg.seed = *seed;
      if (budget) cfg.budget_seconds = *budget;
      if (workers) cfg.workers = *workers;
      for (const auto& w : lint_config(cfg)) std::cerr << "warning: " << w << '\n';
      const fs::path models = models_dir.empty() ? fs::path(config_path).parent_path() / "models" : fs::path(models_dir);
      const auto proxy_names = proxy_ids(cfg);
      const auto eval_names = eval_ids(cfg);
      if (eval_names.empty()) throw ArgumentError("config names no evaluation models");
      const auto proxies = load_models(models, proxy_names);
      const auto evals = load_models(models, eval_names);
      const auto items = load_items(images_dir, targets_path, only_image);

      const BatchResult result = run_batch(items, cfg, proxies, evals);
      fs::create_directories(out_dir);
      int succeeded = 0;
      for (const auto& rec : result.records) {
        if (rec.status == RunStatus::error) {
          std::cerr << rec.image_id << ": " << rec.error << '\n';
          continue;
        }
        save_png(rec.submitted, fs::path(out_dir) / (rec.image_id + ".png"));
        succeeded += rec.status == RunStatus::succeeded;
      }
      write_reports(make_report(result.records, eval_names), fs::path(out_dir) / "report.csv");
      std::cout << "attacked " << result.records.size() << " images, " << succeeded << " fooled every model, S = "
                << result.score.score << '\n';
      return 0;
    }

    if (*evaluate) {
      std::vector<std::string> ids = split_ids(eval_models);
      GoalMode goal_mode = GoalMode::targeted;
      if (!config_path.empty()) {
        const PipelineConfig cfg = load_config(config_path);
        goal_mode = cfg.mode;
        if (ids.empty()) ids = eval_ids(cfg);
      }
      if (!mode.empty()) goal_mode = parse_goal_mode(mode);
      if (ids.empty()) throw ArgumentError("no evaluation models given (use --eval-models or --config)");
      const auto nets = load_models(models_dir, ids);
      std::vector<RunRecord> records;
      for (const auto& t : read_targets(targets_path)) {
        RunRecord rec;
        rec.image_id = t.image_id;
        const QuantizedImage raw = load_png(fs::path(images_dir) / (t.image_id + ".png"));
        const fs::path adv_path = fs::path(adv_dir) / (t.image_id + ".png");
        const BatchItem item{t.image_id, raw, t.true_label, t.target_label};
        if (fs::exists(adv_path)) {
          rec.evaluation = evaluate_quantized<double>(load_png(adv_path), raw, nets, item.goal(goal_mode));
        } else {
          rec.evaluation.per_model.assign(nets.size(), kFailureDistance);
          rec.evaluation.failure.assign(nets.size(), true);
        }
        records.push_back(std::move(rec));
      }
      const Report report = make_report(records, ids);
      write_reports(report, report_path);
      write_report_table(std::cout, report);
      return 0;
    }

    if (*score) {
      const Report report = read_report_csv(score_path);
      const ScoreReport s = score_report(report);
      std::printf("S = %.17g  (images %d, models %d)\n", s.score, s.n_images, s.n_models);
      if (std::abs(s.score - report.score) > 1e-9 * std::max(1.0, std::abs(s.score))) {
        std::fprintf(stderr, "warning: recorded S row %.17g differs from recomputed score\n", report.score);
      }
      return 0;
    }

    if (*lint) {
      const auto warnings = lint_config(load_config(config_path));
      for (const auto& w : warnings) std::cout << "warning: " << w << '\n';
      if (warnings.empty()) std::cout << "no warnings\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
