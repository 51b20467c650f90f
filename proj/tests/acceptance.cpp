// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "epgd/attacks.hpp"
#include "epgd/resample.hpp"
#include "support.hpp"

using namespace epgd;
using namespace testing;
namespace fs = std::filesystem;

namespace {

using Nets = std::span<const Network>;
using Weights = std::span<const double>;
using Clock = std::chrono::steady_clock;

int failures = 0;

void report(int id, bool ok, const std::string& what, const std::string& detail) {
  std::printf("%s  criterion %2d  %s  [%s]\n", ok ? "PASS" : "FAIL", id, what.c_str(), detail.c_str());
  std::fflush(stdout);
  failures += !ok;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

Matrix<double> rand_m(Rng& rng, Eigen::Index r, Eigen::Index c, double s) { return random_matrix(rng, r, c, s); }

// --- 1 -------------------------------------------------------------------

void gradient_oracle() {
  const auto start = Clock::now();
  double worst = 0;
  int kinked = 0, cases = 0;
  const int side = 6, classes = 4, in = side * side * kChannels;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(1000 + seed);
    Conv2d<double> conv{3, kChannels, 4, rand_m(rng, 27, 4, 0.1), random_vector(rng, 4, 0.5)};
    const std::vector<Network> per_layer{
        Network(side, {Dense<double>{rand_m(rng, classes, in, 0.05), random_vector(rng, classes, 0.5)}}),
        Network(side, {conv, Dense<double>{rand_m(rng, classes, 16 * 4, 0.05), random_vector(rng, classes, 0.1)}}),
        Network(side, {Dense<double>{rand_m(rng, 16, in, 0.02), random_vector(rng, 16, 1.0)}, Relu{},
                       Dense<double>{rand_m(rng, classes, 16, 0.5), random_vector(rng, classes, 0.1)}}),
        Network(side, {conv, MaxPool2d{2}, Dense<double>{rand_m(rng, classes, 4 * 4, 0.05), random_vector(rng, classes, 0.1)}}),
    };
    for (const auto& net : per_layer) {
      const double w[] = {1.0};
      const auto r = check_input_gradient(Nets(&net, 1), Weights(w), random_image(rng, side), rng.below(classes));
      worst = std::max(worst, r.max_rel_error);
      kinked += r.kinked;
      ++cases;
    }
    const auto nets = build_fixture_models<double>(42 + seed, 2, 8, classes);
    const double w[] = {0.5, 0.5};
    const auto r = check_input_gradient(Nets(nets), Weights(w), random_image(rng, 8), rng.below(classes));
    worst = std::max(worst, r.max_rel_error);
    kinked += r.kinked;
    ++cases;
  }
  const double secs = seconds_since(start);
  report(1, worst <= 1e-4 && secs < 30.0, "analytic input gradients match central differences (h = 1e-3)",
         fmt("%.0f cases, max rel err %.2e <= 1e-4, %.0f kink-skipped coords, %.2f s < 30 s", cases, worst,
             kinked, secs));
}

// --- 2 -------------------------------------------------------------------

void metric_oracle() {
  Rng rng(2);
  double worst = 0;
  for (int i = 0; i < 50; ++i) {
    const Image a = random_image(rng, 8), b = random_image(rng, 8);
    double total = 0;
    for (int r = 0; r < 8; ++r)
      for (int c = 0; c < 8; ++c) {
        double s = 0;
        for (int ch = 0; ch < 3; ++ch) s += (a(r, c, ch) - b(r, c, ch)) * (a(r, c, ch) - b(r, c, ch));
        total += std::sqrt(s);
      }
    worst = std::max(worst, std::abs(spatial_l2_distance(a, b) - total / 64.0));
  }
  const auto& world = fixture_world();
  const QuantizedImage raw = to_quantized_exact(world.test[5].image);
  const double fail = score_distance(raw, raw, world.eval[0], AttackGoal::targeted(world.targets[5]));
  Eigen::MatrixXd m(2, 2);
  m << 2, 4, 6, 8;
  const double s = final_score(m).score;
  report(2, worst <= 1e-12 && fail == 64.0 && s == 5.0, "spatial distance, failure constant and final score",
         fmt("max |D - loop| %.1e over 50 pairs, failure D = %.17g, S([[2,4],[6,8]]) = %.17g", worst, fail, s));
}

// --- 3 -------------------------------------------------------------------

void epgd_reduces_to_pgd() {
  const auto& world = fixture_world();
  int identical = 0;
  long steps = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(300 + seed);
    const std::size_t i = static_cast<std::size_t>(rng.below(100));
    const Network& net = world.eval[rng.below(2)];
    const double eps = rng.uniform(0.5, 6.0);
    const AttackGoal goal = AttackGoal::targeted(world.targets[i]);
    std::vector<Image> a, b;
    AttackOptions<double> oa, ob;
    oa.observer = [&](const IterationRecord<double>& r) { a.push_back(r.iterate); };
    ob.observer = [&](const IterationRecord<double>& r) { b.push_back(r.iterate); };
    const double w[] = {1.0};
    const auto pa = pgd_l2(Nets(&net, 1), Weights(w), world.test[i].image, goal, eps, 40, oa);
    const auto pb = epgd::epgd(Nets(&net, 1), world.test[i].image, goal, full_mask(16), StepSchedule{eps, eps, 0.5}, 40, ob);
    bool same = a.size() == b.size() && pa.adv == pb.adv && pa.iterations_used == pb.iterations_used;
    for (std::size_t t = 0; same && t < a.size(); ++t) same = a[t] == b[t];
    identical += same;
    steps += static_cast<long>(a.size());
  }
  report(3, identical == 10, "EPGD with N=1, full mask, eta_min = eta_max is bitwise PGD",
         fmt("%.0f/10 runs identical, %.0f iterates compared", identical, static_cast<double>(steps)));
}

// --- 4 -------------------------------------------------------------------

void schedule_endpoints() {
  const StepSchedule s{1.5, 20.0, 0.5};
  const double one[] = {1.0};
  auto eta = [&](double p) {
    const double probs[] = {p};
    return scheduled_step_size(Weights(probs), Weights(one), s);
  };
  const double at_c = eta(0.5), above = eta(0.9), zero = eta(0.0), mid = eta(0.25);
  const bool ok = at_c == s.eta_min && above == s.eta_min && zero == s.eta_max && mid == (s.eta_min + s.eta_max) / 2;
  report(4, ok, "schedule endpoints and midpoint are exact",
         fmt("eta(c) = %.17g, eta(0.9) = %.17g, eta(0) = %.17g, eta(c/2) = %.17g", at_c, above, zero, mid));
}

// --- 5 -------------------------------------------------------------------

void weight_dynamics() {
  const auto& world = fixture_world();
  const std::vector<Network> nets{world.eval[0], world.eval[1], world.proxies[0]};
  long updates = 0, bad = 0, partial = 0;
  for (std::size_t i = 0; i < world.test.size(); ++i) {
    AttackOptions<double> opts;
    opts.observer = [&](const IterationRecord<double>& r) {
      if (detail::all_of(r.per_model_success)) return;  // early return, no update
      ++updates;
      const auto unfooled = std::count(r.per_model_success.begin(), r.per_model_success.end(), false);
      partial += unfooled < 3;
      double sum = 0;
      for (std::size_t m = 0; m < 3; ++m) {
        sum += r.weights[m];
        const double expect = r.per_model_success[m] ? 0.0 : 1.0 / static_cast<double>(unfooled);
        bad += r.weights[m] != expect;
      }
      bad += std::abs(sum - 1.0) > 1e-9;
    };
    epgd::epgd(Nets(nets), world.test[i].image, AttackGoal::targeted(world.targets[i]), full_mask(16),
         StepSchedule{0.5, 8.0, 0.5}, 40, opts);
  }
  report(5, bad == 0 && updates > 0 && partial > 0, "EPGD weights uniform over unfooled members, zero on fooled",
         fmt("%.0f weight updates checked on a 3-model ensemble (%.0f with some member fooled), %.0f violations",
             static_cast<double>(updates), static_cast<double>(partial), static_cast<double>(bad)));
}

// --- 6 -------------------------------------------------------------------

struct AttackRun {
  std::vector<double> distance;  // mean over models of per-model D, per image
  std::vector<bool> success;
  double score = 0;
  int successes = 0;
};

template <typename Attack>
AttackRun score_attack(Attack&& attack) {
  const auto& world = fixture_world();
  AttackRun run;
  Eigen::MatrixXd d(static_cast<Eigen::Index>(world.test.size()), 2);
  for (std::size_t i = 0; i < world.test.size(); ++i) {
    const QuantizedImage raw = to_quantized_exact(world.test[i].image);
    const AttackGoal goal = AttackGoal::targeted(world.targets[i]);
    AttackOptions<double> opts;
    opts.submission_rounding = RoundingMode::toward_raw;
    const AttackOutcome<double> out = attack(world.test[i].image, goal, opts);
    const auto rep = evaluate_submission(out.adv, raw, Nets(world.eval), goal, RoundingMode::toward_raw);
    for (int m = 0; m < 2; ++m) d(static_cast<Eigen::Index>(i), m) = rep.per_model[m];
    run.success.push_back(rep.all_fooled());
    run.distance.push_back(rep.distance);
    run.successes += rep.all_fooled();
  }
  run.score = final_score(d).score;
  return run;
}

double mutual_mean(const AttackRun& a, const AttackRun& b, const AttackRun& which, int* count) {
  double s = 0;
  int n = 0;
  for (std::size_t i = 0; i < a.success.size(); ++i)
    if (a.success[i] && b.success[i]) {
      s += which.distance[i];
      ++n;
    }
  *count = n;
  return n ? s / n : 0.0;
}

void epgd_beats_pgd() {
  const auto start = Clock::now();
  const auto& world = fixture_world();
  const int iters = 40;
  // Middle-stage schedule of the shipped ladder at side 16: eta_max 300 * 16 / 299, eta_min 1.
  const StepSchedule sched{1.0, 300.0 * 16.0 / 299.0, 0.5};
  const Mask mask = full_mask(16);
  const AttackRun e = score_attack([&](const Image& x, const AttackGoal& g, const AttackOptions<double>& o) {
    return epgd::epgd(Nets(world.eval), x, g, mask, sched, iters, o);
  });

  // Baseline grid. S must beat every step size; the distance margin is
  // required against every step size that matches EPGD's success count,
  // i.e. PGD tuned to the same success rate.
  const double w[] = {0.5, 0.5};
  std::string grid;
  bool s_ok = true, margin_ok = true;
  int matched = 0;
  double worst_margin = 1.0;
  for (double eps : {2.0, 4.0, 8.0, 16.0}) {
    const AttackRun p = score_attack([&](const Image& x, const AttackGoal& g, const AttackOptions<double>& o) {
      return pgd_l2(Nets(world.eval), Weights(w), x, g, eps, iters, o);
    });
    int n = 0;
    const double de = mutual_mean(e, p, e, &n), dp = mutual_mean(e, p, p, &n);
    s_ok = s_ok && e.score < p.score;
    if (p.successes >= e.successes) {
      ++matched;
      const double margin = n > 0 ? 1.0 - de / dp : 0.0;
      worst_margin = std::min(worst_margin, margin);
      margin_ok = margin_ok && n > 0 && margin >= 0.05;
    }
    grid += fmt("; PGD eps %.0f: S %.3f, %.0f ok, mutual D %.3f vs EPGD", eps, p.score, p.successes, dp) +
            fmt(" %.3f (n %.0f)", de, n);
  }
  const double secs = seconds_since(start);
  report(6, s_ok && margin_ok && matched > 0,
         "EPGD beats fixed-step PGD at equal iteration budget (100 images, 2 nets, targeted)",
         fmt("EPGD S %.3f with %.0f/100 ok", e.score, e.successes) +
             fmt("; smallest mutual-D margin vs %.0f equal-success PGD runs %.1f%% >= 5%%", matched,
                 100.0 * worst_margin) +
             grid + fmt("; %.1f s", secs));
}

// --- 7 -------------------------------------------------------------------

void quantization_laws() {
  const bool units = quantize_value(3.7, RoundingMode::toward_raw, 3.0) == 3 &&
                     quantize_value(2.3, RoundingMode::toward_raw, 3.0) == 3 &&
                     quantize_value(3.5, RoundingMode::round_half_up) == 4 &&
                     quantize_value(3.5, RoundingMode::floor) == 3;
  Rng rng(7);
  int overshoot = 0;
  for (int i = 0; i < 10000; ++i) {
    const double raw = rng.below(256);
    const double x = rng.uniform(-30.0, 285.0);
    const double q = quantize_value(x, RoundingMode::toward_raw, raw);
    // q must lie between raw and x (after clipping x to the pixel box).
    const double xc = std::clamp(x, 0.0, 255.0);
    overshoot += q > std::max(xc, raw) || q < std::min(xc, raw) ||
                 std::abs(q - raw) > std::abs(x - raw);
  }
  report(7, units && overshoot == 0, "rounding unit cases exact; toward-raw never overshoots",
         std::string("unit cases ") + (units ? "ok" : "FAILED") +
             fmt("; %.0f overshoots in 10000 random cases", overshoot));
}

// --- 8 -------------------------------------------------------------------

void resize_consistency() {
  std::ifstream in(std::string(EPGD_TEST_DATA) + "/resize_golden.txt");
  std::string line;
  int cases = 0, mismatched = 0;
  std::string names;
  auto values = [](const std::string& l) {
    std::istringstream ls(l);
    std::string tok;
    ls >> tok;
    std::vector<double> v;
    while (ls >> tok) v.push_back(std::strtod(tok.c_str(), nullptr));
    return v;
  };
  while (std::getline(in, line)) {
    if (line.rfind("case ", 0) != 0) continue;
    std::istringstream ls(line);
    std::string tag, name;
    int side = 0, target = 0;
    ls >> tag >> name >> side >> target;
    std::string lin, lout;
    std::getline(in, lin);
    std::getline(in, lout);
    const auto vin = values(lin), vout = values(lout);
    const Image x(side, Eigen::Map<const Vector<double>>(vin.data(), static_cast<Eigen::Index>(vin.size())));
    const Image y = resize_bilinear(x, target);
    bool same = y.size() == static_cast<Eigen::Index>(vout.size());
    for (Eigen::Index k = 0; same && k < y.size(); ++k) same = y.values()[k] == vout[static_cast<std::size_t>(k)];
    mismatched += !same;
    ++cases;
    names += (names.empty() ? "" : ",") + name;
  }

  // Evaluate-what-you-submit: the reported distance equals the one recomputed
  // from the PNG files written to disk.
  const auto& world = fixture_world();
  const auto dir = fs::temp_directory_path() / "epgd_acceptance_png";
  fs::create_directories(dir);
  int files = 0, differ = 0;
  const PipelineConfig cfg = default_config();
  for (std::size_t i = 0; i < 20; ++i) {
    const QuantizedImage raw = to_quantized_exact(world.test[i].image);
    const AttackGoal goal = AttackGoal::targeted(world.targets[i]);
    const RunRecord rec = run_pipeline(raw, goal, cfg, Nets(world.proxies), Nets(world.eval));
    const auto rep = evaluate_submission(rec.outcome.adv, raw, Nets(world.eval), goal, cfg.rounding);
    save_png(raw, dir / "raw.png");
    save_png(quantize(rec.outcome.adv, raw, cfg.rounding), dir / "adv.png");
    const double from_disk = spatial_l2_distance(load_png(dir / "raw.png"), load_png(dir / "adv.png"));
    const auto disk_rep = evaluate_quantized<double>(load_png(dir / "adv.png"), load_png(dir / "raw.png"),
                                                     Nets(world.eval), goal);
    differ += rep.distance != from_disk || rep.per_model != disk_rep.per_model || rec.evaluation.per_model != rep.per_model;
    ++files;
  }
  fs::remove_all(dir);
  report(8, cases >= 4 && mismatched == 0 && differ == 0, "resize golden vectors bit-exact; scored distance equals PNG distance",
         fmt("%.0f golden cases, %.0f mismatched (", cases, mismatched) + names +
             fmt("); %.0f submissions re-scored from disk, %.0f differ", files, differ));
}

// --- 9 -------------------------------------------------------------------

void mask_composition() {
  const auto& world = fixture_world();
  const Mask masks[] = {border_mask(16, 2), border_mask(16, 5), grid_mask(16, 7, 7), grid_mask(16, 3, 2)};
  int runs = 0, leaks = 0;
  for (const Mask& m : masks) {
    for (std::size_t i = 0; i < 25; ++i) {
      const Image& raw = world.test[i].image;
      const auto out = epgd::epgd(Nets(world.eval), raw, AttackGoal::targeted(world.targets[i]), m,
                            StepSchedule{1.0, 16.0, 0.5}, 40);
      for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 16; ++c)
          if (!m.active(r, c))
            for (int ch = 0; ch < kChannels; ++ch) leaks += out.adv(r, c, ch) != raw(r, c, ch);
      ++runs;
    }
  }
  long brute = 0;
  for (int r = 0; r < 299; ++r)
    for (int c = 0; c < 299; ++c) {
      bool on = false;
      for (int top = 0; top < 299 && !on; top += 14)
        for (int left = 0; left < 299 && !on; left += 14) on = r >= top && r < top + 7 && c >= left && c < left + 7;
      brute += on;
    }
  const long count = grid_mask(299, 7, 7).active_count();
  report(9, leaks == 0 && count == brute, "EPGD output equals raw outside the mask; grid(299,7,7) count",
         fmt("%.0f border/grid runs, %.0f leaked values; grid active %.0f vs enumeration %.0f", runs, leaks,
             static_cast<double>(count), static_cast<double>(brute)));
}

// --- 10 ------------------------------------------------------------------

void ladder_beats_last_stage() {
  const auto start = Clock::now();
  const auto& world = fixture_world();
  const auto items = fixture_items(world);
  const PipelineConfig ladder = default_config();
  PipelineConfig last = ladder;
  last.stages = {ladder.stages.front(), ladder.stages.back()};

  const auto a = run_batch(items, ladder, Nets(world.proxies), Nets(world.eval));
  const auto b = run_batch(items, last, Nets(world.proxies), Nets(world.eval));
  int sa = 0, sb = 0, n = 0;
  double da = 0, db = 0, ma = 0, mb = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const bool oka = a.records[i].status == RunStatus::succeeded, okb = b.records[i].status == RunStatus::succeeded;
    sa += oka;
    sb += okb;
    if (oka) ma += a.records[i].evaluation.distance;
    if (okb) mb += b.records[i].evaluation.distance;
    if (oka && okb) {
      da += a.records[i].evaluation.distance;
      db += b.records[i].evaluation.distance;
      ++n;
    }
  }
  ma /= std::max(sa, 1);
  mb /= std::max(sb, 1);
  const bool ok = sa == sb && sa > 0 && ma < mb;
  report(10, ok, "shipped stage ladder beats its last stage alone at equal success",
         fmt("ladder %.0f/100 ok, mean D %.4f, S %.3f", sa, ma, a.score.score) +
             fmt("; last stage only %.0f/100 ok, mean D %.4f, S %.3f", sb, mb, b.score.score) +
             fmt("; %.1f s", seconds_since(start)));
}

}  // namespace

int main() {
  const auto start = Clock::now();
  gradient_oracle();
  metric_oracle();
  epgd_reduces_to_pgd();
  schedule_endpoints();
  weight_dynamics();
  epgd_beats_pgd();
  quantization_laws();
  resize_consistency();
  mask_composition();
  ladder_beats_last_stage();
  std::printf("%d of 10 criteria failed (%.1f s)\n", failures, seconds_since(start));
  return failures == 0 ? 0 : 1;
}
