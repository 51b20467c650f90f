#pragma once

// Gradient attacks on single models and logit-fused ensembles: FGSM (L-inf
// and L2), fixed-step L2 PGD, momentum PGD and EPGD, which adapts its step
// size to the fused target probability and re-weights the ensemble toward
// the members that are not fooled yet.

#include <algorithm>
#include <chrono>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "epgd/goal.hpp"
#include "epgd/imageio.hpp"
#include "epgd/masks.hpp"
#include "epgd/metrics.hpp"
#include "epgd/tensornet.hpp"

namespace epgd {

enum class AttackStatus {
  succeeded,            // adversarial for every model
  exhausted,            // iteration cap reached
  degenerate_gradient,  // zero (masked) gradient, cannot normalise
  timed_out,            // deadline passed between iterations
};

inline const char* to_string(AttackStatus s) {
  switch (s) {
    case AttackStatus::succeeded: return "succeeded";
    case AttackStatus::exhausted: return "exhausted";
    case AttackStatus::degenerate_gradient: return "degenerate_gradient";
    case AttackStatus::timed_out: return "timed_out";
  }
  return "?";
}

template <typename Scalar>
struct AttackOutcome {
  ImageT<Scalar> adv;
  std::vector<bool> per_model_success;
  int iterations_used = 0;
  // Spatial L2 distance to the origin image, unquantised.
  double distance = 0.0;
  AttackStatus status = AttackStatus::exhausted;

  bool success() const { return status == AttackStatus::succeeded; }
};

struct StepSchedule {
  double eta_min = 1.0;
  double eta_max = 1.0;
  double confidence = 0.5;

  void validate() const {
    if (!(eta_min > 0.0) || !(eta_max >= eta_min)) throw ArgumentError("step schedule needs 0 < eta_min <= eta_max");
    if (!(confidence > 0.0 && confidence <= 1.0)) throw ArgumentError("confidence must lie in (0, 1]");
  }
};

struct MomentumParams {
  double mu = 0.9;
  double epsilon = 1.0;
};

template <typename Scalar>
struct EnsembleState {
  std::vector<Scalar> weights;
  std::vector<bool> fooled;

  static EnsembleState uniform(std::size_t n) {
    return {std::vector<Scalar>(n, Scalar(1) / static_cast<Scalar>(n)), std::vector<bool>(n, false)};
  }
};

template <typename Scalar>
struct IterationRecord {
  int iteration = 0;
  const ImageT<Scalar>& iterate;
  // Ensemble weights that will drive the next iteration.
  const std::vector<Scalar>& weights;
  double step = 0.0;
  const std::vector<bool>& per_model_success;
};

template <typename Scalar>
struct AttackOptions {
  // Reference image for distances and mask blending. Defaults to the start
  // image; set it when warm-starting from a perturbed image.
  std::optional<ImageT<Scalar>> origin;
  // When set, success is judged on the iterate quantised with this rule
  // against the origin, i.e. on the bytes that would be submitted.
  std::optional<RoundingMode> submission_rounding;
  std::optional<std::chrono::steady_clock::time_point> deadline;
  std::function<void(const IterationRecord<Scalar>&)> observer;
};

namespace detail {

template <typename Scalar>
class SuccessOracle {
 public:
  SuccessOracle(std::span<const NetworkT<Scalar>> nets, const AttackGoal& goal, const ImageT<Scalar>& origin,
                std::optional<RoundingMode> rounding)
      : nets_(nets), goal_(goal), rounding_(rounding) {
    if (rounding_) origin_q_ = to_quantized_exact(origin);
  }

  std::vector<bool> operator()(const ImageT<Scalar>& x) const {
    std::vector<bool> flags(nets_.size());
    if (rounding_) {
      const ImageT<Scalar> submitted = dequantize<Scalar>(quantize(x, origin_q_, *rounding_));
      for (std::size_t i = 0; i < nets_.size(); ++i) flags[i] = is_adversarial(nets_[i], submitted, goal_);
    } else {
      for (std::size_t i = 0; i < nets_.size(); ++i) flags[i] = is_adversarial(nets_[i], x, goal_);
    }
    return flags;
  }

 private:
  std::span<const NetworkT<Scalar>> nets_;
  AttackGoal goal_;
  std::optional<RoundingMode> rounding_;
  QuantizedImage origin_q_;
};

inline bool all_of(const std::vector<bool>& v) {
  return std::all_of(v.begin(), v.end(), [](bool b) { return b; });
}

template <typename Scalar>
void check_goal(std::span<const NetworkT<Scalar>> nets, const AttackGoal& goal) {
  if (nets.empty()) throw ArgumentError("attack needs at least one model");
  for (const auto& net : nets) check_label(goal.label, net.num_classes());
}

// Gradient of the loss the attack descends: target cross-entropy when
// targeted, negated true-label cross-entropy when untargeted.
template <typename Scalar>
ImageT<Scalar> descent_gradient(std::span<const NetworkT<Scalar>> nets, std::span<const Scalar> weights,
                                const ImageT<Scalar>& x, const AttackGoal& goal) {
  auto g = input_gradient(nets, weights, x, goal.label).grad_input;
  if (goal.mode == GoalMode::untargeted) g.values() = -g.values();
  return g;
}

// x - eta * g / norm, projected onto [0, 255].
template <typename Scalar>
void descend(ImageT<Scalar>& x, const ImageT<Scalar>& g, Scalar norm, Scalar eta) {
  x.values() = (x.values() - eta * (g.values() / norm)).cwiseMax(Scalar(0)).cwiseMin(Scalar(kPixelMax));
}

inline bool past(const std::optional<std::chrono::steady_clock::time_point>& deadline) {
  return deadline && std::chrono::steady_clock::now() >= *deadline;
}

template <typename Scalar>
AttackOutcome<Scalar> finish(ImageT<Scalar> x, std::vector<bool> flags, int iterations, const ImageT<Scalar>& origin,
                             AttackStatus status) {
  AttackOutcome<Scalar> out;
  out.distance = spatial_l2_distance(x, origin);
  out.adv = std::move(x);
  out.per_model_success = std::move(flags);
  out.iterations_used = iterations;
  out.status = status;
  return out;
}

}  // namespace detail

// Single signed step: x - eps * sign(grad of descent loss); sign(0) = 0.
template <typename Scalar>
ImageT<Scalar> fgsm_linf(const NetworkT<Scalar>& net, const ImageT<Scalar>& x, const AttackGoal& goal, Scalar epsilon) {
  if (!(epsilon > Scalar(0))) throw ArgumentError("epsilon must be positive");
  const std::span<const NetworkT<Scalar>> nets(&net, 1);
  detail::check_goal(nets, goal);
  const Scalar one[] = {Scalar(1)};
  const auto g = detail::descent_gradient(nets, std::span<const Scalar>(one), x, goal);
  ImageT<Scalar> out = x;
  out.values() -= epsilon * g.values().array().sign().matrix();
  return clamp_pixels(std::move(out));
}

// Single L2 step of exactly epsilon along the normalised gradient (before
// projection). Returns nullopt when the gradient is identically zero.
template <typename Scalar>
std::optional<ImageT<Scalar>> fgsm_l2(const NetworkT<Scalar>& net, const ImageT<Scalar>& x, const AttackGoal& goal,
                                      Scalar epsilon) {
  if (!(epsilon > Scalar(0))) throw ArgumentError("epsilon must be positive");
  const std::span<const NetworkT<Scalar>> nets(&net, 1);
  detail::check_goal(nets, goal);
  const Scalar one[] = {Scalar(1)};
  const auto g = detail::descent_gradient(nets, std::span<const Scalar>(one), x, goal);
  const Scalar norm = g.values().norm();
  if (norm == Scalar(0)) return std::nullopt;
  ImageT<Scalar> out = x;
  detail::descend(out, g, norm, epsilon);
  return out;
}

// Fixed-step L2 PGD on the fused loss with fixed ensemble weights. Stops at
// the first iterate that is adversarial for every model (the start image is
// checked before any step).
template <typename Scalar>
AttackOutcome<Scalar> pgd_l2(std::span<const NetworkT<Scalar>> nets, std::span<const Scalar> weights,
                             const ImageT<Scalar>& x, const AttackGoal& goal, Scalar epsilon, int iters,
                             const AttackOptions<Scalar>& opts = {}) {
  if (iters < 1) throw ArgumentError("iteration count must be at least 1");
  if (!(epsilon > Scalar(0))) throw ArgumentError("epsilon must be positive");
  detail::check_goal(nets, goal);
  detail::check_ensemble(nets, weights);
  const ImageT<Scalar> origin = opts.origin.value_or(x);
  const detail::SuccessOracle<Scalar> oracle(nets, goal, origin, opts.submission_rounding);
  const std::vector<Scalar> w(weights.begin(), weights.end());

  ImageT<Scalar> cur = x;
  auto flags = oracle(cur);
  if (detail::all_of(flags)) return detail::finish(std::move(cur), std::move(flags), 0, origin, AttackStatus::succeeded);

  for (int t = 1; t <= iters; ++t) {
    if (detail::past(opts.deadline))
      return detail::finish(std::move(cur), std::move(flags), t - 1, origin, AttackStatus::timed_out);
    const auto g = detail::descent_gradient(nets, weights, cur, goal);
    const Scalar norm = g.values().norm();
    if (norm == Scalar(0))
      return detail::finish(std::move(cur), std::move(flags), t - 1, origin, AttackStatus::degenerate_gradient);
    detail::descend(cur, g, norm, epsilon);
    flags = oracle(cur);
    if (opts.observer) opts.observer({t, cur, w, static_cast<double>(epsilon), flags});
    if (detail::all_of(flags)) return detail::finish(std::move(cur), std::move(flags), t, origin, AttackStatus::succeeded);
  }
  return detail::finish(std::move(cur), std::move(flags), iters, origin, AttackStatus::exhausted);
}

// Momentum PGD: acc <- mu * acc + eps * g / |g|, then x <- clip(x - eps * acc / |acc|).
template <typename Scalar>
AttackOutcome<Scalar> momentum_pgd(std::span<const NetworkT<Scalar>> nets, std::span<const Scalar> weights,
                                   const ImageT<Scalar>& x, const AttackGoal& goal, const MomentumParams& params,
                                   int iters, const AttackOptions<Scalar>& opts = {}) {
  if (iters < 1) throw ArgumentError("iteration count must be at least 1");
  if (!(params.epsilon > 0.0) || !(params.mu >= 0.0) || !std::isfinite(params.mu))
    throw ArgumentError("momentum needs epsilon > 0 and finite mu >= 0");
  detail::check_goal(nets, goal);
  detail::check_ensemble(nets, weights);
  const ImageT<Scalar> origin = opts.origin.value_or(x);
  const detail::SuccessOracle<Scalar> oracle(nets, goal, origin, opts.submission_rounding);
  const std::vector<Scalar> w(weights.begin(), weights.end());
  const auto eps = static_cast<Scalar>(params.epsilon);
  const auto mu = static_cast<Scalar>(params.mu);

  ImageT<Scalar> cur = x;
  ImageT<Scalar> acc(x.side(), Scalar(0));
  auto flags = oracle(cur);
  if (detail::all_of(flags)) return detail::finish(std::move(cur), std::move(flags), 0, origin, AttackStatus::succeeded);

  for (int t = 1; t <= iters; ++t) {
    if (detail::past(opts.deadline))
      return detail::finish(std::move(cur), std::move(flags), t - 1, origin, AttackStatus::timed_out);
    const auto g = detail::descent_gradient(nets, weights, cur, goal);
    const Scalar norm = g.values().norm();
    if (norm == Scalar(0))
      return detail::finish(std::move(cur), std::move(flags), t - 1, origin, AttackStatus::degenerate_gradient);
    acc.values() = mu * acc.values() + eps * (g.values() / norm);
    const Scalar acc_norm = acc.values().norm();
    if (acc_norm == Scalar(0))
      return detail::finish(std::move(cur), std::move(flags), t - 1, origin, AttackStatus::degenerate_gradient);
    detail::descend(cur, acc, acc_norm, eps);
    flags = oracle(cur);
    if (opts.observer) opts.observer({t, cur, w, params.epsilon, flags});
    if (detail::all_of(flags)) return detail::finish(std::move(cur), std::move(flags), t, origin, AttackStatus::succeeded);
  }
  return detail::finish(std::move(cur), std::move(flags), iters, origin, AttackStatus::exhausted);
}

// Truncated linear schedule: p = clip(sum_i w_i p_i, 0, c),
// eta = eta_max - (eta_max - eta_min) * p / c. Endpoints are returned exactly.
template <typename Scalar>
double scheduled_step_size(std::span<const Scalar> probs, std::span<const Scalar> weights, const StepSchedule& sched) {
  sched.validate();
  if (probs.size() != weights.size()) throw ArgumentError("schedule needs one probability per weight");
  double fused = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) fused += static_cast<double>(weights[i]) * static_cast<double>(probs[i]);
  const double p = std::clamp(fused, 0.0, sched.confidence);
  if (p >= sched.confidence) return sched.eta_min;
  if (p <= 0.0) return sched.eta_max;
  const double eta = sched.eta_max - (sched.eta_max - sched.eta_min) * (p / sched.confidence);
  return std::clamp(eta, sched.eta_min, sched.eta_max);
}

// Fooled members drop to weight 0, the rest share weight uniformly.
template <typename Scalar>
EnsembleState<Scalar> update_ensemble_weights(const EnsembleState<Scalar>& state,
                                              const std::vector<bool>& per_model_success) {
  if (per_model_success.size() != state.weights.size())
    throw ArgumentError("success flags do not match ensemble size");
  const auto unfooled = std::count(per_model_success.begin(), per_model_success.end(), false);
  if (unfooled == 0) throw ContractError("every model is fooled; the attack should have returned");
  EnsembleState<Scalar> next;
  next.fooled = per_model_success;
  next.weights.resize(per_model_success.size());
  const Scalar share = Scalar(1) / static_cast<Scalar>(unfooled);
  for (std::size_t i = 0; i < per_model_success.size(); ++i) next.weights[i] = per_model_success[i] ? Scalar(0) : share;
  return next;
}

// EPGD. Each iteration takes the fused-loss gradient under the current
// weights, masks it, scales the normalised step by the probability-driven
// schedule, projects onto the pixel box and then either returns (all models
// fooled) or re-weights the ensemble. Untargeted goals drive the schedule
// with 1 - p(true label), so the step shrinks as the true class loses mass.
template <typename Scalar>
AttackOutcome<Scalar> epgd(std::span<const NetworkT<Scalar>> nets, const ImageT<Scalar>& x, const AttackGoal& goal,
                           const MaskT<Scalar>& mask, const StepSchedule& sched, int iters,
                           const AttackOptions<Scalar>& opts = {}) {
  if (iters < 1) throw ArgumentError("iteration count must be at least 1");
  sched.validate();
  detail::check_goal(nets, goal);
  if (mask.side() != x.side()) throw ShapeError("mask side does not match image side");
  const ImageT<Scalar> origin = opts.origin.value_or(x);
  require_same_shape(origin, x, "epgd origin");
  const detail::SuccessOracle<Scalar> oracle(nets, goal, origin, opts.submission_rounding);

  auto state = EnsembleState<Scalar>::uniform(nets.size());
  ImageT<Scalar> cur = x;
  auto flags = oracle(cur);
  if (detail::all_of(flags)) return detail::finish(std::move(cur), std::move(flags), 0, origin, AttackStatus::succeeded);

  std::vector<Scalar> probs(nets.size());
  for (int t = 1; t <= iters; ++t) {
    if (detail::past(opts.deadline))
      return detail::finish(std::move(cur), std::move(flags), t - 1, origin, AttackStatus::timed_out);
    auto g = detail::descent_gradient(nets, std::span<const Scalar>(state.weights), cur, goal);
    g.values().array() *= mask.values().array();
    const Scalar norm = g.values().norm();
    if (norm == Scalar(0))
      return detail::finish(std::move(cur), std::move(flags), t - 1, origin, AttackStatus::degenerate_gradient);

    for (std::size_t i = 0; i < nets.size(); ++i) {
      const Scalar p = probability(nets[i], cur, goal.label);
      probs[i] = goal.mode == GoalMode::targeted ? p : Scalar(1) - p;
    }
    const double eta = scheduled_step_size(std::span<const Scalar>(probs), std::span<const Scalar>(state.weights), sched);

    detail::descend(cur, g, norm, static_cast<Scalar>(eta));
    flags = oracle(cur);
    if (detail::all_of(flags)) {
      if (opts.observer) opts.observer({t, cur, state.weights, eta, flags});
      return detail::finish(std::move(cur), std::move(flags), t, origin, AttackStatus::succeeded);
    }
    state = update_ensemble_weights(state, flags);
    if (opts.observer) opts.observer({t, cur, state.weights, eta, flags});
  }
  return detail::finish(std::move(cur), std::move(flags), iters, origin, AttackStatus::exhausted);
}

}  // namespace epgd
