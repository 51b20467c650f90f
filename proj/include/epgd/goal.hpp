#pragma once

#include <string>

#include "epgd/tensornet.hpp"

namespace epgd {

enum class GoalMode { targeted, untargeted };

// Targeted: `label` is the class the attacker wants. Untargeted: `label` is
// the true class the prediction must leave.
struct AttackGoal {
  GoalMode mode = GoalMode::targeted;
  int label = 0;

  static AttackGoal targeted(int target) { return {GoalMode::targeted, target}; }
  static AttackGoal untargeted(int true_label) { return {GoalMode::untargeted, true_label}; }
};

inline const char* to_string(GoalMode mode) {
  return mode == GoalMode::targeted ? "targeted" : "untargeted";
}

inline GoalMode parse_goal_mode(const std::string& s) {
  if (s == "targeted") return GoalMode::targeted;
  if (s == "untargeted") return GoalMode::untargeted;
  throw ArgumentError("unknown attack mode '" + s + "' (expected targeted|untargeted)");
}

template <typename Derived>
bool is_adversarial_logits(const Eigen::MatrixBase<Derived>& logits, const AttackGoal& goal) {
  const int predicted = argmax(logits);
  return goal.mode == GoalMode::targeted ? predicted == goal.label : predicted != goal.label;
}

// Argmax with lowest-index tie-breaking. Inputs whose side differs from the
// network's are resized bilinearly first.
template <typename Scalar>
bool is_adversarial(const NetworkT<Scalar>& net, const ImageT<Scalar>& x, const AttackGoal& goal) {
  check_label(goal.label, net.num_classes());
  return is_adversarial_logits(predict_logits(net, x), goal);
}

}  // namespace epgd
