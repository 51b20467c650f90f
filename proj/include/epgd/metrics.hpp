#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "epgd/goal.hpp"
#include "epgd/imageio.hpp"

namespace epgd {

// Distance charged to a model the adversarial image failed to fool.
inline constexpr double kFailureDistance = 64.0;

// Mean over spatial positions of the Euclidean norm of the 3-channel
// difference vector. Not the Frobenius norm of the difference.
template <typename Scalar>
double spatial_l2_distance(const ImageT<Scalar>& a, const ImageT<Scalar>& b) {
  require_same_shape(a, b, "spatial_l2_distance");
  const int side = a.side();
  const auto diff = (a.values() - b.values()).template cast<double>().eval();
  Eigen::Map<const RowMajorMatrix<double>> per_pixel(diff.data(), static_cast<Eigen::Index>(side) * side, kChannels);
  return per_pixel.rowwise().norm().sum() / (static_cast<double>(side) * side);
}

inline double spatial_l2_distance(const QuantizedImage& a, const QuantizedImage& b) {
  if (a.side != b.side) throw ShapeError("spatial_l2_distance: side mismatch");
  return spatial_l2_distance(dequantize<double>(a), dequantize<double>(b));
}

struct DistanceReport {
  std::vector<double> per_model;
  std::vector<bool> failure;
  // Quantised success-branch distance shared by every fooled model.
  double distance = 0.0;

  bool all_fooled() const {
    for (bool f : failure)
      if (f) return false;
    return true;
  }
};

struct ScoreReport {
  double score = 0.0;
  int n_images = 0;
  int n_models = 0;
};

// Mean of an n_images x n_models matrix of per-pair distances.
inline ScoreReport final_score(const Eigen::MatrixXd& distances) {
  if (distances.rows() < 1 || distances.cols() < 1) throw ArgumentError("score needs at least one image and model");
  return {distances.mean(), static_cast<int>(distances.rows()), static_cast<int>(distances.cols())};
}

// Scores a submitted 8-bit image: each model sees it bilinearly resized to
// its input side, and the distance is measured at the native side.
template <typename Scalar>
DistanceReport evaluate_quantized(const QuantizedImage& x_adv, const QuantizedImage& x_raw,
                                  std::span<const NetworkT<Scalar>> nets, const AttackGoal& goal) {
  if (nets.empty()) throw ArgumentError("evaluation needs at least one model");
  const double d = spatial_l2_distance(x_raw, x_adv);
  const ImageT<Scalar> submitted = dequantize<Scalar>(x_adv);
  DistanceReport report;
  report.distance = d;
  for (const auto& net : nets) {
    const bool fooled = is_adversarial(net, resize_bilinear(submitted, net.input_side()), goal);
    report.failure.push_back(!fooled);
    report.per_model.push_back(fooled ? d : kFailureDistance);
  }
  return report;
}

template <typename Scalar>
double score_distance(const QuantizedImage& x_raw, const QuantizedImage& x_adv, const NetworkT<Scalar>& net,
                      const AttackGoal& goal) {
  return evaluate_quantized(x_adv, x_raw, std::span<const NetworkT<Scalar>>(&net, 1), goal).per_model.front();
}

// Quantise with `mode`, then score as evaluate_quantized does.
template <typename Scalar>
DistanceReport evaluate_submission(const ImageT<Scalar>& x_adv, const QuantizedImage& x_raw,
                                   std::span<const NetworkT<Scalar>> nets, const AttackGoal& goal,
                                   RoundingMode mode) {
  return evaluate_quantized(quantize(x_adv, x_raw, mode), x_raw, nets, goal);
}

}  // namespace epgd
