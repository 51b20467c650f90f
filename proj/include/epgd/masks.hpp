#pragma once

#include <string>

#include "epgd/image.hpp"

namespace epgd {

enum class MaskKind { full, border, grid };

inline const char* to_string(MaskKind kind) {
  switch (kind) {
    case MaskKind::full: return "full";
    case MaskKind::border: return "border";
    case MaskKind::grid: return "grid";
  }
  return "?";
}

// Binary spatial mask, replicated over the three channels.
template <typename Scalar>
class MaskT {
 public:
  MaskT() = default;
  MaskT(int side, MaskKind kind, Vector<Scalar> values) : side_(side), kind_(kind), values_(std::move(values)) {
    if (values_.size() != ImageT<Scalar>::element_count(side)) throw ShapeError("mask size does not match side");
  }

  int side() const { return side_; }
  MaskKind kind() const { return kind_; }
  const Vector<Scalar>& values() const { return values_; }
  bool active(int row, int col) const { return values_[ImageT<Scalar>::index(side_, row, col, 0)] != Scalar(0); }

  // Number of perturbable spatial positions.
  Eigen::Index active_count() const {
    Eigen::Index n = 0;
    for (int r = 0; r < side_; ++r)
      for (int c = 0; c < side_; ++c) n += active(r, c);
    return n;
  }

 private:
  int side_ = 0;
  MaskKind kind_ = MaskKind::full;
  Vector<Scalar> values_;
};

using Mask = MaskT<double>;

namespace detail {

template <typename Scalar, typename Pred>
MaskT<Scalar> spatial_mask(int side, MaskKind kind, Pred&& on) {
  Vector<Scalar> v(ImageT<Scalar>::element_count(side));
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c)
      for (int ch = 0; ch < kChannels; ++ch) v[ImageT<Scalar>::index(side, r, c, ch)] = on(r, c) ? Scalar(1) : Scalar(0);
  return MaskT<Scalar>(side, kind, std::move(v));
}

}  // namespace detail

template <typename Scalar = double>
MaskT<Scalar> full_mask(int side) {
  if (side < 1) throw ArgumentError("mask side must be positive");
  return MaskT<Scalar>(side, MaskKind::full, Vector<Scalar>::Ones(ImageT<Scalar>::element_count(side)));
}

// Active region is the central square left after removing a frame of width
// `border`; border == 0 gives the full mask.
template <typename Scalar = double>
MaskT<Scalar> border_mask(int side, int border) {
  if (side < 1 || border < 0) throw ArgumentError("mask side must be positive and border nonnegative");
  if (2 * border >= side) {
    throw ArgumentError("border " + std::to_string(border) + " leaves no active region in side " +
                        std::to_string(side));
  }
  if (border == 0) return full_mask<Scalar>(side);
  return detail::spatial_mask<Scalar>(side, MaskKind::border, [&](int r, int c) {
    return r >= border && r < side - border && c >= border && c < side - border;
  });
}

// block x block active cells repeating with period block + space along both
// axes, anchored at the top-left pixel and truncated at the edges.
template <typename Scalar = double>
MaskT<Scalar> grid_mask(int side, int block = 7, int space = 7) {
  if (side < 1 || block < 1 || space < 0) throw ArgumentError("grid mask needs side >= 1, block >= 1, space >= 0");
  const int period = block + space;
  return detail::spatial_mask<Scalar>(side, MaskKind::grid,
                                      [&](int r, int c) { return r % period < block && c % period < block; });
}

// x_adv <- m * x_adv + (1 - m) * x_raw
template <typename Scalar>
ImageT<Scalar> apply_mask(const ImageT<Scalar>& x_adv, const ImageT<Scalar>& x_raw, const MaskT<Scalar>& m) {
  require_same_shape(x_adv, x_raw, "apply_mask");
  if (m.side() != x_adv.side()) throw ShapeError("apply_mask: mask side does not match image side");
  const auto& w = m.values().array();
  return ImageT<Scalar>(x_adv.side(),
                        (w * x_adv.values().array() + (Scalar(1) - w) * x_raw.values().array()).matrix());
}

}  // namespace epgd
