#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <string>

#include "epgd/errors.hpp"

namespace epgd {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using RowMajorMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kChannels = 3;
inline constexpr double kPixelMax = 255.0;

// Square RGB raster in 8-bit pixel units, stored row-major with interleaved
// channels: value(row, col, ch) lives at (row * side + col) * 3 + ch.
template <typename Scalar>
class ImageT {
 public:
  using Storage = Vector<Scalar>;

  ImageT() = default;

  explicit ImageT(int side, Scalar fill = Scalar(0)) : side_(side) {
    if (side < 1) throw ShapeError("image side must be positive, got " + std::to_string(side));
    values_ = Storage::Constant(element_count(side), fill);
  }

  ImageT(int side, Storage values) : side_(side), values_(std::move(values)) {
    if (side < 1) throw ShapeError("image side must be positive, got " + std::to_string(side));
    if (values_.size() != element_count(side)) {
      throw ShapeError("image of side " + std::to_string(side) + " needs " +
                       std::to_string(element_count(side)) + " values, got " +
                       std::to_string(values_.size()));
    }
  }

  static Eigen::Index element_count(int side) {
    return static_cast<Eigen::Index>(side) * side * kChannels;
  }
  static Eigen::Index index(int side, int row, int col, int ch) {
    return (static_cast<Eigen::Index>(row) * side + col) * kChannels + ch;
  }

  int side() const { return side_; }
  Eigen::Index size() const { return values_.size(); }

  Scalar& operator()(int row, int col, int ch) { return values_[index(side_, row, col, ch)]; }
  Scalar operator()(int row, int col, int ch) const { return values_[index(side_, row, col, ch)]; }

  Storage& values() { return values_; }
  const Storage& values() const { return values_; }

  template <typename Other>
  ImageT<Other> cast() const {
    return ImageT<Other>(side_, values_.template cast<Other>());
  }

  friend bool operator==(const ImageT& a, const ImageT& b) {
    return a.side_ == b.side_ && a.values_ == b.values_;
  }

 private:
  int side_ = 0;
  Storage values_;
};

using Image = ImageT<double>;

template <typename Scalar>
void require_same_shape(const ImageT<Scalar>& a, const ImageT<Scalar>& b, const char* what) {
  if (a.side() != b.side()) {
    throw ShapeError(std::string(what) + ": side mismatch " + std::to_string(a.side()) + " vs " +
                     std::to_string(b.side()));
  }
}

// Projection onto the valid pixel box [0, 255].
template <typename Scalar>
ImageT<Scalar> clamp_pixels(ImageT<Scalar> x) {
  x.values() = x.values().cwiseMax(Scalar(0)).cwiseMin(Scalar(kPixelMax));
  return x;
}

}  // namespace epgd
