#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "epgd/image.hpp"

namespace epgd {

// One output sample of a separable resampling pass: weights applied to the
// contiguous source run [start, start + weights.size()).
struct FilterTaps {
  int start = 0;
  std::vector<double> weights;
};

namespace detail {

inline double triangle_filter(double x) {
  x = std::abs(x);
  return x < 1.0 ? 1.0 - x : 0.0;
}

}  // namespace detail

// Coefficients of the reference-compatible bilinear filter. Output sample xx
// is centred at (xx + 0.5) * in/out in source coordinates; on downscale the
// triangle support widens by the scale factor so every source pixel
// contributes (area-weighted). Weights are normalised per output sample.
inline std::vector<FilterTaps> bilinear_taps(int in_size, int out_size) {
  if (in_size < 1 || out_size < 1) throw ArgumentError("resample sizes must be positive");
  const double scale = static_cast<double>(in_size) / out_size;
  const double filterscale = std::max(scale, 1.0);
  const double support = 1.0 * filterscale;
  const double ss = 1.0 / filterscale;

  std::vector<FilterTaps> taps(out_size);
  for (int xx = 0; xx < out_size; ++xx) {
    const double center = (xx + 0.5) * scale;
    // C-style truncation, matching the reference.
    int xmin = static_cast<int>(center - support + 0.5);
    if (xmin < 0) xmin = 0;
    int xmax = static_cast<int>(center + support + 0.5);
    if (xmax > in_size) xmax = in_size;
    xmax -= xmin;

    auto& tap = taps[xx];
    tap.start = xmin;
    tap.weights.resize(xmax);
    double ww = 0.0;
    for (int x = 0; x < xmax; ++x) {
      const double w = detail::triangle_filter((x + xmin - center + 0.5) * ss);
      tap.weights[x] = w;
      ww += w;
    }
    if (ww != 0.0) {
      for (double& w : tap.weights) w /= ww;
    }
  }
  return taps;
}

// Bilinear resize of a square image. Horizontal pass first, then vertical,
// each accumulated sequentially so results are reproducible bit-for-bit.
// Returns the input unchanged when target_side equals the source side.
template <typename Scalar>
ImageT<Scalar> resize_bilinear(const ImageT<Scalar>& x, int target_side) {
  if (target_side < 1) throw ArgumentError("resize target side must be positive");
  const int side = x.side();
  if (target_side == side) return x;
  const auto taps = bilinear_taps(side, target_side);

  // side rows x target_side cols
  Vector<Scalar> tmp(static_cast<Eigen::Index>(side) * target_side * kChannels);
  for (int r = 0; r < side; ++r) {
    for (int xx = 0; xx < target_side; ++xx) {
      const auto& tap = taps[xx];
      for (int ch = 0; ch < kChannels; ++ch) {
        Scalar acc = 0;
        for (std::size_t k = 0; k < tap.weights.size(); ++k) {
          acc += x.values()[ImageT<Scalar>::index(side, r, tap.start + static_cast<int>(k), ch)] *
                 static_cast<Scalar>(tap.weights[k]);
        }
        tmp[(static_cast<Eigen::Index>(r) * target_side + xx) * kChannels + ch] = acc;
      }
    }
  }

  ImageT<Scalar> out(target_side);
  for (int yy = 0; yy < target_side; ++yy) {
    const auto& tap = taps[yy];
    for (int c = 0; c < target_side; ++c) {
      for (int ch = 0; ch < kChannels; ++ch) {
        Scalar acc = 0;
        for (std::size_t k = 0; k < tap.weights.size(); ++k) {
          acc += tmp[((static_cast<Eigen::Index>(tap.start) + static_cast<Eigen::Index>(k)) *
                          target_side + c) * kChannels + ch] *
                 static_cast<Scalar>(tap.weights[k]);
        }
        out(yy, c, ch) = acc;
      }
    }
  }
  return out;
}

// Transpose of resize_bilinear(., grad.side()) viewed as a linear map from
// source_side images: pulls a gradient taken at the resized image back to the
// source raster.
template <typename Scalar>
ImageT<Scalar> resize_bilinear_adjoint(const ImageT<Scalar>& grad, int source_side) {
  const int target_side = grad.side();
  if (target_side == source_side) return grad;
  const auto taps = bilinear_taps(source_side, target_side);

  Vector<Scalar> tmp =
      Vector<Scalar>::Zero(static_cast<Eigen::Index>(source_side) * target_side * kChannels);
  for (int yy = 0; yy < target_side; ++yy) {
    const auto& tap = taps[yy];
    for (int c = 0; c < target_side; ++c) {
      for (int ch = 0; ch < kChannels; ++ch) {
        const Scalar g = grad(yy, c, ch);
        for (std::size_t k = 0; k < tap.weights.size(); ++k) {
          tmp[((static_cast<Eigen::Index>(tap.start) + static_cast<Eigen::Index>(k)) * target_side +
               c) * kChannels + ch] += g * static_cast<Scalar>(tap.weights[k]);
        }
      }
    }
  }

  ImageT<Scalar> out(source_side, Scalar(0));
  for (int r = 0; r < source_side; ++r) {
    for (int xx = 0; xx < target_side; ++xx) {
      const auto& tap = taps[xx];
      for (int ch = 0; ch < kChannels; ++ch) {
        const Scalar g = tmp[(static_cast<Eigen::Index>(r) * target_side + xx) * kChannels + ch];
        for (std::size_t k = 0; k < tap.weights.size(); ++k) {
          out(r, tap.start + static_cast<int>(k), ch) += g * static_cast<Scalar>(tap.weights[k]);
        }
      }
    }
  }
  return out;
}

}  // namespace epgd
