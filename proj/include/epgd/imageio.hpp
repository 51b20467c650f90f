#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "epgd/image.hpp"
#include "epgd/resample.hpp"

namespace epgd {

// 8-bit RGB raster, same layout as ImageT.
struct QuantizedImage {
  int side = 0;
  std::vector<std::uint8_t> data;

  QuantizedImage() = default;
  explicit QuantizedImage(int s) : side(s), data(static_cast<std::size_t>(ImageT<double>::element_count(s)), 0) {
    if (s < 1) throw ShapeError("image side must be positive");
  }

  std::uint8_t& operator()(int row, int col, int ch) {
    return data[static_cast<std::size_t>(ImageT<double>::index(side, row, col, ch))];
  }
  std::uint8_t operator()(int row, int col, int ch) const {
    return data[static_cast<std::size_t>(ImageT<double>::index(side, row, col, ch))];
  }
  friend bool operator==(const QuantizedImage&, const QuantizedImage&) = default;
};

enum class RoundingMode { floor, round_half_up, toward_raw };

inline const char* to_string(RoundingMode mode) {
  switch (mode) {
    case RoundingMode::floor: return "floor";
    case RoundingMode::round_half_up: return "round_half_up";
    case RoundingMode::toward_raw: return "toward_raw";
  }
  return "?";
}

inline RoundingMode parse_rounding_mode(const std::string& s) {
  if (s == "floor") return RoundingMode::floor;
  if (s == "round_half_up") return RoundingMode::round_half_up;
  if (s == "toward_raw") return RoundingMode::toward_raw;
  throw ArgumentError("unknown rounding mode '" + s + "'");
}

// Scalar rule. `raw` is read only in toward_raw mode, where the perturbation
// magnitude is truncated toward the raw value (sign(0) = 0). The result is
// clamped to [0, 255].
inline std::uint8_t quantize_value(double x, RoundingMode mode, double raw = 0.0) {
  if (!std::isfinite(x)) throw ArgumentError("cannot quantize a non-finite pixel");
  double q = 0.0;
  switch (mode) {
    case RoundingMode::floor: q = std::floor(x); break;
    case RoundingMode::round_half_up: q = std::floor(x + 0.5); break;
    case RoundingMode::toward_raw: {
      const double diff = x - raw;
      const double sign = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
      q = std::floor(std::abs(diff)) * sign + raw;
      break;
    }
  }
  if (q < 0.0) q = 0.0;
  if (q > kPixelMax) q = kPixelMax;
  return static_cast<std::uint8_t>(q);
}

template <typename Scalar>
QuantizedImage quantize(const ImageT<Scalar>& x, RoundingMode mode) {
  if (mode == RoundingMode::toward_raw) throw ArgumentError("toward_raw quantization needs the raw image");
  QuantizedImage q(x.side());
  for (Eigen::Index i = 0; i < x.size(); ++i)
    q.data[static_cast<std::size_t>(i)] = quantize_value(static_cast<double>(x.values()[i]), mode);
  return q;
}

template <typename Scalar>
QuantizedImage quantize(const ImageT<Scalar>& x, const QuantizedImage& raw, RoundingMode mode) {
  if (mode != RoundingMode::toward_raw) return quantize(x, mode);
  if (raw.side != x.side()) throw ShapeError("quantize: raw image side does not match");
  QuantizedImage q(x.side());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    q.data[k] = quantize_value(static_cast<double>(x.values()[i]), mode, raw.data[k]);
  }
  return q;
}

template <typename Scalar = double>
ImageT<Scalar> dequantize(const QuantizedImage& q) {
  ImageT<Scalar> x(q.side);
  for (std::size_t i = 0; i < q.data.size(); ++i) x.values()[static_cast<Eigen::Index>(i)] = Scalar(q.data[i]);
  return x;
}

// Exact conversion of an integer-valued image; throws when any value is not
// an integer in [0, 255].
template <typename Scalar>
QuantizedImage to_quantized_exact(const ImageT<Scalar>& x) {
  QuantizedImage q(x.side());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = static_cast<double>(x.values()[i]);
    if (!(v >= 0.0 && v <= kPixelMax) || std::floor(v) != v) throw ArgumentError("image is not integer-valued");
    q.data[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(v);
  }
  return q;
}

// 8-bit RGB PNG without alpha.
QuantizedImage load_png(const std::filesystem::path& path);
void save_png(const QuantizedImage& img, const std::filesystem::path& path);

}  // namespace epgd
