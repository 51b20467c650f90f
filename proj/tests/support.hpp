#pragma once

// Helpers shared by the unit and acceptance binaries: random generators,
// an independent finite-difference loss oracle and the cached fixture world.

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "epgd/fixtures.hpp"
#include "epgd/imageio.hpp"
#include "epgd/pipeline.hpp"
#include "epgd/random.hpp"
#include "epgd/tensornet.hpp"

namespace testing {

using namespace epgd;

inline Image random_image(Rng& rng, int side, double lo = 0.0, double hi = 255.0) {
  Image x(side);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.values()[i] = rng.uniform(lo, hi);
  return x;
}

inline QuantizedImage random_quantized(Rng& rng, int side) {
  QuantizedImage q;
  q.side = side;
  q.data.resize(static_cast<std::size_t>(side) * side * kChannels);
  for (auto& b : q.data) b = static_cast<std::uint8_t>(rng.below(256));
  return q;
}

inline Matrix<double> random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale) {
  Matrix<double> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-scale, scale);
  return m;
}

inline Vector<double> random_vector(Rng& rng, Eigen::Index n, double scale) {
  return random_matrix(rng, n, 1, scale);
}

// -log softmax(sum_i w_i f_i(x))_y written without the library's softmax
// helpers, in long double.
inline double reference_loss(std::span<const Network> nets, std::span<const double> w, const Image& x, int y) {
  std::vector<long double> z;
  for (std::size_t i = 0; i < nets.size(); ++i) {
    const Vector<double> f = predict_logits(nets[i], x);
    if (z.empty()) z.assign(f.size(), 0.0L);
    for (Eigen::Index k = 0; k < f.size(); ++k) z[k] += static_cast<long double>(w[i]) * f[k];
  }
  long double m = z[0];
  for (auto v : z) m = std::max(m, v);
  long double s = 0;
  for (auto v : z) s += std::exp(v - m);
  return static_cast<double>(-(z[y] - m - std::log(s)));
}

// Which side of every ReLU kink and which pool winner each activation sits
// on. Piecewise-linear networks are smooth wherever this pattern is constant.
inline std::vector<std::int64_t> activation_pattern(const Network& net, const Image& x) {
  const Image in = x.side() == net.input_side() ? x : resize_bilinear(x, net.input_side());
  const auto trace = forward_trace(net, in);
  std::vector<std::int64_t> pattern;
  for (std::size_t li = 0; li < net.layers().size(); ++li) {
    if (std::holds_alternative<Relu>(net.layers()[li])) {
      const auto& pre = trace.activations[li];
      for (Eigen::Index i = 0; i < pre.size(); ++i) pattern.push_back(pre[i] > 0 ? 1 : 0);
    }
  }
  for (const auto& winners : trace.argmax)
    for (auto idx : winners) pattern.push_back(idx);
  return pattern;
}

struct GradientCheck {
  double max_rel_error = 0.0;
  int coordinates = 0;
  int kinked = 0;  // coordinates where no step in [1e-7, h] avoided a kink
};

// Central differences with step h on every coordinate. If x +/- h crosses a
// kink the step is shrunk by 10 until it does not (down to 1e-7).
// Relative error is |a - f| / max(|a|, |f|, 1e-8).
inline GradientCheck check_input_gradient(std::span<const Network> nets, std::span<const double> w, const Image& x,
                                          int y, double h = 1e-3) {
  const auto analytic = input_gradient(nets, w, x, y).grad_input;
  std::vector<std::vector<std::int64_t>> base;
  for (const auto& net : nets) base.push_back(activation_pattern(net, x));
  auto same_pattern = [&](const Image& p) {
    for (std::size_t i = 0; i < nets.size(); ++i)
      if (activation_pattern(nets[i], p) != base[i]) return false;
    return true;
  };

  GradientCheck out;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    double step = h;
    bool smooth = false;
    Image plus = x, minus = x;
    for (; step >= 1e-7; step /= 10) {
      plus.values()[i] = x.values()[i] + step;
      minus.values()[i] = x.values()[i] - step;
      if (same_pattern(plus) && same_pattern(minus)) {
        smooth = true;
        break;
      }
    }
    if (!smooth) {
      ++out.kinked;
      continue;
    }
    const double fd = (reference_loss(nets, w, plus, y) - reference_loss(nets, w, minus, y)) / (2 * step);
    const double a = analytic.values()[i];
    const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-8});
    out.max_rel_error = std::max(out.max_rel_error, rel);
    ++out.coordinates;
  }
  return out;
}

// Trained 16x16 fixture world: two evaluation nets, one proxy, 100 held-out
// images with targets. Built once per process.
inline const FixtureSuite& fixture_world() {
  static const FixtureSuite suite = make_fixture_suite();
  return suite;
}

inline std::vector<BatchItem> fixture_items(const FixtureSuite& suite, std::size_t limit = 0) {
  std::vector<BatchItem> items;
  for (std::size_t i = 0; i < suite.test.size(); ++i) {
    if (limit && i >= limit) break;
    items.push_back({"img_" + std::to_string(i), to_quantized_exact(suite.test[i].image), suite.test[i].label,
                     suite.targets[i]});
  }
  return items;
}

}  // namespace testing
