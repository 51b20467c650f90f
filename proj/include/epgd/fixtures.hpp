#pragma once

// Small deterministic victim models and a synthetic labelled image set with
// learnable class structure, used for tests, benchmarks and the CLI.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "epgd/random.hpp"
#include "epgd/tensornet.hpp"

namespace epgd {

template <typename Scalar>
struct LabeledImage {
  ImageT<Scalar> image;
  int label = 0;
};

inline constexpr int kFixtureConvChannels = 8;

// conv 3x3 (8 channels) -> relu -> max-pool 2x2 -> dense -> logits.
// Parameters are uniform in [-0.5, 0.5] / sqrt(fan_in), drawn from Rng
// seeded with (seed, model index); biases start at zero.
template <typename Scalar = double>
std::vector<NetworkT<Scalar>> build_fixture_models(std::uint64_t seed, int count, int side, int classes) {
  if (count < 1) throw ArgumentError("fixture model count must be at least 1");
  if (classes < 2) throw ArgumentError("fixture models need at least two classes");
  std::vector<NetworkT<Scalar>> nets;
  nets.reserve(count);
  for (int index = 0; index < count; ++index) {
    Rng rng(seed, static_cast<std::uint64_t>(index));
    auto draw = [&](Eigen::Index rows, Eigen::Index cols, double fan_in) {
      Matrix<Scalar> m(rows, cols);
      const double scale = 1.0 / std::sqrt(fan_in);
      for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = static_cast<Scalar>(rng.uniform(-0.5, 0.5) * scale);
      return m;
    };

    Conv2d<Scalar> conv;
    conv.kernel = 3;
    conv.in_channels = kChannels;
    conv.out_channels = kFixtureConvChannels;
    const int conv_fan_in = conv.kernel * conv.kernel * conv.in_channels;
    conv.weights = draw(conv_fan_in, conv.out_channels, conv_fan_in);
    conv.bias = Vector<Scalar>::Zero(conv.out_channels);

    const int pooled = (side - conv.kernel + 1) / 2;
    if (pooled < 1) throw ShapeError("fixture side too small for conv + pool");
    const int flat = pooled * pooled * conv.out_channels;
    Dense<Scalar> head;
    head.weights = draw(classes, flat, flat);
    head.bias = Vector<Scalar>::Zero(classes);

    nets.emplace_back(side, std::vector<Layer<Scalar>>{std::move(conv), Relu{}, MaxPool2d{2}, std::move(head)});
  }
  return nets;
}

// Mini-batch gradient descent on mean cross-entropy, visiting the data in the
// given order every epoch.
template <typename Scalar>
NetworkT<Scalar> train_fixture(NetworkT<Scalar> net, std::span<const LabeledImage<Scalar>> data, int epochs,
                               Scalar lr, int batch_size = 8) {
  if (data.empty()) throw ArgumentError("training set is empty");
  if (epochs < 0 || batch_size < 1) throw ArgumentError("epochs must be >= 0 and batch size >= 1");
  for (const auto& sample : data) check_label(sample.label, net.num_classes());

  const std::size_t n = data.size();
  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(batch_size));
      NetworkGradient<Scalar> total;
      for (std::size_t s = start; s < stop; ++s) {
        const auto trace = forward_trace(net, data[s].image);
        Vector<Scalar> dz = softmax(trace.logits());
        dz[data[s].label] -= Scalar(1);
        NetworkGradient<Scalar> grads;
        backward(net, trace, std::move(dz), &grads);
        if (total.empty()) {
          total = std::move(grads);
        } else {
          for (std::size_t li = 0; li < grads.size(); ++li) {
            if (grads[li].weights.size() == 0) continue;
            total[li].weights += grads[li].weights;
            total[li].bias += grads[li].bias;
          }
        }
      }
      const Scalar step = lr / static_cast<Scalar>(stop - start);
      auto& layers = net.mutable_layers();
      for (std::size_t li = 0; li < layers.size(); ++li) {
        std::visit(
            [&](auto& l) {
              using L = std::decay_t<decltype(l)>;
              if constexpr (std::is_same_v<L, Conv2d<Scalar>> || std::is_same_v<L, Dense<Scalar>>) {
                l.weights -= step * total[li].weights;
                l.bias -= step * total[li].bias;
              }
            },
            layers[li]);
      }
    }
  }
  return net;
}

template <typename Scalar>
double accuracy(const NetworkT<Scalar>& net, std::span<const LabeledImage<Scalar>> data) {
  if (data.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& sample : data) hits += argmax(predict_logits(net, sample.image)) == sample.label;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

// Integer-valued synthetic images: a noisy gray field plus a coloured bump
// whose position and hue encode the class. Labels cycle 0, 1, ..., M-1.
inline std::vector<LabeledImage<double>> make_fixture_dataset(std::uint64_t seed, int count, int side,
                                                              int classes) {
  if (count < 1 || side < 1 || classes < 2) throw ArgumentError("invalid fixture dataset request");
  std::vector<LabeledImage<double>> out;
  out.reserve(count);
  Rng rng(seed, 0xda7a5e7ULL);
  const double radius = 0.28 * side;
  const double sigma = 0.16 * side;
  for (int n = 0; n < count; ++n) {
    const int label = n % classes;
    const double angle = 2.0 * std::numbers::pi * label / classes;
    const double cy = 0.5 * (side - 1) + radius * std::sin(angle) + rng.uniform(-1.0, 1.0);
    const double cx = 0.5 * (side - 1) + radius * std::cos(angle) + rng.uniform(-1.0, 1.0);
    const double base = rng.uniform(96.0, 160.0);
    const double amplitude = rng.uniform(55.0, 85.0);
    double hue[kChannels] = {0.35, 0.35, 0.35};
    hue[label % kChannels] = 1.0;
    if (label >= kChannels) hue[(label + 1) % kChannels] = 1.0;

    Image img(side);
    for (int r = 0; r < side; ++r) {
      for (int c = 0; c < side; ++c) {
        const double d2 = (r - cy) * (r - cy) + (c - cx) * (c - cx);
        const double bump = amplitude * std::exp(-d2 / (2.0 * sigma * sigma));
        for (int ch = 0; ch < kChannels; ++ch) {
          const double v = base + hue[ch] * bump + 12.0 * rng.normal();
          img(r, c, ch) = std::clamp(std::round(v), 0.0, kPixelMax);
        }
      }
    }
    out.push_back({std::move(img), label});
  }
  return out;
}

}  // namespace epgd

namespace epgd {

struct FixtureSuiteOptions {
  std::uint64_t seed = 42;
  int side = 16;
  int classes = 4;
  int train_images = 400;
  int test_images = 100;
  int epochs = 20;
  double lr = 1e-4;
  int eval_models = 2;
  int proxy_models = 1;
  int proxy_side = 0;  // 0: same as side
};

// Trained evaluation and proxy models plus held-out images with random
// target labels (never the true label).
struct FixtureSuite {
  std::vector<Network> eval;
  std::vector<Network> proxies;
  std::vector<LabeledImage<double>> train;
  std::vector<LabeledImage<double>> test;
  std::vector<int> targets;
};

inline FixtureSuite make_fixture_suite(const FixtureSuiteOptions& o = {}) {
  FixtureSuite suite;
  suite.train = make_fixture_dataset(o.seed, o.train_images, o.side, o.classes);
  suite.test = make_fixture_dataset(o.seed + 1, o.test_images, o.side, o.classes);
  auto eval = build_fixture_models<double>(o.seed, o.eval_models, o.side, o.classes);
  for (auto& net : eval) suite.eval.push_back(train_fixture<double>(std::move(net), suite.train, o.epochs, o.lr));

  const int proxy_side = o.proxy_side > 0 ? o.proxy_side : o.side;
  auto proxy_train = proxy_side == o.side ? suite.train : make_fixture_dataset(o.seed, o.train_images, proxy_side, o.classes);
  auto proxies = build_fixture_models<double>(o.seed + 1000, o.proxy_models, proxy_side, o.classes);
  for (auto& net : proxies) suite.proxies.push_back(train_fixture<double>(std::move(net), proxy_train, o.epochs, o.lr));

  Rng rng(o.seed, 0x7a26e7ULL);
  for (const auto& sample : suite.test) suite.targets.push_back((sample.label + 1 + rng.below(o.classes - 1)) % o.classes);
  return suite;
}

}  // namespace epgd
