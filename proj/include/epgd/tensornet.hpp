#pragma once

// Minimal feed-forward runtime: convolution, max-pool, relu and dense layers
// over square RGB inputs, with exact reverse-mode gradients for both the
// input image and the parameters.

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "epgd/errors.hpp"
#include "epgd/image.hpp"
#include "epgd/resample.hpp"

namespace epgd {

struct Shape {
  int height = 0;
  int width = 0;
  int channels = 0;

  Eigen::Index size() const { return static_cast<Eigen::Index>(height) * width * channels; }
  friend bool operator==(const Shape&, const Shape&) = default;
  std::string str() const {
    return std::to_string(height) + "x" + std::to_string(width) + "x" + std::to_string(channels);
  }
};

// Valid (unpadded) stride-1 convolution. Weights are laid out so that row
// (di * kernel + dj) * in_channels + c of `weights` multiplies input pixel
// (i + di, j + dj, c); column o produces output channel o.
template <typename Scalar>
struct Conv2d {
  int kernel = 3;
  int in_channels = kChannels;
  int out_channels = 8;
  Matrix<Scalar> weights;
  Vector<Scalar> bias;
};

struct Relu {};

// Non-overlapping window, stride == size, trailing rows/cols dropped.
struct MaxPool2d {
  int size = 2;
};

// Fully connected layer on the flattened (row, col, channel) activation.
template <typename Scalar>
struct Dense {
  Matrix<Scalar> weights;  // out x in
  Vector<Scalar> bias;     // out
};

template <typename Scalar>
using Layer = std::variant<Conv2d<Scalar>, Relu, MaxPool2d, Dense<Scalar>>;

namespace detail {

template <typename Scalar>
Shape layer_output_shape(const Layer<Scalar>& layer, const Shape& in) {
  return std::visit(
      [&](const auto& l) -> Shape {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, Conv2d<Scalar>>) {
          if (l.kernel < 1 || l.in_channels != in.channels || in.height < l.kernel ||
              in.width < l.kernel) {
            throw ShapeError("conv " + std::to_string(l.kernel) + "x" + std::to_string(l.kernel) +
                             "x" + std::to_string(l.in_channels) + " cannot consume " + in.str());
          }
          if (l.weights.rows() != l.kernel * l.kernel * l.in_channels ||
              l.weights.cols() != l.out_channels || l.bias.size() != l.out_channels) {
            throw ShapeError("conv parameter arrays do not match declared shape");
          }
          return {in.height - l.kernel + 1, in.width - l.kernel + 1, l.out_channels};
        } else if constexpr (std::is_same_v<L, Relu>) {
          return in;
        } else if constexpr (std::is_same_v<L, MaxPool2d>) {
          if (l.size < 1 || in.height < l.size || in.width < l.size) {
            throw ShapeError("max-pool " + std::to_string(l.size) + " cannot consume " + in.str());
          }
          return {in.height / l.size, in.width / l.size, in.channels};
        } else {
          if (l.weights.cols() != in.size()) {
            throw ShapeError("dense layer expects " + std::to_string(l.weights.cols()) +
                             " inputs, got " + in.str());
          }
          if (l.bias.size() != l.weights.rows()) {
            throw ShapeError("dense bias does not match weight rows");
          }
          return {1, 1, static_cast<int>(l.weights.rows())};
        }
      },
      layer);
}

template <typename Scalar>
bool layer_params_finite(const Layer<Scalar>& layer) {
  return std::visit(
      [](const auto& l) {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, Conv2d<Scalar>> || std::is_same_v<L, Dense<Scalar>>) {
          return l.weights.allFinite() && l.bias.allFinite();
        } else {
          return true;
        }
      },
      layer);
}

}  // namespace detail

template <typename Scalar>
class NetworkT {
 public:
  using LayerType = Layer<Scalar>;

  NetworkT() = default;

  NetworkT(int input_side, std::vector<LayerType> layers)
      : input_side_(input_side), layers_(std::move(layers)) {
    if (input_side_ < 1) throw ShapeError("network input side must be positive");
    if (layers_.empty()) throw ShapeError("network needs at least one layer");
    shapes_.push_back({input_side_, input_side_, kChannels});
    for (const auto& layer : layers_) {
      if (!detail::layer_params_finite(layer)) throw ArgumentError("network parameters must be finite");
      shapes_.push_back(detail::layer_output_shape(layer, shapes_.back()));
    }
    const Shape& out = shapes_.back();
    if (out.height != 1 || out.width != 1) {
      throw ShapeError("network must end in a flat logit vector, got " + out.str());
    }
  }

  int input_side() const { return input_side_; }
  int num_classes() const { return shapes_.empty() ? 0 : shapes_.back().channels; }
  const std::vector<LayerType>& layers() const { return layers_; }
  std::vector<LayerType>& mutable_layers() { return layers_; }
  // shapes()[i] is the input shape of layer i; shapes().back() the logits.
  const std::vector<Shape>& shapes() const { return shapes_; }

  friend bool operator==(const NetworkT& a, const NetworkT& b) {
    if (a.input_side_ != b.input_side_ || a.layers_.size() != b.layers_.size()) return false;
    for (std::size_t i = 0; i < a.layers_.size(); ++i) {
      if (a.layers_[i].index() != b.layers_[i].index()) return false;
      const bool same = std::visit(
          [&](const auto& la) {
            using L = std::decay_t<decltype(la)>;
            const auto& lb = std::get<L>(b.layers_[i]);
            if constexpr (std::is_same_v<L, Conv2d<Scalar>>) {
              return la.kernel == lb.kernel && la.in_channels == lb.in_channels &&
                     la.out_channels == lb.out_channels && la.weights == lb.weights &&
                     la.bias == lb.bias;
            } else if constexpr (std::is_same_v<L, Dense<Scalar>>) {
              return la.weights == lb.weights && la.bias == lb.bias;
            } else if constexpr (std::is_same_v<L, MaxPool2d>) {
              return la.size == lb.size;
            } else {
              return true;
            }
          },
          a.layers_[i]);
      if (!same) return false;
    }
    return true;
  }

 private:
  int input_side_ = 0;
  std::vector<LayerType> layers_;
  std::vector<Shape> shapes_;
};

using Network = NetworkT<double>;

// Everything the backward pass needs from a forward pass.
template <typename Scalar>
struct ForwardTrace {
  // activations[0] is the input, activations[i + 1] the output of layer i.
  std::vector<Vector<Scalar>> activations;
  // im2col patch matrices, populated for conv layers only.
  std::vector<Matrix<Scalar>> patches;
  // Flat input index selected by each pooled output, pool layers only.
  std::vector<std::vector<Eigen::Index>> argmax;

  const Vector<Scalar>& logits() const { return activations.back(); }
};

// Per-layer parameter gradients; empty for parameter-free layers.
template <typename Scalar>
struct LayerGradient {
  Matrix<Scalar> weights;
  Vector<Scalar> bias;
};

template <typename Scalar>
using NetworkGradient = std::vector<LayerGradient<Scalar>>;

namespace detail {

template <typename Scalar>
Matrix<Scalar> im2col(const Vector<Scalar>& in, const Shape& s, int kernel, const Shape& out) {
  Matrix<Scalar> patches(static_cast<Eigen::Index>(out.height) * out.width,
                         static_cast<Eigen::Index>(kernel) * kernel * s.channels);
  for (int oi = 0; oi < out.height; ++oi) {
    for (int oj = 0; oj < out.width; ++oj) {
      const Eigen::Index row = static_cast<Eigen::Index>(oi) * out.width + oj;
      for (int di = 0; di < kernel; ++di) {
        for (int dj = 0; dj < kernel; ++dj) {
          const Eigen::Index src = (static_cast<Eigen::Index>(oi + di) * s.width + (oj + dj)) * s.channels;
          const Eigen::Index col = (static_cast<Eigen::Index>(di) * kernel + dj) * s.channels;
          for (int c = 0; c < s.channels; ++c) patches(row, col + c) = in[src + c];
        }
      }
    }
  }
  return patches;
}

template <typename Scalar>
Vector<Scalar> col2im(const Matrix<Scalar>& dpatches, const Shape& s, int kernel, const Shape& out) {
  Vector<Scalar> din = Vector<Scalar>::Zero(s.size());
  for (int oi = 0; oi < out.height; ++oi) {
    for (int oj = 0; oj < out.width; ++oj) {
      const Eigen::Index row = static_cast<Eigen::Index>(oi) * out.width + oj;
      for (int di = 0; di < kernel; ++di) {
        for (int dj = 0; dj < kernel; ++dj) {
          const Eigen::Index dst = (static_cast<Eigen::Index>(oi + di) * s.width + (oj + dj)) * s.channels;
          const Eigen::Index col = (static_cast<Eigen::Index>(di) * kernel + dj) * s.channels;
          for (int c = 0; c < s.channels; ++c) din[dst + c] += dpatches(row, col + c);
        }
      }
    }
  }
  return din;
}

}  // namespace detail

template <typename Scalar>
ForwardTrace<Scalar> forward_trace(const NetworkT<Scalar>& net, const ImageT<Scalar>& x) {
  if (x.side() != net.input_side()) {
    throw ShapeError("input side " + std::to_string(x.side()) + " does not match network input side " +
                     std::to_string(net.input_side()));
  }
  const auto& shapes = net.shapes();
  const auto& layers = net.layers();
  ForwardTrace<Scalar> trace;
  trace.activations.reserve(layers.size() + 1);
  trace.patches.resize(layers.size());
  trace.argmax.resize(layers.size());
  trace.activations.push_back(x.values());

  for (std::size_t li = 0; li < layers.size(); ++li) {
    const Shape& in_shape = shapes[li];
    const Shape& out_shape = shapes[li + 1];
    const Vector<Scalar>& in = trace.activations.back();
    Vector<Scalar> out(out_shape.size());
    std::visit(
        [&](const auto& l) {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, Conv2d<Scalar>>) {
            trace.patches[li] = detail::im2col(in, in_shape, l.kernel, out_shape);
            Eigen::Map<RowMajorMatrix<Scalar>> out_map(
                out.data(), static_cast<Eigen::Index>(out_shape.height) * out_shape.width,
                out_shape.channels);
            out_map.noalias() = trace.patches[li] * l.weights;
            out_map.rowwise() += l.bias.transpose();
          } else if constexpr (std::is_same_v<L, Relu>) {
            out = in.cwiseMax(Scalar(0));
          } else if constexpr (std::is_same_v<L, MaxPool2d>) {
            auto& arg = trace.argmax[li];
            arg.resize(static_cast<std::size_t>(out_shape.size()));
            for (int oi = 0; oi < out_shape.height; ++oi) {
              for (int oj = 0; oj < out_shape.width; ++oj) {
                for (int c = 0; c < out_shape.channels; ++c) {
                  Eigen::Index best = -1;
                  Scalar best_value = -std::numeric_limits<Scalar>::infinity();
                  for (int di = 0; di < l.size; ++di) {
                    for (int dj = 0; dj < l.size; ++dj) {
                      const Eigen::Index idx =
                          (static_cast<Eigen::Index>(oi * l.size + di) * in_shape.width +
                           (oj * l.size + dj)) * in_shape.channels + c;
                      if (best < 0 || in[idx] > best_value) {
                        best = idx;
                        best_value = in[idx];
                      }
                    }
                  }
                  const Eigen::Index o = (static_cast<Eigen::Index>(oi) * out_shape.width + oj) *
                                             out_shape.channels + c;
                  out[o] = best_value;
                  arg[static_cast<std::size_t>(o)] = best;
                }
              }
            }
          } else {
            out.noalias() = l.weights * in;
            out += l.bias;
          }
        },
        layers[li]);
    trace.activations.push_back(std::move(out));
  }
  return trace;
}

// Reverse pass: given dLoss/dlogits, returns dLoss/dinput (flattened like the
// input image). Parameter gradients are written to `param_grads` when given.
template <typename Scalar>
Vector<Scalar> backward(const NetworkT<Scalar>& net, const ForwardTrace<Scalar>& trace,
                        Vector<Scalar> grad, NetworkGradient<Scalar>* param_grads = nullptr) {
  const auto& shapes = net.shapes();
  const auto& layers = net.layers();
  if (param_grads) param_grads->assign(layers.size(), LayerGradient<Scalar>{});

  for (std::size_t li = layers.size(); li-- > 0;) {
    const Shape& in_shape = shapes[li];
    const Shape& out_shape = shapes[li + 1];
    const Vector<Scalar>& in = trace.activations[li];
    Vector<Scalar> din;
    std::visit(
        [&](const auto& l) {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, Conv2d<Scalar>>) {
            const Eigen::Index positions = static_cast<Eigen::Index>(out_shape.height) * out_shape.width;
            Eigen::Map<const RowMajorMatrix<Scalar>> dout(grad.data(), positions, out_shape.channels);
            const Matrix<Scalar>& patches = trace.patches[li];
            if (param_grads) {
              (*param_grads)[li].weights = patches.transpose() * dout;
              (*param_grads)[li].bias = dout.colwise().sum().transpose();
            }
            Matrix<Scalar> dpatches = dout * l.weights.transpose();
            din = detail::col2im(dpatches, in_shape, l.kernel, out_shape);
          } else if constexpr (std::is_same_v<L, Relu>) {
            din = (in.array() > Scalar(0)).select(grad.array(), Scalar(0)).matrix();
          } else if constexpr (std::is_same_v<L, MaxPool2d>) {
            din = Vector<Scalar>::Zero(in_shape.size());
            const auto& arg = trace.argmax[li];
            for (Eigen::Index o = 0; o < grad.size(); ++o) din[arg[static_cast<std::size_t>(o)]] += grad[o];
          } else {
            if (param_grads) {
              (*param_grads)[li].weights = grad * in.transpose();
              (*param_grads)[li].bias = grad;
            }
            din.noalias() = l.weights.transpose() * grad;
          }
        },
        layers[li]);
    grad = std::move(din);
  }
  return grad;
}

template <typename Scalar>
Vector<Scalar> forward_logits(const NetworkT<Scalar>& net, const ImageT<Scalar>& x) {
  return forward_trace(net, x).logits();
}

// Logits of `net` on `x`, bilinearly resized to the network's input side
// first when the sides differ.
template <typename Scalar>
Vector<Scalar> predict_logits(const NetworkT<Scalar>& net, const ImageT<Scalar>& x) {
  if (x.side() == net.input_side()) return forward_logits(net, x);
  return forward_logits(net, resize_bilinear(x, net.input_side()));
}

// Numerically stable softmax (max-subtracted).
template <typename Derived>
Vector<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& z) {
  using Scalar = typename Derived::Scalar;
  Vector<Scalar> e = (z.array() - z.maxCoeff()).exp().matrix();
  return e / e.sum();
}

template <typename Derived>
typename Derived::Scalar log_softmax_at(const Eigen::MatrixBase<Derived>& z, Eigen::Index y) {
  using std::log;
  const auto m = z.maxCoeff();
  return z[y] - m - log((z.array() - m).exp().sum());
}

// Index of the largest logit; ties go to the lowest index.
template <typename Derived>
int argmax(const Eigen::MatrixBase<Derived>& z) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < z.size(); ++i) {
    if (z[i] > z[best]) best = i;
  }
  return static_cast<int>(best);
}

inline void check_label(int y, int classes) {
  if (y < 0 || y >= classes) {
    throw LabelError("label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
  }
}

template <typename Scalar>
Scalar probability(const NetworkT<Scalar>& net, const ImageT<Scalar>& x, int y) {
  check_label(y, net.num_classes());
  return softmax(predict_logits(net, x))[y];
}

template <typename Scalar>
struct GradientResult {
  Scalar loss = 0;
  ImageT<Scalar> grad_input;
};

namespace detail {

template <typename Scalar>
void check_ensemble(std::span<const NetworkT<Scalar>> nets, std::span<const Scalar> weights) {
  if (nets.empty()) throw ArgumentError("ensemble needs at least one model");
  if (weights.size() != nets.size()) {
    throw ArgumentError("ensemble has " + std::to_string(nets.size()) + " models but " +
                        std::to_string(weights.size()) + " weights");
  }
  const int classes = nets.front().num_classes();
  for (const auto& net : nets) {
    if (net.num_classes() != classes) throw ShapeError("ensemble members disagree on class count");
  }
  double total = 0;
  for (Scalar w : weights) {
    if (!(w >= Scalar(0)) || !std::isfinite(static_cast<double>(w))) {
      throw ArgumentError("ensemble weights must be finite and nonnegative");
    }
    total += static_cast<double>(w);
  }
  if (std::abs(total - 1.0) > 1e-9) throw ArgumentError("ensemble weights must sum to 1");
}

}  // namespace detail

// Fused logits z(x) = sum_i w_i f_i(x). Zero-weight members are not evaluated.
template <typename Scalar>
Vector<Scalar> fused_logits(std::span<const NetworkT<Scalar>> nets, std::span<const Scalar> weights,
                            const ImageT<Scalar>& x) {
  detail::check_ensemble(nets, weights);
  Vector<Scalar> z = Vector<Scalar>::Zero(nets.front().num_classes());
  for (std::size_t i = 0; i < nets.size(); ++i) {
    if (weights[i] == Scalar(0)) continue;
    z += weights[i] * predict_logits(nets[i], x);
  }
  return z;
}

// Target cross-entropy -log softmax(z)_y of the fused logits and its exact
// gradient with respect to x. Members whose input side differs from x.side()
// see x through resize_bilinear; their gradients come back through its
// adjoint.
template <typename Scalar>
GradientResult<Scalar> input_gradient(std::span<const NetworkT<Scalar>> nets,
                                      std::span<const Scalar> weights, const ImageT<Scalar>& x, int y) {
  detail::check_ensemble(nets, weights);
  check_label(y, nets.front().num_classes());

  std::vector<ForwardTrace<Scalar>> traces(nets.size());
  Vector<Scalar> z = Vector<Scalar>::Zero(nets.front().num_classes());
  for (std::size_t i = 0; i < nets.size(); ++i) {
    if (weights[i] == Scalar(0)) continue;
    traces[i] = nets[i].input_side() == x.side()
                    ? forward_trace(nets[i], x)
                    : forward_trace(nets[i], resize_bilinear(x, nets[i].input_side()));
    z += weights[i] * traces[i].logits();
  }

  GradientResult<Scalar> result;
  result.loss = -log_softmax_at(z, y);
  Vector<Scalar> dz = softmax(z);
  dz[y] -= Scalar(1);

  result.grad_input = ImageT<Scalar>(x.side(), Scalar(0));
  for (std::size_t i = 0; i < nets.size(); ++i) {
    if (weights[i] == Scalar(0)) continue;
    Vector<Scalar> g = backward(nets[i], traces[i], Vector<Scalar>(weights[i] * dz));
    if (nets[i].input_side() == x.side()) {
      result.grad_input.values() += g;
    } else {
      ImageT<Scalar> small(nets[i].input_side(), std::move(g));
      result.grad_input.values() += resize_bilinear_adjoint(small, x.side()).values();
    }
  }
  return result;
}

template <typename Scalar>
GradientResult<Scalar> input_gradient(const NetworkT<Scalar>& net, const ImageT<Scalar>& x, int y) {
  const Scalar one[] = {Scalar(1)};
  return input_gradient(std::span<const NetworkT<Scalar>>(&net, 1), std::span<const Scalar>(one), x, y);
}

}  // namespace epgd
