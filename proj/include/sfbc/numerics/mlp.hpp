#pragma once

// Dense multilayer perceptron with an explicit reverse pass. Batches are
// column-major: one example per column of an (features x batch) matrix.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "sfbc/error.hpp"

namespace sfbc::numerics {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { SiLU, ReLU, Tanh, Identity };

inline std::string to_string(Activation act) {
  switch (act) {
    case Activation::SiLU: return "silu";
    case Activation::ReLU: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Identity: return "identity";
  }
  return "identity";
}

inline Activation activation_from_string(const std::string& name) {
  if (name == "silu") return Activation::SiLU;
  if (name == "relu") return Activation::ReLU;
  if (name == "tanh") return Activation::Tanh;
  if (name == "identity") return Activation::Identity;
  throw Error(ErrorKind::InvalidArgument, "unknown activation '" + name + "'");
}

struct MlpSpec {
  std::vector<int> layer_widths;              // input, hidden..., output
  std::vector<Activation> hidden_activations;  // one per hidden layer
  Activation output_activation = Activation::Identity;

  std::size_t num_layers() const { return layer_widths.size() - 1; }
  int input_width() const { return layer_widths.front(); }
  int output_width() const { return layer_widths.back(); }

  Activation activation_of(std::size_t layer) const {
    return layer + 1 == num_layers() ? output_activation : hidden_activations[layer];
  }

  void validate() const {
    require(layer_widths.size() >= 2, ErrorKind::InvalidArgument,
            "MlpSpec needs at least 2 widths");
    for (int w : layer_widths)
      require(w >= 1, ErrorKind::InvalidArgument, "MlpSpec widths must be >= 1");
    require(hidden_activations.size() == layer_widths.size() - 2, ErrorKind::InvalidArgument,
            "MlpSpec needs one activation per hidden layer");
  }

  /// Uniform hidden stack: in -> hidden x depth -> out.
  static MlpSpec uniform(int in, int hidden, int depth, int out, Activation act,
                         Activation out_act = Activation::Identity) {
    MlpSpec spec;
    spec.layer_widths.push_back(in);
    for (int i = 0; i < depth; ++i) {
      spec.layer_widths.push_back(hidden);
      spec.hidden_activations.push_back(act);
    }
    spec.layer_widths.push_back(out);
    spec.output_activation = out_act;
    spec.validate();
    return spec;
  }
};

struct Layer {
  Matrix weight;  // out x in
  Vector bias;    // out
};

struct MlpParams {
  std::vector<Layer> layers;

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }

  /// Zero-valued container with the same shapes.
  MlpParams zeros_like() const {
    MlpParams z;
    for (const auto& l : layers)
      z.layers.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()),
                          Vector::Zero(l.bias.size())});
    return z;
  }

  template <class F>
  void for_each(F&& f) {
    for (auto& l : layers) {
      for (Eigen::Index i = 0; i < l.weight.size(); ++i) f(l.weight.data()[i]);
      for (Eigen::Index i = 0; i < l.bias.size(); ++i) f(l.bias.data()[i]);
    }
  }

  bool same_shape(const MlpParams& other) const {
    if (layers.size() != other.layers.size()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (layers[i].weight.rows() != other.layers[i].weight.rows() ||
          layers[i].weight.cols() != other.layers[i].weight.cols() ||
          layers[i].bias.size() != other.layers[i].bias.size())
        return false;
    }
    return true;
  }

  bool operator==(const MlpParams& other) const {
    if (!same_shape(other)) return false;
    for (std::size_t i = 0; i < layers.size(); ++i)
      if (layers[i].weight != other.layers[i].weight || layers[i].bias != other.layers[i].bias)
        return false;
    return true;
  }
};

using Gradients = MlpParams;

inline void check_shapes(const MlpSpec& spec, const MlpParams& params) {
  require(params.layers.size() == spec.num_layers(), ErrorKind::ShapeMismatch,
          "parameter layer count does not match spec");
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto& l = params.layers[i];
    require(l.weight.rows() == spec.layer_widths[i + 1] &&
                l.weight.cols() == spec.layer_widths[i] &&
                l.bias.size() == spec.layer_widths[i + 1],
            ErrorKind::ShapeMismatch, "layer " + std::to_string(i) + " shape does not match spec");
  }
}

/// Fan-in scaled uniform init, U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
template <class Rng>
MlpParams init_params(const MlpSpec& spec, Rng& rng) {
  spec.validate();
  MlpParams p;
  for (std::size_t i = 0; i < spec.num_layers(); ++i) {
    const int in = spec.layer_widths[i];
    const int out = spec.layer_widths[i + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Layer l{Matrix(out, in), Vector(out)};
    for (Eigen::Index k = 0; k < l.weight.size(); ++k) l.weight.data()[k] = dist(rng);
    for (Eigen::Index k = 0; k < l.bias.size(); ++k) l.bias.data()[k] = dist(rng);
    p.layers.push_back(std::move(l));
  }
  return p;
}

namespace detail {

inline void apply_activation(Activation act, const Matrix& pre, Matrix& out) {
  switch (act) {
    case Activation::SiLU:
      out = (pre.array() / (1.0 + (-pre.array()).exp())).matrix();
      break;
    case Activation::ReLU:
      out = pre.cwiseMax(0.0);
      break;
    case Activation::Tanh:
      out = pre.array().tanh().matrix();
      break;
    case Activation::Identity:
      out = pre;
      break;
  }
}

// d act(pre) / d pre, elementwise
inline Matrix activation_derivative(Activation act, const Matrix& pre) {
  switch (act) {
    case Activation::SiLU: {
      const Eigen::ArrayXXd s = 1.0 / (1.0 + (-pre.array()).exp());
      return (s * (1.0 + pre.array() * (1.0 - s))).matrix();
    }
    case Activation::ReLU:
      return (pre.array() > 0.0).cast<double>().matrix();
    case Activation::Tanh:
      return (1.0 - pre.array().tanh().square()).matrix();
    case Activation::Identity:
      return Matrix::Ones(pre.rows(), pre.cols());
  }
  return Matrix::Ones(pre.rows(), pre.cols());
}

}  // namespace detail

/// Intermediate values kept by the forward pass for the reverse pass.
struct ForwardCache {
  std::vector<Matrix> inputs;  // input to each layer
  std::vector<Matrix> pre;     // pre-activation of each layer
  Matrix output;
};

inline ForwardCache forward_cached(const MlpSpec& spec, const MlpParams& params,
                                   const Matrix& input) {
  check_shapes(spec, params);
  require(input.rows() == spec.input_width(), ErrorKind::ShapeMismatch,
          "input has " + std::to_string(input.rows()) + " rows, network expects " +
              std::to_string(spec.input_width()));
  ForwardCache cache;
  cache.inputs.reserve(spec.num_layers());
  cache.pre.reserve(spec.num_layers());
  Matrix x = input;
  for (std::size_t i = 0; i < spec.num_layers(); ++i) {
    const auto& l = params.layers[i];
    Matrix pre = l.weight * x;
    pre.colwise() += l.bias;
    Matrix out;
    detail::apply_activation(spec.activation_of(i), pre, out);
    cache.inputs.push_back(std::move(x));
    cache.pre.push_back(std::move(pre));
    x = std::move(out);
  }
  cache.output = std::move(x);
  return cache;
}

inline Matrix forward(const MlpSpec& spec, const MlpParams& params, const Matrix& input) {
  check_shapes(spec, params);
  require(input.rows() == spec.input_width(), ErrorKind::ShapeMismatch,
          "input has " + std::to_string(input.rows()) + " rows, network expects " +
              std::to_string(spec.input_width()));
  Matrix x = input;
  for (std::size_t i = 0; i < spec.num_layers(); ++i) {
    const auto& l = params.layers[i];
    Matrix pre = l.weight * x;
    pre.colwise() += l.bias;
    detail::apply_activation(spec.activation_of(i), pre, x);
  }
  return x;
}

inline Vector forward(const MlpSpec& spec, const MlpParams& params, const Vector& input) {
  return forward(spec, params, Matrix(input)).col(0);
}

struct BackwardResult {
  Gradients grads;
  Matrix input_grad;  // dL/d input, same shape as the batch input
};

/// Reverse pass given dL/d output. The caller owns the loss reduction.
inline BackwardResult backward(const MlpSpec& spec, const MlpParams& params,
                               const ForwardCache& cache, const Matrix& output_grad) {
  require(output_grad.rows() == cache.output.rows() && output_grad.cols() == cache.output.cols(),
          ErrorKind::ShapeMismatch, "output gradient shape does not match forward output");
  BackwardResult r;
  r.grads.layers.resize(spec.num_layers());
  Matrix delta = output_grad;
  for (std::size_t i = spec.num_layers(); i-- > 0;) {
    delta = delta.cwiseProduct(detail::activation_derivative(spec.activation_of(i), cache.pre[i]));
    r.grads.layers[i].weight = delta * cache.inputs[i].transpose();
    r.grads.layers[i].bias = delta.rowwise().sum();
    delta = params.layers[i].weight.transpose() * delta;
  }
  r.input_grad = std::move(delta);
  return r;
}

struct LossAndGrad {
  double loss = 0.0;
  Matrix output_grad;
};

/// Gradients of a scalar loss. `loss_fn(outputs) -> LossAndGrad` reduces the
/// batch (typically a mean) and returns dL/d outputs.
template <class LossFn>
std::pair<double, Gradients> mlp_gradients(const MlpSpec& spec, const MlpParams& params,
                                           const Matrix& inputs, LossFn&& loss_fn) {
  ForwardCache cache = forward_cached(spec, params, inputs);
  LossAndGrad lg = loss_fn(cache.output);
  auto back = backward(spec, params, cache, lg.output_grad);
  return {lg.loss, std::move(back.grads)};
}

/// Mean over the batch of sum-of-squares error against `targets`.
inline LossAndGrad mean_squared_error(const Matrix& outputs, const Matrix& targets) {
  require(outputs.rows() == targets.rows() && outputs.cols() == targets.cols(),
          ErrorKind::ShapeMismatch, "target shape does not match output shape");
  const double n = static_cast<double>(outputs.cols());
  Matrix diff = outputs - targets;
  return {diff.squaredNorm() / n, (2.0 / n) * diff};
}

}  // namespace sfbc::numerics
