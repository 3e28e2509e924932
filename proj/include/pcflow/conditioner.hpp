#ifndef PCFLOW_CONDITIONER_HPP
#define PCFLOW_CONDITIONER_HPP

#include "pcflow/common.hpp"
#include "pcflow/random.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace pcflow {

template <typename Scalar>
struct DenseLayer {
  Matrix<Scalar> weight;  // out x in
  Vector<Scalar> bias;
};

/// Fully connected network: tanh on hidden layers, identity on the output.
/// With `output_cap > 0` the output is squashed to cap * tanh(y / cap).
template <typename Scalar>
struct DenseNet {
  std::vector<DenseLayer<Scalar>> layers;
  Scalar output_cap = Scalar(0);

  /// Zero-initialised network with the given layer widths (input first).
  static DenseNet zeros(const std::vector<Index>& widths, Scalar cap = Scalar(0)) {
    if (widths.size() < 2) throw ArgumentError("a network needs at least two widths");
    DenseNet net;
    net.output_cap = cap;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
      net.layers.push_back({Matrix<Scalar>::Zero(widths[i + 1], widths[i]),
                            Vector<Scalar>::Zero(widths[i + 1])});
    }
    return net;
  }

  /// Glorot-uniform weights, zero biases.
  static DenseNet glorot(const std::vector<Index>& widths, Rng& rng,
                         Scalar cap = Scalar(0)) {
    DenseNet net = zeros(widths, cap);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (auto& layer : net.layers) {
      const double fan = static_cast<double>(layer.weight.rows() + layer.weight.cols());
      const double limit = std::sqrt(6.0 / fan);
      for (Index j = 0; j < layer.weight.cols(); ++j)
        for (Index i = 0; i < layer.weight.rows(); ++i)
          layer.weight(i, j) = Scalar(limit * unit(rng));
    }
    return net;
  }

  /// Same shapes, all parameters zero. Used as a gradient accumulator.
  DenseNet zeros_like() const {
    DenseNet out = *this;
    for (auto& layer : out.layers) {
      layer.weight.setZero();
      layer.bias.setZero();
    }
    return out;
  }

  Index input_dim() const { return layers.front().weight.cols(); }
  Index output_dim() const { return layers.back().weight.rows(); }

  Index parameter_count() const {
    Index n = 0;
    for (const auto& layer : layers) n += layer.weight.size() + layer.bias.size();
    return n;
  }
};

/// Intermediates of one batched forward pass. `inputs[l]` is what layer l
/// consumed; for l > 0 that is the tanh activation of layer l - 1.
template <typename Scalar>
struct GradientTape {
  std::vector<Matrix<Scalar>> inputs;
  Matrix<Scalar> output;
};

/// Batched evaluation, one sample per column. Pass a tape to enable
/// backward().
template <typename Scalar, typename Derived>
Matrix<Scalar> forward(const DenseNet<Scalar>& net, const Eigen::MatrixBase<Derived>& input,
                       GradientTape<Scalar>* tape = nullptr) {
  if (input.rows() != net.input_dim()) throw ArgumentError("network input dimension mismatch");
  if (tape) {
    tape->inputs.clear();
    tape->inputs.reserve(net.layers.size());
  }
  Matrix<Scalar> h = input;
  const std::size_t last = net.layers.size() - 1;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    Matrix<Scalar> pre = (layer.weight * h).colwise() + layer.bias;
    if (!pre.allFinite()) {
      throw NumericError("overflow in conditioner layer " + std::to_string(l));
    }
    if (tape) tape->inputs.push_back(std::move(h));
    h = l < last ? Matrix<Scalar>(pre.array().tanh()) : std::move(pre);
  }
  if (net.output_cap > Scalar(0)) {
    h = (net.output_cap * (h.array() / net.output_cap).tanh()).matrix();
  }
  if (tape) tape->output = h;
  return h;
}

/// Single-vector convenience overload.
template <typename Scalar>
Vector<Scalar> forward(const DenseNet<Scalar>& net, const Vector<Scalar>& input) {
  return forward(net, input, static_cast<GradientTape<Scalar>*>(nullptr)).col(0);
}

/// Reverse pass for <cotangent, output>. Parameter gradients are summed over
/// the batch and added into `grads`; the input cotangent is returned.
template <typename Scalar>
Matrix<Scalar> backward(const DenseNet<Scalar>& net, const GradientTape<Scalar>& tape,
                        const Matrix<Scalar>& cotangent, DenseNet<Scalar>& grads) {
  if (tape.inputs.size() != net.layers.size() || grads.layers.size() != net.layers.size() ||
      cotangent.rows() != net.output_dim() || cotangent.cols() != tape.output.cols()) {
    throw std::logic_error("gradient tape does not match network");
  }
  Matrix<Scalar> g = cotangent;
  if (net.output_cap > Scalar(0)) {
    const auto squashed = tape.output.array() / net.output_cap;
    g = (g.array() * (Scalar(1) - squashed.square())).matrix();
  }
  for (std::size_t l = net.layers.size(); l-- > 0;) {
    const auto& input = tape.inputs[l];
    grads.layers[l].weight.noalias() += g * input.transpose();
    grads.layers[l].bias += g.rowwise().sum();
    Matrix<Scalar> upstream = net.layers[l].weight.transpose() * g;
    if (l > 0) {
      g = (upstream.array() * (Scalar(1) - input.array().square())).matrix();
    } else {
      return upstream;
    }
  }
  return g;
}

/// Writes the parameters into `dst` starting at `offset` (weights
/// column-major, then bias, layer by layer). Returns the next offset.
template <typename Scalar>
Index pack(const DenseNet<Scalar>& net, Vector<Scalar>& dst, Index offset) {
  for (const auto& layer : net.layers) {
    const Index nw = layer.weight.size();
    dst.segment(offset, nw) = Eigen::Map<const Vector<Scalar>>(layer.weight.data(), nw);
    offset += nw;
    dst.segment(offset, layer.bias.size()) = layer.bias;
    offset += layer.bias.size();
  }
  return offset;
}

template <typename Scalar>
Index unpack(DenseNet<Scalar>& net, const Vector<Scalar>& src, Index offset) {
  for (auto& layer : net.layers) {
    const Index nw = layer.weight.size();
    Eigen::Map<Vector<Scalar>>(layer.weight.data(), nw) = src.segment(offset, nw);
    offset += nw;
    layer.bias = src.segment(offset, layer.bias.size());
    offset += layer.bias.size();
  }
  return offset;
}

}  // namespace pcflow

#endif  // PCFLOW_CONDITIONER_HPP
