#ifndef PCFLOW_FLOW_HPP
#define PCFLOW_FLOW_HPP

#include "pcflow/common.hpp"
#include "pcflow/conditioner.hpp"
#include "pcflow/pca.hpp"
#include "pcflow/random.hpp"

#include <cmath>
#include <numbers>
#include <optional>
#include <utility>
#include <vector>

namespace pcflow {

/// Affine coupling layer. Coordinates are split at `split` into a leading
/// block [0, split) and a trailing block [split, dim). With `swapped` false
/// the leading block passes through and conditions the trailing block;
/// with `swapped` true the roles flip.
template <typename Scalar>
struct CouplingLayer {
  Index dim = 0;
  Index split = 0;
  bool swapped = false;
  DenseNet<Scalar> scale_net;
  DenseNet<Scalar> shift_net;

  Index identity_begin() const { return swapped ? split : 0; }
  Index identity_size() const { return swapped ? dim - split : split; }
  Index active_begin() const { return swapped ? 0 : split; }
  Index active_size() const { return swapped ? split : dim - split; }
};

/// Result of a batched coupling pass: transformed samples (one per column)
/// and the log-determinant contribution of each.
template <typename Scalar>
struct CouplingResult {
  Matrix<Scalar> values;
  Vector<Scalar> logdet;
};

/// Generative direction: x_a = exp(s(z_i)) * z_a + t(z_i).
template <typename Scalar, typename Derived>
CouplingResult<Scalar> coupling_forward(const CouplingLayer<Scalar>& layer,
                                        const Eigen::MatrixBase<Derived>& z) {
  const Index ib = layer.identity_begin(), in = layer.identity_size();
  const Index ab = layer.active_begin(), an = layer.active_size();
  const Matrix<Scalar> cond = z.middleRows(ib, in);
  const Matrix<Scalar> s = forward(layer.scale_net, cond, static_cast<GradientTape<Scalar>*>(nullptr));
  const Matrix<Scalar> t = forward(layer.shift_net, cond, static_cast<GradientTape<Scalar>*>(nullptr));
  CouplingResult<Scalar> out{z, s.colwise().sum().transpose()};
  out.values.middleRows(ab, an) =
      (s.array().exp() * z.middleRows(ab, an).array() + t.array()).matrix();
  if (!out.values.allFinite()) throw NumericError("overflow in coupling forward");
  return out;
}

/// Normalizing direction: z_a = (x_a - t(x_i)) * exp(-s(x_i)).
template <typename Scalar, typename Derived>
CouplingResult<Scalar> coupling_inverse(const CouplingLayer<Scalar>& layer,
                                        const Eigen::MatrixBase<Derived>& x) {
  const Index ib = layer.identity_begin(), in = layer.identity_size();
  const Index ab = layer.active_begin(), an = layer.active_size();
  const Matrix<Scalar> cond = x.middleRows(ib, in);
  const Matrix<Scalar> s = forward(layer.scale_net, cond, static_cast<GradientTape<Scalar>*>(nullptr));
  const Matrix<Scalar> t = forward(layer.shift_net, cond, static_cast<GradientTape<Scalar>*>(nullptr));
  CouplingResult<Scalar> out{x, -s.colwise().sum().transpose()};
  out.values.middleRows(ab, an) =
      ((x.middleRows(ab, an).array() - t.array()) * (-s.array()).exp()).matrix();
  if (!out.values.allFinite()) throw NumericError("overflow in coupling inverse");
  return out;
}

/// Fixed per-dimension affine map into flow space: y = (x - shift) / scale.
template <typename Scalar>
struct Standardizer {
  Vector<Scalar> shift;
  Vector<Scalar> scale;

  /// log|det| of x -> y.
  Scalar log_det() const { return -scale.array().log().sum(); }

  static Standardizer identity(Index dim) {
    return {Vector<Scalar>::Zero(dim), Vector<Scalar>::Ones(dim)};
  }

  /// Mean and sample standard deviation of the columns of `samples`
  /// (one sample per column). Dimensions without spread keep scale 1.
  static Standardizer fit(const Matrix<Scalar>& samples) {
    Standardizer out;
    const Index n = samples.cols();
    out.shift = samples.rowwise().mean();
    const Matrix<Scalar> centered = samples.colwise() - out.shift;
    out.scale = (centered.array().square().rowwise().sum() /
                 static_cast<Scalar>(std::max<Index>(n - 1, 1)))
                    .sqrt()
                    .matrix();
    const Scalar largest = out.scale.size() ? out.scale.maxCoeff() : Scalar(0);
    for (Index i = 0; i < out.scale.size(); ++i) {
      if (!(out.scale(i) > Scalar(1e-12) * largest) || out.scale(i) == Scalar(0)) {
        out.scale(i) = Scalar(1);
      }
    }
    return out;
  }
};

struct FlowArchitecture {
  Index coupling_layers = 5;
  Index hidden_layers = 2;
  Index hidden_width = 0;  // 0: same as the flow dimension
  double scale_cap = 5.0;
};

/// Optional PCA head, standardizer, then coupling layers; base N(0, I).
template <typename Scalar>
struct FlowModel {
  Index data_dim = 0;
  std::optional<PcaMap<Scalar>> pca;
  Standardizer<Scalar> standardizer;
  std::vector<CouplingLayer<Scalar>> layers;

  Index flow_dim() const { return pca ? pca->latent_dim() : data_dim; }
};

/// Coupling stack for a flow dimension with alternating parity. A
/// one-dimensional flow gets no coupling layers (the split would be empty).
template <typename Scalar>
std::vector<CouplingLayer<Scalar>> make_coupling_stack(Index flow_dim,
                                                       const FlowArchitecture& arch,
                                                       Rng& rng) {
  std::vector<CouplingLayer<Scalar>> layers;
  if (flow_dim < 2) return layers;
  if (arch.coupling_layers < 1 || arch.hidden_layers < 0) {
    throw ArgumentError("flow architecture needs at least one coupling layer");
  }
  const Index width = arch.hidden_width > 0 ? arch.hidden_width : flow_dim;
  const Index split = flow_dim / 2;
  for (Index k = 0; k < arch.coupling_layers; ++k) {
    CouplingLayer<Scalar> layer;
    layer.dim = flow_dim;
    layer.split = split;
    layer.swapped = (k % 2) == 1;
    std::vector<Index> widths{layer.identity_size()};
    for (Index h = 0; h < arch.hidden_layers; ++h) widths.push_back(width);
    widths.push_back(layer.active_size());
    layer.scale_net = DenseNet<Scalar>::glorot(widths, rng, Scalar(arch.scale_cap));
    layer.shift_net = DenseNet<Scalar>::glorot(widths, rng);
    layers.push_back(std::move(layer));
  }
  return layers;
}

/// Data space (D x B) to standardized flow space (D_flow x B).
template <typename Scalar, typename Derived>
Matrix<Scalar> to_flow_space(const FlowModel<Scalar>& model,
                             const Eigen::MatrixBase<Derived>& x) {
  if (x.rows() != model.data_dim) throw ArgumentError("data dimension mismatch");
  Matrix<Scalar> latent = model.pca ? project(*model.pca, x) : Matrix<Scalar>(x);
  return (latent.colwise() - model.standardizer.shift).array().colwise() /
         model.standardizer.scale.array();
}

/// Standardized flow space back to data space.
template <typename Scalar, typename Derived>
Matrix<Scalar> from_flow_space(const FlowModel<Scalar>& model,
                               const Eigen::MatrixBase<Derived>& y) {
  Matrix<Scalar> latent =
      (y.array().colwise() * model.standardizer.scale.array()).matrix().colwise() +
      model.standardizer.shift;
  return model.pca ? embed(*model.pca, latent) : latent;
}

template <typename Scalar, typename Derived>
Vector<Scalar> standard_normal_log_density(const Eigen::MatrixBase<Derived>& z) {
  const Scalar log_two_pi = std::log(Scalar(2) * std::numbers::pi_v<Scalar>);
  return (Scalar(-0.5) * z.colwise().squaredNorm().array() -
          Scalar(0.5) * static_cast<Scalar>(z.rows()) * log_two_pi)
      .matrix()
      .transpose();
}

/// Log-density of each column of `x` (D x B). The PCA head adds nothing:
/// its embedding is an isometry.
template <typename Scalar, typename Derived>
Vector<Scalar> log_prob(const FlowModel<Scalar>& model, const Eigen::MatrixBase<Derived>& x) {
  if (!x.allFinite()) throw NumericError("log_prob input is not finite");
  Matrix<Scalar> y = to_flow_space(model, x);
  Vector<Scalar> total = Vector<Scalar>::Constant(y.cols(), model.standardizer.log_det());
  for (auto it = model.layers.rbegin(); it != model.layers.rend(); ++it) {
    auto step = coupling_inverse(*it, y);
    y = std::move(step.values);
    total += step.logdet;
  }
  return total + standard_normal_log_density<Scalar>(y);
}

template <typename Scalar>
Scalar log_prob(const FlowModel<Scalar>& model, const Vector<Scalar>& x) {
  return log_prob(model, Matrix<Scalar>(x))(0);
}

/// Pushes base samples (D_flow x B) through the layers; returns flow-space
/// output and the forward log-determinant per column.
template <typename Scalar>
CouplingResult<Scalar> push_forward(const FlowModel<Scalar>& model, Matrix<Scalar> z) {
  Vector<Scalar> logdet = Vector<Scalar>::Zero(z.cols());
  for (const auto& layer : model.layers) {
    auto step = coupling_forward(layer, z);
    z = std::move(step.values);
    logdet += step.logdet;
  }
  return {std::move(z), std::move(logdet)};
}

template <typename Scalar>
Matrix<Scalar> draw_base(Index dim, Index n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix<Scalar> z(dim, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < dim; ++i) z(i, j) = Scalar(normal(rng));
  return z;
}

/// n samples in data space, one per column.
template <typename Scalar>
Matrix<Scalar> sample(const FlowModel<Scalar>& model, Index n, Rng& rng) {
  if (n < 1) throw ArgumentError("sample count must be >= 1");
  auto pushed = push_forward(model, draw_base<Scalar>(model.flow_dim(), n, rng));
  return from_flow_space(model, pushed.values);
}

/// Per-layer gradient accumulators shaped like the model's conditioners.
template <typename Scalar>
std::vector<CouplingLayer<Scalar>> zero_gradients(const std::vector<CouplingLayer<Scalar>>& layers) {
  std::vector<CouplingLayer<Scalar>> grads = layers;
  for (auto& g : grads) {
    g.scale_net = g.scale_net.zeros_like();
    g.shift_net = g.shift_net.zeros_like();
  }
  return grads;
}

template <typename Scalar>
Index parameter_count(const std::vector<CouplingLayer<Scalar>>& layers) {
  Index n = 0;
  for (const auto& l : layers) n += l.scale_net.parameter_count() + l.shift_net.parameter_count();
  return n;
}

template <typename Scalar>
Vector<Scalar> flatten(const std::vector<CouplingLayer<Scalar>>& layers) {
  Vector<Scalar> out(parameter_count(layers));
  Index offset = 0;
  for (const auto& l : layers) {
    offset = pack(l.scale_net, out, offset);
    offset = pack(l.shift_net, out, offset);
  }
  return out;
}

template <typename Scalar>
void unflatten(std::vector<CouplingLayer<Scalar>>& layers, const Vector<Scalar>& params) {
  if (params.size() != parameter_count(layers)) throw ArgumentError("parameter vector size mismatch");
  Index offset = 0;
  for (auto& l : layers) {
    offset = unpack(l.scale_net, params, offset);
    offset = unpack(l.shift_net, params, offset);
  }
}

template <typename Scalar>
struct NllGradient {
  Scalar nll = Scalar(0);
  Vector<Scalar> per_sample_nll;
  std::vector<CouplingLayer<Scalar>> grads;
};

/// Mean negative log-likelihood of flow-space samples `y` (D_flow x B) and
/// its exact gradient with respect to every conditioner parameter.
/// `constant_log_det` is added to every sample's log-density (the
/// standardizer term) and carries no gradient.
template <typename Scalar>
NllGradient<Scalar> flow_nll_and_grad(const std::vector<CouplingLayer<Scalar>>& layers,
                                      const Matrix<Scalar>& y, Scalar constant_log_det) {
  const Index batch = y.cols();
  if (batch < 1) throw ArgumentError("empty batch");
  const Scalar inv_batch = Scalar(1) / static_cast<Scalar>(batch);

  struct Cache {
    Matrix<Scalar> active_out;  // z_a after this inverse layer
    GradientTape<Scalar> s_tape, t_tape;
  };
  std::vector<Cache> caches(layers.size());
  Matrix<Scalar> h = y;
  Vector<Scalar> logdet = Vector<Scalar>::Zero(batch);
  for (std::size_t k = layers.size(); k-- > 0;) {
    const auto& layer = layers[k];
    auto& cache = caches[k];
    const Matrix<Scalar> cond = h.middleRows(layer.identity_begin(), layer.identity_size());
    const Matrix<Scalar> s = forward(layer.scale_net, cond, &cache.s_tape);
    const Matrix<Scalar> t = forward(layer.shift_net, cond, &cache.t_tape);
    const Index ab = layer.active_begin(), an = layer.active_size();
    h.middleRows(ab, an) = ((h.middleRows(ab, an).array() - t.array()) * (-s.array()).exp()).matrix();
    cache.active_out = h.middleRows(ab, an);
    logdet -= s.colwise().sum().transpose();
  }

  NllGradient<Scalar> out;
  out.per_sample_nll = -(standard_normal_log_density<Scalar>(h) + logdet).array() - constant_log_det;
  out.nll = out.per_sample_nll.mean();
  out.grads = zero_gradients(layers);
  if (!std::isfinite(static_cast<double>(out.nll))) return out;

  // d nll / d z for the base term.
  Matrix<Scalar> g = h * inv_batch;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& layer = layers[k];
    auto& cache = caches[k];
    const Index ab = layer.active_begin(), an = layer.active_size();
    const Index ib = layer.identity_begin(), in = layer.identity_size();
    const Matrix<Scalar> g_active = g.middleRows(ab, an);
    const Matrix<Scalar> scale_inv = (-cache.s_tape.output.array()).exp();
    // z_a = (x_a - t) e^{-s};  nll also carries + s / B from the log-det.
    const Matrix<Scalar> g_s =
        (-(g_active.array() * cache.active_out.array()) + inv_batch).matrix();
    const Matrix<Scalar> g_t = -(g_active.array() * scale_inv.array()).matrix();
    g.middleRows(ab, an) = (g_active.array() * scale_inv.array()).matrix();
    g.middleRows(ib, in) += backward(layer.scale_net, cache.s_tape, g_s, out.grads[k].scale_net);
    g.middleRows(ib, in) += backward(layer.shift_net, cache.t_tape, g_t, out.grads[k].shift_net);
  }
  return out;
}

}  // namespace pcflow

#endif  // PCFLOW_FLOW_HPP
