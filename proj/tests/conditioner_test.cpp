#include "pcflow/conditioner.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace pcflow;

namespace {

// Central-difference check of d<c, net(x)>/d(theta) and d/dx.
void expect_gradients_match(const DenseNet<double>& net, const MatrixXd& x, const MatrixXd& c) {
  GradientTape<double> tape;
  forward(net, x, &tape);
  DenseNet<double> grads = net.zeros_like();
  const MatrixXd gx = backward(net, tape, c, grads);

  auto objective = [&](const DenseNet<double>& n, const MatrixXd& in) {
    return (forward(n, in, static_cast<GradientTape<double>*>(nullptr)).array() * c.array()).sum();
  };
  auto close = [](double analytic, double numeric) {
    return std::abs(analytic - numeric) <= 1e-4 * std::max(std::abs(analytic), std::abs(numeric)) + 1e-9;
  };
  const double h = 1e-5;

  VectorXd theta(net.parameter_count()), g(net.parameter_count());
  pack(net, theta, 0);
  pack(grads, g, 0);
  for (Index i = 0; i < theta.size(); ++i) {
    DenseNet<double> plus = net, minus = net;
    VectorXd tp = theta, tm = theta;
    tp(i) += h;
    tm(i) -= h;
    unpack(plus, tp, 0);
    unpack(minus, tm, 0);
    const double numeric = (objective(plus, x) - objective(minus, x)) / (2 * h);
    EXPECT_TRUE(close(g(i), numeric)) << "parameter " << i << ": " << g(i) << " vs " << numeric;
  }
  for (Index i = 0; i < x.size(); ++i) {
    MatrixXd xp = x, xm = x;
    xp.data()[i] += h;
    xm.data()[i] -= h;
    const double numeric = (objective(net, xp) - objective(net, xm)) / (2 * h);
    EXPECT_TRUE(close(gx.data()[i], numeric)) << "input " << i;
  }
}

}  // namespace

TEST(DenseNetForward, ZeroNetworkGivesZero) {
  const auto net = DenseNet<double>::zeros({3, 4, 4, 2}, 5.0);
  const VectorXd out = forward(net, VectorXd(Eigen::Vector3d(1, -2, 3)));
  EXPECT_EQ(out, VectorXd::Zero(2));
}

TEST(DenseNetForward, SingleLinearLayer) {
  auto net = DenseNet<double>::zeros({1, 1});
  net.layers[0].weight(0, 0) = 2.0;
  net.layers[0].bias(0) = 1.0;
  EXPECT_EQ(forward(net, VectorXd::Constant(1, 3.0))(0), 7.0);
}

TEST(DenseNetForward, TwoLayerHandEvaluation) {
  auto net = DenseNet<double>::zeros({2, 2, 1});
  net.layers[0].weight << 0.1, -0.2, 0.3, 0.4;
  net.layers[0].bias << 0.05, -0.1;
  net.layers[1].weight << 0.5, -0.6;
  net.layers[1].bias << 0.2;
  const double x0 = 1.0, x1 = 2.0;
  const double h0 = std::tanh(0.1 * x0 - 0.2 * x1 + 0.05);
  const double h1 = std::tanh(0.3 * x0 + 0.4 * x1 - 0.1);
  const double expected = 0.5 * h0 - 0.6 * h1 + 0.2;
  EXPECT_NEAR(forward(net, VectorXd(Eigen::Vector2d(x0, x1)))(0), expected, 1e-12);

  net.output_cap = 5.0;
  EXPECT_NEAR(forward(net, VectorXd(Eigen::Vector2d(x0, x1)))(0), 5.0 * std::tanh(expected / 5.0),
              1e-12);
}

TEST(DenseNetForward, CapBoundsOutput) {
  auto net = DenseNet<double>::zeros({1, 1}, 5.0);
  net.layers[0].bias(0) = 1e6;
  const double out = forward(net, VectorXd::Zero(1))(0);
  EXPECT_LE(out, 5.0);
  EXPECT_GT(out, 4.99);
}

TEST(DenseNetForward, OverflowNamesLayer) {
  auto net = DenseNet<double>::zeros({1, 2, 1});
  net.layers[1].bias(0) = std::numeric_limits<double>::infinity();
  try {
    forward(net, VectorXd::Zero(1));
    FAIL() << "expected an error";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos) << e.what();
  }
  EXPECT_THROW(forward(net, VectorXd::Zero(3)), ArgumentError);
}

TEST(DenseNetForward, Deterministic) {
  Rng rng(3);
  const auto net = DenseNet<double>::glorot({4, 6, 6, 3}, rng, 5.0);
  MatrixXd x = MatrixXd::Random(4, 10);
  const MatrixXd a = forward(net, x, static_cast<GradientTape<double>*>(nullptr));
  const MatrixXd b = forward(net, x, static_cast<GradientTape<double>*>(nullptr));
  EXPECT_EQ(a, b);
  // a batch column equals the single-vector path
  EXPECT_EQ(VectorXd(a.col(3)), forward(net, VectorXd(x.col(3))));
}

TEST(DenseNetInit, GlorotBoundsAndZeroBias) {
  Rng rng(9);
  const auto net = DenseNet<double>::glorot({3, 7, 2}, rng);
  const double l0 = std::sqrt(6.0 / 10.0), l1 = std::sqrt(6.0 / 9.0);
  EXPECT_LE(net.layers[0].weight.cwiseAbs().maxCoeff(), l0);
  EXPECT_LE(net.layers[1].weight.cwiseAbs().maxCoeff(), l1);
  EXPECT_EQ(net.layers[0].bias, VectorXd::Zero(7));
  EXPECT_EQ(net.parameter_count(), 3 * 7 + 7 + 7 * 2 + 2);
  Rng again(9);
  EXPECT_EQ(DenseNet<double>::glorot({3, 7, 2}, again).layers[1].weight, net.layers[1].weight);
}

TEST(DenseNetBackward, ZeroCotangent) {
  Rng rng(4);
  const auto net = DenseNet<double>::glorot({3, 5, 2}, rng, 5.0);
  GradientTape<double> tape;
  forward(net, MatrixXd::Random(3, 4), &tape);
  auto grads = net.zeros_like();
  const MatrixXd gx = backward(net, tape, MatrixXd(MatrixXd::Zero(2, 4)), grads);
  EXPECT_EQ(gx, MatrixXd::Zero(3, 4));
  VectorXd flat(net.parameter_count());
  pack(grads, flat, 0);
  EXPECT_EQ(flat, VectorXd::Zero(flat.size()));
}

TEST(DenseNetBackward, SingleLinearLayerCalculus) {
  auto net = DenseNet<double>::zeros({1, 1});
  net.layers[0].weight(0, 0) = 2.0;
  GradientTape<double> tape;
  forward(net, MatrixXd::Constant(1, 1, 3.0), &tape);
  auto grads = net.zeros_like();
  const MatrixXd gx = backward(net, tape, MatrixXd(MatrixXd::Ones(1, 1)), grads);
  EXPECT_EQ(grads.layers[0].weight(0, 0), 3.0);
  EXPECT_EQ(grads.layers[0].bias(0), 1.0);
  EXPECT_EQ(gx(0, 0), 2.0);
}

TEST(DenseNetBackward, MismatchedTapeIsLogicError) {
  Rng rng(4);
  const auto net = DenseNet<double>::glorot({3, 5, 2}, rng);
  const auto other = DenseNet<double>::glorot({3, 5, 5, 2}, rng);
  GradientTape<double> tape;
  forward(other, MatrixXd::Random(3, 2), &tape);
  auto grads = net.zeros_like();
  EXPECT_THROW(backward(net, tape, MatrixXd(MatrixXd::Ones(2, 2)), grads), std::logic_error);
}

TEST(DenseNetBackward, FiniteDifferencesOnRandomNets) {
  Rng rng(2024);
  std::uniform_int_distribution<int> width(1, 6);
  std::uniform_int_distribution<int> depth(0, 3);
  std::uniform_int_distribution<int> batch(1, 4);
  std::normal_distribution<double> normal(0.0, 1.0);
  int checked = 0;
  for (int trial = 0; trial < 120; ++trial) {
    std::vector<Index> widths{width(rng)};
    const int hidden = depth(rng);
    for (int h = 0; h < hidden; ++h) widths.push_back(width(rng));
    widths.push_back(width(rng));
    const double cap = trial % 2 ? 5.0 : 0.0;
    auto net = DenseNet<double>::glorot(widths, rng, cap);
    for (auto& layer : net.layers)
      for (Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = 0.3 * normal(rng);
    const Index b = batch(rng);
    MatrixXd x(widths.front(), b), c(widths.back(), b);
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
    for (Index i = 0; i < c.size(); ++i) c.data()[i] = normal(rng);
    SCOPED_TRACE("trial " + std::to_string(trial));
    expect_gradients_match(net, x, c);
    ++checked;
  }
  EXPECT_GE(checked, 100);
}

TEST(DenseNetParameters, PackUnpackRoundTrip) {
  Rng rng(6);
  const auto net = DenseNet<double>::glorot({2, 3, 4}, rng);
  VectorXd flat(net.parameter_count());
  EXPECT_EQ(pack(net, flat, 0), net.parameter_count());
  auto copy = net.zeros_like();
  unpack(copy, flat, 0);
  EXPECT_EQ(copy.layers[0].weight, net.layers[0].weight);
  EXPECT_EQ(copy.layers[1].bias, net.layers[1].bias);
}
