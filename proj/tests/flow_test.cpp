#include "pcflow/flow.hpp"

#include <Eigen/QR>
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace pcflow;

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

// Random stack with non-trivial biases so that zero inputs still move.
std::vector<CouplingLayer<double>> random_stack(Index dim, Index layers, Rng& rng,
                                                double weight_scale = 1.0) {
  FlowArchitecture arch;
  arch.coupling_layers = layers;
  auto stack = make_coupling_stack<double>(dim, arch, rng);
  VectorXd theta = flatten(stack);
  std::normal_distribution<double> normal(0.0, 0.3);
  for (Index i = 0; i < theta.size(); ++i) theta(i) = weight_scale * (theta(i) + normal(rng));
  unflatten(stack, theta);
  return stack;
}

FlowModel<double> plain_model(Index dim, std::vector<CouplingLayer<double>> layers) {
  FlowModel<double> model;
  model.data_dim = dim;
  model.standardizer = Standardizer<double>::identity(dim);
  model.layers = std::move(layers);
  return model;
}

CouplingResult<double> run_forward(const std::vector<CouplingLayer<double>>& layers, MatrixXd z) {
  VectorXd logdet = VectorXd::Zero(z.cols());
  for (const auto& layer : layers) {
    auto step = coupling_forward(layer, z);
    z = step.values;
    logdet += step.logdet;
  }
  return {z, logdet};
}

CouplingResult<double> run_inverse(const std::vector<CouplingLayer<double>>& layers, MatrixXd x) {
  VectorXd logdet = VectorXd::Zero(x.cols());
  for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
    auto step = coupling_inverse(*it, x);
    x = step.values;
    logdet += step.logdet;
  }
  return {x, logdet};
}

}  // namespace

TEST(Coupling, ZeroNetworksAreIdentity) {
  Rng rng(1);
  FlowArchitecture arch;
  auto stack = make_coupling_stack<double>(4, arch, rng);
  unflatten(stack, VectorXd(VectorXd::Zero(parameter_count(stack))));
  const MatrixXd z = MatrixXd::Random(4, 7);
  const auto fwd = run_forward(stack, z);
  const auto inv = run_inverse(stack, z);
  EXPECT_EQ(fwd.values, z);
  EXPECT_EQ(inv.values, z);
  EXPECT_EQ(fwd.logdet, VectorXd::Zero(7));
  EXPECT_EQ(inv.logdet, VectorXd::Zero(7));
}

TEST(Coupling, ConstantScaleAndShift) {
  CouplingLayer<double> layer;
  layer.dim = 2;
  layer.split = 1;
  layer.scale_net = DenseNet<double>::zeros({1, 1});
  layer.shift_net = DenseNet<double>::zeros({1, 1});
  layer.scale_net.layers[0].bias(0) = std::log(2.0);
  layer.shift_net.layers[0].bias(0) = 1.0;

  const auto fwd = coupling_forward(layer, MatrixXd(Eigen::Vector2d(0.5, 3.0)));
  EXPECT_DOUBLE_EQ(fwd.values(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(fwd.values(1, 0), 7.0);
  EXPECT_DOUBLE_EQ(fwd.logdet(0), std::log(2.0));

  const auto inv = coupling_inverse(layer, fwd.values);
  EXPECT_DOUBLE_EQ(inv.values(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(inv.values(1, 0), 3.0);
  EXPECT_DOUBLE_EQ(inv.logdet(0), -std::log(2.0));
}

TEST(Coupling, RoundTripOnRandomStacks) {
  Rng rng(11);
  std::uniform_int_distribution<int> dims(2, 8), depth(1, 10);
  for (int trial = 0; trial < 60; ++trial) {
    const Index d = dims(rng), k = depth(rng);
    const auto stack = random_stack(d, k, rng);
    const MatrixXd z = MatrixXd::Random(d, 16) * 3.0;
    const auto fwd = run_forward(stack, z);
    const auto back = run_inverse(stack, fwd.values);
    EXPECT_LE((back.values - z).cwiseAbs().maxCoeff(), 1e-8) << "D=" << d << " K=" << k;
    EXPECT_LE((fwd.logdet + back.logdet).cwiseAbs().maxCoeff(), 1e-8);

    const auto inv = run_inverse(stack, z);
    const auto again = run_forward(stack, inv.values);
    EXPECT_LE((again.values - z).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Coupling, LogDetMatchesNumericalJacobian) {
  Rng rng(12);
  std::uniform_int_distribution<int> dims(2, 8), depth(1, 6);
  const double h = 1e-6;
  for (int trial = 0; trial < 40; ++trial) {
    const Index d = dims(rng);
    const auto stack = random_stack(d, depth(rng), rng);
    const VectorXd z = VectorXd::Random(d);
    MatrixXd jac(d, d);
    for (Index j = 0; j < d; ++j) {
      VectorXd zp = z, zm = z;
      zp(j) += h;
      zm(j) -= h;
      jac.col(j) = (run_forward(stack, zp).values - run_forward(stack, zm).values) / (2 * h);
    }
    const double numeric = std::log(std::abs(jac.determinant()));
    const double analytic = run_forward(stack, z).logdet(0);
    EXPECT_NEAR(analytic, numeric, 1e-5 * std::max(1.0, std::abs(analytic))) << "D=" << d;
  }
}

TEST(Coupling, SplitAlternatesAndCoversEveryCoordinate) {
  Rng rng(5);
  FlowArchitecture arch;
  arch.coupling_layers = 4;
  const auto stack = make_coupling_stack<double>(5, arch, rng);
  ASSERT_EQ(stack.size(), 4u);
  EXPECT_EQ(stack[0].identity_size(), 2);
  EXPECT_EQ(stack[0].active_size(), 3);
  EXPECT_EQ(stack[1].identity_size(), 3);
  EXPECT_EQ(stack[1].active_size(), 2);
  for (std::size_t k = 0; k + 1 < stack.size(); ++k) {
    std::vector<bool> touched(5, false);
    for (std::size_t j = k; j < k + 2; ++j)
      for (Index i = 0; i < stack[j].active_size(); ++i) touched[stack[j].active_begin() + i] = true;
    for (bool t : touched) EXPECT_TRUE(t);
  }
  // default width equals the flow dimension, two hidden layers
  EXPECT_EQ(stack[0].scale_net.layers.size(), 3u);
  EXPECT_EQ(stack[0].scale_net.layers[0].weight.rows(), 5);
  EXPECT_EQ(stack[0].scale_net.output_cap, 5.0);
  EXPECT_EQ(stack[0].shift_net.output_cap, 0.0);
}

TEST(Coupling, OneDimensionalFlowHasNoLayers) {
  Rng rng(5);
  EXPECT_TRUE(make_coupling_stack<double>(1, FlowArchitecture{}, rng).empty());
  const auto model = plain_model(1, {});
  EXPECT_NEAR(log_prob(model, VectorXd(VectorXd::Constant(1, 1.5))), -0.5 * kLog2Pi - 1.125, 1e-14);
}

TEST(LogProb, StandardNormalAtOrigin) {
  Rng rng(2);
  FlowArchitecture arch;
  auto stack = make_coupling_stack<double>(4, arch, rng);
  unflatten(stack, VectorXd(VectorXd::Zero(parameter_count(stack))));
  const auto model = plain_model(4, stack);
  EXPECT_NEAR(log_prob(model, VectorXd(VectorXd::Zero(4))), -2.0 * kLog2Pi, 1e-12);
}

TEST(LogProb, PcaHeadAtMean) {
  MatrixXd rows(4, 3);
  rows << 1, 0, 2,  //
      -1, 0, 2,     //
      0, 3, 2,      //
      0, -3, 2;
  const auto map = truncate(fit_pca(rows), Truncation{std::nullopt, Index(2)});
  FlowModel<double> model = plain_model(3, {});
  model.pca = map;
  model.standardizer = Standardizer<double>::identity(2);
  Rng rng(3);
  auto stack = make_coupling_stack<double>(2, FlowArchitecture{}, rng);
  unflatten(stack, VectorXd(VectorXd::Zero(parameter_count(stack))));
  model.layers = stack;
  EXPECT_NEAR(log_prob(model, map.mean), -kLog2Pi, 1e-12);
}

TEST(LogProb, IntegratesToOneIn2D) {
  Rng rng(21);
  for (int trial = 0; trial < 3; ++trial) {
    const auto model = plain_model(2, random_stack(2, 4, rng, 0.5));
    const double lo = -12.0, hi = 12.0;
    const int n = 801;
    const double step = (hi - lo) / (n - 1);
    MatrixXd grid(2, n);
    double mass = 0.0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) grid.col(j) << lo + i * step, lo + j * step;
      mass += log_prob(model, grid).array().exp().sum();
    }
    EXPECT_NEAR(mass * step * step, 1.0, 1e-2) << "trial " << trial;
  }
}

TEST(LogProb, AgreesWithTrainingObjective) {
  Rng rng(8);
  const auto stack = random_stack(3, 5, rng);
  FlowModel<double> model = plain_model(3, stack);
  model.standardizer.shift << 0.1, -0.2, 0.3;
  model.standardizer.scale << 2.0, 0.5, 1.5;
  const MatrixXd x = MatrixXd::Random(3, 9);
  const auto objective =
      flow_nll_and_grad(stack, to_flow_space(model, x), model.standardizer.log_det());
  const VectorXd lp = log_prob(model, x);
  EXPECT_LE((objective.per_sample_nll + lp).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(objective.nll, -lp.mean(), 1e-12);
}

TEST(Sampling, CollinearDataStaysOnLine) {
  const Eigen::Vector3d origin(1.0, -2.0, 0.5), direction = Eigen::Vector3d(1, 2, 2) / 3.0;
  MatrixXd rows(50, 3);
  for (Index i = 0; i < rows.rows(); ++i)
    rows.row(i) = (origin + (0.1 * i - 2.0) * direction).transpose();
  FlowModel<double> model = plain_model(3, {});
  model.pca = truncate(fit_pca(rows), Truncation{1.0, std::nullopt});
  ASSERT_EQ(model.flow_dim(), 1);
  model.standardizer = Standardizer<double>::fit(project(*model.pca, rows.transpose()));
  Rng rng(4);
  const MatrixXd x = sample(model, 500, rng);
  for (Index j = 0; j < x.cols(); ++j) {
    const Eigen::Vector3d off = x.col(j) - origin;
    EXPECT_LE((off - off.dot(direction) * direction).norm(), 1e-8);
  }
}

TEST(Sampling, PlaneInFourDimensions) {
  Rng rng(9);
  MatrixXd basis = MatrixXd::Random(4, 2);
  basis = Eigen::HouseholderQR<MatrixXd>(basis).householderQ() * MatrixXd::Identity(4, 2);
  const MatrixXd rows = (basis * MatrixXd::Random(2, 200)).transpose();
  FlowModel<double> model = plain_model(4, random_stack(2, 5, rng));
  model.pca = truncate(fit_pca(rows), Truncation{1.0, std::nullopt});
  ASSERT_EQ(model.flow_dim(), 2);
  model.standardizer = Standardizer<double>::identity(2);
  const MatrixXd x = sample(model, 300, rng);
  const MatrixXd residual = x - basis * (basis.transpose() * x);
  EXPECT_LE(residual.cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Sampling, DeterministicForSeed) {
  Rng init(3);
  const auto model = plain_model(3, random_stack(3, 5, init));
  Rng a(42), b(42), c(43);
  const MatrixXd first = sample(model, 20, a);
  EXPECT_EQ(first, sample(model, 20, b));
  EXPECT_NE(first, sample(model, 20, c));
  EXPECT_THROW(sample(model, 0, a), ArgumentError);
}

TEST(Sampling, IdentityFlowMoments) {
  const auto model = plain_model(2, {});
  Rng rng(17);
  const Index n = 100000;
  const MatrixXd x = sample(model, n, rng);
  const VectorXd mean = x.rowwise().mean();
  const VectorXd var = (x.colwise() - mean).array().square().rowwise().sum() / double(n - 1);
  for (Index i = 0; i < 2; ++i) {
    EXPECT_LE(std::abs(mean(i)), 4.0 / std::sqrt(double(n)));
    EXPECT_LE(std::abs(var(i) - 1.0), 4.0 * std::sqrt(2.0 / double(n)));
  }
}

TEST(Standardizer, FitsMeanAndSampleDeviation) {
  MatrixXd cols(3, 4);
  cols << 1, 2, 3, 4,  //
      5, 5, 5, 5,      //
      0, 0, 10, 10;
  const auto s = Standardizer<double>::fit(cols);
  EXPECT_DOUBLE_EQ(s.shift(0), 2.5);
  EXPECT_DOUBLE_EQ(s.shift(1), 5.0);
  EXPECT_NEAR(s.scale(0), std::sqrt(5.0 / 3.0), 1e-15);
  EXPECT_EQ(s.scale(1), 1.0);
  EXPECT_NEAR(s.scale(2), std::sqrt(100.0 / 3.0), 1e-13);
  EXPECT_NEAR(s.log_det(), -std::log(s.scale(0) * s.scale(2)), 1e-14);

  FlowModel<double> model = plain_model(3, {});
  model.standardizer = s;
  const MatrixXd y = to_flow_space(model, cols);
  EXPECT_LE((from_flow_space(model, y) - cols).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_EQ(y.row(1), MatrixXd::Zero(1, 4));
}

TEST(LogProb, RejectsBadInput) {
  const auto model = plain_model(2, {});
  EXPECT_THROW(log_prob(model, MatrixXd(MatrixXd::Zero(3, 1))), ArgumentError);
  MatrixXd bad = MatrixXd::Zero(2, 1);
  bad(0, 0) = std::nan("");
  EXPECT_THROW(log_prob(model, bad), NumericError);
}
