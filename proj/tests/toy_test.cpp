#include "pcflow/toy.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace pcflow;

namespace {

// Independent brute force over a much finer parameter grid.
double dense_curve_distance(const Eigen::Vector2d& p) {
  double best = std::numeric_limits<double>::infinity();
  const int n = 400000;
  for (int i = 0; i <= n; ++i) best = std::min(best, (curve_point(double(i) / n) - p).norm());
  return best;
}

}  // namespace

TEST(ToyCurve, EndpointsAndCentre) {
  const double c = std::sqrt(0.5);
  EXPECT_NEAR(curve_point(0.5).norm(), 0.0, 1e-15);
  EXPECT_NEAR(curve_point(1.0).x(), c, 1e-12);
  EXPECT_NEAR(curve_point(1.0).y(), c, 1e-12);
  EXPECT_NEAR(curve_point(0.0).x(), -c, 1e-12);
  EXPECT_NEAR(curve_point(0.0).y(), -c, 1e-12);
}

TEST(ToyCurve, LocalCoordinates) {
  const double c = std::sqrt(0.5);
  for (double t : {0.1, 0.3, 0.62, 0.9}) {
    const double a = std::pow(2 * t - 1, 3);
    const double across = 0.045 * std::sin(6 * std::numbers::pi * a);
    const Eigen::Vector2d p = curve_point(t);
    EXPECT_NEAR(p.x(), c * (a - across), 1e-14);
    EXPECT_NEAR(p.y(), c * (a + across), 1e-14);
  }
}

TEST(ToyCurve, DistanceMatchesDenseSearch) {
  Rng rng(1);
  std::uniform_real_distribution<double> box(-1.2, 1.2);
  for (int i = 0; i < 40; ++i) {
    const Eigen::Vector2d p(box(rng), box(rng));
    EXPECT_NEAR(distance_to_curve(p), dense_curve_distance(p), 1e-5) << p.transpose();
  }
  for (double t : {0.0, 0.2, 0.5, 0.77, 1.0}) EXPECT_LE(distance_to_curve(curve_point(t)), 1e-6);
}

TEST(ToyKite, InsideTest) {
  EXPECT_TRUE(inside_kite({0.0, 0.0}));
  EXPECT_TRUE(inside_kite({0.0, 1.9}));
  EXPECT_FALSE(inside_kite({0.0, 2.1}));
  EXPECT_TRUE(inside_kite({1.4, 0.0}));
  EXPECT_FALSE(inside_kite({1.6, 0.0}));
  EXPECT_TRUE(inside_kite({0.0, -2.9}));
  EXPECT_TRUE(inside_kite({0.2, -2.5}));
  EXPECT_FALSE(inside_kite({0.5, -2.5}));
  EXPECT_FALSE(inside_kite({-0.5, -2.5}));
}

TEST(ToyKite, Distance) {
  EXPECT_EQ(distance_to_kite({0.1, 0.1}), 0.0);
  EXPECT_NEAR(distance_to_kite({0.0, 3.0}), 1.0, 1e-15);
  EXPECT_NEAR(distance_to_kite({3.0, 0.0}), 1.5, 1e-15);
  EXPECT_NEAR(distance_to_kite({0.0, -4.0}), 1.0, 1e-15);
  // perpendicular to the edge (0, 2)-(1.5, 0), whose outward normal is (0.8, 0.6)
  const Eigen::Vector2d mid(0.75, 1.0);
  EXPECT_NEAR(distance_to_kite(mid + 0.3 * Eigen::Vector2d(0.8, 0.6)), 0.3, 1e-14);
}

TEST(ToyData, CurveSamplesLieOnCurve) {
  Rng rng(2);
  const MatrixXd rows = toy_dataset(ToyShape::curve1d, 4000, rng);
  ASSERT_EQ(rows.rows(), 4000);
  ASSERT_EQ(rows.cols(), 2);
  int lower = 0;
  for (Index i = 0; i < rows.rows(); ++i) {
    const Eigen::Vector2d p = rows.row(i).transpose();
    EXPECT_LE(distance_to_curve(p), 1e-6);
    lower += p.x() + p.y() < 0.0;
  }
  // t is uniform, so half the points precede the centre
  EXPECT_NEAR(lower / 4000.0, 0.5, 0.03);
}

TEST(ToyData, KiteIsUniform) {
  Rng rng(3);
  const MatrixXd rows = toy_dataset(ToyShape::kite2d, 20000, rng);
  int upper = 0;
  for (Index i = 0; i < rows.rows(); ++i) {
    EXPECT_TRUE(inside_kite(rows.row(i).transpose()));
    upper += rows(i, 1) > 0.0;
  }
  // upper triangle has area 3 of 7.5
  EXPECT_NEAR(upper / 20000.0, 0.4, 0.02);
}

TEST(ToyData, Deterministic) {
  Rng a(5), b(5);
  EXPECT_EQ(toy_dataset(ToyShape::kite2d, 50, a), toy_dataset(ToyShape::kite2d, 50, b));
}

TEST(ToyNames, ParseAndPrint) {
  EXPECT_EQ(parse_toy_shape("curve1d"), ToyShape::curve1d);
  EXPECT_EQ(parse_toy_shape("kite2d"), ToyShape::kite2d);
  EXPECT_EQ(parse_toy_mode("pcf"), ToyMode::pcf);
  EXPECT_EQ(to_string(ToyMode::fsnf), "fsnf");
  EXPECT_EQ(to_string(ToyShape::kite2d), "kite2d");
  EXPECT_THROW(parse_toy_shape("circle"), ArgumentError);
  EXPECT_THROW(parse_toy_mode("vae"), ArgumentError);
}

TEST(ToyRun, PcfOnCurveUsesOneComponent) {
  ToyOptions opt;
  opt.shape = ToyShape::curve1d;
  opt.mode = ToyMode::pcf;
  opt.data_points = 400;
  opt.draws = 300;
  opt.train.epochs = 5;
  const auto a = run_toy(opt);
  EXPECT_EQ(a.flow_dim, 1);
  EXPECT_EQ(a.samples.rows(), 300);
  EXPECT_FALSE(a.log.diverged);
  const auto b = run_toy(opt);
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_EQ(a.fraction_within, b.fraction_within);
}
