#ifndef PCFLOW_TOY_HPP
#define PCFLOW_TOY_HPP

#include "pcflow/train.hpp"

#include <cstdint>
#include <string>

namespace pcflow {

enum class ToyShape { curve1d, kite2d };
enum class ToyMode { fsnf, pcf };

ToyShape parse_toy_shape(const std::string& name);
ToyMode parse_toy_mode(const std::string& name);
std::string to_string(ToyShape shape);
std::string to_string(ToyMode mode);

/// The fixed planar curve, t in [0, 1]. With u = 2t - 1 and a = u^3 the
/// local coordinates are (a, 0.045 sin(6 pi a)), a gently wavy arc, rotated
/// by 45 degrees. The cubic puts most of the mass near the middle.
Eigen::Vector2d curve_point(double t);

/// Kite with vertices (0, 2), (1.5, 0), (0, -3), (-1.5, 0).
bool inside_kite(const Eigen::Vector2d& p);

/// Euclidean distance to the curve, via a dense polyline of the curve.
double distance_to_curve(const Eigen::Vector2d& p);

/// Zero inside the kite, distance to its boundary outside.
double distance_to_kite(const Eigen::Vector2d& p);

/// n points (rows): t uniform on [0, 1] mapped through curve_point, or
/// uniform on the kite by rejection.
MatrixXd toy_dataset(ToyShape shape, Index n, Rng& rng);

struct ToyOptions {
  ToyShape shape = ToyShape::curve1d;
  ToyMode mode = ToyMode::fsnf;
  Index data_points = 2000;
  Index draws = 2000;
  double cev_threshold = 0.99;
  double tolerance = 0.05;
  FlowArchitecture arch;
  TrainConfig train;
};

struct ToyResult {
  MatrixXd data;     // rows
  MatrixXd samples;  // rows
  TrainLog log;
  Index flow_dim = 0;
  double mean_distance = 0.0;
  double fraction_within = 0.0;
};

/// Dataset from seed + 3, split, train, draw, measure distance to the
/// manifold.
ToyResult run_toy(const ToyOptions& options);

}  // namespace pcflow

#endif  // PCFLOW_TOY_HPP
