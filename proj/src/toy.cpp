#include "pcflow/toy.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

namespace pcflow {

namespace {

constexpr Index kCurvePoints = 20001;

const std::array<Eigen::Vector2d, 4> kKite = {
    Eigen::Vector2d(0.0, 2.0), Eigen::Vector2d(1.5, 0.0), Eigen::Vector2d(0.0, -3.0),
    Eigen::Vector2d(-1.5, 0.0)};

double segment_distance(const Eigen::Vector2d& p, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  const Eigen::Vector2d ab = b - a;
  const double len2 = ab.squaredNorm();
  const double h = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (p - a - h * ab).norm();
}

const std::vector<Eigen::Vector2d>& curve_polyline() {
  static const std::vector<Eigen::Vector2d> points = [] {
    std::vector<Eigen::Vector2d> out(static_cast<std::size_t>(kCurvePoints));
    for (Index i = 0; i < kCurvePoints; ++i) {
      out[static_cast<std::size_t>(i)] =
          curve_point(static_cast<double>(i) / static_cast<double>(kCurvePoints - 1));
    }
    return out;
  }();
  return points;
}

}  // namespace

ToyShape parse_toy_shape(const std::string& name) {
  if (name == "curve1d") return ToyShape::curve1d;
  if (name == "kite2d") return ToyShape::kite2d;
  throw ArgumentError("unknown toy shape '" + name + "' (curve1d, kite2d)");
}

ToyMode parse_toy_mode(const std::string& name) {
  if (name == "fsnf") return ToyMode::fsnf;
  if (name == "pcf") return ToyMode::pcf;
  throw ArgumentError("unknown mode '" + name + "' (fsnf, pcf)");
}

std::string to_string(ToyShape shape) { return shape == ToyShape::curve1d ? "curve1d" : "kite2d"; }
std::string to_string(ToyMode mode) { return mode == ToyMode::fsnf ? "fsnf" : "pcf"; }

Eigen::Vector2d curve_point(double t) {
  const double u = 2.0 * t - 1.0;
  const double along = u * u * u;
  const double across = 0.045 * std::sin(6.0 * std::numbers::pi * along);
  const double c = std::numbers::sqrt2 / 2.0;
  return {c * (along - across), c * (along + across)};
}

bool inside_kite(const Eigen::Vector2d& p) {
  // convex, vertices listed clockwise
  for (std::size_t i = 0; i < kKite.size(); ++i) {
    const Eigen::Vector2d& a = kKite[i];
    const Eigen::Vector2d& b = kKite[(i + 1) % kKite.size()];
    const double cross = (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
    if (cross > 0.0) return false;
  }
  return true;
}

double distance_to_curve(const Eigen::Vector2d& p) {
  const auto& pts = curve_polyline();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    best = std::min(best, segment_distance(p, pts[i], pts[i + 1]));
  }
  return best;
}

double distance_to_kite(const Eigen::Vector2d& p) {
  if (inside_kite(p)) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < kKite.size(); ++i) {
    best = std::min(best, segment_distance(p, kKite[i], kKite[(i + 1) % kKite.size()]));
  }
  return best;
}

MatrixXd toy_dataset(ToyShape shape, Index n, Rng& rng) {
  if (n < 1) throw ArgumentError("toy dataset needs at least one point");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  MatrixXd out(n, 2);
  for (Index i = 0; i < n; ++i) {
    Eigen::Vector2d p;
    if (shape == ToyShape::curve1d) {
      p = curve_point(unit(rng));
    } else {
      do {
        p = {-1.5 + 3.0 * unit(rng), -3.0 + 5.0 * unit(rng)};
      } while (!inside_kite(p));
    }
    out.row(i) = p.transpose();
  }
  return out;
}

ToyResult run_toy(const ToyOptions& options) {
  Rng data_rng(options.train.seed + 3);
  ToyResult result;
  result.data = toy_dataset(options.shape, options.data_points, data_rng);

  ScenarioSet all;
  all.data = result.data;
  all.period_length = 2;
  all.interval_minutes = 720;
  auto [train, val] = split(all, options.train.validation_fraction, options.train.seed);

  std::optional<Truncation> head;
  if (options.mode == ToyMode::pcf) head = Truncation{options.cev_threshold, std::nullopt};
  auto model = build_model(train.data, head, options.arch, options.train.seed);
  result.flow_dim = model.flow_dim();
  auto trained = train_flow(std::move(model), train.data, val.data, options.train,
                            options.mode == ToyMode::fsnf);
  result.log = std::move(trained.log);

  Rng sampling = SeedStreams{options.train.seed}.sampling();
  result.samples = sample(trained.model, options.draws, sampling).transpose();

  Index within = 0;
  double total = 0.0;
  for (Index i = 0; i < result.samples.rows(); ++i) {
    const Eigen::Vector2d p = result.samples.row(i).transpose();
    const double d = options.shape == ToyShape::curve1d ? distance_to_curve(p) : distance_to_kite(p);
    total += d;
    if (d <= options.tolerance) ++within;
  }
  const auto n = static_cast<double>(result.samples.rows());
  result.mean_distance = total / n;
  result.fraction_within = static_cast<double>(within) / n;
  return result;
}

}  // namespace pcflow
