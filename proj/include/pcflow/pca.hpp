#ifndef PCFLOW_PCA_HPP
#define PCFLOW_PCA_HPP

#include "pcflow/common.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

namespace pcflow {

/// Eigenpairs of a symmetric matrix, eigenvalues non-increasing, one
/// eigenvector per column.
template <typename Scalar>
struct SymmetricEigen {
  Vector<Scalar> values;
  Matrix<Scalar> vectors;
  int sweeps = 0;
};

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm drops below
/// `rel_tol * |trace|`. Entries that are exactly zero are never rotated, so
/// zero rows/columns of the input stay exactly decoupled.
template <typename Scalar>
SymmetricEigen<Scalar> jacobi_eigen(Matrix<Scalar> a, Scalar rel_tol = Scalar(1e-12),
                                    int max_sweeps = 100) {
  using std::abs;
  using std::sqrt;
  if (a.rows() != a.cols()) throw ArgumentError("jacobi_eigen needs a square matrix");
  const Index n = a.rows();
  Matrix<Scalar> v = Matrix<Scalar>::Identity(n, n);
  const Scalar target = rel_tol * abs(a.trace());

  auto off_norm = [&] {
    Scalar sum(0);
    for (Index j = 0; j < n; ++j)
      for (Index i = 0; i < n; ++i)
        if (i != j) sum += a(i, j) * a(i, j);
    return sqrt(sum);
  };

  int sweep = 0;
  for (; sweep < max_sweeps; ++sweep) {
    const Scalar off = off_norm();
    if (off == Scalar(0) || off < target) break;
    for (Index p = 0; p < n - 1; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        const Scalar apq = a(p, q);
        if (apq == Scalar(0)) continue;
        const Scalar theta = (a(q, q) - a(p, p)) / (Scalar(2) * apq);
        Scalar t;
        if (abs(theta) > Scalar(1e150)) {
          t = Scalar(1) / (Scalar(2) * theta);
        } else {
          t = Scalar(1) / (abs(theta) + sqrt(theta * theta + Scalar(1)));
          if (theta < Scalar(0)) t = -t;
        }
        const Scalar c = Scalar(1) / sqrt(t * t + Scalar(1));
        const Scalar s = t * c;
        for (Index k = 0; k < n; ++k) {
          const Scalar akp = a(k, p);
          const Scalar akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Index k = 0; k < n; ++k) {
          const Scalar apk = a(p, k);
          const Scalar aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = Scalar(0);
        a(q, p) = Scalar(0);
        for (Index k = 0; k < n; ++k) {
          const Scalar vkp = v(k, p);
          const Scalar vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  if (sweep == max_sweeps) throw NumericError("Jacobi eigensolver did not converge");

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index i, Index j) { return a(i, i) > a(j, j); });

  SymmetricEigen<Scalar> out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  out.sweeps = sweep;
  for (Index k = 0; k < n; ++k) {
    const Index src = order[static_cast<std::size_t>(k)];
    out.values(k) = a(src, src);
    out.vectors.col(k) = v.col(src);
  }
  return out;
}

/// Flips each column so that its entry of largest magnitude is positive.
template <typename Scalar>
void canonicalize_signs(Matrix<Scalar>& columns) {
  for (Index j = 0; j < columns.cols(); ++j) {
    Index arg = 0;
    columns.col(j).cwiseAbs().maxCoeff(&arg);
    if (columns(arg, j) < Scalar(0)) columns.col(j) = -columns.col(j);
  }
}

/// Full decomposition of the empirical covariance.
template <typename Scalar>
struct PcaDecomposition {
  Vector<Scalar> mean;
  Vector<Scalar> singular_values;  // non-increasing, >= 0
  Matrix<Scalar> components;       // D x D, columns are principal axes
  Index samples = 0;

  Index dim() const { return mean.size(); }
};

/// Rows of `data` are observations.
template <typename Derived>
PcaDecomposition<typename Derived::Scalar> fit_pca(const Eigen::MatrixBase<Derived>& data) {
  using Scalar = typename Derived::Scalar;
  const Index n = data.rows();
  if (n < 2) throw DataError("PCA needs at least 2 observations");
  if (!data.allFinite()) throw DataError("PCA input contains non-finite values");

  PcaDecomposition<Scalar> out;
  out.samples = n;
  out.mean = data.colwise().mean().transpose();
  const Matrix<Scalar> centered = data.rowwise() - out.mean.transpose();
  const Matrix<Scalar> cov =
      (centered.transpose() * centered) / static_cast<Scalar>(n - 1);

  auto eig = jacobi_eigen<Scalar>(cov);
  const Scalar trace = cov.trace();
  const Scalar floor = -Scalar(1e-12) * std::max(trace, Scalar(0));
  for (Index i = 0; i < eig.values.size(); ++i) {
    if (eig.values(i) < Scalar(0)) {
      if (eig.values(i) < floor) {
        throw NumericError("covariance has a significantly negative eigenvalue");
      }
      eig.values(i) = Scalar(0);
    }
  }
  canonicalize_signs(eig.vectors);
  out.singular_values = std::move(eig.values);
  out.components = std::move(eig.vectors);
  return out;
}

/// How many components to keep. An explicit count wins over a threshold.
struct Truncation {
  std::optional<double> cev_threshold;
  std::optional<Index> components;
};

/// Count of singular values above 1e-12 of the largest; at least 1.
template <typename Scalar>
Index numerical_rank(const Vector<Scalar>& singular_values) {
  if (singular_values.size() == 0) return 0;
  const Scalar cut = Scalar(1e-12) * singular_values(0);
  Index rank = 0;
  for (Index i = 0; i < singular_values.size(); ++i)
    if (singular_values(i) > cut) ++rank;
  return std::max<Index>(rank, 1);
}

/// Smallest M whose cumulative share of the singular-value mass reaches
/// `threshold`; a threshold of 1 means the numerical rank.
template <typename Scalar>
Index components_for_cev(const Vector<Scalar>& singular_values, double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw ArgumentError("CEV threshold must lie in (0, 1]");
  }
  if (threshold >= 1.0) return numerical_rank(singular_values);
  const Scalar total = singular_values.sum();
  if (total <= Scalar(0)) return 1;
  const Scalar goal = Scalar(threshold) * total - Scalar(1e-12) * total;
  Scalar running(0);
  for (Index m = 0; m < singular_values.size(); ++m) {
    running += singular_values(m);
    if (running >= goal) return m + 1;
  }
  return singular_values.size();
}

/// The affine isometric embedding x = V_P z + mean and its left inverse.
template <typename Scalar>
struct PcaMap {
  Vector<Scalar> mean;
  Matrix<Scalar> components;  // D x M, orthonormal columns
  Vector<Scalar> singular_values;
  Scalar cev = Scalar(1);

  Index dim() const { return mean.size(); }
  Index latent_dim() const { return components.cols(); }
};

template <typename Scalar>
PcaMap<Scalar> truncate(const PcaDecomposition<Scalar>& decomposition,
                        const Truncation& target) {
  const Index d = decomposition.dim();
  if (target.cev_threshold &&
      !(*target.cev_threshold > 0.0 && *target.cev_threshold <= 1.0)) {
    throw ArgumentError("CEV threshold must lie in (0, 1]");
  }
  Index m = 0;
  if (target.components) {
    m = *target.components;
    if (m < 1 || m > d) throw ArgumentError("component count must lie in [1, D]");
  } else if (target.cev_threshold) {
    m = components_for_cev(decomposition.singular_values, *target.cev_threshold);
  } else {
    throw ArgumentError("truncation needs a CEV threshold or a component count");
  }
  PcaMap<Scalar> map;
  map.mean = decomposition.mean;
  map.components = decomposition.components.leftCols(m);
  map.singular_values = decomposition.singular_values;
  const Scalar total = decomposition.singular_values.sum();
  map.cev = total > Scalar(0) ? decomposition.singular_values.head(m).sum() / total
                              : Scalar(1);
  return map;
}

/// Latent coordinates V_P^T (x - mean). Works column-wise on a D x B batch.
template <typename Scalar, typename Derived>
Matrix<Scalar> project(const PcaMap<Scalar>& map, const Eigen::MatrixBase<Derived>& x) {
  if (x.rows() != map.dim()) throw ArgumentError("project: dimension mismatch");
  return map.components.transpose() * (x.colwise() - map.mean);
}

/// V_P z + mean. Works column-wise on an M x B batch.
template <typename Scalar, typename Derived>
Matrix<Scalar> embed(const PcaMap<Scalar>& map, const Eigen::MatrixBase<Derived>& z) {
  if (z.rows() != map.latent_dim()) throw ArgumentError("embed: dimension mismatch");
  return (map.components * z).colwise() + map.mean;
}

/// Max-norm distance of V_P^T V_P from the identity.
template <typename Scalar>
Scalar isometry_defect(const PcaMap<Scalar>& map) {
  const Index m = map.latent_dim();
  return (map.components.transpose() * map.components - Matrix<Scalar>::Identity(m, m))
      .cwiseAbs()
      .maxCoeff();
}

/// The volume term -0.5 log|det(J^T J)| of the injective change of
/// variables for the PCA embedding. Zero for an exact isometry.
template <typename Scalar>
Scalar volume_log_correction(const PcaMap<Scalar>& map) {
  using std::abs;
  using std::log;
  const Matrix<Scalar> gram = map.components.transpose() * map.components;
  return Scalar(-0.5) * log(abs(gram.determinant()));
}

}  // namespace pcflow

#endif  // PCFLOW_PCA_HPP
