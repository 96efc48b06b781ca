#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <utility>
#include <vector>

#include "sparse_da/random.hpp"

namespace sparse_da {

using Index = Eigen::Index;

/**
 * @brief Uniform Cartesian grid of cell centers.
 *
 * Cell (i, j) sits at (i*dx, j*dy) and has the flat index j*nx + i. The
 * domain is [0, nx*dx) x [0, ny*dy).
 */
struct Grid2D {
  Index nx = 1;
  Index ny = 1;
  double dx = 1.0;
  double dy = 1.0;
  bool periodic_x = true;
  bool periodic_y = true;

  /// Throws ConfigError when the invariants do not hold.
  void validate() const;

  Index cells() const { return nx * ny; }
  Index cell(Index i, Index j) const { return j * nx + i; }
  std::pair<Index, Index> ij(Index k) const { return {k % nx, k / nx}; }
  double length_x() const { return static_cast<double>(nx) * dx; }
  double length_y() const { return static_cast<double>(ny) * dy; }
  /// Cell whose center is nearest to (x, y), with periodic wrapping.
  Index nearest_cell(double x, double y) const;

  bool operator==(const Grid2D&) const = default;
};

/// Minimal-image distance between two cell centers (plain Euclidean on
/// non-periodic axes).
double torus_distance(const Grid2D& grid, Index k, Index l);

/// Signed minimal-image offset from a to b along an axis of length `period`.
double wrapped_offset(double a, double b, double period, bool periodic);

/// Mean of positions on a circle of length `period`, in [0, period).
double circular_mean(const std::vector<double>& values, double period);

/**
 * @brief A flattened multi-variable field.
 *
 * Values are stored variable-major: entry v*cells + k holds variable v at
 * cell k.
 */
class StateVector {
 public:
  StateVector() = default;
  StateVector(const Grid2D& grid, int n_vars);  // zero-filled
  StateVector(const Grid2D& grid, int n_vars, Eigen::VectorXd values);

  const Grid2D& grid() const { return grid_; }
  int n_vars() const { return n_vars_; }
  Index size() const { return values_.size(); }

  const Eigen::VectorXd& values() const { return values_; }
  Eigen::VectorXd& values() { return values_; }

  double& at(int var, Index cell) { return values_[var * grid_.cells() + cell]; }
  double at(int var, Index cell) const {
    return values_[var * grid_.cells() + cell];
  }
  auto var(int v) { return values_.segment(v * grid_.cells(), grid_.cells()); }
  auto var(int v) const {
    return values_.segment(v * grid_.cells(), grid_.cells());
  }

  bool all_finite() const { return values_.allFinite(); }

 private:
  Grid2D grid_;
  int n_vars_ = 1;
  Eigen::VectorXd values_;
};

/// Ne state vectors on one grid, stored as the columns of an N_X x Ne matrix.
class EnsembleMatrix {
 public:
  EnsembleMatrix() = default;
  EnsembleMatrix(const Grid2D& grid, int n_vars, Eigen::MatrixXd members);

  const Grid2D& grid() const { return grid_; }
  int n_vars() const { return n_vars_; }
  Index state_size() const { return members_.rows(); }
  Index size() const { return members_.cols(); }

  const Eigen::MatrixXd& members() const { return members_; }
  Eigen::MatrixXd& members() { return members_; }

  StateVector member(Index e) const {
    return StateVector(grid_, n_vars_, members_.col(e));
  }
  Eigen::VectorXd mean() const { return members_.rowwise().mean(); }
  Eigen::MatrixXd perturbations() const {
    return members_.colwise() - mean();
  }
  /// Sample covariance with the 1/(Ne-1) normalization.
  Eigen::MatrixXd covariance() const;
  /// Per-entry sample standard deviation, 1/(Ne-1) normalization.
  Eigen::VectorXd stddev() const;

  /// Throws DimensionError unless Ne >= 2.
  void require_analysable() const;

 private:
  Grid2D grid_;
  int n_vars_ = 1;
  Eigen::MatrixXd members_;
};

/// Matern-type kernel parameters: sigma^2 (1 + psi D) exp(-psi D).
struct MaternSpec {
  double sigma = 1.0;
  double psi = 1.0;

  void validate() const;
  double operator()(double distance) const;
  /// Distance at which the correlation first falls below `level`.
  double correlation_range(double level = 0.05) const;
};

/// Dense N_s x N_s covariance over the grid cells using torus_distance.
Eigen::MatrixXd matern_covariance(const Grid2D& grid, const MaternSpec& spec);

/**
 * Lower Cholesky factor of a symmetric PSD matrix. On failure, a diagonal
 * jitter of 1e-10 times the mean diagonal is added and the factorization
 * retried once; a second failure throws NonPsdError.
 */
Eigen::MatrixXd cholesky_factor(const Eigen::MatrixXd& cov);

/// mean + L z with z ~ N(0, I) drawn from `rng`.
StateVector sample_field(const StateVector& mean, const Eigen::MatrixXd& factor,
                         RngStream& rng);

}  // namespace sparse_da
