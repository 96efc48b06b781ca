#include "sparse_da/grid_field.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sparse_da/error.hpp"

namespace sparse_da {

void Grid2D::validate() const {
  if (nx < 1 || ny < 1) throw ConfigError("grid needs nx >= 1 and ny >= 1");
  if (!(dx > 0.0) || !(dy > 0.0))
    throw ConfigError("grid cell sizes must be positive");
}

Index Grid2D::nearest_cell(double x, double y) const {
  auto axis = [](double p, double h, Index n, bool periodic) {
    auto i = static_cast<Index>(std::llround(p / h));
    if (periodic) {
      i %= n;
      if (i < 0) i += n;
    } else {
      i = std::clamp<Index>(i, 0, n - 1);
    }
    return i;
  };
  return cell(axis(x, dx, nx, periodic_x), axis(y, dy, ny, periodic_y));
}

double wrapped_offset(double a, double b, double period, bool periodic) {
  double d = b - a;
  if (periodic) {
    d -= period * std::round(d / period);
  }
  return d;
}

double torus_distance(const Grid2D& grid, Index k, Index l) {
  if (k == l) return 0.0;
  auto [ik, jk] = grid.ij(k);
  auto [il, jl] = grid.ij(l);
  Index di = std::abs(ik - il);
  Index dj = std::abs(jk - jl);
  if (grid.periodic_x) di = std::min(di, grid.nx - di);
  if (grid.periodic_y) dj = std::min(dj, grid.ny - dj);
  return std::hypot(static_cast<double>(di) * grid.dx,
                    static_cast<double>(dj) * grid.dy);
}

double circular_mean(const std::vector<double>& values, double period) {
  if (values.empty()) throw DimensionError("circular mean of no values");
  const double k = 2.0 * M_PI / period;
  double s = 0.0, c = 0.0;
  for (double v : values) {
    s += std::sin(k * v);
    c += std::cos(k * v);
  }
  double m = std::atan2(s, c) / k;
  if (m < 0.0) m += period;
  if (m >= period) m -= period;
  return m;
}

StateVector::StateVector(const Grid2D& grid, int n_vars)
    : StateVector(grid, n_vars, Eigen::VectorXd::Zero(n_vars * grid.cells())) {}

StateVector::StateVector(const Grid2D& grid, int n_vars, Eigen::VectorXd values)
    : grid_(grid), n_vars_(n_vars), values_(std::move(values)) {
  grid_.validate();
  if (n_vars_ < 1) throw ConfigError("state needs at least one variable");
  require_dims(values_.size() == n_vars_ * grid_.cells(),
               "state vector length does not match n_vars * cells");
}

EnsembleMatrix::EnsembleMatrix(const Grid2D& grid, int n_vars,
                               Eigen::MatrixXd members)
    : grid_(grid), n_vars_(n_vars), members_(std::move(members)) {
  grid_.validate();
  require_dims(members_.rows() == n_vars_ * grid_.cells(),
               "ensemble rows do not match n_vars * cells");
  require_dims(members_.cols() >= 1, "ensemble needs at least one member");
}

Eigen::MatrixXd EnsembleMatrix::covariance() const {
  require_analysable();
  Eigen::MatrixXd a = perturbations();
  return (a * a.transpose()) / static_cast<double>(size() - 1);
}

Eigen::VectorXd EnsembleMatrix::stddev() const {
  require_analysable();
  Eigen::MatrixXd a = perturbations();
  return (a.rowwise().squaredNorm() / static_cast<double>(size() - 1))
      .cwiseSqrt();
}

void EnsembleMatrix::require_analysable() const {
  if (size() < 2) throw DimensionError("ensemble needs at least 2 members");
}

void MaternSpec::validate() const {
  if (!(sigma >= 0.0)) throw ConfigError("Matern sigma must be >= 0");
  if (!(psi > 0.0)) throw ConfigError("Matern psi must be > 0");
}

double MaternSpec::operator()(double distance) const {
  const double pd = psi * distance;
  return sigma * sigma * (1.0 + pd) * std::exp(-pd);
}

double MaternSpec::correlation_range(double level) const {
  // (1 + x) e^{-x} is decreasing on x > 0; bisection on x = psi * D.
  double lo = 0.0, hi = 1.0;
  auto corr = [](double x) { return (1.0 + x) * std::exp(-x); };
  while (corr(hi) > level) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    (corr(mid) > level ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi) / psi;
}

Eigen::MatrixXd matern_covariance(const Grid2D& grid, const MaternSpec& spec) {
  grid.validate();
  spec.validate();
  const Index n = grid.cells();
  Eigen::MatrixXd cov(n, n);
  for (Index k = 0; k < n; ++k) {
    cov(k, k) = spec.sigma * spec.sigma;
    for (Index l = k + 1; l < n; ++l) {
      const double c = spec(torus_distance(grid, k, l));
      cov(k, l) = c;
      cov(l, k) = c;
    }
  }
  return cov;
}

Eigen::MatrixXd cholesky_factor(const Eigen::MatrixXd& cov) {
  require_dims(cov.rows() == cov.cols(), "covariance must be square");
  const Index n = cov.rows();
  if (n == 0) return {};
  if (cov.isZero(0.0)) return Eigen::MatrixXd::Zero(n, n);
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() == Eigen::Success) return llt.matrixL();

  const double jitter = 1e-10 * cov.diagonal().mean();
  Eigen::MatrixXd bumped = cov;
  bumped.diagonal().array() += jitter;
  llt.compute(bumped);
  if (llt.info() == Eigen::Success) return llt.matrixL();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov, Eigen::EigenvaluesOnly);
  std::ostringstream msg;
  msg << "covariance is not positive semi-definite (smallest eigenvalue "
      << eig.eigenvalues().minCoeff() << ")";
  throw NonPsdError(msg.str());
}

StateVector sample_field(const StateVector& mean, const Eigen::MatrixXd& factor,
                         RngStream& rng) {
  require_dims(factor.rows() == mean.size(),
               "covariance factor rows do not match the state size");
  Eigen::VectorXd z = rng.normal_vector(factor.cols());
  return StateVector(mean.grid(), mean.n_vars(), mean.values() + factor * z);
}

}  // namespace sparse_da
