#include "sparse_da/kf.hpp"

#include "sparse_da/error.hpp"

namespace sparse_da {

void GaussianBelief::validate() const {
  require_dims(sigma.rows() == mu.size() && sigma.cols() == mu.size(),
               "covariance shape does not match the mean");
  if (!sigma.isApprox(sigma.transpose(), 1e-12))
    throw NumericalError("covariance is not symmetric");
  if (sigma.size() > 0 && !sigma.isZero(0.0)) cholesky_factor(sigma);
}

GaussianBelief kf_forecast(const GaussianBelief& belief, const LinearOperator& m,
                           const Eigen::MatrixXd& q) {
  require_dims(belief.mu.size() == m.size(), "belief and operator sizes differ");
  require_dims(q.rows() == m.size() && q.cols() == m.size(),
               "Q shape does not match the operator");
  GaussianBelief out;
  out.mu = StateVector(belief.mu.grid(), belief.mu.n_vars(),
                       m.matrix() * belief.mu.values());
  Eigen::MatrixXd ms = m.matrix() * belief.sigma;
  Eigen::MatrixXd msm = (m.matrix() * ms.transpose()).transpose();
  out.sigma = msm + q;
  out.sigma = 0.5 * (out.sigma + out.sigma.transpose()).eval();
  return out;
}

GaussianBelief kf_analysis(const GaussianBelief& belief,
                           const ObservationRecord& y,
                           const ObservationNetwork& net) {
  const Grid2D& grid = belief.mu.grid();
  net.check_state(grid, belief.mu.n_vars());
  const Index ny = net.size();
  require_dims(y.values.size() == ny, "observation length does not match network");
  if (ny == 0) return belief;

  const Index cells = grid.cells();
  Eigen::MatrixXd sht(belief.sigma.rows(), ny);  // Sigma H^T
  for (Index i = 0; i < ny; ++i) sht.col(i) = belief.sigma.col(net.state_index(i, cells));
  Eigen::MatrixXd s(ny, ny);  // H Sigma H^T + R
  for (Index i = 0; i < ny; ++i) s.row(i) = sht.row(net.state_index(i, cells));
  s.diagonal().array() += net.r() * net.r();
  s = 0.5 * (s + s.transpose()).eval();

  Eigen::LDLT<Eigen::MatrixXd> ldlt(s);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      ldlt.vectorD().minCoeff() <= 0.0)
    throw NumericalError("singular innovation covariance");

  const Eigen::VectorXd d = y.values - apply_H(net, belief.mu);
  Eigen::MatrixXd k = ldlt.solve(sht.transpose()).transpose();  // N_X x N_Y

  GaussianBelief out;
  out.mu = StateVector(grid, belief.mu.n_vars(), belief.mu.values() + k * d);
  out.sigma = belief.sigma - k * sht.transpose();  // K S K^T == K H Sigma
  out.sigma = 0.5 * (out.sigma + out.sigma.transpose()).eval();
  return out;
}

}  // namespace sparse_da
