#include "sparse_da/etkf.hpp"

#include <cmath>

#include "sparse_da/error.hpp"

namespace sparse_da {

Eigen::MatrixXd etkf_transform(const Eigen::MatrixXd& x, const Eigen::MatrixXd& hx,
                               const Eigen::VectorXd& y,
                               const Eigen::VectorXd& r_inv) {
  const Index ne = x.cols();
  if (ne < 2) throw DimensionError("ensemble needs at least 2 members");
  require_dims(hx.cols() == ne, "observed ensemble has the wrong member count");
  require_dims(hx.rows() == y.size() && r_inv.size() == y.size(),
               "observation sizes differ");

  const Eigen::VectorXd hx_mean = hx.rowwise().mean();
  const Eigen::MatrixXd yp = hx.colwise() - hx_mean;
  const Eigen::VectorXd d = y - hx_mean;
  const Eigen::MatrixXd ryp = r_inv.asDiagonal() * yp;

  Eigen::MatrixXd a_inv = yp.transpose() * ryp;
  a_inv.diagonal().array() += static_cast<double>(ne - 1);
  a_inv = 0.5 * (a_inv + a_inv.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a_inv);
  if (eig.info() != Eigen::Success)
    throw NumericalError("ETKF eigendecomposition failed");
  const Eigen::VectorXd lambda = eig.eigenvalues().cwiseMax(kEtkfEigenFloor);
  const Eigen::MatrixXd& v = eig.eigenvectors();

  const Eigen::VectorXd inv = lambda.cwiseInverse();
  const Eigen::VectorXd w_mean =
      v * (inv.asDiagonal() * (v.transpose() * (ryp.transpose() * d)));
  const Eigen::VectorXd isq = (static_cast<double>(ne - 1) * inv).cwiseSqrt();
  Eigen::MatrixXd t = v * isq.asDiagonal() * v.transpose();
  t.colwise() += w_mean;
  t.diagonal().array() -= 1.0;

  // x^a = mean + X'(w 1^T + W) == x + X'(w 1^T + W - I)
  const Eigen::MatrixXd xp = x.colwise() - x.rowwise().mean();
  return x + xp * t;
}

EnsembleMatrix etkf_analysis(const EnsembleMatrix& ens, const ObservationRecord& y,
                             const ObservationNetwork& net) {
  ens.require_analysable();
  net.check_state(ens.grid(), ens.n_vars());
  require_dims(y.values.size() == net.size(),
               "observation length does not match network");
  if (net.size() == 0) return ens;
  if (!(net.r() > 0.0)) throw NumericalError("ETKF needs r > 0");
  const Eigen::MatrixXd hx = apply_H(net, ens.members(), ens.grid().cells());
  const Eigen::VectorXd r_inv =
      Eigen::VectorXd::Constant(net.size(), 1.0 / (net.r() * net.r()));
  return EnsembleMatrix(ens.grid(), ens.n_vars(),
                        etkf_transform(ens.members(), hx, y.values, r_inv));
}

}  // namespace sparse_da
