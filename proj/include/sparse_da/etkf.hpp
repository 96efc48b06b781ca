#pragma once

#include <Eigen/Dense>

#include "sparse_da/grid_field.hpp"
#include "sparse_da/observing.hpp"

namespace sparse_da {

/// Eigenvalues of (Ne-1) I + (HX')^T R^{-1} HX' are clipped here.
inline constexpr double kEtkfEigenFloor = 1e-12;

/**
 * Square-root ensemble transform on raw matrices.
 *
 * @param x      ensemble (rows are state entries, columns members)
 * @param hx     observed ensemble H X (N_Y x Ne)
 * @param y      observations
 * @param r_inv  diagonal of R^{-1}
 * @return analysis ensemble with the same shape as `x`
 */
Eigen::MatrixXd etkf_transform(const Eigen::MatrixXd& x, const Eigen::MatrixXd& hx,
                               const Eigen::VectorXd& y,
                               const Eigen::VectorXd& r_inv);

EnsembleMatrix etkf_analysis(const EnsembleMatrix& ens, const ObservationRecord& y,
                             const ObservationNetwork& net);

}  // namespace sparse_da
