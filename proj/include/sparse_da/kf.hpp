#pragma once

#include <Eigen/Dense>

#include "sparse_da/grid_field.hpp"
#include "sparse_da/models.hpp"
#include "sparse_da/observing.hpp"

namespace sparse_da {

/// Mean and dense covariance of a Gaussian state distribution.
struct GaussianBelief {
  StateVector mu;
  Eigen::MatrixXd sigma;

  /// Throws on shape mismatch or asymmetric/non-PSD covariance.
  void validate() const;
};

/// mu' = M mu, Sigma' = M Sigma M^T + Q (symmetrized).
GaussianBelief kf_forecast(const GaussianBelief& belief, const LinearOperator& m,
                           const Eigen::MatrixXd& q);

/**
 * Kalman analysis with K = Sigma H^T S^{-1}, S = H Sigma H^T + R.
 * The covariance update is Sigma - K S K^T, symmetrized.
 */
GaussianBelief kf_analysis(const GaussianBelief& belief,
                           const ObservationRecord& y,
                           const ObservationNetwork& net);

}  // namespace sparse_da
