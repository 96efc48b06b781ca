#pragma once

#include <Eigen/Dense>

#include <vector>

#include "sparse_da/grid_field.hpp"
#include "sparse_da/observing.hpp"
#include "sparse_da/random.hpp"

namespace sparse_da {

struct IewpfParams {
  double beta = 0.55;
  double beta_max = 1.0;
  double weight_tol = 1e-6;

  void validate() const;
};

/**
 * Solve (alpha - 1) gamma - dim log(alpha) = 2 (target - misfit) for alpha.
 *
 * The root is taken on the branch that contains alpha = 1: alpha >= 1 when
 * gamma >= dim, alpha <= 1 otherwise. Requires target >= misfit.
 */
double solve_alpha(double misfit, double gamma, Index dim, double target);

/// -log w for a member moved with scale alpha (up to a shared constant).
double iewpf_neg_log_weight(double misfit, double gamma, Index dim, double alpha);

struct IewpfDiagnostics {
  std::vector<double> alpha;
  std::vector<double> misfit;       // phi_e + (beta-1)/2 |nu~_e|^2
  std::vector<double> log_weight;   // after the transform
  double target = 0.0;              // common -log w
  double max_log_weight_spread = 0.0;
};

/**
 * @brief Precomputed observation-space pieces of the optimal proposal for a
 * model-error factor L (Q = L L^T) and an observation network.
 */
class IewpfProposal {
 public:
  IewpfProposal(const Eigen::MatrixXd& factor, const ObservationNetwork& net,
                Index cells);

  Index noise_dim() const { return factor_.cols(); }
  Index state_size() const { return factor_.rows(); }
  /// B = H L.
  const Eigen::MatrixXd& b() const { return b_; }

  /// L^T H^T (H Q H^T + R)^{-1} H L.
  Eigen::MatrixXd s_matrix() const;
  /// Q H^T (H Q H^T + R)^{-1} d.
  Eigen::VectorXd gain(const Eigen::VectorXd& innovation) const;
  /// y - H x.
  Eigen::VectorXd innovation(const Eigen::VectorXd& y,
                             const Eigen::VectorXd& x) const;
  /// 1/2 d^T (H Q H^T + R)^{-1} d.
  double misfit(const Eigen::VectorXd& innovation) const;
  /// P^{1/2} z with P = L (I - S) L^T, for z of length noise_dim().
  Eigen::VectorXd apply_sqrt_p(const Eigen::VectorXd& z) const;
  /// Dense P, for tests.
  Eigen::MatrixXd p_matrix() const;

 private:
  Eigen::MatrixXd factor_;
  ObservationNetwork net_;
  Index cells_;
  Eigen::MatrixXd b_;
  Eigen::LLT<Eigen::MatrixXd> c_llt_;
  Eigen::MatrixXd w_;        // right singular vectors of C^{-1/2} B
  Eigen::VectorXd shrink_;   // 1 - sqrt(1 - s^2)
};

/**
 * Two-stage implicit equal-weights analysis.
 *
 * `forecast` holds the deterministic forecasts M(x^{n-1}_e); the proposal
 * replaces the model error of the last step. Member e draws from rngs[e].
 */
EnsembleMatrix iewpf_analysis(const EnsembleMatrix& forecast,
                              const ObservationRecord& y,
                              const IewpfProposal& proposal,
                              const IewpfParams& params,
                              std::vector<RngStream>& rngs,
                              IewpfDiagnostics* diag = nullptr);

}  // namespace sparse_da
