#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <optional>

#include "sparse_da/grid_field.hpp"
#include "sparse_da/random.hpp"

namespace sparse_da {

/// Advection-diffusion parameters for dc/dt = div(d grad c) - v.grad c + zeta c.
struct AdvDiffConfig {
  double d = 0.25;
  double vx = 1.0;
  double vy = 0.1;
  double zeta = -1e-4;
  double dt = 0.01;

  /// Throws ConfigError naming the violated stability number.
  void validate(const Grid2D& grid) const;
};

/**
 * @brief One model step x -> M x stored as a row-major sparse matrix.
 */
class LinearOperator {
 public:
  using Sparse = Eigen::SparseMatrix<double, Eigen::RowMajor>;

  LinearOperator() = default;
  LinearOperator(const Grid2D& grid, Sparse matrix);

  const Grid2D& grid() const { return grid_; }
  Index size() const { return matrix_.rows(); }
  const Sparse& matrix() const { return matrix_; }
  Eigen::MatrixXd dense() const { return Eigen::MatrixXd(matrix_); }

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;

 private:
  Grid2D grid_;
  Sparse matrix_;
};

/// Forward-Euler step with central differences and periodic wrap.
LinearOperator build_advdiff_operator(const Grid2D& grid,
                                      const AdvDiffConfig& cfg);

/// Returns M x, plus the noise when given.
StateVector step_linear(const LinearOperator& op, const StateVector& x,
                        const StateVector* noise = nullptr);

/// Shallow-water parameters in SI units. Variables are (eta, hu, hv).
struct SweConfig {
  double H_depth = 230.0;
  double g = 9.81;
  double f = 1.2e-4;
  double dx = 11000.0;
  double dy = 11100.0;
  double dt_num = 30.0;

  void validate() const;
};

namespace swe {
inline constexpr int kEta = 0;
inline constexpr int kHu = 1;
inline constexpr int kHv = 2;
}  // namespace swe

/**
 * Advance (eta, hu, hv) by n_substeps explicit Euler steps of a first-order
 * central-upwind finite-volume scheme with Coriolis source terms.
 *
 * The mass flux diffuses the jump of h corrected by the geostrophic
 * pressure difference, so geostrophically balanced states that vary in one
 * direction only are discrete steady states.
 */
StateVector step_swe(const SweConfig& cfg, const StateVector& state,
                     int n_substeps);

/// Zonal double jet in discrete geostrophic balance with mean(eta) == 0.
struct JetSpec {
  double speed = 2.0;         // peak |u| (m/s)
  double width = 100000.0;    // e-folding half-width (m)
  double south_center = 0.25; // fraction of Ly; the north jet sits at +0.5
};

StateVector balanced_jet(const Grid2D& grid, const SweConfig& cfg,
                         const JetSpec& jet);

enum class ModelErrorKind { matern_direct, balanced_swe };

struct ModelErrorSpec {
  ModelErrorKind kind = ModelErrorKind::matern_direct;
  /// Marginal std and decay for matern_direct; for balanced_swe only sigma
  /// (the std of the coarse eta perturbation) is used.
  MaternSpec matern{0.125, 7.0};
  /// SOAR length scale for balanced_swe (same units as the grid).
  double soar_length = 40000.0;
  int coarse_factor = 5;
  double interval = 1.0;

  void validate() const;
};

/**
 * @brief Model error nu ~ N(0, Q) represented by a factor Q^{1/2}.
 *
 * For matern_direct the factor is the Cholesky factor of the Matern
 * covariance. For balanced_swe it is the linear map from coarse white noise
 * to (eta, hu, hv): SOAR smoothing, bilinear projection and geostrophic
 * balance. Both are available as an operator and as a dense matrix.
 */
class ModelError {
 public:
  ModelError() = default;
  ModelError(const ModelErrorSpec& spec, const Grid2D& grid,
             const std::optional<SweConfig>& cfg = std::nullopt);

  const ModelErrorSpec& spec() const { return spec_; }
  const Grid2D& grid() const { return grid_; }
  int n_vars() const { return n_vars_; }
  Index state_size() const { return n_vars_ * grid_.cells(); }
  Index noise_dim() const { return noise_dim_; }

  /// Q^{1/2} z for z of length noise_dim().
  Eigen::VectorXd apply(const Eigen::VectorXd& z) const;
  Eigen::MatrixXd apply(const Eigen::MatrixXd& z) const;
  StateVector sample(RngStream& rng) const;

  /// Dense N_X x noise_dim factor.
  const Eigen::MatrixXd& factor() const { return factor_; }

  /// Coarse-grid eta field -> (eta, hu, hv); balanced_swe only.
  Eigen::VectorXd project_coarse_eta(const Eigen::VectorXd& coarse) const;

 private:
  Eigen::VectorXd apply_balanced(const Eigen::VectorXd& z) const;

  ModelErrorSpec spec_;
  Grid2D grid_;
  std::optional<SweConfig> swe_;
  int n_vars_ = 1;
  Index noise_dim_ = 0;
  Grid2D coarse_;
  Eigen::MatrixXd smoother_;  // coarse x coarse SOAR weights, row-normalized
  Eigen::MatrixXd factor_;
};

/// One draw of the model error.
StateVector sample_model_error(const ModelErrorSpec& spec, const Grid2D& grid,
                               const std::optional<SweConfig>& cfg,
                               RngStream& rng);

/// Dense Q. Refuses state sizes above `max_size` (ConfigError).
Eigen::MatrixXd model_error_covariance(
    const ModelErrorSpec& spec, const Grid2D& grid,
    const std::optional<SweConfig>& cfg = std::nullopt, Index max_size = 6000);

/// Balanced geostrophic momenta (hu, hv) for an eta field, central differences.
void geostrophic_momentum(const Grid2D& grid, const SweConfig& cfg,
                          const Eigen::Ref<const Eigen::VectorXd>& eta,
                          Eigen::Ref<Eigen::VectorXd> hu,
                          Eigen::Ref<Eigen::VectorXd> hv);

}  // namespace sparse_da
