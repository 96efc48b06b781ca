#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "sparse_da/grid_field.hpp"
#include "sparse_da/observing.hpp"
#include "sparse_da/random.hpp"

namespace sparse_da {

/// Time-indexed scalar score of one replicate.
struct MetricSeries {
  std::string name;
  int rep = 0;
  std::uint64_t seed = 0;
  std::vector<int> steps;
  std::vector<double> values;

  void push(int step, double value) {
    steps.push_back(step);
    values.push_back(value);
  }
  double last() const { return values.back(); }
};

/// Euclidean norm of the difference of two mean fields.
double rmse(const Eigen::VectorXd& a, const Eigen::VectorXd& b);
double rmse(const StateVector& a, const StateVector& b);

/// Frobenius norm of sigma_kf - sigma_ens.
double fcd(const Eigen::MatrixXd& sigma_kf, const Eigen::MatrixXd& sigma_ens);

class Ecdf {
 public:
  explicit Ecdf(std::vector<double> samples);

  const std::vector<double>& sorted() const { return sorted_; }
  std::size_t size() const { return sorted_.size(); }
  /// Fraction of samples <= x.
  double operator()(double x) const;

 private:
  std::vector<double> sorted_;
};

/// Integrated squared difference between N(mu, sigma^2) and an ECDF.
double d_iq(double mu, double sigma, const Ecdf& ecdf);
/// Integrated squared difference between two ECDFs (exact).
double d_iq_ecdf(const Ecdf& a, const Ecdf& b);

struct Coverage {
  Eigen::VectorXd indicator;  // 1 where |truth - mu| <= z sigma
  double mean = 0.0;
};

Coverage coverage_probability(const Eigen::VectorXd& mu,
                              const Eigen::VectorXd& sigma,
                              const Eigen::VectorXd& truth, double z = 1.64);

/**
 * Correlation between cell k of the analysis at the previous assimilation
 * time and cell l of the forecast at the next one, for a linear propagator
 * `m` over the interval and accumulated model-error covariance `q`.
 */
double cross_time_correlation_kf(const Eigen::MatrixXd& m,
                                 const Eigen::MatrixXd& sigma_a_prev,
                                 const Eigen::MatrixXd& q, Index k, Index l);
/// Same for all l at once, given the forecast covariance at the next time.
Eigen::VectorXd cross_time_correlation_field_kf(const Eigen::MatrixXd& m,
                                                const Eigen::MatrixXd& sigma_a_prev,
                                                const Eigen::MatrixXd& sigma_f_next,
                                                Index k);
/// Sample estimate from paired members (column e of both matrices belongs to
/// member e).
double cross_time_correlation_ens(const Eigen::MatrixXd& ens_prev_a,
                                  const Eigen::MatrixXd& ens_next_f, Index k,
                                  Index l);
Eigen::VectorXd cross_time_correlation_field_ens(const Eigen::MatrixXd& ens_prev_a,
                                                 const Eigen::MatrixXd& ens_next_f,
                                                 Index k);

/// sqrt(sum_l |a_l - b_l|^2).
double ce(const Eigen::VectorXd& corr_kf, const Eigen::VectorXd& corr_ens);

/**
 * Forecast skill against observations. `hx` holds the observed ensemble
 * (N_Y x Ne) and the sums run over all network entries; every score is
 * divided by `n_locations`, the number of observed positions.
 */
double skill_bias(const Eigen::MatrixXd& hx, const Eigen::VectorXd& y,
                  Index n_locations);
double skill_mse(const Eigen::MatrixXd& hx, const Eigen::VectorXd& y,
                 Index n_locations);
/// With a single member the spread term is zero.
double skill_crps(const Eigen::MatrixXd& hx, const Eigen::VectorXd& y,
                  Index n_locations);
/// Number of distinct cells in a network.
Index distinct_locations(const ObservationNetwork& net);

/// Counts of the truth's rank within an Ne-member ensemble.
class RankHistogram {
 public:
  explicit RankHistogram(Index members);

  Index members() const { return members_; }
  const std::vector<std::int64_t>& counts() const { return counts_; }
  std::int64_t total() const;

  /// Adds one rank; ties between truth and members are broken uniformly.
  void add(const Eigen::VectorXd& ensemble_values, double truth, RngStream& rng);
  void merge(const RankHistogram& other);

  /// Pearson chi-square statistic and p-value against the uniform histogram.
  double chi_square() const;
  double p_value() const;
  /// Both end bins exceed `factor` times the mean bin count.
  bool u_shaped(double factor = 2.0) const;

 private:
  Index members_;
  std::vector<std::int64_t> counts_;
};

/**
 * Gaussian product-kernel density of 2-D points on a periodic grid,
 * evaluated at the cell centers. Bandwidth per axis is n^{-1/6} times the
 * sample standard deviation about the circular mean, floored at one cell.
 */
Eigen::VectorXd kde2d(const std::vector<double>& xs, const std::vector<double>& ys,
                      const Grid2D& grid);

}  // namespace sparse_da
