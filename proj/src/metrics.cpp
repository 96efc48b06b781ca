#include "sparse_da/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <boost/math/distributions/chi_squared.hpp>

#include "sparse_da/error.hpp"

namespace sparse_da {

double rmse(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  require_dims(a.size() == b.size(), "fields have different sizes");
  return (a - b).norm();
}

double rmse(const StateVector& a, const StateVector& b) {
  require_dims(a.grid() == b.grid() && a.n_vars() == b.n_vars(),
               "fields live on different grids");
  return rmse(a.values(), b.values());
}

double fcd(const Eigen::MatrixXd& sigma_kf, const Eigen::MatrixXd& sigma_ens) {
  require_dims(sigma_kf.rows() == sigma_ens.rows() &&
                   sigma_kf.cols() == sigma_ens.cols(),
               "covariances have different shapes");
  return (sigma_kf - sigma_ens).norm();
}

Ecdf::Ecdf(std::vector<double> samples) : sorted_(std::move(samples)) {
  if (sorted_.empty()) throw DimensionError("ECDF needs at least one sample");
  std::sort(sorted_.begin(), sorted_.end());
}

double Ecdf::operator()(double x) const {
  const auto it = std::upper_bound(sorted_.begin(), sorted_.end(), x);
  return static_cast<double>(it - sorted_.begin()) /
         static_cast<double>(sorted_.size());
}

double d_iq(double mu, double sigma, const Ecdf& ecdf) {
  if (!(sigma > 0.0)) throw ConfigError("d_iq needs sigma > 0");
  const auto& s = ecdf.sorted();
  const double a = std::min(mu - 8.0 * sigma, s.front());
  const double b = std::max(mu + 8.0 * sigma, s.back());
  constexpr int kPoints = 4001;

  std::vector<double> t;
  t.reserve(kPoints + s.size());
  for (int i = 0; i < kPoints; ++i)
    t.push_back(a + (b - a) * static_cast<double>(i) / (kPoints - 1));
  t.insert(t.end(), s.begin(), s.end());
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());

  auto phi = [&](double x) {
    return 0.5 * std::erfc(-(x - mu) / (sigma * M_SQRT2));
  };
  const double n = static_cast<double>(s.size());
  std::size_t below = 0;  // samples <= current left end
  double total = 0.0;
  double p_left = phi(t.front());
  for (std::size_t i = 0; i + 1 < t.size(); ++i) {
    while (below < s.size() && s[below] <= t[i]) ++below;
    const double f = static_cast<double>(below) / n;  // constant on [t_i, t_i+1)
    const double p_right = phi(t[i + 1]);
    const double l = p_left - f, r = p_right - f;
    total += 0.5 * (t[i + 1] - t[i]) * (l * l + r * r);
    p_left = p_right;
  }
  return total;
}

double d_iq_ecdf(const Ecdf& a, const Ecdf& b) {
  std::vector<double> t = a.sorted();
  t.insert(t.end(), b.sorted().begin(), b.sorted().end());
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < t.size(); ++i) {
    const double diff = a(t[i]) - b(t[i]);
    total += diff * diff * (t[i + 1] - t[i]);
  }
  return total;
}

Coverage coverage_probability(const Eigen::VectorXd& mu,
                              const Eigen::VectorXd& sigma,
                              const Eigen::VectorXd& truth, double z) {
  require_dims(mu.size() == sigma.size() && mu.size() == truth.size(),
               "coverage inputs have different sizes");
  if (mu.size() == 0) throw DimensionError("coverage of an empty field");
  if (!(sigma.minCoeff() > 0.0)) throw ConfigError("coverage needs sigma > 0");
  Coverage out;
  out.indicator.resize(mu.size());
  for (Index k = 0; k < mu.size(); ++k)
    out.indicator[k] = std::abs(truth[k] - mu[k]) <= z * sigma[k] ? 1.0 : 0.0;
  out.mean = out.indicator.mean();
  return out;
}

double cross_time_correlation_kf(const Eigen::MatrixXd& m,
                                 const Eigen::MatrixXd& sigma_a_prev,
                                 const Eigen::MatrixXd& q, Index k, Index l) {
  const Index n = sigma_a_prev.rows();
  require_dims(m.rows() == n && m.cols() == n && q.rows() == n && q.cols() == n,
               "propagator and covariances have different shapes");
  const Eigen::VectorXd ms_l = sigma_a_prev * m.row(l).transpose();  // (Sigma M^T)_{:,l}
  const double cov = ms_l[k];
  const double var_f = m.row(l).dot(ms_l) + q(l, l);
  const double var_a = sigma_a_prev(k, k);
  if (!(var_a > 0.0) || !(var_f > 0.0))
    throw NumericalError("cross-time correlation needs positive variances");
  return cov / std::sqrt(var_a * var_f);
}

Eigen::VectorXd cross_time_correlation_field_kf(const Eigen::MatrixXd& m,
                                                const Eigen::MatrixXd& sigma_a_prev,
                                                const Eigen::MatrixXd& sigma_f_next,
                                                Index k) {
  const Index n = sigma_a_prev.rows();
  require_dims(m.rows() == n && sigma_f_next.rows() == n,
               "propagator and covariances have different shapes");
  const Eigen::VectorXd cov = m * sigma_a_prev.col(k);  // Cov(x_k^{n-1}, x^n)
  const double var_a = sigma_a_prev(k, k);
  if (!(var_a > 0.0) || !(sigma_f_next.diagonal().minCoeff() > 0.0))
    throw NumericalError("cross-time correlation needs positive variances");
  return cov.cwiseQuotient(sigma_f_next.diagonal().cwiseSqrt()) / std::sqrt(var_a);
}

double cross_time_correlation_ens(const Eigen::MatrixXd& ens_prev_a,
                                  const Eigen::MatrixXd& ens_next_f, Index k,
                                  Index l) {
  return cross_time_correlation_field_ens(ens_prev_a, ens_next_f, k)[l];
}

Eigen::VectorXd cross_time_correlation_field_ens(const Eigen::MatrixXd& ens_prev_a,
                                                 const Eigen::MatrixXd& ens_next_f,
                                                 Index k) {
  require_dims(ens_prev_a.cols() == ens_next_f.cols(),
               "ensembles have different member counts");
  const Index ne = ens_prev_a.cols();
  if (ne < 2) throw DimensionError("correlation needs at least 2 members");
  const Eigen::RowVectorXd a = ens_prev_a.row(k).array() - ens_prev_a.row(k).mean();
  const Eigen::MatrixXd f = ens_next_f.colwise() - ens_next_f.rowwise().mean();
  const double sa = a.norm();
  const Eigen::VectorXd sf = f.rowwise().norm();
  if (!(sa > 0.0) || !(sf.minCoeff() > 0.0))
    throw NumericalError("cross-time correlation needs positive variances");
  // the 1/(Ne-1) factors of covariance and the two std estimates cancel
  return (f * a.transpose()).cwiseQuotient(sf) / sa;
}

double ce(const Eigen::VectorXd& corr_kf, const Eigen::VectorXd& corr_ens) {
  require_dims(corr_kf.size() == corr_ens.size(), "fields have different sizes");
  return (corr_kf - corr_ens).norm();
}

namespace {

void check_skill(const Eigen::MatrixXd& hx, const Eigen::VectorXd& y,
                 Index n_locations) {
  require_dims(hx.rows() == y.size(), "observed ensemble and data differ in size");
  if (hx.cols() < 1) throw DimensionError("skill scores need members");
  if (n_locations < 1) throw ConfigError("skill scores need n_locations >= 1");
}

}  // namespace

double skill_bias(const Eigen::MatrixXd& hx, const Eigen::VectorXd& y,
                  Index n_locations) {
  check_skill(hx, y, n_locations);
  return (hx.rowwise().mean() - y).sum() / static_cast<double>(n_locations);
}

double skill_mse(const Eigen::MatrixXd& hx, const Eigen::VectorXd& y,
                 Index n_locations) {
  check_skill(hx, y, n_locations);
  return (hx.colwise() - y).squaredNorm() /
         (static_cast<double>(hx.cols()) * static_cast<double>(n_locations));
}

double skill_crps(const Eigen::MatrixXd& hx, const Eigen::VectorXd& y,
                  Index n_locations) {
  check_skill(hx, y, n_locations);
  const Index ne = hx.cols();
  const double n = static_cast<double>(ne);
  double total = 0.0;
  std::vector<double> v(static_cast<std::size_t>(ne));
  for (Index i = 0; i < hx.rows(); ++i) {
    double abs_err = 0.0;
    for (Index e = 0; e < ne; ++e) {
      v[e] = hx(i, e);
      abs_err += std::abs(v[e] - y[i]);
    }
    // sum_e sum_k |v_e - v_k| = 2 sum_i (2i - n + 1) v_(i) over sorted values
    std::sort(v.begin(), v.end());
    double pair = 0.0;
    for (Index e = 0; e < ne; ++e)
      pair += (2.0 * static_cast<double>(e) - n + 1.0) * v[e];
    pair *= 2.0;
    total += abs_err / n - pair / (2.0 * n * n);
  }
  return total / static_cast<double>(n_locations);
}

Index distinct_locations(const ObservationNetwork& net) {
  std::set<Index> cells;
  for (const auto& s : net.sites()) cells.insert(s.cell);
  return static_cast<Index>(cells.size());
}

RankHistogram::RankHistogram(Index members)
    : members_(members), counts_(static_cast<std::size_t>(members + 1), 0) {
  if (members < 1) throw ConfigError("rank histogram needs at least one member");
}

std::int64_t RankHistogram::total() const {
  std::int64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

void RankHistogram::add(const Eigen::VectorXd& ensemble_values, double truth,
                        RngStream& rng) {
  require_dims(ensemble_values.size() == members_,
               "rank histogram member count changed");
  Index below = 0, ties = 0;
  for (Index e = 0; e < members_; ++e) {
    if (ensemble_values[e] < truth) {
      ++below;
    } else if (ensemble_values[e] == truth) {
      ++ties;
    }
  }
  if (ties > 0) below += static_cast<Index>(rng.below(static_cast<std::uint64_t>(ties + 1)));
  ++counts_[static_cast<std::size_t>(below)];
}

void RankHistogram::merge(const RankHistogram& other) {
  require_dims(other.members_ == members_, "rank histograms differ in size");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

double RankHistogram::chi_square() const {
  const double expected =
      static_cast<double>(total()) / static_cast<double>(counts_.size());
  if (!(expected > 0.0)) throw NumericalError("rank histogram is empty");
  double chi = 0.0;
  for (auto c : counts_) {
    const double d = static_cast<double>(c) - expected;
    chi += d * d / expected;
  }
  return chi;
}

double RankHistogram::p_value() const {
  boost::math::chi_squared dist(static_cast<double>(counts_.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, chi_square()));
}

bool RankHistogram::u_shaped(double factor) const {
  const double mean =
      static_cast<double>(total()) / static_cast<double>(counts_.size());
  return static_cast<double>(counts_.front()) > factor * mean &&
         static_cast<double>(counts_.back()) > factor * mean;
}

Eigen::VectorXd kde2d(const std::vector<double>& xs, const std::vector<double>& ys,
                      const Grid2D& grid) {
  require_dims(xs.size() == ys.size(), "x and y coordinate counts differ");
  if (xs.size() < 2) throw DimensionError("kde2d needs at least 2 points");
  grid.validate();
  const double lx = grid.length_x(), ly = grid.length_y();
  const double n = static_cast<double>(xs.size());

  auto bandwidth = [&](const std::vector<double>& p, double len, bool periodic,
                       double cell) {
    const double c = periodic ? circular_mean(p, len) : [&] {
      double s = 0.0;
      for (double v : p) s += v;
      return s / n;
    }();
    double var = 0.0;
    for (double v : p) {
      const double d = wrapped_offset(c, v, len, periodic);
      var += d * d;
    }
    const double sd = std::sqrt(var / (n - 1.0));
    return std::max(std::pow(n, -1.0 / 6.0) * sd, cell);
  };
  const double hx = bandwidth(xs, lx, grid.periodic_x, grid.dx);
  const double hy = bandwidth(ys, ly, grid.periodic_y, grid.dy);

  // separable kernel: per point, a 1-D profile along each axis
  Eigen::VectorXd density = Eigen::VectorXd::Zero(grid.cells());
  Eigen::VectorXd kx(grid.nx), ky(grid.ny);
  const double norm = 1.0 / (2.0 * M_PI * hx * hy * n);
  auto profile = [](Eigen::VectorXd& out, double p, double h, double step,
                    double len, bool periodic) {
    for (Index i = 0; i < out.size(); ++i) {
      const double x = static_cast<double>(i) * step;
      double s = 0.0;
      if (periodic) {
        const double d = wrapped_offset(p, x, len, true);
        // images keep the kernel mass on the torus
        for (int img = -3; img <= 3; ++img) {
          const double di = d + img * len;
          s += std::exp(-0.5 * di * di / (h * h));
        }
      } else {
        const double d = x - p;
        s = std::exp(-0.5 * d * d / (h * h));
      }
      out[i] = s;
    }
  };
  for (std::size_t p = 0; p < xs.size(); ++p) {
    profile(kx, xs[p], hx, grid.dx, lx, grid.periodic_x);
    profile(ky, ys[p], hy, grid.dy, ly, grid.periodic_y);
    for (Index j = 0; j < grid.ny; ++j)
      density.segment(j * grid.nx, grid.nx) += ky[j] * kx;
  }
  return density * norm;
}

}  // namespace sparse_da
