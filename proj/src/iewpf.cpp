#include "sparse_da/iewpf.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sparse_da/error.hpp"

namespace sparse_da {

void IewpfParams::validate() const {
  if (!(beta_max > 0.0)) throw ConfigError("beta_max must be > 0");
  if (!(beta > 0.0 && beta <= beta_max))
    throw ConfigError("beta must lie in (0, beta_max]");
  if (!(weight_tol > 0.0)) throw ConfigError("weight_tol must be > 0");
}

double iewpf_neg_log_weight(double misfit, double gamma, Index dim, double alpha) {
  return misfit + 0.5 * (alpha - 1.0) * gamma -
         0.5 * static_cast<double>(dim) * std::log(alpha);
}

double solve_alpha(double misfit, double gamma, Index dim, double target) {
  if (!(gamma >= 0.0) || dim < 0) throw ConfigError("invalid alpha-equation terms");
  double c = 2.0 * (target - misfit);
  const double scale = std::max(1.0, std::abs(target));
  if (c < 0.0) {
    if (c < -1e-12 * scale) throw NumericalError("alpha target lies below the member misfit");
    c = 0.0;
  }
  if (c == 0.0) return 1.0;
  const double m = static_cast<double>(dim);
  if (dim == 0) {
    if (gamma == 0.0) throw NumericalError("alpha equation has no solution");
    return 1.0 + c / gamma;
  }

  // h(t) = (e^t - 1) gamma - m t - c with alpha = e^t; convex, h(0) = -c < 0
  auto h = [&](double t) { return std::expm1(t) * gamma - m * t - c; };
  auto dh = [&](double t) { return gamma * std::exp(t) - m; };
  const bool upper = gamma >= m;
  double lo, hi;
  if (upper) {
    lo = 0.0;
    hi = 1.0;
    while (h(hi) < 0.0) {
      hi *= 2.0;
      if (hi > 1e3) throw NumericalError("alpha bracketing failed");
    }
  } else {
    hi = 0.0;
    lo = -1.0;
    while (h(lo) < 0.0) {
      lo *= 2.0;
      if (lo < -1e6) throw NumericalError("alpha bracketing failed");
    }
  }

  double t = upper ? hi : lo;
  for (int it = 0; it < 200; ++it) {
    const double ht = h(t);
    if (std::abs(ht) <= 1e-13 * std::max(1.0, c)) break;
    // keep the bracket [lo, hi] with h(lo) and h(hi) of opposite sign
    if ((ht > 0.0) == upper) {
      hi = t;
    } else {
      lo = t;
    }
    double next = t - ht / dh(t);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - t) <= 1e-15 * std::max(1.0, std::abs(t))) {
      t = next;
      break;
    }
    t = next;
  }
  const double residual = h(t);
  if (!(std::abs(residual) <= 1e-8 * std::max(1.0, c))) {
    std::ostringstream msg;
    msg << "alpha solve did not converge (residual " << residual << ")";
    throw NumericalError(msg.str());
  }
  return std::exp(t);
}

IewpfProposal::IewpfProposal(const Eigen::MatrixXd& factor,
                             const ObservationNetwork& net, Index cells)
    : factor_(factor), net_(net), cells_(cells) {
  const Index ny = net.size();
  b_.resize(ny, factor_.cols());
  for (Index i = 0; i < ny; ++i) {
    const Index row = net.state_index(i, cells);
    require_dims(row < factor_.rows(), "observation site lies outside the state");
    b_.row(i) = factor_.row(row);
  }
  Eigen::MatrixXd c = b_ * b_.transpose();
  c.diagonal().array() += net.r() * net.r();
  c_llt_.compute(c);
  if (c_llt_.info() != Eigen::Success)
    throw NumericalError("H Q H^T + R is singular");

  const Eigen::MatrixXd t = c_llt_.matrixL().solve(b_);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(t, Eigen::ComputeThinV);
  w_ = svd.matrixV();
  const Eigen::VectorXd s = svd.singularValues();
  shrink_.resize(s.size());
  for (Index i = 0; i < s.size(); ++i)
    shrink_[i] = 1.0 - std::sqrt(std::max(0.0, 1.0 - s[i] * s[i]));
}

Eigen::MatrixXd IewpfProposal::s_matrix() const {
  const Eigen::MatrixXd t = c_llt_.matrixL().solve(b_);
  return t.transpose() * t;
}

Eigen::VectorXd IewpfProposal::gain(const Eigen::VectorXd& innovation) const {
  require_dims(innovation.size() == b_.rows(), "innovation length mismatch");
  return factor_ * (b_.transpose() * c_llt_.solve(innovation));
}

double IewpfProposal::misfit(const Eigen::VectorXd& innovation) const {
  require_dims(innovation.size() == b_.rows(), "innovation length mismatch");
  return 0.5 * innovation.dot(c_llt_.solve(innovation));
}

Eigen::VectorXd IewpfProposal::apply_sqrt_p(const Eigen::VectorXd& z) const {
  require_dims(z.size() == noise_dim(), "noise vector has the wrong length");
  const Eigen::VectorXd proj = shrink_.cwiseProduct(w_.transpose() * z);
  return factor_ * (z - w_ * proj);
}

Eigen::MatrixXd IewpfProposal::p_matrix() const {
  Eigen::MatrixXd inner = -s_matrix();
  inner.diagonal().array() += 1.0;
  Eigen::MatrixXd p = factor_ * inner * factor_.transpose();
  return 0.5 * (p + p.transpose());
}

Eigen::VectorXd IewpfProposal::innovation(const Eigen::VectorXd& y,
                                          const Eigen::VectorXd& x) const {
  require_dims(y.size() == b_.rows(), "observation length mismatch");
  Eigen::VectorXd d(y.size());
  for (Index i = 0; i < y.size(); ++i) d[i] = y[i] - x[net_.state_index(i, cells_)];
  return d;
}

EnsembleMatrix iewpf_analysis(const EnsembleMatrix& forecast,
                              const ObservationRecord& y,
                              const IewpfProposal& proposal,
                              const IewpfParams& params,
                              std::vector<RngStream>& rngs,
                              IewpfDiagnostics* diag) {
  params.validate();
  const Index ne = forecast.size();
  require_dims(static_cast<Index>(rngs.size()) == ne,
               "need one random stream per member");
  require_dims(forecast.state_size() == proposal.state_size(),
               "ensemble does not match the proposal");
  const Index m = proposal.noise_dim();

  Eigen::MatrixXd x = forecast.members();
  std::vector<Eigen::VectorXd> xi(ne), nu(ne);
  IewpfDiagnostics out;
  out.alpha.resize(ne);
  out.misfit.resize(ne);
  out.log_weight.resize(ne);

  std::vector<double> gamma(ne);
  for (Index e = 0; e < ne; ++e) {
    const Eigen::VectorXd d = proposal.innovation(y.values, x.col(e));
    x.col(e) += proposal.gain(d);
    xi[e] = rngs[e].normal_vector(m);
    nu[e] = rngs[e].normal_vector(m);
    gamma[e] = xi[e].squaredNorm();
    if (gamma[e] > 0.0) {
      // two Gram-Schmidt passes keep the residual overlap at rounding level
      for (int pass = 0; pass < 2; ++pass)
        nu[e] -= (nu[e].dot(xi[e]) / gamma[e]) * xi[e];
    }
    out.misfit[e] =
        proposal.misfit(d) + 0.5 * (params.beta - 1.0) * nu[e].squaredNorm();
  }

  out.target = *std::max_element(out.misfit.begin(), out.misfit.end());
  const double scale = std::max(1.0, std::abs(out.target));
  for (Index e = 0; e < ne; ++e) {
    try {
      out.alpha[e] = solve_alpha(out.misfit[e], gamma[e], m, out.target);
    } catch (const NumericalError& err) {
      throw NumericalError("IEWPF member " + std::to_string(e) + ": " + err.what());
    }
    const double nlw = iewpf_neg_log_weight(out.misfit[e], gamma[e], m, out.alpha[e]);
    out.log_weight[e] = -nlw;
    out.max_log_weight_spread =
        std::max(out.max_log_weight_spread, std::abs(nlw - out.target) / scale);
    const Eigen::VectorXd z =
        std::sqrt(out.alpha[e]) * xi[e] + std::sqrt(params.beta) * nu[e];
    x.col(e) += proposal.apply_sqrt_p(z);
  }
  if (out.max_log_weight_spread > params.weight_tol) {
    std::ostringstream msg;
    msg << "IEWPF weights not equal: relative log-weight spread "
        << out.max_log_weight_spread;
    throw NumericalError(msg.str());
  }
  if (diag) *diag = std::move(out);
  return EnsembleMatrix(forecast.grid(), forecast.n_vars(), std::move(x));
}

}  // namespace sparse_da
