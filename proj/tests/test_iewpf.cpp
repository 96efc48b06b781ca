#include <gtest/gtest.h>

#include <cmath>

#include "sparse_da/error.hpp"
#include "sparse_da/iewpf.hpp"

using namespace sparse_da;

namespace {

/// Lower bidiagonal factor: each noise entry touches its own cell and the next.
Eigen::MatrixXd banded_factor(Index n) {
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    l(i, i) = 0.8;
    if (i > 0) l(i, i - 1) = 0.4;
  }
  return l;
}

double bisect_alpha(double misfit, double gamma, Index dim, double target, bool upper) {
  auto f = [&](double a) { return iewpf_neg_log_weight(misfit, gamma, dim, a) - target; };
  double lo = upper ? 1.0 : 1e-300, hi = upper ? 2.0 : 1.0;
  if (upper)
    while (f(hi) < 0) hi *= 2;
  else
    while (f(lo) < 0) lo *= 0.5;
  for (int i = 0; i < 400; ++i) {
    const double mid = 0.5 * (lo + hi);
    ((f(mid) < 0) == upper ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST(SolveAlpha, MemberAtTargetKeepsScale) {
  EXPECT_EQ(solve_alpha(3.5, 40.0, 50, 3.5), 1.0);
  EXPECT_EQ(solve_alpha(0.0, 60.0, 50, 0.0), 1.0);
}

TEST(SolveAlpha, MatchesBisection) {
  RngStream rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    const Index dim = 1 + static_cast<Index>(rng.below(400));
    const double gamma = dim * (0.5 + rng.uniform());
    const double misfit = 10.0 * rng.uniform();
    const double target = misfit + 5.0 * rng.uniform();
    const double alpha = solve_alpha(misfit, gamma, dim, target);
    const double oracle = bisect_alpha(misfit, gamma, dim, target, gamma >= dim);
    EXPECT_NEAR(alpha, oracle, 1e-10 * std::max(1.0, oracle)) << "trial " << trial;
    EXPECT_NEAR(iewpf_neg_log_weight(misfit, gamma, dim, alpha), target,
                1e-8 * std::max(1.0, std::abs(target)));
    if (gamma >= dim) {
      EXPECT_GE(alpha, 1.0);
    } else {
      EXPECT_LE(alpha, 1.0);
    }
  }
}

TEST(SolveAlpha, LargerGapMovesAlphaFurther) {
  for (double gamma : {80.0, 120.0}) {
    double prev = 0.0;
    for (int i = 1; i <= 50; ++i) {
      const double alpha = solve_alpha(1.0, gamma, 100, 1.0 + 0.2 * i);
      const double dev = std::abs(alpha - 1.0);
      EXPECT_GT(dev, prev);
      prev = dev;
    }
  }
}

TEST(SolveAlpha, RejectsTargetBelowMisfit) {
  EXPECT_THROW(solve_alpha(5.0, 10.0, 10, 4.0), NumericalError);
}

TEST(IewpfProposal, SMatrixIsLocalToTheSite) {
  const Index n = 10;
  const Eigen::MatrixXd l = banded_factor(n);
  const Grid2D g{n, 1, 1.0, 1.0, false, false};
  ObservationNetwork net({{3, 0}}, 0.5);
  IewpfProposal prop(l, net, n);
  const Eigen::MatrixXd s = prop.s_matrix();

  const Eigen::MatrixXd h = dense_H(net, g, 1);
  const Eigen::MatrixXd c = h * l * l.transpose() * h.transpose() + 0.25 * Eigen::MatrixXd::Identity(1, 1);
  const Eigen::MatrixXd oracle = l.transpose() * h.transpose() * c.inverse() * h * l;
  EXPECT_LT((s - oracle).cwiseAbs().maxCoeff(), 1e-14);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      const bool local = (i == 2 || i == 3) && (j == 2 || j == 3);
      if (!local) EXPECT_EQ(s(i, j), 0.0) << i << "," << j;
      else EXPECT_GT(std::abs(s(i, j)), 0.0);
    }
}

TEST(IewpfProposal, SquareRootReproducesP) {
  RngStream rng(2);
  const Index n = 12;
  const Eigen::MatrixXd l = rng.normal_matrix(n, 8);
  ObservationNetwork net({{1, 0}, {5, 0}, {9, 0}}, 0.3);
  IewpfProposal prop(l, net, n);
  Eigen::MatrixXd a(n, 8);
  for (Index i = 0; i < 8; ++i) a.col(i) = prop.apply_sqrt_p(Eigen::VectorXd::Unit(8, i));
  EXPECT_LT((a * a.transpose() - prop.p_matrix()).cwiseAbs().maxCoeff(), 1e-10);

  // P is the optimal-proposal covariance (I - K H) Q
  const Grid2D g{n, 1, 1.0, 1.0, true, true};
  const Eigen::MatrixXd h = dense_H(net, g, 1);
  const Eigen::MatrixXd q = l * l.transpose();
  const Eigen::MatrixXd k = q * h.transpose() *
                            (h * q * h.transpose() + 0.09 * Eigen::MatrixXd::Identity(3, 3)).inverse();
  EXPECT_LT((prop.p_matrix() - (q - k * h * q)).cwiseAbs().maxCoeff(), 1e-10);
  const Eigen::VectorXd d = rng.normal_vector(3);
  EXPECT_LT((prop.gain(d) - k * d).norm(), 1e-10);
}

TEST(IewpfProposal, FarFromDataPEqualsQ) {
  const Index n = 10;
  const Eigen::MatrixXd l = banded_factor(n);
  ObservationNetwork net({{3, 0}}, 0.5);
  IewpfProposal prop(l, net, n);
  const Eigen::MatrixXd p = prop.p_matrix();
  const Eigen::MatrixXd q = l * l.transpose();
  for (Index i = 0; i < n; ++i) {
    if (i >= 2 && i <= 4) continue;
    EXPECT_LT((p.row(i) - q.row(i)).cwiseAbs().maxCoeff(), 1e-15) << "row " << i;
  }
}

// With zero innovation and beta = 1 every alpha is 1, so the perturbation is
// P^{1/2}(xi + nu~) with covariance (2 - 1/m) P; far from the site P equals Q.
TEST(Iewpf, FarFromDataPerturbationsFollowModelError) {
  const Index n = 10;
  const Grid2D g{n, 1, 1.0, 1.0, false, false};
  const Eigen::MatrixXd l = banded_factor(n);
  ObservationNetwork net({{3, 0}}, 0.5);
  IewpfProposal prop(l, net, n);
  const IewpfParams params{1.0, 1.0, 1e-6};
  const int ne = 20, reps = 300;
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n, n);
  int count = 0;
  RngStream obs(3);
  for (int rep = 0; rep < reps; ++rep) {
    std::vector<RngStream> rngs;
    for (int e = 0; e < ne; ++e) rngs.emplace_back(derive_seed(11, {static_cast<std::uint64_t>(rep), static_cast<std::uint64_t>(e)}));
    EnsembleMatrix fc(g, 1, Eigen::MatrixXd::Zero(n, ne));
    const auto a = iewpf_analysis(fc, ObservationRecord{1, Eigen::VectorXd::Zero(1)}, prop, params, rngs);
    acc += a.members() * a.members().transpose();
    count += ne;
  }
  const Eigen::MatrixXd emp = acc / count;
  const Eigen::MatrixXd q = (2.0 - 1.0 / n) * l * l.transpose();
  for (Index i : {0, 1, 6, 7, 8, 9})
    for (Index j : {0, 1, 6, 7, 8, 9})
      EXPECT_NEAR(emp(i, j), q(i, j), 0.1) << i << "," << j;
}

TEST(Iewpf, ZeroInnovationIsPerturbationOnly) {
  const Index n = 8;
  const Grid2D g{n, 1, 1.0, 1.0, true, true};
  RngStream rng(4);
  const Eigen::MatrixXd l = rng.normal_matrix(n, n) * 0.3;
  ObservationNetwork net({{2, 0}, {6, 0}}, 0.4);
  IewpfProposal prop(l, net, n);
  const Eigen::VectorXd base = rng.normal_vector(n);
  EnsembleMatrix fc(g, 1, base.replicate(1, 5));
  const ObservationRecord y{1, apply_H(net, StateVector(g, 1, base))};
  const IewpfParams params{0.55, 1.0, 1e-6};

  std::vector<RngStream> rngs, replay;
  for (int e = 0; e < 5; ++e) {
    rngs.emplace_back(100 + e);
    replay.emplace_back(100 + e);
  }
  IewpfDiagnostics diag;
  const auto a = iewpf_analysis(fc, y, prop, params, rngs, &diag);
  for (int e = 0; e < 5; ++e) {
    const Eigen::VectorXd xi = replay[e].normal_vector(n);
    Eigen::VectorXd nu = replay[e].normal_vector(n);
    for (int pass = 0; pass < 2; ++pass) nu -= (nu.dot(xi) / xi.squaredNorm()) * xi;
    EXPECT_LT(std::abs(nu.dot(xi)), 1e-10 * nu.norm() * xi.norm());
    const Eigen::VectorXd expected =
        base + prop.apply_sqrt_p(std::sqrt(diag.alpha[e]) * xi + std::sqrt(0.55) * nu);
    EXPECT_LT((a.members().col(e) - expected).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Iewpf, WeightsAreEqualAfterAnalysis) {
  const Index n = 30;
  const Grid2D g{n, 1, 1.0, 1.0, true, true};
  const Eigen::MatrixXd l = cholesky_factor(matern_covariance(g, MaternSpec{0.3, 0.5}));
  ObservationNetwork net({{4, 0}, {15, 0}, {25, 0}}, 0.2);
  IewpfProposal prop(l, net, n);
  RngStream rng(5);
  for (double beta : {0.3, 0.55, 1.0}) {
    std::vector<RngStream> rngs;
    for (int e = 0; e < 25; ++e) rngs.emplace_back(derive_seed(7, {static_cast<std::uint64_t>(e)}));
    EnsembleMatrix fc(g, 1, rng.normal_matrix(n, 25));
    IewpfDiagnostics diag;
    iewpf_analysis(fc, ObservationRecord{1, rng.normal_vector(3)}, prop,
                   IewpfParams{beta, 1.0, 1e-6}, rngs, &diag);
    EXPECT_LT(diag.max_log_weight_spread, 1e-6);
    for (double lw : diag.log_weight)
      EXPECT_NEAR(-lw, diag.target, 1e-6 * std::max(1.0, std::abs(diag.target)));
    for (double a : diag.alpha) EXPECT_GT(a, 0.0);
  }
}

TEST(Iewpf, ParameterValidation) {
  EXPECT_THROW((IewpfParams{0.0, 1.0, 1e-6}.validate()), ConfigError);
  EXPECT_THROW((IewpfParams{1.5, 1.0, 1e-6}.validate()), ConfigError);
  EXPECT_THROW((IewpfParams{0.5, 1.0, 0.0}.validate()), ConfigError);
  EXPECT_NO_THROW((IewpfParams{1.0, 1.0, 1e-6}.validate()));
}

TEST(Iewpf, StreamCountMustMatch) {
  const Grid2D g{4, 1, 1.0, 1.0, true, true};
  IewpfProposal prop(Eigen::MatrixXd::Identity(4, 4), ObservationNetwork({{0, 0}}, 1.0), 4);
  std::vector<RngStream> rngs{RngStream(1)};
  EnsembleMatrix fc(g, 1, Eigen::MatrixXd::Zero(4, 3));
  EXPECT_THROW(iewpf_analysis(fc, ObservationRecord{1, Eigen::VectorXd::Zero(1)}, prop,
                              IewpfParams{}, rngs),
               DimensionError);
}
