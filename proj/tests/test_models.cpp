#include <gtest/gtest.h>

#include <cmath>

#include "sparse_da/error.hpp"
#include "sparse_da/models.hpp"

namespace sparse_da {
namespace {

Grid2D paper_grid(Index nx = 50, Index ny = 30) {
  return Grid2D{nx, ny, 0.1, 0.1, true, true};
}

TEST(AdvDiff, ConstantFieldIsPreservedWithoutDamping) {
  AdvDiffConfig cfg;
  cfg.zeta = 0.0;
  LinearOperator m = build_advdiff_operator(paper_grid(), cfg);
  Eigen::VectorXd c = Eigen::VectorXd::Constant(m.size(), 7.5);
  EXPECT_LT((m.apply(c) - c).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(AdvDiff, PureDamping) {
  AdvDiffConfig cfg;
  cfg.d = 0.0;
  cfg.vx = cfg.vy = 0.0;
  cfg.zeta = -1e-4;
  LinearOperator m = build_advdiff_operator(paper_grid(), cfg);
  RngStream rng(3);
  Eigen::VectorXd c = rng.normal_vector(m.size());
  EXPECT_LT((m.apply(c) - (1.0 + cfg.zeta * cfg.dt) * c).cwiseAbs().maxCoeff(),
            1e-15);
}

TEST(AdvDiff, ImpulseSpreadsWithStencilWeights) {
  AdvDiffConfig cfg;
  cfg.vx = cfg.vy = 0.0;
  cfg.zeta = 0.0;
  Grid2D g = paper_grid();
  LinearOperator m = build_advdiff_operator(g, cfg);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(m.size());
  const Index center = g.cell(10, 10);
  c[center] = 1.0;
  Eigen::VectorXd out = m.apply(c);
  for (Index k : {g.cell(11, 10), g.cell(9, 10), g.cell(10, 11), g.cell(10, 9)})
    EXPECT_NEAR(out[k], 0.25, 1e-15);
  EXPECT_NEAR(out[center], 0.0, 1e-15);
}

TEST(AdvDiff, AdvectionShiftsWeightDownstream) {
  AdvDiffConfig cfg;
  cfg.d = 0.0;
  cfg.zeta = 0.0;
  Grid2D g = paper_grid();
  LinearOperator m = build_advdiff_operator(g, cfg);
  const auto& mat = m.matrix();
  const Index k = g.cell(5, 5);
  EXPECT_NEAR(mat.coeff(k, g.cell(4, 5)), cfg.dt * cfg.vx / (2 * g.dx), 1e-15);
  EXPECT_NEAR(mat.coeff(k, g.cell(6, 5)), -cfg.dt * cfg.vx / (2 * g.dx), 1e-15);
}

TEST(AdvDiff, RowsSumToOneWithoutAdvectionAndDamping) {
  AdvDiffConfig cfg;
  cfg.vx = cfg.vy = 0.0;
  cfg.zeta = 0.0;
  Eigen::MatrixXd dense = build_advdiff_operator(paper_grid(8, 6), cfg).dense();
  EXPECT_LT((dense.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-14);
}

TEST(AdvDiff, ConservesTotalWithoutDamping) {
  AdvDiffConfig cfg;
  cfg.zeta = 0.0;
  LinearOperator m = build_advdiff_operator(paper_grid(), cfg);
  RngStream rng(9);
  Eigen::VectorXd c = rng.normal_vector(m.size()).array() + 10.0;
  for (int s = 0; s < 20; ++s) {
    Eigen::VectorXd next = m.apply(c);
    EXPECT_NEAR(next.sum(), c.sum(), 1e-10 * std::abs(c.sum()));
    c = next;
  }
}

TEST(AdvDiff, RejectsUnstableConfiguration) {
  AdvDiffConfig cfg;
  cfg.dt = 0.05;
  try {
    build_advdiff_operator(paper_grid(), cfg);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("unstable"), std::string::npos);
  }
  cfg.dt = -1.0;
  EXPECT_THROW(build_advdiff_operator(paper_grid(), cfg), ConfigError);
}

TEST(StepLinear, MatchesDenseOracle) {
  Grid2D g = paper_grid(9, 7);
  LinearOperator m = build_advdiff_operator(g, AdvDiffConfig{});
  RngStream rng(11);
  StateVector x(g, 1, rng.normal_vector(g.cells()));
  Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(g.cells(), g.cells());
  AdvDiffConfig cfg;
  for (Index j = 0; j < g.ny; ++j)
    for (Index i = 0; i < g.nx; ++i) {
      const Index k = g.cell(i, j);
      const double kx = cfg.dt * cfg.d / (g.dx * g.dx);
      const double ky = cfg.dt * cfg.d / (g.dy * g.dy);
      dense(k, k) += 1.0 - 2 * kx - 2 * ky + cfg.dt * cfg.zeta;
      dense(k, g.cell((i + 1) % g.nx, j)) += kx - cfg.dt * cfg.vx / (2 * g.dx);
      dense(k, g.cell((i + g.nx - 1) % g.nx, j)) += kx + cfg.dt * cfg.vx / (2 * g.dx);
      dense(k, g.cell(i, (j + 1) % g.ny)) += ky - cfg.dt * cfg.vy / (2 * g.dy);
      dense(k, g.cell(i, (j + g.ny - 1) % g.ny)) += ky + cfg.dt * cfg.vy / (2 * g.dy);
    }
  StateVector out = step_linear(m, x);
  EXPECT_LT((out.values() - dense * x.values()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(StepLinear, NoiseHandling) {
  Grid2D g = paper_grid(6, 5);
  LinearOperator m = build_advdiff_operator(g, AdvDiffConfig{});
  RngStream rng(12);
  StateVector x(g, 1, rng.normal_vector(g.cells()));
  StateVector zero(g, 1);
  StateVector nu(g, 1, rng.normal_vector(g.cells()));
  EXPECT_TRUE(step_linear(m, x, &zero).values() == step_linear(m, x).values());
  EXPECT_TRUE(step_linear(m, zero, &nu).values() == nu.values());
  StateVector wrong(paper_grid(5, 5), 1);
  EXPECT_THROW(step_linear(m, wrong), DimensionError);
}

TEST(StepLinear, IsLinear) {
  Grid2D g = paper_grid(10, 8);
  LinearOperator m = build_advdiff_operator(g, AdvDiffConfig{});
  RngStream rng(13);
  for (int t = 0; t < 20; ++t) {
    StateVector a(g, 1, rng.normal_vector(g.cells()));
    StateVector b(g, 1, rng.normal_vector(g.cells()));
    StateVector ab(g, 1, a.values() + b.values());
    Eigen::VectorXd lhs = step_linear(m, ab).values();
    Eigen::VectorXd rhs = step_linear(m, a).values() + step_linear(m, b).values();
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
  }
}

Grid2D swe_grid(Index nx = 40, Index ny = 30) {
  return Grid2D{nx, ny, 11000.0, 11100.0, true, true};
}

SweConfig swe_config() {
  SweConfig cfg;
  cfg.dx = 11000.0;
  cfg.dy = 11100.0;
  return cfg;
}

ModelErrorSpec balanced_spec() {
  ModelErrorSpec s;
  s.kind = ModelErrorKind::balanced_swe;
  s.matern.sigma = 0.05;
  s.soar_length = 40000.0;
  s.coarse_factor = 5;
  s.interval = 60.0;
  return s;
}

TEST(Swe, LakeAtRestIsSteady) {
  Grid2D g = swe_grid();
  StateVector rest(g, 3);
  StateVector out = step_swe(swe_config(), rest, 50);
  EXPECT_LT(out.values().cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Swe, BalancedJetIsNearlySteady) {
  Grid2D g = swe_grid(20, 60);
  SweConfig cfg = swe_config();
  StateVector jet = balanced_jet(g, cfg, JetSpec{});
  EXPECT_NEAR(jet.var(swe::kEta).mean(), 0.0, 1e-9);
  const double eta_max = jet.var(swe::kEta).cwiseAbs().maxCoeff();
  ASSERT_GT(eta_max, 0.1);
  StateVector next = step_swe(cfg, jet, 1);
  const double d_eta = (next.var(swe::kEta) - jet.var(swe::kEta)).cwiseAbs().maxCoeff();
  EXPECT_LT(d_eta, 1e-6 * eta_max);
  StateVector later = step_swe(cfg, jet, 200);
  EXPECT_LT((later.values() - jet.values()).cwiseAbs().maxCoeff(),
            1e-6 * jet.values().cwiseAbs().maxCoeff());
}

TEST(Swe, MirrorSymmetryWithoutRotation) {
  Grid2D g = swe_grid(30, 24);
  SweConfig cfg = swe_config();
  cfg.f = 0.0;
  StateVector s(g, 3);
  const Index ci = 15, cj = 12;
  for (Index j = 0; j < g.ny; ++j)
    for (Index i = 0; i < g.nx; ++i) {
      const double di = static_cast<double>(i - ci), dj = static_cast<double>(j - cj);
      s.at(swe::kEta, g.cell(i, j)) = 0.5 * std::exp(-(di * di + dj * dj) / 8.0);
    }
  StateVector out = step_swe(cfg, s, 100);
  double worst = 0.0;
  for (Index j = 0; j < g.ny; ++j)
    for (Index i = 0; i < g.nx; ++i) {
      const Index k = g.cell(i, j);
      const Index mx = g.cell((2 * ci - i + g.nx) % g.nx, j);
      const Index my = g.cell(i, (2 * cj - j + g.ny) % g.ny);
      worst = std::max(worst, std::abs(out.at(swe::kEta, k) - out.at(swe::kEta, mx)));
      worst = std::max(worst, std::abs(out.at(swe::kEta, k) - out.at(swe::kEta, my)));
      worst = std::max(worst, std::abs(out.at(swe::kHu, k) + out.at(swe::kHu, mx)));
      worst = std::max(worst, std::abs(out.at(swe::kHv, k) + out.at(swe::kHv, my)));
      worst = std::max(worst, std::abs(out.at(swe::kHv, k) - out.at(swe::kHv, mx)));
    }
  EXPECT_LT(worst, 1e-10);
}

StateVector random_balanced_state(const Grid2D& g, const SweConfig& cfg,
                                  std::uint64_t seed, double scale) {
  ModelError q(balanced_spec(), g, cfg);
  RngStream rng(seed);
  StateVector s = q.sample(rng);
  s.values() *= scale;
  return s;
}

TEST(Swe, ConservesMass) {
  Grid2D g = swe_grid();
  SweConfig cfg = swe_config();
  StateVector s = random_balanced_state(g, cfg, 21, 20.0);
  for (int step = 0; step < 30; ++step) {
    StateVector next = step_swe(cfg, s, 1);
    const double before = (s.var(swe::kEta).array() + cfg.H_depth).sum();
    const double after = (next.var(swe::kEta).array() + cfg.H_depth).sum();
    EXPECT_LE(std::abs(after - before), 1e-10 * before);
    EXPECT_LE(std::abs(next.var(swe::kEta).sum() - s.var(swe::kEta).sum()),
              1e-10 * s.var(swe::kEta).cwiseAbs().sum());
    s = next;
  }
}

TEST(Swe, ThousandStepsAtHalfCflStayFinite) {
  Grid2D g = swe_grid(30, 20);
  SweConfig cfg = swe_config();
  StateVector s = random_balanced_state(g, cfg, 22, 20.0);
  double amax = 0.0;
  for (Index k = 0; k < g.cells(); ++k) {
    const double h = cfg.H_depth + s.at(swe::kEta, k);
    const double c = std::sqrt(cfg.g * h);
    amax = std::max(amax, std::abs(s.at(swe::kHu, k) / h) + c);
    amax = std::max(amax, std::abs(s.at(swe::kHv, k) / h) + c);
  }
  cfg.dt_num = 0.5 / (amax * (1.0 / cfg.dx + 1.0 / cfg.dy));
  StateVector out = step_swe(cfg, s, 1000);
  EXPECT_TRUE(out.all_finite());
}

TEST(Swe, AbortsOnDrying) {
  Grid2D g = swe_grid(10, 10);
  StateVector s(g, 3);
  s.at(swe::kEta, g.cell(3, 4)) = -300.0;
  try {
    step_swe(swe_config(), s, 1);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("(3, 4)"), std::string::npos);
  }
}

TEST(Swe, AbortsOnCflViolation) {
  Grid2D g = swe_grid(10, 10);
  StateVector s(g, 3);
  s.at(swe::kHu, g.cell(2, 2)) = 230.0 * 400.0;
  EXPECT_THROW(step_swe(swe_config(), s, 1), NumericalError);
}

TEST(ModelError, ZeroAndConstantCoarseFieldsGiveNoMomentum) {
  Grid2D g = swe_grid(20, 15);
  ModelError q(balanced_spec(), g, swe_config());
  const Index m = q.noise_dim();
  EXPECT_EQ(m, 4 * 3);
  Eigen::VectorXd zero = q.project_coarse_eta(Eigen::VectorXd::Zero(m));
  EXPECT_TRUE(zero.isZero(0.0));
  Eigen::VectorXd flat = q.project_coarse_eta(Eigen::VectorXd::Constant(m, 0.3));
  const Index n = g.cells();
  EXPECT_LT(flat.segment(n, 2 * n).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((flat.head(n).array() - 0.3).abs().maxCoeff(), 1e-14);
}

TEST(ModelError, SamplesAreGeostrophic) {
  Grid2D g = swe_grid(40, 30);
  SweConfig cfg = swe_config();
  ModelError q(balanced_spec(), g, cfg);
  RngStream rng(31);
  for (int t = 0; t < 5; ++t) {
    StateVector s = q.sample(rng);
    double worst = 0.0, scale = 0.0;
    for (Index j = 0; j < g.ny; ++j)
      for (Index i = 0; i < g.nx; ++i) {
        const Index k = g.cell(i, j);
        const double deta_dy = (s.at(0, g.cell(i, (j + 1) % g.ny)) -
                                s.at(0, g.cell(i, (j + g.ny - 1) % g.ny))) /
                               (2 * g.dy);
        const double deta_dx = (s.at(0, g.cell((i + 1) % g.nx, j)) -
                                s.at(0, g.cell((i + g.nx - 1) % g.nx, j))) /
                               (2 * g.dx);
        const double gh = cfg.g * cfg.H_depth;
        worst = std::max(worst, std::abs(cfg.f * s.at(swe::kHu, k) + gh * deta_dy));
        worst = std::max(worst, std::abs(cfg.f * s.at(swe::kHv, k) - gh * deta_dx));
        scale = std::max(scale, std::abs(gh * deta_dy));
      }
    EXPECT_GT(scale, 0.0);
    EXPECT_LT(worst, 1e-10);
  }
}

TEST(ModelError, BalancedRequiresRotation) {
  SweConfig cfg = swe_config();
  cfg.f = 0.0;
  EXPECT_THROW(ModelError(balanced_spec(), swe_grid(20, 15), cfg), ConfigError);
  EXPECT_THROW(ModelError(balanced_spec(), swe_grid(20, 15)), ConfigError);
}

TEST(ModelError, ZeroSigmaGivesZeroCovariance) {
  ModelErrorSpec spec;
  spec.matern.sigma = 0.0;
  EXPECT_TRUE(model_error_covariance(spec, paper_grid(5, 4)).isZero(0.0));
}

TEST(ModelError, FactorReproducesCovariance) {
  ModelErrorSpec spec;
  Grid2D g{12, 9, 0.3, 0.3, true, true};
  ModelError q(spec, g);
  Eigen::MatrixXd cov = model_error_covariance(spec, g);
  EXPECT_LT((q.factor() * q.factor().transpose() - cov).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(ModelError, MonteCarloMatchesCovariance) {
  // coarse cells: on a small torus the Matern kernel is not positive definite
  Grid2D g{4, 3, 1.0, 1.0, true, true};
  ModelErrorSpec spec;
  Eigen::MatrixXd cov = model_error_covariance(spec, g);
  ModelError q(spec, g);
  RngStream rng(41);
  const int m = 10000;
  Eigen::MatrixXd est = Eigen::MatrixXd::Zero(g.cells(), g.cells());
  for (int s = 0; s < m; ++s) {
    Eigen::VectorXd v = q.sample(rng).values();
    est += v * v.transpose();
  }
  est /= m;
  EXPECT_LT((est - cov).norm() / cov.norm(), 0.05);
}

TEST(ModelError, BalancedMonteCarloMatchesCovariance) {
  Grid2D g = swe_grid(10, 10);
  SweConfig cfg = swe_config();
  Eigen::MatrixXd cov = model_error_covariance(balanced_spec(), g, cfg);
  ModelError q(balanced_spec(), g, cfg);
  RngStream rng(42);
  const int m = 10000;
  Eigen::MatrixXd est = Eigen::MatrixXd::Zero(cov.rows(), cov.cols());
  for (int s = 0; s < m; ++s) {
    Eigen::VectorXd v = q.sample(rng).values();
    est += v * v.transpose();
  }
  est /= m;
  EXPECT_LT((est - cov).norm() / cov.norm(), 0.05);
}

TEST(ModelError, SizeGuard) {
  ModelErrorSpec spec;
  EXPECT_THROW(model_error_covariance(spec, paper_grid(100, 100)), ConfigError);
}

}  // namespace
}  // namespace sparse_da
