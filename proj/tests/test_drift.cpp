#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "sparse_da/drift.hpp"
#include "sparse_da/error.hpp"

namespace sparse_da {
namespace {

Grid2D small_grid() { return Grid2D{20, 16, 10000.0, 10000.0, true, true}; }

SweConfig still_config() {
  SweConfig cfg;
  cfg.dx = cfg.dy = 10000.0;
  cfg.f = 0.0;
  cfg.dt_num = 60.0;
  return cfg;
}

StateVector uniform_flow(const Grid2D& g, const SweConfig& cfg, double u, double v) {
  StateVector s(g, 3);
  s.var(swe::kHu).setConstant(cfg.H_depth * u);
  s.var(swe::kHv).setConstant(cfg.H_depth * v);
  return s;
}

EnsembleMatrix replicate(const StateVector& s, Index ne) {
  return EnsembleMatrix(s.grid(), s.n_vars(), s.values().replicate(1, ne));
}

std::vector<RngStream> streams(Index ne) {
  std::vector<RngStream> r;
  for (Index e = 0; e < ne; ++e) r.emplace_back(100 + static_cast<std::uint64_t>(e));
  return r;
}

TEST(Drift, RestStateKeepsDriftersInPlace) {
  const Grid2D g = small_grid();
  SweConfig cfg = still_config();
  cfg.f = 1.2e-4;
  auto rngs = streams(2);
  const std::vector<Drifter> start{{3500.0, 4200.0}, {17000.0, 900.0}};
  const TrajectorySet t = forecast_trajectories(replicate(StateVector(g, 3), 2), cfg,
                                                nullptr, 1, start, 30, 10, rngs);
  ASSERT_EQ(t.records(), 4u);
  for (std::size_t e = 0; e < t.members(); ++e)
    for (std::size_t r = 0; r < t.records(); ++r)
      for (std::size_t d = 0; d < start.size(); ++d) {
        EXPECT_DOUBLE_EQ(t.positions[e][r][d].x, start[d].x);
        EXPECT_DOUBLE_EQ(t.positions[e][r][d].y, start[d].y);
      }
}

TEST(Drift, UniformCurrentMovesOneMinute) {
  const Grid2D g = small_grid();
  const SweConfig cfg = still_config();
  auto rngs = streams(1);
  const TrajectorySet t = forecast_trajectories(
      replicate(uniform_flow(g, cfg, 1.0, 0.0), 1), cfg, nullptr, 1,
      {{5000.0, 5000.0}}, 1, 1, rngs);
  ASSERT_EQ(t.records(), 2u);
  EXPECT_NEAR(t.positions[0][1][0].x - 5000.0, 60.0, 1e-9);
  EXPECT_NEAR(t.positions[0][1][0].y, 5000.0, 1e-9);
}

TEST(Drift, CurrentIsBilinear) {
  const Grid2D g = small_grid();
  const SweConfig cfg = still_config();
  StateVector s(g, 3);
  for (Index j = 0; j < g.ny; ++j)
    for (Index i = 0; i < g.nx; ++i)
      s.at(swe::kHu, g.cell(i, j)) = cfg.H_depth * (0.1 * i + 0.05 * j);
  const auto [u, v] = current_at(s, cfg, 43000.0, 76000.0);
  EXPECT_NEAR(u, 0.1 * 4.3 + 0.05 * 7.6, 1e-12);
  EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Drift, RigidRotationMatchesEulerOracle) {
  const Grid2D g{40, 40, 1000.0, 1000.0, true, true};
  const SweConfig cfg = still_config();
  const double omega = 1e-4, xc = 20000.0, yc = 20000.0;
  StateVector s(g, 3);
  for (Index j = 0; j < g.ny; ++j)
    for (Index i = 0; i < g.nx; ++i) {
      s.at(swe::kHu, g.cell(i, j)) = -cfg.H_depth * omega * (j * g.dy - yc);
      s.at(swe::kHv, g.cell(i, j)) = cfg.H_depth * omega * (i * g.dx - xc);
    }
  std::vector<Drifter> d{{25000.0, 20000.0}};
  double x = 25000.0, y = 20000.0;
  for (int n = 0; n < 200; ++n) {
    d = advect(s, cfg, d, cfg.dt_num);
    const double u = -omega * (y - yc), v = omega * (x - xc);
    x += cfg.dt_num * u;
    y += cfg.dt_num * v;
  }
  EXPECT_NEAR(d[0].x, x, 1e-6);
  EXPECT_NEAR(d[0].y, y, 1e-6);
  // Euler on a rotation drifts outward slowly; the radius stays near 5 km
  EXPECT_NEAR(std::hypot(x - xc, y - yc), 5000.0, 50.0);
}

TEST(Drift, SingleMemberIsDeterministic) {
  const Grid2D g = small_grid();
  SweConfig cfg = still_config();
  cfg.f = 1e-4;
  StateVector s = uniform_flow(g, cfg, 0.3, -0.2);
  s.at(swe::kEta, g.cell(5, 5)) = 0.5;
  auto r1 = streams(1), r2 = streams(1);
  const TrajectorySet a = forecast_trajectories(replicate(s, 1), cfg, nullptr, 1,
                                                {{9000.0, 8000.0}}, 40, 10, r1);
  const TrajectorySet b = forecast_trajectories(replicate(s, 1), cfg, nullptr, 1,
                                                {{9000.0, 8000.0}}, 40, 10, r2);
  for (std::size_t r = 0; r < a.records(); ++r) {
    EXPECT_EQ(a.positions[0][r][0].x, b.positions[0][r][0].x);
    EXPECT_EQ(a.positions[0][r][0].y, b.positions[0][r][0].y);
  }
}

TEST(Drift, ZeroHorizonRecordsRelease) {
  const Grid2D g = small_grid();
  auto rngs = streams(3);
  const TrajectorySet t = forecast_trajectories(
      replicate(StateVector(g, 3), 3), still_config(), nullptr, 1,
      {{1.0, 2.0}, {3.0, 4.0}}, 0, 5, rngs);
  EXPECT_EQ(t.records(), 1u);
  EXPECT_EQ(t.members(), 3u);
  EXPECT_EQ(t.drifters(), 2u);
  EXPECT_EQ(t.steps, std::vector<int>{0});
}

TEST(Drift, IdenticalMembersGiveIdenticalTracks) {
  const Grid2D g = small_grid();
  SweConfig cfg = still_config();
  cfg.f = 1e-4;
  StateVector s = uniform_flow(g, cfg, 0.5, 0.1);
  s.at(swe::kEta, g.cell(10, 8)) = 0.3;
  auto rngs = streams(4);
  const TrajectorySet t = forecast_trajectories(replicate(s, 4), cfg, nullptr, 1,
                                                {{9000.0, 8000.0}}, 30, 10, rngs);
  for (std::size_t e = 1; e < t.members(); ++e)
    for (std::size_t r = 0; r < t.records(); ++r) {
      EXPECT_EQ(t.positions[e][r][0].x, t.positions[0][r][0].x);
      EXPECT_EQ(t.positions[e][r][0].y, t.positions[0][r][0].y);
    }
  const auto mean = t.mean_trajectory(g);
  EXPECT_NEAR(mean.back()[0].x, t.positions[0].back()[0].x, 1e-6);
}

TEST(Drift, TranslationCommutes) {
  const Grid2D g = small_grid();
  SweConfig cfg = still_config();
  cfg.f = 1e-4;
  StateVector s = uniform_flow(g, cfg, 0.2, 0.1);
  s.at(swe::kEta, g.cell(6, 7)) = 0.4;
  s.at(swe::kHu, g.cell(7, 7)) += 20.0;
  StateVector shifted(g, 3);
  for (int v = 0; v < 3; ++v)
    for (Index j = 0; j < g.ny; ++j)
      for (Index i = 0; i < g.nx; ++i)
        shifted.at(v, g.cell((i + 3) % g.nx, j)) = s.at(v, g.cell(i, j));

  auto r1 = streams(1), r2 = streams(1);
  const TrajectorySet a = forecast_trajectories(replicate(s, 1), cfg, nullptr, 1,
                                                {{65000.0, 73000.0}}, 20, 10, r1);
  const TrajectorySet b = forecast_trajectories(replicate(shifted, 1), cfg, nullptr,
                                                1, {{95000.0, 73000.0}}, 20, 10, r2);
  for (std::size_t r = 0; r < a.records(); ++r) {
    EXPECT_NEAR(b.positions[0][r][0].x - a.positions[0][r][0].x, 30000.0, 1e-6);
    EXPECT_NEAR(b.positions[0][r][0].y, a.positions[0][r][0].y, 1e-6);
  }
}

TEST(Drift, WrapsIntoDomain) {
  const Grid2D g = small_grid();
  const SweConfig cfg = still_config();
  const StateVector s = uniform_flow(g, cfg, 2.0, -1.5);
  std::vector<Drifter> d{{199950.0, 30.0}};
  for (int n = 0; n < 5; ++n) {
    d = advect(s, cfg, d, cfg.dt_num);
    EXPECT_GE(d[0].x, 0.0);
    EXPECT_LT(d[0].x, g.length_x());
    EXPECT_GE(d[0].y, 0.0);
    EXPECT_LT(d[0].y, g.length_y());
  }
  EXPECT_NEAR(d[0].x, 199950.0 + 600.0 - 200000.0, 1e-9);
  EXPECT_NEAR(d[0].y, 30.0 - 450.0 + 160000.0, 1e-9);
}

TEST(Drift, DryCellAborts) {
  const Grid2D g = small_grid();
  const SweConfig cfg = still_config();
  StateVector s(g, 3);
  s.var(swe::kEta).setConstant(-cfg.H_depth);
  EXPECT_THROW(advect(s, cfg, {{500.0, 500.0}}, cfg.dt_num), NumericalError);
}

TEST(Drift, InvalidSettings) {
  const Grid2D g = small_grid();
  auto rngs = streams(2);
  const EnsembleMatrix ens = replicate(StateVector(g, 3), 2);
  EXPECT_THROW(forecast_trajectories(ens, still_config(), nullptr, 1, {}, -1, 1, rngs),
               ConfigError);
  EXPECT_THROW(forecast_trajectories(ens, still_config(), nullptr, 1, {}, 5, 0, rngs),
               ConfigError);
  auto one = streams(1);
  EXPECT_THROW(forecast_trajectories(ens, still_config(), nullptr, 1, {}, 5, 1, one),
               DimensionError);
}

}  // namespace
}  // namespace sparse_da
