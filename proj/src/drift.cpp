#include "sparse_da/drift.hpp"

#include <cmath>
#include <string>

#include "sparse_da/error.hpp"

namespace sparse_da {

namespace {

double wrap_position(double p, double len) {
  double w = std::fmod(p, len);
  if (w < 0.0) w += len;
  if (w >= len) w = 0.0;  // fmod of a tiny negative can round up to len
  return w;
}

}  // namespace

std::pair<double, double> current_at(const StateVector& state,
                                     const SweConfig& cfg, double x, double y) {
  const Grid2D& grid = state.grid();
  require_dims(state.n_vars() == 3, "drifters need a shallow-water state");
  const double fx = x / grid.dx, fy = y / grid.dy;
  const double i0f = std::floor(fx), j0f = std::floor(fy);
  const double tx = fx - i0f, ty = fy - j0f;
  auto idx = [](double v, Index n) {
    auto i = static_cast<Index>(v) % n;
    return i < 0 ? i + n : i;
  };
  const Index i0 = idx(i0f, grid.nx), i1 = idx(i0f + 1.0, grid.nx);
  const Index j0 = idx(j0f, grid.ny), j1 = idx(j0f + 1.0, grid.ny);
  const Index corners[4] = {grid.cell(i0, j0), grid.cell(i1, j0),
                            grid.cell(i0, j1), grid.cell(i1, j1)};
  const double w[4] = {(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty};
  double u = 0.0, v = 0.0;
  for (int c = 0; c < 4; ++c) {
    const double h = cfg.H_depth + state.at(swe::kEta, corners[c]);
    if (!(h > 0.0)) return {std::nan(""), std::nan("")};
    u += w[c] * state.at(swe::kHu, corners[c]) / h;
    v += w[c] * state.at(swe::kHv, corners[c]) / h;
  }
  return {u, v};
}

std::vector<Drifter> advect(const StateVector& state, const SweConfig& cfg,
                            std::vector<Drifter> drifters, double dt) {
  const double lx = state.grid().length_x(), ly = state.grid().length_y();
  for (std::size_t d = 0; d < drifters.size(); ++d) {
    auto [u, v] = current_at(state, cfg, drifters[d].x, drifters[d].y);
    if (!std::isfinite(u) || !std::isfinite(v))
      throw NumericalError("invalid current at drifter " + std::to_string(d));
    drifters[d].x = wrap_position(drifters[d].x + dt * u, lx);
    drifters[d].y = wrap_position(drifters[d].y + dt * v, ly);
  }
  return drifters;
}

std::vector<std::vector<Drifter>> TrajectorySet::mean_trajectory(
    const Grid2D& grid) const {
  std::vector<std::vector<Drifter>> out(records(),
                                        std::vector<Drifter>(drifters()));
  std::vector<double> xs(members()), ys(members());
  for (std::size_t r = 0; r < records(); ++r) {
    for (std::size_t d = 0; d < drifters(); ++d) {
      for (std::size_t e = 0; e < members(); ++e) {
        xs[e] = positions[e][r][d].x;
        ys[e] = positions[e][r][d].y;
      }
      out[r][d] = {circular_mean(xs, grid.length_x()),
                   circular_mean(ys, grid.length_y())};
    }
  }
  return out;
}

TrajectorySet forecast_trajectories(const EnsembleMatrix& ens, const SweConfig& cfg,
                                    const ModelError* error, int error_every,
                                    const std::vector<Drifter>& start, int horizon,
                                    int record_stride, std::vector<RngStream>& rngs) {
  if (horizon < 0 || record_stride < 1 || error_every < 1)
    throw ConfigError("invalid trajectory forecast settings");
  require_dims(static_cast<Index>(rngs.size()) == ens.size(),
               "need one random stream per member");
  TrajectorySet set;
  set.positions.resize(static_cast<std::size_t>(ens.size()));
  set.steps.push_back(0);
  for (int s = 1; s <= horizon; ++s)
    if (s % record_stride == 0) set.steps.push_back(s);

  for (Index e = 0; e < ens.size(); ++e) {
    auto& track = set.positions[static_cast<std::size_t>(e)];
    StateVector state = ens.member(e);
    std::vector<Drifter> drifters = start;
    track.push_back(drifters);
    for (int s = 1; s <= horizon; ++s) {
      drifters = advect(state, cfg, std::move(drifters), cfg.dt_num);
      state = step_swe(cfg, state, 1);
      if (error && s % error_every == 0)
        state.values() += error->sample(rngs[static_cast<std::size_t>(e)]).values();
      if (s % record_stride == 0) track.push_back(drifters);
    }
  }
  return set;
}

}  // namespace sparse_da
