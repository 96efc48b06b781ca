#pragma once

#include <vector>

#include "sparse_da/grid_field.hpp"
#include "sparse_da/models.hpp"
#include "sparse_da/random.hpp"

namespace sparse_da {

/// Passive drifter position in domain units.
struct Drifter {
  double x = 0.0;
  double y = 0.0;
};

/// Velocity (hu/h, hv/h) bilinearly interpolated between cell centers.
std::pair<double, double> current_at(const StateVector& state,
                                     const SweConfig& cfg, double x, double y);

/// One explicit Euler step of every drifter, wrapped into the domain.
std::vector<Drifter> advect(const StateVector& state, const SweConfig& cfg,
                            std::vector<Drifter> drifters, double dt);

/**
 * @brief Drifter positions per member, recorded step, and drifter.
 */
struct TrajectorySet {
  std::vector<int> steps;  // numerical substeps since release
  std::vector<std::vector<std::vector<Drifter>>> positions;  // [member][record][drifter]

  std::size_t members() const { return positions.size(); }
  std::size_t records() const { return steps.size(); }
  std::size_t drifters() const {
    return positions.empty() || positions[0].empty() ? 0 : positions[0][0].size();
  }
  /// Circular mean over members for each record and drifter.
  std::vector<std::vector<Drifter>> mean_trajectory(const Grid2D& grid) const;
};

/**
 * Forecast drifters with every member's own model run. Each member advances
 * `horizon` numerical substeps; model error from `error` (may be null) is
 * added every `error_every` substeps using rngs[e]. Positions are recorded
 * every `record_stride` substeps and at the release time.
 */
TrajectorySet forecast_trajectories(const EnsembleMatrix& ens, const SweConfig& cfg,
                                    const ModelError* error, int error_every,
                                    const std::vector<Drifter>& start, int horizon,
                                    int record_stride, std::vector<RngStream>& rngs);

}  // namespace sparse_da
