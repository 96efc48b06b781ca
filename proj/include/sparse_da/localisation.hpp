#pragma once

#include <cstddef>
#include <vector>

#include "sparse_da/grid_field.hpp"
#include "sparse_da/observing.hpp"

namespace sparse_da {

/// Fifth-order piecewise rational taper of Gaspari and Cohn; zero for d >= 2c.
double gaspari_cohn(double d, double c);

/**
 * @brief Local areas, weights and batches for serial local analyses.
 *
 * Observation j influences the cells within `radius` of its site cell. The
 * weight w_loc[j][q] belongs to cell areas[j][q]; sites in one batch have
 * pairwise disjoint areas.
 */
struct LocalisationPlan {
  double radius = 0.0;
  std::vector<std::vector<Index>> areas;
  std::vector<std::vector<double>> w_loc;
  std::vector<std::vector<std::size_t>> batches;

  std::size_t n_batches() const { return batches.size(); }
};

/// Greedy batching in site order: each site joins the first batch whose
/// areas it does not touch.
LocalisationPlan build_localisation_plan(const ObservationNetwork& net,
                                         const Grid2D& grid, double radius);

}  // namespace sparse_da
