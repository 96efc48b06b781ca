#include "sparse_da/localisation.hpp"

#include "sparse_da/error.hpp"

namespace sparse_da {

double gaspari_cohn(double d, double c) {
  if (!(c > 0.0)) throw ConfigError("Gaspari-Cohn half-support must be > 0");
  if (!(d >= 0.0)) throw ConfigError("distance must be >= 0");
  const double r = d / c;
  if (r >= 2.0) return 0.0;
  if (r <= 1.0) {
    return (((-0.25 * r + 0.5) * r + 0.625) * r - 5.0 / 3.0) * r * r + 1.0;
  }
  return ((((r / 12.0 - 0.5) * r + 0.625) * r + 5.0 / 3.0) * r - 5.0) * r + 4.0 -
         2.0 / (3.0 * r);
}

LocalisationPlan build_localisation_plan(const ObservationNetwork& net,
                                         const Grid2D& grid, double radius) {
  if (!(radius > 0.0)) throw ConfigError("localisation radius must be > 0");
  grid.validate();
  const Index cells = grid.cells();
  const double c = 0.5 * radius;

  LocalisationPlan plan;
  plan.radius = radius;
  plan.areas.resize(net.sites().size());
  plan.w_loc.resize(net.sites().size());
  for (std::size_t j = 0; j < net.sites().size(); ++j) {
    const Index site = net.site(j).cell;
    require_dims(site < cells, "observation site lies outside the grid");
    for (Index k = 0; k < cells; ++k) {
      const double d = torus_distance(grid, site, k);
      if (d <= radius) {
        plan.areas[j].push_back(k);
        plan.w_loc[j].push_back(gaspari_cohn(d, c));
      }
    }
  }

  std::vector<std::vector<char>> occupied;
  for (std::size_t j = 0; j < plan.areas.size(); ++j) {
    std::size_t b = 0;
    for (; b < plan.batches.size(); ++b) {
      bool clash = false;
      for (Index k : plan.areas[j]) {
        if (occupied[b][k]) {
          clash = true;
          break;
        }
      }
      if (!clash) break;
    }
    if (b == plan.batches.size()) {
      plan.batches.emplace_back();
      occupied.emplace_back(static_cast<std::size_t>(cells), 0);
    }
    plan.batches[b].push_back(j);
    for (Index k : plan.areas[j]) occupied[b][k] = 1;
  }
  return plan;
}

}  // namespace sparse_da
