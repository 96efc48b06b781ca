#pragma once

#include <string>
#include <vector>

#include "sparse_da/config.hpp"

namespace sparse_da {

std::vector<std::string> preset_names();

/**
 * Named experiment configuration. `full` switches to the paper-scale setup
 * (larger grid, ensemble and replication); the caller should warn about
 * runtime.
 */
ExperimentConfig preset(const std::string& name, bool full = false);

/// The 15 observed cells of the advection-diffusion case: a 3 x 5 lattice
/// with a frozen jitter. Cell (0, 0) is always observed.
std::vector<std::pair<Index, Index>> advdiff_sites();

/// The 60 buoy cells of the desk shallow-water grid (100 x 60).
std::vector<std::pair<Index, Index>> swe_buoy_sites();

/**
 * Builds a config from a file. The base is the preset named by `preset_name`
 * if non-empty, else the file's `experiment.preset` key, else the defaults.
 * Unknown keys are rejected.
 */
ExperimentConfig load_experiment(const ConfigFile& file,
                                 const std::string& preset_name = "",
                                 bool full = false);

}  // namespace sparse_da
