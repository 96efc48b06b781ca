#pragma once

#include "sparse_da/grid_field.hpp"
#include "sparse_da/localisation.hpp"
#include "sparse_da/observing.hpp"

namespace sparse_da {

/**
 * Serial batched local ETKF for sparse observations.
 *
 * Batches are processed in order. Within a batch every site runs an ETKF on
 * its local area with its single observation, starting from the previous
 * batch's analysis; the result is blended in with weight phi * w_loc. Cells
 * outside the areas of a batch are not touched.
 */
EnsembleMatrix letkf_analysis(const EnsembleMatrix& ens, const ObservationRecord& y,
                              const ObservationNetwork& net,
                              const LocalisationPlan& plan, double phi);

}  // namespace sparse_da
