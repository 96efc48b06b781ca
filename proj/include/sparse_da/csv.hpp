#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <string>
#include <vector>

#include "sparse_da/drift.hpp"
#include "sparse_da/grid_field.hpp"
#include "sparse_da/metrics.hpp"

namespace sparse_da {

/// Shortest decimal text that reads back to the same double.
std::string format_double(double value);

/// Rows `metric,rep,seed,step,value`.
void write_metric_csv(std::ostream& out, const std::vector<MetricSeries>& series);
/// Rows `i,j,value` for one variable of a field.
void write_field_csv(std::ostream& out, const Grid2D& grid,
                     const Eigen::VectorXd& values);
/// Rows `member,drifter,step,x,y`.
void write_trajectory_csv(std::ostream& out, const TrajectorySet& set);
/// Rows `bin,count`.
void write_rank_histogram_csv(std::ostream& out, const RankHistogram& hist);

}  // namespace sparse_da
