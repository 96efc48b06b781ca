#include "sparse_da/csv.hpp"

#include <charconv>
#include <ostream>

#include "sparse_da/error.hpp"

namespace sparse_da {

std::string format_double(double value) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

void write_metric_csv(std::ostream& out, const std::vector<MetricSeries>& series) {
  out << "metric,rep,seed,step,value\n";
  for (const auto& s : series) {
    require_dims(s.steps.size() == s.values.size(), "metric series is ragged");
    for (std::size_t i = 0; i < s.steps.size(); ++i) {
      out << s.name << ',' << s.rep << ',' << s.seed << ',' << s.steps[i] << ','
          << format_double(s.values[i]) << '\n';
    }
  }
}

void write_field_csv(std::ostream& out, const Grid2D& grid,
                     const Eigen::VectorXd& values) {
  require_dims(values.size() == grid.cells(), "field size does not match grid");
  out << "i,j,value\n";
  for (Index j = 0; j < grid.ny; ++j)
    for (Index i = 0; i < grid.nx; ++i)
      out << i << ',' << j << ',' << format_double(values[grid.cell(i, j)]) << '\n';
}

void write_trajectory_csv(std::ostream& out, const TrajectorySet& set) {
  out << "member,drifter,step,x,y\n";
  for (std::size_t e = 0; e < set.members(); ++e)
    for (std::size_t d = 0; d < set.drifters(); ++d)
      for (std::size_t r = 0; r < set.records(); ++r) {
        const Drifter& p = set.positions[e][r][d];
        out << e << ',' << d << ',' << set.steps[r] << ',' << format_double(p.x)
            << ',' << format_double(p.y) << '\n';
      }
}

void write_rank_histogram_csv(std::ostream& out, const RankHistogram& hist) {
  out << "bin,count\n";
  for (std::size_t b = 0; b < hist.counts().size(); ++b)
    out << b << ',' << hist.counts()[b] << '\n';
}

}  // namespace sparse_da
