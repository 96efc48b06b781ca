#include "sparse_da/letkf.hpp"

#include <string>

#include "sparse_da/error.hpp"
#include "sparse_da/etkf.hpp"

namespace sparse_da {

EnsembleMatrix letkf_analysis(const EnsembleMatrix& ens, const ObservationRecord& y,
                              const ObservationNetwork& net,
                              const LocalisationPlan& plan, double phi) {
  ens.require_analysable();
  net.check_state(ens.grid(), ens.n_vars());
  require_dims(y.values.size() == net.size(),
               "observation length does not match network");
  require_dims(plan.areas.size() == net.sites().size(),
               "localisation plan does not match the network");
  if (!(phi >= 0.0 && phi <= 1.0)) throw ConfigError("phi must lie in [0, 1]");
  if (!(net.r() > 0.0)) throw NumericalError("LETKF needs r > 0");

  const Index cells = ens.grid().cells();
  const int n_vars = ens.n_vars();
  const Index ne = ens.size();
  const Eigen::VectorXd r_inv = Eigen::VectorXd::Constant(1, 1.0 / (net.r() * net.r()));

  Eigen::MatrixXd current = ens.members();
  for (const auto& batch : plan.batches) {
    Eigen::MatrixXd next = current;
    for (std::size_t j : batch) {
      const auto& area = plan.areas[j];
      const auto& w = plan.w_loc[j];
      const Index rows = static_cast<Index>(area.size()) * n_vars;
      Eigen::MatrixXd local(rows, ne);
      for (int v = 0; v < n_vars; ++v)
        for (std::size_t q = 0; q < area.size(); ++q)
          local.row(v * static_cast<Index>(area.size()) + static_cast<Index>(q)) =
              current.row(v * cells + area[q]);

      const Eigen::MatrixXd hx = current.row(net.state_index(j, cells));
      Eigen::MatrixXd analysis;
      try {
        analysis = etkf_transform(local, hx, y.values.segment(j, 1), r_inv);
      } catch (const std::exception& e) {
        throw NumericalError("local analysis at site " + std::to_string(j) + ": " +
                             e.what());
      }

      for (int v = 0; v < n_vars; ++v) {
        for (std::size_t q = 0; q < area.size(); ++q) {
          const double wq = phi * w[q];
          if (wq == 0.0) continue;
          const Index row = v * cells + area[q];
          const Index lrow =
              v * static_cast<Index>(area.size()) + static_cast<Index>(q);
          if (wq == 1.0) {
            next.row(row) = analysis.row(lrow);
          } else {
            next.row(row) = (1.0 - wq) * current.row(row) + wq * analysis.row(lrow);
          }
        }
      }
    }
    current.swap(next);
  }
  return EnsembleMatrix(ens.grid(), ens.n_vars(), std::move(current));
}

}  // namespace sparse_da
