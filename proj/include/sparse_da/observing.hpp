#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "sparse_da/grid_field.hpp"
#include "sparse_da/random.hpp"

namespace sparse_da {

/// One observed state entry: variable `var` at grid cell `cell`.
struct ObservationSite {
  Index cell = 0;
  int var = 0;

  bool operator==(const ObservationSite&) const = default;
};

/**
 * @brief Point observations y = H x + eps with eps ~ N(0, r^2 I).
 */
class ObservationNetwork {
 public:
  ObservationNetwork() = default;
  ObservationNetwork(std::vector<ObservationSite> sites, double r);

  const std::vector<ObservationSite>& sites() const { return sites_; }
  const ObservationSite& site(std::size_t i) const { return sites_[i]; }
  Index size() const { return static_cast<Index>(sites_.size()); }
  double r() const { return r_; }

  /// Position of observation i in a state vector with `cells` cells per
  /// variable.
  Index state_index(std::size_t i, Index cells) const {
    return sites_[i].var * cells + sites_[i].cell;
  }

  /// Throws DimensionError when a site falls outside the state.
  void check_state(const Grid2D& grid, int n_vars) const;
  /// True when N_Y is at most a tenth of N_X.
  bool sparse_regime(Index state_size) const;

 private:
  std::vector<ObservationSite> sites_;
  double r_ = 1.0;
};

struct ObservationRecord {
  int time_index = 0;
  Eigen::VectorXd values;
};

/// Gather H x.
Eigen::VectorXd apply_H(const ObservationNetwork& net, const StateVector& x);
/// Gather H X for an N_X x Ne ensemble matrix.
Eigen::MatrixXd apply_H(const ObservationNetwork& net, const Eigen::MatrixXd& x,
                        Index cells);
/// Dense 0/1 matrix of H.
Eigen::MatrixXd dense_H(const ObservationNetwork& net, const Grid2D& grid,
                        int n_vars);

ObservationRecord observe(const ObservationNetwork& net, const StateVector& truth,
                          int time_index, RngStream& rng);

/**
 * @brief A simulated truth together with its observations.
 *
 * Truth snapshots are kept only at the assimilation times, plus the final
 * state.
 */
struct TwinExperiment {
  std::uint64_t seed = 0;
  ObservationNetwork network;
  std::vector<int> schedule;
  std::vector<StateVector> truth_states;
  std::vector<ObservationRecord> observations;
  StateVector final_truth;
  int total_steps = 0;
};

/// Deterministic model step x^{n-1} -> M(x^{n-1}).
using ModelStep = std::function<StateVector(const StateVector&)>;
/// One model-error draw; an empty function means no model error.
using ErrorSampler = std::function<StateVector(RngStream&)>;

/**
 * Run the truth for `total_steps` steps from `initial`, adding a fresh model
 * error after each step and observing at the scheduled steps. Model error
 * and observation noise use independent child streams of `seed`.
 */
TwinExperiment run_truth(const StateVector& initial, const ModelStep& step,
                         const ErrorSampler& error,
                         const std::vector<int>& schedule, int total_steps,
                         const ObservationNetwork& net, std::uint64_t seed);

void write_twin(const TwinExperiment& twin, const std::string& path);
TwinExperiment read_twin(const std::string& path);

/// CSV with header `step,obs,cell,var,value`.
void write_observations_csv(const TwinExperiment& twin, std::ostream& out);

}  // namespace sparse_da
