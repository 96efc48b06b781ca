#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sparse_da/config.hpp"
#include "sparse_da/metrics.hpp"
#include "sparse_da/observing.hpp"

namespace sparse_da {

/// A replicate that aborted; the others still ran.
struct RunError {
  int truth = 0;
  int ensemble = -1;  // -1: truth generation
  std::string filter;
  std::string kind;   // "config" or "numerical"
  std::string message;
};

/**
 * @brief In-memory result of an experiment.
 *
 * Metric series are named "<filter label>.<metric>"; `rep` is
 * truth * ensembles + ensemble and `seed` the ensemble seed. Steps are model
 * steps since the start.
 */
struct RunSummary {
  std::uint64_t config_hash = 0;
  std::vector<std::uint64_t> truth_seeds;
  std::vector<MetricSeries> metrics;
  std::map<std::string, RankHistogram> rank_histograms;  // "<label>.hu"
  std::vector<RunError> errors;
  std::vector<std::string> warnings;
  std::vector<std::string> files;  // relative to out_dir
  double radius = 0.0;
  std::size_t n_batches = 0;

  /// All series with the given name, in replicate order.
  std::vector<const MetricSeries*> series(const std::string& name) const;
  /// Mean over replicates of the value at `step` (the last value if < 0).
  double mean_at(const std::string& name, int step = -1) const;
};

/// Truth seed for truth replicate t.
std::uint64_t truth_seed(std::uint64_t master, int t);
/// Seed of ensemble replicate r of truth t.
std::uint64_t ensemble_seed(std::uint64_t master, int t, int r);
/// Seed of member e of that ensemble. Shared by all filters, so filters are
/// compared under common random numbers.
std::uint64_t member_seed(std::uint64_t master, int t, int r, int e);

/// Initial truth mean (advdiff) or balanced jet (swe).
StateVector initial_mean(const ExperimentConfig& cfg);
ObservationNetwork make_network(const ExperimentConfig& cfg);

/// Truth and observations of replicate t.
TwinExperiment generate_truth(const ExperimentConfig& cfg, int t);

/**
 * Runs every (truth, ensemble, filter) replicate on a worker pool and, when
 * cfg.out_dir is non-empty, writes CSVs and manifest.json there. Aborted
 * replicates are recorded in `errors`; ConfigError from validation
 * propagates.
 */
RunSummary run_experiment(const ExperimentConfig& cfg);

}  // namespace sparse_da
