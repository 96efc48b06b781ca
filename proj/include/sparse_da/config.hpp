#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "sparse_da/drift.hpp"
#include "sparse_da/grid_field.hpp"
#include "sparse_da/models.hpp"

namespace sparse_da {

/**
 * @brief Sectioned key-value text.
 *
 * Lines are `[section]` headers or `key = value` assignments; `#` starts a
 * comment. Keys are addressed as "section.key" (keys before the first
 * header use the bare name).
 */
class ConfigFile {
 public:
  static ConfigFile parse(std::istream& in, const std::string& origin = "config");
  static ConfigFile load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string get(const std::string& key) const;
  double get_double(const std::string& key) const;
  long long get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  /// Throws ConfigError listing keys that were never read.
  void require_all_used() const;

 private:
  std::string origin_;
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

enum class CaseKind { advdiff, swe };
enum class FilterKind { kf, etkf, letkf, iewpf, mc };

/// One filter run: its kind plus the parameters it reads.
struct FilterSpec {
  FilterKind kind = FilterKind::letkf;
  double phi = 1.0;
  double beta = 0.55;
  std::string label;  // unique within an experiment; used in metric names

  /// Parses "letkf", "letkf:phi=0.5", "iewpf:beta=1".
  static FilterSpec parse(const std::string& text, double default_phi,
                          double default_beta);
};

std::string to_string(FilterKind kind);
std::string to_string(CaseKind kind);

struct ExperimentConfig {
  std::string name = "custom";
  CaseKind kase = CaseKind::advdiff;
  std::vector<FilterSpec> filters;
  int ne = 50;
  int truths = 1;
  int ensembles = 1;
  std::uint64_t seed = 1;
  int workers = 0;  // 0: hardware concurrency
  std::string out_dir;
  bool full_scale = false;

  Grid2D grid{50, 30, 0.1, 0.1, true, true};

  // advection-diffusion case
  AdvDiffConfig advdiff;
  MaternSpec prior{0.5, 3.5};
  bool prior_periodic = false;
  double baseline = 10.0;
  double bump_amplitude = 5.0;
  double bump_x = 1.25;
  double bump_y = 0.75;
  double bump_width = 0.6;

  // shallow-water case
  SweConfig swe;
  JetSpec jet;
  int substeps = 2;       // numerical steps per model step
  int spinup_steps = 0;   // model steps before the first observation window

  ModelErrorSpec model_error;

  // observations
  std::vector<std::pair<Index, Index>> sites;  // (i, j) cells
  std::vector<int> observed_vars{0};
  double obs_r = 0.1;
  int obs_interval = 25;   // model steps
  int obs_count = 10;

  // filter parameters
  double radius = 0.0;  // <= 0: model-error correlation range
  double phi = 1.0;
  double beta = 0.55;
  double weight_tol = 1e-6;

  // diagnostics
  std::vector<std::pair<double, double>> diq_points{{0.0, 0.0}, {2.5, 1.5}};
  bool cross_time = true;
  std::vector<Drifter> drifters;
  int drift_steps = 0;          // numerical substeps of drifter forecast
  int drift_record_stride = 10;
  int rank_locations = 0;       // buoys used for rank histograms
  bool write_fields = true;

  void validate() const;
  /// Model steps from the start to the last observation.
  int total_steps() const { return spinup_steps + obs_interval * obs_count; }
  std::vector<int> schedule() const;
  int n_vars() const { return kase == CaseKind::advdiff ? 1 : 3; }
};

/// Applies every key present in `file` on top of `base`.
ExperimentConfig apply_config(const ConfigFile& file, ExperimentConfig base);

/// Stable FNV-1a hash of the text rendering of a config.
std::uint64_t config_hash(const ExperimentConfig& cfg);
/// Text rendering in the config-file format.
std::string render_config(const ExperimentConfig& cfg);

}  // namespace sparse_da
