#include "sparse_da/presets.hpp"

#include "sparse_da/error.hpp"

namespace sparse_da {

namespace {

ExperimentConfig advdiff_verify(bool full) {
  ExperimentConfig c;
  c.name = "advdiff-verify";
  c.kase = CaseKind::advdiff;
  c.phi = 1.0;
  c.beta = 0.55;
  for (const char* f : {"kf", "etkf", "letkf", "iewpf", "mc"})
    c.filters.push_back(FilterSpec::parse(f, c.phi, c.beta));
  c.ne = 50;
  c.truths = full ? 20 : 5;
  c.ensembles = full ? 5 : 3;
  c.seed = 20230501;
  c.full_scale = full;
  c.grid = Grid2D{50, 30, 0.1, 0.1, true, true};
  c.advdiff = AdvDiffConfig{};
  c.prior = MaternSpec{0.5, 3.5};
  c.prior_periodic = false;
  c.model_error.kind = ModelErrorKind::matern_direct;
  c.model_error.matern = MaternSpec{0.125, 7.0};
  c.model_error.interval = c.advdiff.dt;
  c.sites = advdiff_sites();
  c.observed_vars = {0};
  c.obs_r = 0.1;
  c.obs_interval = 25;
  c.obs_count = 10;
  c.spinup_steps = 0;
  c.diq_points = {{0.0, 0.0}, {2.5, 1.5}};
  c.cross_time = true;
  return c;
}

ExperimentConfig swe_base(const std::string& name, bool full) {
  ExperimentConfig c;
  c.name = name;
  c.kase = CaseKind::swe;
  c.phi = 1.0;
  c.beta = 1.0;
  c.seed = 20230502;
  c.full_scale = full;
  c.swe = SweConfig{};
  c.jet = JetSpec{};
  c.model_error.kind = ModelErrorKind::balanced_swe;
  c.model_error.matern = MaternSpec{0.01, 1.0};
  c.model_error.soar_length = 40000.0;
  c.observed_vars = {swe::kHu, swe::kHv};
  c.obs_r = 1.0;
  c.spinup_steps = 360;   // 6 h
  c.obs_interval = 5;     // 5 min
  c.obs_count = 144;      // 12 h
  c.diq_points.clear();
  c.cross_time = false;
  const auto buoys = swe_buoy_sites();
  if (!full) {
    c.grid = Grid2D{100, 60, 11000.0, 11100.0, true, true};
    c.swe.dt_num = 30.0;
    c.substeps = 2;
    c.model_error.coarse_factor = 5;
    c.sites = buoys;
  } else {
    // Same physical domain at five times the resolution.
    c.grid = Grid2D{500, 300, 2200.0, 2220.0, true, true};
    c.swe.dt_num = 15.0;
    c.substeps = 4;
    c.model_error.coarse_factor = 25;
    c.obs_count = 7 * 24 * 12;
    for (const auto& [i, j] : buoys) c.sites.emplace_back(5 * i + 2, 5 * j + 2);
  }
  c.swe.dx = c.grid.dx;
  c.swe.dy = c.grid.dy;
  c.model_error.interval = c.substeps * c.swe.dt_num;
  return c;
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"advdiff-verify", "swe-drift", "swe-rankhist"};
}

std::vector<std::pair<Index, Index>> advdiff_sites() {
  return {{0, 0},  {11, 1},  {20, 28}, {29, 1},  {39, 29},
          {1, 11}, {9, 9},   {19, 9},  {31, 11}, {41, 9},
          {2, 19}, {12, 21}, {19, 21}, {31, 19}, {39, 21}};
}

std::vector<std::pair<Index, Index>> swe_buoy_sites() {
  return {{5, 4},   {16, 3},  {23, 7},  {33, 5},  {47, 3},  {57, 4},  {63, 3},
          {76, 6},  {83, 4},  {93, 7},  {6, 13},  {17, 13}, {24, 17}, {33, 17},
          {47, 16}, {53, 14}, {63, 17}, {74, 15}, {86, 14}, {97, 13}, {7, 25},
          {17, 24}, {23, 27}, {37, 24}, {45, 23}, {57, 23}, {67, 23}, {77, 24},
          {86, 27}, {96, 25}, {6, 37},  {16, 35}, {25, 34}, {34, 34}, {43, 37},
          {55, 37}, {66, 35}, {76, 35}, {87, 33}, {93, 37}, {6, 44},  {15, 44},
          {26, 46}, {33, 43}, {47, 47}, {55, 45}, {65, 47}, {76, 47}, {86, 43},
          {93, 45}, {6, 53},  {13, 55}, {27, 56}, {35, 56}, {45, 53}, {56, 55},
          {64, 57}, {73, 56}, {83, 54}, {95, 54}};
}

ExperimentConfig preset(const std::string& name, bool full) {
  if (name == "advdiff-verify") return advdiff_verify(full);
  if (name == "swe-drift") {
    ExperimentConfig c = swe_base(name, full);
    for (const char* f : {"letkf", "letkf:phi=0.5", "iewpf", "mc"})
      c.filters.push_back(FilterSpec::parse(f, c.phi, c.beta));
    c.ne = full ? 100 : 20;
    c.truths = 1;
    c.ensembles = 1;
    const double lx = c.grid.length_x(), ly = c.grid.length_y();
    // between the jets, in the southern jet, in the northern jet
    c.drifters = {{0.30 * lx, 0.50 * ly}, {0.50 * lx, 0.25 * ly}, {0.70 * lx, 0.75 * ly}};
    c.drift_steps = static_cast<int>(6 * 3600 / c.swe.dt_num);
    c.drift_record_stride = 10;
    return c;
  }
  if (name == "swe-rankhist") {
    ExperimentConfig c = swe_base(name, full);
    for (const char* f : {"letkf", "letkf:phi=0.5"})
      c.filters.push_back(FilterSpec::parse(f, c.phi, c.beta));
    c.ne = 40;
    c.truths = full ? 1000 : 4;
    c.ensembles = 1;
    c.obs_count = full ? c.obs_count : 72;
    c.rank_locations = 20;
    c.write_fields = false;
    return c;
  }
  throw ConfigError("unknown preset '" + name + "'");
}

ExperimentConfig load_experiment(const ConfigFile& file,
                                 const std::string& preset_name, bool full) {
  std::string base_name = preset_name;
  if (file.has("experiment.preset")) {
    const std::string from_file = file.get("experiment.preset");
    if (base_name.empty()) base_name = from_file;
  }
  if (file.has("experiment.full")) full = full || file.get_bool("experiment.full");
  ExperimentConfig base = base_name.empty() ? ExperimentConfig{} : preset(base_name, full);
  ExperimentConfig cfg = apply_config(file, base);
  file.require_all_used();
  cfg.full_scale = full;
  cfg.validate();
  return cfg;
}

}  // namespace sparse_da
