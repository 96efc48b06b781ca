#include "sparse_da/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "sparse_da/csv.hpp"
#include "sparse_da/error.hpp"

namespace sparse_da {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_double(const std::string& key, const std::string& text) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(text, &pos);
    if (pos != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' expects a number, got '" + text + "'");
  }
}

long long parse_int(const std::string& key, const std::string& text) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(text, &pos);
    if (pos != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' expects an integer, got '" + text + "'");
  }
}

/// "a b; c d" -> {(a, b), (c, d)}
std::vector<std::pair<double, double>> parse_pairs(const std::string& key,
                                                   const std::string& text) {
  std::vector<std::pair<double, double>> out;
  for (const auto& item : split(text, ';')) {
    std::istringstream in(item);
    std::string a, b, extra;
    in >> a >> b;
    if (a.empty() || b.empty() || (in >> extra))
      throw ConfigError("'" + key + "' expects pairs 'a b; c d', got '" + item + "'");
    out.emplace_back(parse_double(key, a), parse_double(key, b));
  }
  return out;
}

template <typename T>
std::string join_pairs(const std::vector<T>& items) {
  std::ostringstream s;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) s << "; ";
    s << items[i];
  }
  return s.str();
}

}  // namespace

ConfigFile ConfigFile::parse(std::istream& in, const std::string& origin) {
  ConfigFile cfg;
  cfg.origin_ = origin;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty())
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    const std::string full = section.empty() ? key : section + "." + key;
    if (cfg.values_.count(full))
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key " + full);
    cfg.values_[full] = trim(line.substr(eq + 1));
  }
  return cfg;
}

ConfigFile ConfigFile::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return parse(in, path);
}

std::string ConfigFile::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing config key " + key);
  used_.insert(key);
  return it->second;
}

double ConfigFile::get_double(const std::string& key) const {
  return parse_double(key, get(key));
}

long long ConfigFile::get_int(const std::string& key) const {
  return parse_int(key, get(key));
}

bool ConfigFile::get_bool(const std::string& key) const {
  std::string v = get(key);
  std::transform(v.begin(), v.end(), v.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("'" + key + "' expects a boolean, got '" + v + "'");
}

void ConfigFile::require_all_used() const {
  std::string unknown;
  for (const auto& [k, v] : values_)
    if (!used_.count(k)) unknown += (unknown.empty() ? "" : ", ") + k;
  if (!unknown.empty()) throw ConfigError(origin_ + ": unknown keys: " + unknown);
}

std::string to_string(FilterKind kind) {
  switch (kind) {
    case FilterKind::kf: return "kf";
    case FilterKind::etkf: return "etkf";
    case FilterKind::letkf: return "letkf";
    case FilterKind::iewpf: return "iewpf";
    case FilterKind::mc: return "mc";
  }
  return "?";
}

std::string to_string(CaseKind kind) {
  return kind == CaseKind::advdiff ? "advdiff" : "swe";
}

FilterSpec FilterSpec::parse(const std::string& text, double default_phi,
                             double default_beta) {
  FilterSpec spec;
  spec.phi = default_phi;
  spec.beta = default_beta;
  const auto parts = split(text, ':');
  if (parts.empty()) throw ConfigError("empty filter name");
  const std::string& kind = parts[0];
  if (kind == "kf") {
    spec.kind = FilterKind::kf;
  } else if (kind == "etkf") {
    spec.kind = FilterKind::etkf;
  } else if (kind == "letkf") {
    spec.kind = FilterKind::letkf;
  } else if (kind == "iewpf") {
    spec.kind = FilterKind::iewpf;
  } else if (kind == "mc") {
    spec.kind = FilterKind::mc;
  } else {
    throw ConfigError("unknown filter '" + kind + "'");
  }
  spec.label = kind;
  if (parts.size() > 2) throw ConfigError("bad filter spec '" + text + "'");
  if (parts.size() == 2) {
    for (const auto& kv : split(parts[1], ',')) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("bad filter option '" + kv + "'");
      const std::string k = trim(kv.substr(0, eq));
      const std::string v = trim(kv.substr(eq + 1));
      if (k == "phi" && spec.kind == FilterKind::letkf) {
        spec.phi = parse_double("phi", v);
      } else if (k == "beta" && spec.kind == FilterKind::iewpf) {
        spec.beta = parse_double("beta", v);
      } else {
        throw ConfigError("filter '" + kind + "' has no option '" + k + "'");
      }
      spec.label += "_" + k + v;
    }
  }
  return spec;
}

std::vector<int> ExperimentConfig::schedule() const {
  std::vector<int> s;
  for (int k = 1; k <= obs_count; ++k) s.push_back(spinup_steps + k * obs_interval);
  return s;
}

void ExperimentConfig::validate() const {
  grid.validate();
  if (filters.empty()) throw ConfigError("no filters configured");
  std::set<std::string> labels;
  for (const auto& f : filters) {
    if (!labels.insert(f.label).second)
      throw ConfigError("duplicate filter label " + f.label);
    if (f.kind == FilterKind::kf && kase != CaseKind::advdiff)
      throw ConfigError("the analytic KF is only available for the advdiff case");
    if (f.kind == FilterKind::letkf && !(f.phi >= 0.0 && f.phi <= 1.0))
      throw ConfigError("phi must lie in [0, 1]");
    if (f.kind == FilterKind::iewpf && !(f.beta > 0.0 && f.beta <= 1.0))
      throw ConfigError("beta must lie in (0, 1]");
  }
  if (ne < 1) throw ConfigError("ensemble size must be >= 1");
  for (const auto& f : filters)
    if (f.kind != FilterKind::kf && ne < 2)
      throw ConfigError("ensemble filters need ne >= 2");
  if (truths < 1 || ensembles < 1) throw ConfigError("replicate counts must be >= 1");
  if (obs_interval < 1 || obs_count < 0 || spinup_steps < 0)
    throw ConfigError("invalid observation schedule");
  if (!(obs_r > 0.0)) throw ConfigError("observation noise must be > 0");
  if (sites.empty() && obs_count > 0) throw ConfigError("no observation sites");
  for (const auto& [i, j] : sites)
    if (i < 0 || j < 0 || i >= grid.nx || j >= grid.ny)
      throw ConfigError("observation site outside the grid");
  for (int v : observed_vars)
    if (v < 0 || v >= n_vars()) throw ConfigError("observed variable out of range");
  if (kase == CaseKind::advdiff) {
    advdiff.validate(grid);
    prior.validate();
    if (model_error.kind != ModelErrorKind::matern_direct)
      throw ConfigError("advdiff uses matern_direct model error");
  } else {
    swe.validate();
    if (substeps < 1) throw ConfigError("substeps must be >= 1");
    if (std::abs(swe.dx - grid.dx) > 1e-9 * grid.dx ||
        std::abs(swe.dy - grid.dy) > 1e-9 * grid.dy)
      throw ConfigError("swe cell size must match the grid");
    if (model_error.kind != ModelErrorKind::balanced_swe)
      throw ConfigError("swe uses balanced_swe model error");
  }
  model_error.validate();
  if (drift_steps < 0 || drift_record_stride < 1)
    throw ConfigError("invalid drifter settings");
  if (rank_locations < 0) throw ConfigError("rank_locations must be >= 0");
}

ExperimentConfig apply_config(const ConfigFile& f, ExperimentConfig c) {
  auto dbl = [&](const char* key, double& target) {
    if (f.has(key)) target = f.get_double(key);
  };
  auto integer = [&](const char* key, auto& target) {
    if (f.has(key)) target = static_cast<std::remove_reference_t<decltype(target)>>(f.get_int(key));
  };
  auto boolean = [&](const char* key, bool& target) {
    if (f.has(key)) target = f.get_bool(key);
  };

  if (f.has("experiment.name")) c.name = f.get("experiment.name");
  if (f.has("experiment.case")) {
    const std::string k = f.get("experiment.case");
    if (k == "advdiff") {
      c.kase = CaseKind::advdiff;
    } else if (k == "swe") {
      c.kase = CaseKind::swe;
    } else {
      throw ConfigError("unknown case '" + k + "'");
    }
  }
  dbl("filter.phi", c.phi);
  dbl("filter.beta", c.beta);
  dbl("filter.radius", c.radius);
  dbl("filter.weight_tol", c.weight_tol);
  if (f.has("experiment.filters") || f.has("experiment.filter")) {
    const std::string key = f.has("experiment.filters") ? "experiment.filters" : "experiment.filter";
    c.filters.clear();
    for (const auto& item : split(f.get(key), ';'))
      c.filters.push_back(FilterSpec::parse(item, c.phi, c.beta));
  } else if (f.has("filter.phi") || f.has("filter.beta")) {
    // re-derive defaults of filters without explicit options
    for (auto& spec : c.filters)
      if (spec.label == to_string(spec.kind)) {
        spec.phi = c.phi;
        spec.beta = c.beta;
      }
  }
  integer("experiment.ne", c.ne);
  integer("experiment.truths", c.truths);
  integer("experiment.ensembles", c.ensembles);
  if (f.has("experiment.seed")) {
    const long long s = f.get_int("experiment.seed");
    if (s < 0) throw ConfigError("seed must be >= 0");
    c.seed = static_cast<std::uint64_t>(s);
  }
  integer("experiment.workers", c.workers);
  if (f.has("experiment.out_dir")) c.out_dir = f.get("experiment.out_dir");
  boolean("experiment.full", c.full_scale);

  integer("grid.nx", c.grid.nx);
  integer("grid.ny", c.grid.ny);
  dbl("grid.dx", c.grid.dx);
  dbl("grid.dy", c.grid.dy);
  boolean("grid.periodic_x", c.grid.periodic_x);
  boolean("grid.periodic_y", c.grid.periodic_y);

  dbl("advdiff.d", c.advdiff.d);
  dbl("advdiff.vx", c.advdiff.vx);
  dbl("advdiff.vy", c.advdiff.vy);
  dbl("advdiff.zeta", c.advdiff.zeta);
  dbl("advdiff.dt", c.advdiff.dt);
  dbl("advdiff.prior_sigma", c.prior.sigma);
  dbl("advdiff.prior_psi", c.prior.psi);
  boolean("advdiff.prior_periodic", c.prior_periodic);
  dbl("advdiff.baseline", c.baseline);
  dbl("advdiff.bump_amplitude", c.bump_amplitude);
  dbl("advdiff.bump_x", c.bump_x);
  dbl("advdiff.bump_y", c.bump_y);
  dbl("advdiff.bump_width", c.bump_width);

  dbl("swe.depth", c.swe.H_depth);
  dbl("swe.g", c.swe.g);
  dbl("swe.f", c.swe.f);
  dbl("swe.dt_num", c.swe.dt_num);
  integer("swe.substeps", c.substeps);
  integer("swe.spinup_steps", c.spinup_steps);
  dbl("swe.jet_speed", c.jet.speed);
  dbl("swe.jet_width", c.jet.width);
  dbl("swe.jet_south", c.jet.south_center);
  c.swe.dx = c.grid.dx;
  c.swe.dy = c.grid.dy;

  if (f.has("model_error.kind")) {
    const std::string k = f.get("model_error.kind");
    if (k == "matern_direct") {
      c.model_error.kind = ModelErrorKind::matern_direct;
    } else if (k == "balanced_swe") {
      c.model_error.kind = ModelErrorKind::balanced_swe;
    } else {
      throw ConfigError("unknown model error kind '" + k + "'");
    }
  }
  dbl("model_error.sigma", c.model_error.matern.sigma);
  dbl("model_error.psi", c.model_error.matern.psi);
  dbl("model_error.soar_length", c.model_error.soar_length);
  integer("model_error.coarse_factor", c.model_error.coarse_factor);
  c.model_error.interval =
      c.kase == CaseKind::advdiff ? c.advdiff.dt : c.substeps * c.swe.dt_num;

  if (f.has("observations.sites")) {
    c.sites.clear();
    for (const auto& [i, j] : parse_pairs("observations.sites", f.get("observations.sites"))) {
      if (i != static_cast<double>(static_cast<Index>(i)) ||
          j != static_cast<double>(static_cast<Index>(j)))
        throw ConfigError("observation sites must be integer cells");
      c.sites.emplace_back(static_cast<Index>(i), static_cast<Index>(j));
    }
  }
  if (f.has("observations.vars")) {
    c.observed_vars.clear();
    for (const auto& v : split(f.get("observations.vars"), ','))
      c.observed_vars.push_back(static_cast<int>(parse_int("observations.vars", v)));
  }
  dbl("observations.r", c.obs_r);
  integer("observations.interval", c.obs_interval);
  integer("observations.count", c.obs_count);

  if (f.has("diagnostics.diq_points"))
    c.diq_points = parse_pairs("diagnostics.diq_points", f.get("diagnostics.diq_points"));
  boolean("diagnostics.cross_time", c.cross_time);
  if (f.has("diagnostics.drifters")) {
    c.drifters.clear();
    for (const auto& [x, y] : parse_pairs("diagnostics.drifters", f.get("diagnostics.drifters")))
      c.drifters.push_back({x, y});
  }
  integer("diagnostics.drift_steps", c.drift_steps);
  integer("diagnostics.drift_record_stride", c.drift_record_stride);
  integer("diagnostics.rank_locations", c.rank_locations);
  boolean("diagnostics.write_fields", c.write_fields);
  return c;
}

std::string render_config(const ExperimentConfig& c) {
  std::ostringstream s;
  auto d = [](double v) { return format_double(v); };
  auto b = [](bool v) { return v ? "true" : "false"; };
  s << "[experiment]\n";
  s << "name = " << c.name << "\n";
  s << "case = " << to_string(c.kase) << "\n";
  s << "filters = ";
  for (std::size_t i = 0; i < c.filters.size(); ++i) {
    const auto& f = c.filters[i];
    s << (i ? "; " : "") << to_string(f.kind);
    if (f.kind == FilterKind::letkf) s << ":phi=" << d(f.phi);
    if (f.kind == FilterKind::iewpf) s << ":beta=" << d(f.beta);
  }
  s << "\n";
  s << "ne = " << c.ne << "\ntruths = " << c.truths << "\nensembles = " << c.ensembles
    << "\nseed = " << c.seed << "\nfull = " << b(c.full_scale) << "\n";
  s << "\n[grid]\nnx = " << c.grid.nx << "\nny = " << c.grid.ny << "\ndx = " << d(c.grid.dx)
    << "\ndy = " << d(c.grid.dy) << "\nperiodic_x = " << b(c.grid.periodic_x)
    << "\nperiodic_y = " << b(c.grid.periodic_y) << "\n";
  if (c.kase == CaseKind::advdiff) {
    s << "\n[advdiff]\nd = " << d(c.advdiff.d) << "\nvx = " << d(c.advdiff.vx)
      << "\nvy = " << d(c.advdiff.vy) << "\nzeta = " << d(c.advdiff.zeta)
      << "\ndt = " << d(c.advdiff.dt) << "\nprior_sigma = " << d(c.prior.sigma)
      << "\nprior_psi = " << d(c.prior.psi) << "\nprior_periodic = " << b(c.prior_periodic)
      << "\nbaseline = " << d(c.baseline) << "\nbump_amplitude = " << d(c.bump_amplitude)
      << "\nbump_x = " << d(c.bump_x) << "\nbump_y = " << d(c.bump_y)
      << "\nbump_width = " << d(c.bump_width) << "\n";
  } else {
    s << "\n[swe]\ndepth = " << d(c.swe.H_depth) << "\ng = " << d(c.swe.g)
      << "\nf = " << d(c.swe.f) << "\ndt_num = " << d(c.swe.dt_num)
      << "\nsubsteps = " << c.substeps << "\nspinup_steps = " << c.spinup_steps
      << "\njet_speed = " << d(c.jet.speed) << "\njet_width = " << d(c.jet.width)
      << "\njet_south = " << d(c.jet.south_center) << "\n";
  }
  s << "\n[model_error]\nkind = "
    << (c.model_error.kind == ModelErrorKind::matern_direct ? "matern_direct" : "balanced_swe")
    << "\nsigma = " << d(c.model_error.matern.sigma) << "\npsi = " << d(c.model_error.matern.psi)
    << "\nsoar_length = " << d(c.model_error.soar_length)
    << "\ncoarse_factor = " << c.model_error.coarse_factor << "\n";
  std::vector<std::string> sites;
  for (const auto& [i, j] : c.sites) sites.push_back(std::to_string(i) + " " + std::to_string(j));
  std::vector<std::string> vars;
  for (int v : c.observed_vars) vars.push_back(std::to_string(v));
  s << "\n[observations]\nsites = " << join_pairs(sites) << "\nvars = ";
  for (std::size_t i = 0; i < vars.size(); ++i) s << (i ? ", " : "") << vars[i];
  s << "\nr = " << d(c.obs_r) << "\ninterval = " << c.obs_interval << "\ncount = " << c.obs_count
    << "\n";
  s << "\n[filter]\nradius = " << d(c.radius) << "\nphi = " << d(c.phi) << "\nbeta = "
    << d(c.beta) << "\nweight_tol = " << d(c.weight_tol) << "\n";
  std::vector<std::string> pts, drift;
  for (const auto& [x, y] : c.diq_points) pts.push_back(d(x) + " " + d(y));
  for (const auto& p : c.drifters) drift.push_back(d(p.x) + " " + d(p.y));
  s << "\n[diagnostics]\ndiq_points = " << join_pairs(pts)
    << "\ncross_time = " << b(c.cross_time) << "\ndrifters = " << join_pairs(drift)
    << "\ndrift_steps = " << c.drift_steps << "\ndrift_record_stride = " << c.drift_record_stride
    << "\nrank_locations = " << c.rank_locations << "\nwrite_fields = " << b(c.write_fields)
    << "\n";
  return s.str();
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  const std::string text = render_config(cfg);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace sparse_da
