#include "sparse_da/observing.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include "sparse_da/csv.hpp"
#include "sparse_da/error.hpp"

namespace sparse_da {

ObservationNetwork::ObservationNetwork(std::vector<ObservationSite> sites,
                                       double r)
    : sites_(std::move(sites)), r_(r) {
  if (!(r_ >= 0.0)) throw ConfigError("observation noise std must be >= 0");
  std::set<std::pair<Index, int>> seen;
  for (const auto& s : sites_) {
    if (s.cell < 0 || s.var < 0)
      throw ConfigError("observation site indices must be >= 0");
    if (!seen.insert({s.cell, s.var}).second)
      throw ConfigError("observation sites must be distinct");
  }
}

void ObservationNetwork::check_state(const Grid2D& grid, int n_vars) const {
  for (const auto& s : sites_) {
    require_dims(s.cell < grid.cells() && s.var < n_vars,
                 "observation site lies outside the state");
  }
}

bool ObservationNetwork::sparse_regime(Index state_size) const {
  return 10 * size() <= state_size;
}

Eigen::VectorXd apply_H(const ObservationNetwork& net, const StateVector& x) {
  net.check_state(x.grid(), x.n_vars());
  const Index cells = x.grid().cells();
  Eigen::VectorXd out(net.size());
  for (Index i = 0; i < net.size(); ++i)
    out[i] = x.values()[net.state_index(i, cells)];
  return out;
}

Eigen::MatrixXd apply_H(const ObservationNetwork& net, const Eigen::MatrixXd& x,
                        Index cells) {
  Eigen::MatrixXd out(net.size(), x.cols());
  for (Index i = 0; i < net.size(); ++i) {
    const Index row = net.state_index(i, cells);
    require_dims(row < x.rows(), "observation site lies outside the state");
    out.row(i) = x.row(row);
  }
  return out;
}

Eigen::MatrixXd dense_H(const ObservationNetwork& net, const Grid2D& grid,
                        int n_vars) {
  net.check_state(grid, n_vars);
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(net.size(), n_vars * grid.cells());
  for (Index i = 0; i < net.size(); ++i) h(i, net.state_index(i, grid.cells())) = 1.0;
  return h;
}

ObservationRecord observe(const ObservationNetwork& net, const StateVector& truth,
                          int time_index, RngStream& rng) {
  ObservationRecord rec;
  rec.time_index = time_index;
  rec.values = apply_H(net, truth);
  for (Index i = 0; i < rec.values.size(); ++i)
    rec.values[i] += net.r() * rng.normal();
  return rec;
}

TwinExperiment run_truth(const StateVector& initial, const ModelStep& step,
                         const ErrorSampler& error,
                         const std::vector<int>& schedule, int total_steps,
                         const ObservationNetwork& net, std::uint64_t seed) {
  for (std::size_t i = 1; i < schedule.size(); ++i)
    if (schedule[i] <= schedule[i - 1])
      throw ConfigError("assimilation schedule must be strictly increasing");
  if (!schedule.empty() && (schedule.front() < 1 || schedule.back() > total_steps))
    throw ConfigError("assimilation schedule lies outside [1, total_steps]");
  net.check_state(initial.grid(), initial.n_vars());

  TwinExperiment twin;
  twin.seed = seed;
  twin.network = net;
  twin.schedule = schedule;
  twin.total_steps = total_steps;

  RngStream model_rng(derive_seed(seed, {0}));
  RngStream obs_rng(derive_seed(seed, {1}));
  StateVector x = initial;
  std::size_t next = 0;
  for (int n = 1; n <= total_steps; ++n) {
    try {
      x = step(x);
      if (error) x.values() += error(model_rng).values();
    } catch (const NumericalError& e) {
      std::ostringstream msg;
      msg << "truth model step " << n << ": " << e.what();
      throw NumericalError(msg.str());
    }
    if (next < schedule.size() && schedule[next] == n) {
      twin.truth_states.push_back(x);
      twin.observations.push_back(observe(net, x, n, obs_rng));
      ++next;
    }
  }
  twin.final_truth = x;
  return twin;
}

namespace {

constexpr char kMagic[8] = {'S', 'P', 'D', 'A', 'T', 'W', 'I', 'N'};
constexpr std::uint8_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(buf, buf + sizeof(T));
  out.write(buf, sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  char buf[sizeof(T)];
  if (!in.read(buf, sizeof(T))) throw ConfigError("truncated twin file");
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(buf, buf + sizeof(T));
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

void put_vector(std::ostream& out, const Eigen::VectorXd& v) {
  for (Index i = 0; i < v.size(); ++i) put<double>(out, v[i]);
}

Eigen::VectorXd get_vector(std::istream& in, Index n) {
  Eigen::VectorXd v(n);
  for (Index i = 0; i < n; ++i) v[i] = get<double>(in);
  return v;
}

}  // namespace

void write_twin(const TwinExperiment& twin, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  const Grid2D& grid = twin.final_truth.grid();
  out.write(kMagic, sizeof(kMagic));
  put<std::uint8_t>(out, kVersion);
  put<std::int64_t>(out, grid.nx);
  put<std::int64_t>(out, grid.ny);
  put<double>(out, grid.dx);
  put<double>(out, grid.dy);
  put<std::uint8_t>(out, (grid.periodic_x ? 1 : 0) | (grid.periodic_y ? 2 : 0));
  put<std::int32_t>(out, twin.final_truth.n_vars());
  put<std::uint64_t>(out, twin.seed);
  put<std::int32_t>(out, twin.total_steps);

  put<double>(out, twin.network.r());
  put<std::int64_t>(out, twin.network.size());
  for (const auto& s : twin.network.sites()) {
    put<std::int64_t>(out, s.cell);
    put<std::int32_t>(out, s.var);
  }
  put<std::int64_t>(out, static_cast<std::int64_t>(twin.schedule.size()));
  for (int n : twin.schedule) put<std::int32_t>(out, n);

  put<std::int64_t>(out, static_cast<std::int64_t>(twin.truth_states.size()));
  for (const auto& x : twin.truth_states) put_vector(out, x.values());
  put_vector(out, twin.final_truth.values());

  put<std::int64_t>(out, static_cast<std::int64_t>(twin.observations.size()));
  for (const auto& rec : twin.observations) {
    put<std::int32_t>(out, rec.time_index);
    put_vector(out, rec.values);
  }
  if (!out) throw NumericalError("failed writing " + path);
}

TwinExperiment read_twin(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) ||
      std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw ConfigError(path + " is not a twin-experiment file");
  if (get<std::uint8_t>(in) != kVersion)
    throw ConfigError(path + " has an unsupported version");

  Grid2D grid;
  grid.nx = get<std::int64_t>(in);
  grid.ny = get<std::int64_t>(in);
  grid.dx = get<double>(in);
  grid.dy = get<double>(in);
  const auto flags = get<std::uint8_t>(in);
  grid.periodic_x = flags & 1;
  grid.periodic_y = flags & 2;
  grid.validate();
  const int n_vars = get<std::int32_t>(in);
  if (n_vars < 1) throw ConfigError("twin file has no variables");
  const Index state = n_vars * grid.cells();

  TwinExperiment twin;
  twin.seed = get<std::uint64_t>(in);
  twin.total_steps = get<std::int32_t>(in);
  const double r = get<double>(in);
  const auto n_sites = get<std::int64_t>(in);
  std::vector<ObservationSite> sites(static_cast<std::size_t>(n_sites));
  for (auto& s : sites) {
    s.cell = get<std::int64_t>(in);
    s.var = get<std::int32_t>(in);
  }
  twin.network = ObservationNetwork(std::move(sites), r);
  twin.schedule.resize(static_cast<std::size_t>(get<std::int64_t>(in)));
  for (int& n : twin.schedule) n = get<std::int32_t>(in);

  const auto n_truth = get<std::int64_t>(in);
  for (std::int64_t t = 0; t < n_truth; ++t)
    twin.truth_states.emplace_back(grid, n_vars, get_vector(in, state));
  twin.final_truth = StateVector(grid, n_vars, get_vector(in, state));

  const auto n_obs = get<std::int64_t>(in);
  for (std::int64_t t = 0; t < n_obs; ++t) {
    ObservationRecord rec;
    rec.time_index = get<std::int32_t>(in);
    rec.values = get_vector(in, twin.network.size());
    twin.observations.push_back(std::move(rec));
  }
  return twin;
}

void write_observations_csv(const TwinExperiment& twin, std::ostream& out) {
  out << "step,obs,cell,var,value\n";
  for (const auto& rec : twin.observations) {
    for (Index i = 0; i < rec.values.size(); ++i) {
      const auto& s = twin.network.site(static_cast<std::size_t>(i));
      out << rec.time_index << ',' << i << ',' << s.cell << ',' << s.var << ','
          << format_double(rec.values[i]) << '\n';
    }
  }
}

}  // namespace sparse_da
