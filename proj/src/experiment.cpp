#include "sparse_da/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "sparse_da/csv.hpp"
#include "sparse_da/drift.hpp"
#include "sparse_da/error.hpp"
#include "sparse_da/etkf.hpp"
#include "sparse_da/iewpf.hpp"
#include "sparse_da/kf.hpp"
#include "sparse_da/letkf.hpp"
#include "sparse_da/localisation.hpp"

namespace sparse_da {

std::vector<const MetricSeries*> RunSummary::series(const std::string& name) const {
  std::vector<const MetricSeries*> out;
  for (const auto& s : metrics)
    if (s.name == name) out.push_back(&s);
  return out;
}

double RunSummary::mean_at(const std::string& name, int step) const {
  double sum = 0.0;
  int n = 0;
  for (const auto* s : series(name)) {
    if (s->values.empty()) continue;
    if (step < 0) {
      sum += s->last();
      ++n;
      continue;
    }
    for (std::size_t i = 0; i < s->steps.size(); ++i)
      if (s->steps[i] == step) {
        sum += s->values[i];
        ++n;
      }
  }
  return n ? sum / n : std::nan("");
}

std::uint64_t truth_seed(std::uint64_t master, int t) {
  return derive_seed(master, {1, static_cast<std::uint64_t>(t)});
}

std::uint64_t ensemble_seed(std::uint64_t master, int t, int r) {
  return derive_seed(master, {2, static_cast<std::uint64_t>(t),
                              static_cast<std::uint64_t>(r)});
}

std::uint64_t member_seed(std::uint64_t master, int t, int r, int e) {
  return derive_seed(ensemble_seed(master, t, r), {static_cast<std::uint64_t>(e)});
}

StateVector initial_mean(const ExperimentConfig& cfg) {
  const Grid2D& g = cfg.grid;
  if (cfg.kase == CaseKind::swe) return balanced_jet(g, cfg.swe, cfg.jet);
  StateVector mean(g, 1);
  for (Index k = 0; k < g.cells(); ++k) {
    const auto [i, j] = g.ij(k);
    const double ox = wrapped_offset(cfg.bump_x, i * g.dx, g.length_x(), g.periodic_x);
    const double oy = wrapped_offset(cfg.bump_y, j * g.dy, g.length_y(), g.periodic_y);
    mean.at(0, k) = cfg.baseline + cfg.bump_amplitude *
                                       std::exp(-(ox * ox + oy * oy) /
                                                (2.0 * cfg.bump_width * cfg.bump_width));
  }
  return mean;
}

ObservationNetwork make_network(const ExperimentConfig& cfg) {
  std::vector<ObservationSite> sites;
  for (const auto& [i, j] : cfg.sites)
    for (int v : cfg.observed_vars) sites.push_back({cfg.grid.cell(i, j), v});
  return ObservationNetwork(std::move(sites), cfg.obs_r);
}

namespace {

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex;
  s.width(16);
  s.fill('0');
  s << v;
  return s.str();
}

std::string field_text(const Grid2D& grid, const Eigen::VectorXd& values) {
  std::ostringstream s;
  write_field_csv(s, grid, values);
  return s.str();
}

/// Read-only state shared by every worker.
struct Setup {
  const ExperimentConfig& cfg;
  ObservationNetwork net;
  StateVector mean0;
  Index cells = 0;
  std::vector<int> schedule;
  std::vector<int> record_steps;
  ModelError error;
  std::optional<SweConfig> swe;

  // advection-diffusion
  LinearOperator op;
  Eigen::MatrixXd prior_cov;
  Eigen::MatrixXd prior_factor;
  Eigen::MatrixXd q;
  int prev_step = -1;             // analysis time before the terminal one
  Eigen::MatrixXd m_interval;     // propagator from prev_step to terminal
  std::vector<Index> point_cells;

  // shallow water
  std::vector<Index> obs_cells;
  std::vector<Index> far_cells;

  bool any(FilterKind kind) const {
    return std::any_of(cfg.filters.begin(), cfg.filters.end(),
                       [&](const FilterSpec& f) { return f.kind == kind; });
  }
  bool any_ensemble() const {
    return std::any_of(cfg.filters.begin(), cfg.filters.end(),
                       [](const FilterSpec& f) { return f.kind != FilterKind::kf; });
  }

  LocalisationPlan plan;
  std::optional<IewpfProposal> proposal;

  explicit Setup(const ExperimentConfig& c) : cfg(c) {}
};

double empirical_eta_range(const ModelError& err, const Grid2D& grid) {
  const Index cells = grid.cells();
  const Eigen::MatrixXd& f = err.factor();
  const Index k = grid.cell(grid.nx / 2, grid.ny / 2);
  const Eigen::VectorXd cov = f.topRows(cells) * f.row(k).transpose();
  const Eigen::VectorXd var = f.topRows(cells).rowwise().squaredNorm();
  double range = 0.0;
  for (Index l = 0; l < cells; ++l) {
    if (var[l] <= 0.0) continue;
    if (cov[l] / std::sqrt(var[k] * var[l]) >= 0.05)
      range = std::max(range, torus_distance(grid, k, l));
  }
  return range;
}

void prepare(Setup& s, RunSummary& summary) {
  const ExperimentConfig& cfg = s.cfg;
  const Grid2D& grid = cfg.grid;
  s.net = make_network(cfg);
  s.net.check_state(grid, cfg.n_vars());
  s.mean0 = initial_mean(cfg);
  s.cells = grid.cells();
  s.schedule = cfg.schedule();
  s.record_steps = s.schedule.empty() ? std::vector<int>{cfg.total_steps()} : s.schedule;
  if (!s.net.sparse_regime(cfg.n_vars() * grid.cells()))
    summary.warnings.push_back("observation count is not small against the state size");

  if (cfg.kase == CaseKind::advdiff) {
    s.op = build_advdiff_operator(grid, cfg.advdiff);
    Grid2D prior_grid = grid;
    prior_grid.periodic_x = prior_grid.periodic_y = cfg.prior_periodic;
    s.prior_cov = matern_covariance(prior_grid, cfg.prior);
    s.prior_factor = cholesky_factor(s.prior_cov);
    s.error = ModelError(cfg.model_error, grid);
    s.q = s.error.factor() * s.error.factor().transpose();
    for (const auto& [x, y] : cfg.diq_points) s.point_cells.push_back(grid.nearest_cell(x, y));
    if (cfg.cross_time && !s.point_cells.empty()) {
      const int terminal = s.record_steps.back();
      s.prev_step = s.schedule.size() >= 2 ? s.schedule[s.schedule.size() - 2] : 0;
      Eigen::MatrixXd m = Eigen::MatrixXd::Identity(s.cells, s.cells);
      for (int n = s.prev_step; n < terminal; ++n) m = s.op.apply(m);
      s.m_interval = std::move(m);
    }
  } else {
    s.swe = cfg.swe;
    s.error = ModelError(cfg.model_error, grid, s.swe);
    std::vector<double> nearest(static_cast<std::size_t>(s.cells),
                                std::numeric_limits<double>::infinity());
    for (const auto& [i, j] : cfg.sites) {
      const Index c = grid.cell(i, j);
      s.obs_cells.push_back(c);
      for (Index k = 0; k < s.cells; ++k)
        nearest[static_cast<std::size_t>(k)] =
            std::min(nearest[static_cast<std::size_t>(k)], torus_distance(grid, c, k));
    }
    std::vector<Index> order(static_cast<std::size_t>(s.cells));
    for (Index k = 0; k < s.cells; ++k) order[static_cast<std::size_t>(k)] = k;
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
      return nearest[static_cast<std::size_t>(a)] > nearest[static_cast<std::size_t>(b)];
    });
    order.resize(std::min(order.size(), s.obs_cells.size()));
    s.far_cells = order;
  }

  double radius = cfg.radius;
  if (!(radius > 0.0)) {
    radius = cfg.kase == CaseKind::advdiff
                 ? cfg.model_error.matern.correlation_range(0.05)
                 : empirical_eta_range(s.error, grid);
  }
  summary.radius = radius;
  if (s.any(FilterKind::letkf)) {
    s.plan = build_localisation_plan(s.net, grid, radius);
    summary.n_batches = s.plan.n_batches();
  }
  if (s.any(FilterKind::iewpf)) s.proposal.emplace(s.error.factor(), s.net, s.cells);
}


/// Metric series of one replicate, in first-use order.
class SeriesBook {
 public:
  SeriesBook(std::string prefix, int rep, std::uint64_t seed)
      : prefix_(std::move(prefix)), rep_(rep), seed_(seed) {}

  void push(const std::string& metric, int step, double value) {
    const std::string name = prefix_ + "." + metric;
    auto it = std::find_if(series_.begin(), series_.end(),
                           [&](const MetricSeries& s) { return s.name == name; });
    if (it == series_.end()) {
      series_.push_back(MetricSeries{name, rep_, seed_, {}, {}});
      it = series_.end() - 1;
    }
    it->push(step, value);
  }
  std::vector<MetricSeries>& series() { return series_; }

 private:
  std::string prefix_;
  int rep_;
  std::uint64_t seed_;
  std::vector<MetricSeries> series_;
};

/// Everything one truth replicate contributes to the summary.
struct TruthResult {
  std::vector<MetricSeries> metrics;
  std::vector<RunError> errors;
  std::map<std::string, RankHistogram> ranks;
  std::map<std::string, std::pair<Eigen::VectorXd, int>> coverage;
  std::vector<std::pair<std::string, std::string>> files;  // first truth only
};

struct KfReference {
  std::vector<Eigen::VectorXd> mean;  // per record step
  std::vector<Eigen::VectorXd> var;
  Eigen::MatrixXd sigma_terminal;
  std::vector<Eigen::VectorXd> corr;  // per point, terminal step
};

bool is_record_step(const Setup& s, std::size_t rec, int n) {
  return rec < s.record_steps.size() && s.record_steps[rec] == n;
}

const Eigen::VectorXd& truth_at(const TwinExperiment& twin, std::size_t rec) {
  return twin.truth_states.empty() ? twin.final_truth.values()
                                   : twin.truth_states[rec].values();
}

TwinExperiment generate_truth_impl(const Setup& s, int t) {
  const ExperimentConfig& cfg = s.cfg;
  const std::uint64_t seed = truth_seed(cfg.seed, t);
  if (cfg.kase == CaseKind::advdiff) {
    RngStream init(derive_seed(seed, {2}));
    const StateVector x0 = sample_field(s.mean0, s.prior_factor, init);
    const LinearOperator& op = s.op;
    const ModelError& err = s.error;
    return run_truth(
        x0, [&](const StateVector& x) { return step_linear(op, x); },
        [&](RngStream& rng) { return err.sample(rng); }, s.schedule, cfg.total_steps(),
        s.net, seed);
  }
  const SweConfig swe = cfg.swe;
  const int substeps = cfg.substeps;
  const ModelError& err = s.error;
  return run_truth(
      s.mean0, [&](const StateVector& x) { return step_swe(swe, x, substeps); },
      [&](RngStream& rng) { return err.sample(rng); }, s.schedule, cfg.total_steps(),
      s.net, seed);
}

KfReference run_kf(const Setup& s, const TwinExperiment& twin) {
  KfReference ref;
  GaussianBelief b{s.mean0, s.prior_cov};
  Eigen::MatrixXd sigma_prev;
  if (s.prev_step == 0) sigma_prev = b.sigma;
  const int terminal = s.record_steps.back();
  auto record = [&] {
    ref.mean.push_back(b.mu.values());
    ref.var.push_back(b.sigma.diagonal());
  };
  if (terminal == 0) record();
  std::size_t next = 0, rec = 0;
  for (int n = 1; n <= terminal; ++n) {
    b = kf_forecast(b, s.op, s.q);
    if (n == terminal && s.prev_step >= 0)
      for (Index k : s.point_cells)
        ref.corr.push_back(cross_time_correlation_field_kf(s.m_interval, sigma_prev, b.sigma, k));
    if (next < s.schedule.size() && s.schedule[next] == n) {
      b = kf_analysis(b, twin.observations[next], s.net);
      ++next;
    }
    if (n == s.prev_step) sigma_prev = b.sigma;
    if (is_record_step(s, rec, n)) {
      record();
      ++rec;
    }
  }
  ref.sigma_terminal = std::move(b.sigma);
  return ref;
}

std::vector<RngStream> member_streams(const ExperimentConfig& cfg, int t, int r) {
  std::vector<RngStream> rngs;
  for (int e = 0; e < cfg.ne; ++e) rngs.emplace_back(member_seed(cfg.seed, t, r, e));
  return rngs;
}

/// Model-error draws for every member, column e from stream e.
Eigen::MatrixXd draw_errors(const ModelError& err, std::vector<RngStream>& rngs) {
  Eigen::MatrixXd z(err.noise_dim(), static_cast<Index>(rngs.size()));
  for (std::size_t e = 0; e < rngs.size(); ++e)
    z.col(static_cast<Index>(e)) = rngs[e].normal_vector(err.noise_dim());
  return err.apply(z);
}

Eigen::VectorXd row_std(const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd d = x.colwise() - x.rowwise().mean();
  return (d.rowwise().squaredNorm() / static_cast<double>(x.cols() - 1)).cwiseSqrt();
}

std::string point_name(std::size_t p) { return "s" + std::to_string(p + 1); }

void add_coverage(TruthResult& out, const std::string& label, const Eigen::VectorXd& ind) {
  auto it = out.coverage.find(label);
  if (it == out.coverage.end()) {
    out.coverage.emplace(label, std::make_pair(ind, 1));
  } else {
    it->second.first += ind;
    it->second.second += 1;
  }
}

void kf_metrics(const Setup& s, const KfReference& kf, const TwinExperiment& twin, int t,
                TruthResult& out) {
  const ExperimentConfig& cfg = s.cfg;
  SeriesBook book("kf", t * cfg.ensembles, twin.seed);
  Eigen::VectorXd ind;
  for (std::size_t rec = 0; rec < s.record_steps.size(); ++rec) {
    const int n = s.record_steps[rec];
    const Eigen::VectorXd sd = kf.var[rec].cwiseMax(0.0).cwiseSqrt();
    const Coverage cov = coverage_probability(kf.mean[rec], sd, truth_at(twin, rec));
    book.push("rmse_truth", n, rmse(kf.mean[rec], truth_at(twin, rec)));
    book.push("coverage", n, cov.mean);
    book.push("spread", n, sd.mean());
    ind = cov.indicator;
  }
  add_coverage(out, "kf", ind);
  for (auto& m : book.series()) out.metrics.push_back(std::move(m));
  if (t == 0 && cfg.write_fields) {
    const Grid2D& g = cfg.grid;
    out.files.emplace_back("mean_kf.csv", field_text(g, kf.mean.back()));
    out.files.emplace_back("std_kf.csv", field_text(g, kf.var.back().cwiseMax(0.0).cwiseSqrt()));
    for (std::size_t p = 0; p < kf.corr.size(); ++p)
      out.files.emplace_back("corr_kf_" + point_name(p) + ".csv", field_text(g, kf.corr[p]));
    std::ostringstream pts;
    pts << "point,x,y,cell,mu,sigma,truth\n";
    for (std::size_t p = 0; p < s.point_cells.size(); ++p) {
      const Index c = s.point_cells[p];
      pts << point_name(p) << ',' << format_double(cfg.diq_points[p].first) << ','
          << format_double(cfg.diq_points[p].second) << ',' << c << ','
          << format_double(kf.mean.back()[c]) << ','
          << format_double(std::sqrt(std::max(0.0, kf.var.back()[c]))) << ','
          << format_double(twin.final_truth.values()[c]) << '\n';
    }
    out.files.emplace_back("kf_points.csv", pts.str());
  }
}

void run_advdiff_filter(const Setup& s, const FilterSpec& f, const TwinExperiment& twin,
                        const KfReference& kf, int t, int r, TruthResult& out) {
  const ExperimentConfig& cfg = s.cfg;
  const Grid2D& g = cfg.grid;
  const int rep = t * cfg.ensembles + r;
  SeriesBook book(f.label, rep, ensemble_seed(cfg.seed, t, r));
  std::vector<RngStream> rngs = member_streams(cfg, t, r);

  Eigen::MatrixXd z0(s.cells, cfg.ne);
  for (int e = 0; e < cfg.ne; ++e) z0.col(e) = rngs[static_cast<std::size_t>(e)].normal_vector(s.cells);
  Eigen::MatrixXd x = (s.prior_factor * z0).colwise() + s.mean0.values();

  Eigen::MatrixXd xa_prev;
  if (s.prev_step == 0) xa_prev = x;
  const int terminal = s.record_steps.back();
  const IewpfParams params{f.beta, 1.0, cfg.weight_tol};
  params.validate();
  std::vector<Eigen::VectorXd> corr_ens;
  std::size_t next = 0, rec = 0;

  auto record = [&](int n) {
    const Eigen::VectorXd mean = x.rowwise().mean();
    const Eigen::VectorXd sd = row_std(x);
    const Eigen::VectorXd& truth = truth_at(twin, rec);
    const Coverage cov = coverage_probability(mean, sd, truth);
    book.push("rmse", n, rmse(mean, kf.mean[rec]));
    book.push("rmse_truth", n, rmse(mean, truth));
    book.push("coverage", n, cov.mean);
    book.push("spread", n, sd.mean());
    for (std::size_t p = 0; p < s.point_cells.size(); ++p) {
      const Index c = s.point_cells[p];
      const double sigma = std::sqrt(kf.var[rec][c]);
      if (!(sigma > 0.0)) continue;
      std::vector<double> vals(static_cast<std::size_t>(cfg.ne));
      for (int e = 0; e < cfg.ne; ++e) vals[static_cast<std::size_t>(e)] = x(c, e);
      book.push("diq_" + point_name(p), n, d_iq(kf.mean[rec][c], sigma, Ecdf(vals)));
    }
    if (n != terminal) return;
    const EnsembleMatrix ens(g, 1, x);
    book.push("fcd", n, fcd(kf.sigma_terminal, ens.covariance()));
    for (std::size_t p = 0; p < corr_ens.size() && p < kf.corr.size(); ++p)
      book.push("ce_" + point_name(p), n, ce(kf.corr[p], corr_ens[p]));
    add_coverage(out, f.label, cov.indicator);
    if (t == 0 && r == 0 && cfg.write_fields) {
      out.files.emplace_back("mean_" + f.label + ".csv", field_text(g, mean));
      out.files.emplace_back("std_" + f.label + ".csv", field_text(g, sd));
      for (std::size_t p = 0; p < corr_ens.size(); ++p)
        out.files.emplace_back("corr_" + f.label + "_" + point_name(p) + ".csv",
                               field_text(g, corr_ens[p]));
      std::ostringstream smp;
      smp << "point,member,value\n";
      for (std::size_t p = 0; p < s.point_cells.size(); ++p)
        for (int e = 0; e < cfg.ne; ++e)
          smp << point_name(p) << ',' << e << ',' << format_double(x(s.point_cells[p], e))
              << '\n';
      out.files.emplace_back("samples_" + f.label + ".csv", smp.str());
    }
  };

  if (terminal == 0) record(0);
  for (int n = 1; n <= terminal; ++n) {
    const Eigen::MatrixXd det = s.op.apply(x);
    const bool obs = next < s.schedule.size() && s.schedule[next] == n;
    const bool proposal_step = obs && f.kind == FilterKind::iewpf;
    if (proposal_step) {
      x = det;
    } else {
      x = det + draw_errors(s.error, rngs);
    }
    if (n == terminal && s.prev_step >= 0) {
      Eigen::MatrixXd xf = x;
      if (proposal_step) {
        // the proposal replaces the last model error; draw a stand-in forecast
        std::vector<RngStream> extra;
        for (auto& rng : rngs) extra.push_back(rng.child(7));
        xf = det + draw_errors(s.error, extra);
      }
      for (Index k : s.point_cells)
        corr_ens.push_back(cross_time_correlation_field_ens(xa_prev, xf, k));
    }
    if (obs) {
      EnsembleMatrix ens(g, 1, x);
      const ObservationRecord& y = twin.observations[next];
      switch (f.kind) {
        case FilterKind::etkf:
          ens = etkf_analysis(ens, y, s.net);
          break;
        case FilterKind::letkf:
          ens = letkf_analysis(ens, y, s.net, s.plan, f.phi);
          break;
        case FilterKind::iewpf: {
          IewpfDiagnostics diag;
          ens = iewpf_analysis(ens, y, *s.proposal, params, rngs, &diag);
          book.push("weight_spread", n, diag.max_log_weight_spread);
          break;
        }
        case FilterKind::mc:
        case FilterKind::kf:
          break;
      }
      x = std::move(ens.members());
      ++next;
    }
    if (n == s.prev_step) xa_prev = x;
    if (is_record_step(s, rec, n)) {
      record(n);
      ++rec;
    }
  }
  for (auto& m : book.series()) out.metrics.push_back(std::move(m));
}

void run_swe_filter(const Setup& s, const FilterSpec& f, const TwinExperiment& twin,
                    const TrajectorySet* truth_drift, const Eigen::MatrixXd& x_spun,
                    const std::vector<RngStream>& rngs_spun, int t, int r,
                    TruthResult& out) {
  const ExperimentConfig& cfg = s.cfg;
  const Grid2D& g = cfg.grid;
  const Index cells = s.cells;
  const int rep = t * cfg.ensembles + r;
  SeriesBook book(f.label, rep, ensemble_seed(cfg.seed, t, r));
  std::vector<RngStream> rngs = rngs_spun;
  Eigen::MatrixXd x = x_spun;
  const IewpfParams params{f.beta, 1.0, cfg.weight_tol};
  params.validate();
  const Index n_loc = distinct_locations(s.net);
  RngStream tie_rng(derive_seed(ensemble_seed(cfg.seed, t, r), {1000}));
  const int terminal = cfg.total_steps();
  std::size_t next = 0;

  for (int n = cfg.spinup_steps + 1; n <= terminal; ++n) {
    const bool obs = next < s.schedule.size() && s.schedule[next] == n;
    const bool proposal_step = obs && f.kind == FilterKind::iewpf;
    for (int e = 0; e < cfg.ne; ++e) {
      StateVector m(g, 3, x.col(e));
      m = step_swe(cfg.swe, m, cfg.substeps);
      if (!proposal_step) m.values() += s.error.sample(rngs[static_cast<std::size_t>(e)]).values();
      x.col(e) = m.values();
    }
    if (!obs) continue;
    const ObservationRecord& y = twin.observations[next];
    const Eigen::MatrixXd hx = apply_H(s.net, x, cells);
    book.push("s1", n, skill_bias(hx, y.values, n_loc));
    book.push("s2", n, skill_mse(hx, y.values, n_loc));
    book.push("s3", n, skill_crps(hx, y.values, n_loc));
    if (cfg.rank_locations > 0) {
      auto it = out.ranks.find(f.label + ".hu");
      if (it == out.ranks.end()) it = out.ranks.emplace(f.label + ".hu", RankHistogram(cfg.ne)).first;
      const auto n_rank = std::min<std::size_t>(static_cast<std::size_t>(cfg.rank_locations),
                                                s.obs_cells.size());
      for (std::size_t b = 0; b < n_rank; ++b) {
        const Index row = swe::kHu * cells + s.obs_cells[b];
        it->second.add(x.row(row).transpose(), twin.truth_states[next].values()[row], tie_rng);
      }
    }
    EnsembleMatrix ens(g, 3, x);
    switch (f.kind) {
      case FilterKind::etkf:
        ens = etkf_analysis(ens, y, s.net);
        break;
      case FilterKind::letkf:
        ens = letkf_analysis(ens, y, s.net, s.plan, f.phi);
        break;
      case FilterKind::iewpf: {
        IewpfDiagnostics diag;
        ens = iewpf_analysis(ens, y, *s.proposal, params, rngs, &diag);
        book.push("weight_spread", n, diag.max_log_weight_spread);
        break;
      }
      case FilterKind::mc:
      case FilterKind::kf:
        break;
    }
    x = std::move(ens.members());
    const Eigen::VectorXd mean = x.rowwise().mean();
    const Eigen::VectorXd& truth = twin.truth_states[next].values();
    book.push("rmse_eta", n, rmse(mean.segment(0, cells), truth.segment(0, cells)));
    book.push("rmse_hu", n, rmse(mean.segment(cells, cells), truth.segment(cells, cells)));
    ++next;
  }

  const Eigen::VectorXd sd = row_std(x);
  auto mean_over = [&](int var, const std::vector<Index>& list) {
    double acc = 0.0;
    for (Index c : list) acc += sd[var * cells + c];
    return list.empty() ? 0.0 : acc / static_cast<double>(list.size());
  };
  book.push("std_obs_hu", terminal, mean_over(swe::kHu, s.obs_cells));
  book.push("std_far_hu", terminal, mean_over(swe::kHu, s.far_cells));
  book.push("std_obs_eta", terminal, mean_over(swe::kEta, s.obs_cells));
  book.push("std_far_eta", terminal, mean_over(swe::kEta, s.far_cells));
  const bool first = t == 0 && r == 0;
  if (first && cfg.write_fields) {
    const Eigen::VectorXd mean = x.rowwise().mean();
    const char* names[3] = {"eta", "hu", "hv"};
    for (int v = 0; v < 3; ++v) {
      out.files.emplace_back("mean_" + f.label + "_" + names[v] + ".csv",
                             field_text(g, mean.segment(v * cells, cells)));
      out.files.emplace_back("std_" + f.label + "_" + names[v] + ".csv",
                             field_text(g, sd.segment(v * cells, cells)));
    }
  }

  if (truth_drift) {
    const EnsembleMatrix ens(g, 3, x);
    const TrajectorySet set =
        forecast_trajectories(ens, cfg.swe, &s.error, cfg.substeps, cfg.drifters,
                              cfg.drift_steps, cfg.drift_record_stride, rngs);
    const auto mean_track = set.mean_trajectory(g);
    double err = 0.0;
    const auto& truth_end = truth_drift->positions[0].back();
    for (std::size_t d = 0; d < truth_end.size(); ++d) {
      const double ox = wrapped_offset(truth_end[d].x, mean_track.back()[d].x, g.length_x(), g.periodic_x);
      const double oy = wrapped_offset(truth_end[d].y, mean_track.back()[d].y, g.length_y(), g.periodic_y);
      err += std::hypot(ox, oy);
    }
    book.push("drift_error", terminal + cfg.drift_steps / cfg.substeps,
              err / static_cast<double>(std::max<std::size_t>(1, truth_end.size())));
    if (first) {
      std::ostringstream traj;
      write_trajectory_csv(traj, set);
      out.files.emplace_back("trajectories_" + f.label + ".csv", traj.str());
      for (std::size_t d = 0; d < set.drifters(); ++d) {
        std::vector<double> xs, ys;
        for (std::size_t e = 0; e < set.members(); ++e) {
          xs.push_back(set.positions[e].back()[d].x);
          ys.push_back(set.positions[e].back()[d].y);
        }
        if (xs.size() >= 2)
          out.files.emplace_back("kde_" + f.label + "_d" + std::to_string(d + 1) + ".csv",
                                 field_text(g, kde2d(xs, ys, g)));
      }
    }
  }
  for (auto& m : book.series()) out.metrics.push_back(std::move(m));
}

void record_error(TruthResult& out, int t, int r, const std::string& filter,
                  const std::exception& e) {
  const bool config = dynamic_cast<const ConfigError*>(&e) != nullptr ||
                      dynamic_cast<const DimensionError*>(&e) != nullptr;
  out.errors.push_back(RunError{t, r, filter, config ? "config" : "numerical", e.what()});
}

TruthResult run_truth_job(const Setup& s, int t) {
  const ExperimentConfig& cfg = s.cfg;
  TruthResult out;
  TwinExperiment twin;
  try {
    twin = generate_truth_impl(s, t);
  } catch (const std::exception& e) {
    record_error(out, t, -1, "truth", e);
    return out;
  }
  if (t == 0) {
    std::ostringstream obs;
    write_observations_csv(twin, obs);
    out.files.emplace_back("observations.csv", obs.str());
  }

  if (cfg.kase == CaseKind::advdiff) {
    KfReference kf;
    try {
      kf = run_kf(s, twin);
    } catch (const std::exception& e) {
      record_error(out, t, -1, "kf", e);
      return out;
    }
    if (s.any(FilterKind::kf)) kf_metrics(s, kf, twin, t, out);
    if (t == 0 && cfg.write_fields)
      out.files.emplace_back("truth.csv", field_text(cfg.grid, twin.final_truth.values()));
    for (int r = 0; r < cfg.ensembles; ++r)
      for (const auto& f : cfg.filters) {
        if (f.kind == FilterKind::kf) continue;
        try {
          run_advdiff_filter(s, f, twin, kf, t, r, out);
        } catch (const std::exception& e) {
          record_error(out, t, r, f.label, e);
        }
      }
    return out;
  }

  std::optional<TrajectorySet> truth_drift;
  if (cfg.drift_steps > 0 && !cfg.drifters.empty()) {
    try {
      Eigen::MatrixXd m = twin.final_truth.values();
      std::vector<RngStream> rng{RngStream(derive_seed(twin.seed, {3}))};
      truth_drift = forecast_trajectories(EnsembleMatrix(cfg.grid, 3, m), cfg.swe, &s.error,
                                          cfg.substeps, cfg.drifters, cfg.drift_steps,
                                          cfg.drift_record_stride, rng);
      if (t == 0) {
        std::ostringstream traj;
        write_trajectory_csv(traj, *truth_drift);
        out.files.emplace_back("trajectories_truth.csv", traj.str());
      }
    } catch (const std::exception& e) {
      record_error(out, t, -1, "truth_drift", e);
      truth_drift.reset();
    }
  }
  if (t == 0 && cfg.write_fields) {
    const char* names[3] = {"eta", "hu", "hv"};
    for (int v = 0; v < 3; ++v)
      out.files.emplace_back(std::string("truth_") + names[v] + ".csv",
                             field_text(cfg.grid, twin.final_truth.var(v)));
  }
  for (int r = 0; r < cfg.ensembles; ++r) {
    // shared spin-up: every filter starts from the same ensemble and streams
    std::vector<RngStream> rngs = member_streams(cfg, t, r);
    Eigen::MatrixXd x = s.mean0.values().replicate(1, cfg.ne);
    try {
      for (int n = 1; n <= cfg.spinup_steps; ++n)
        for (int e = 0; e < cfg.ne; ++e) {
          StateVector m(cfg.grid, 3, x.col(e));
          m = step_swe(cfg.swe, m, cfg.substeps);
          m.values() += s.error.sample(rngs[static_cast<std::size_t>(e)]).values();
          x.col(e) = m.values();
        }
    } catch (const std::exception& e) {
      record_error(out, t, r, "spinup", e);
      continue;
    }
    for (const auto& f : cfg.filters) {
      try {
        run_swe_filter(s, f, twin, truth_drift ? &*truth_drift : nullptr, x, rngs, t, r, out);
      } catch (const std::exception& e) {
        record_error(out, t, r, f.label, e);
      }
    }
  }
  return out;
}

int worker_count(const ExperimentConfig& cfg) {
  if (cfg.workers > 0) return cfg.workers;
  return std::max(1u, std::thread::hardware_concurrency());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
  if (!out) throw NumericalError("failed writing " + path.string());
}

}  // namespace

TwinExperiment generate_truth(const ExperimentConfig& cfg, int t) {
  cfg.validate();
  RunSummary scratch;
  Setup s(cfg);
  prepare(s, scratch);
  return generate_truth_impl(s, t);
}

RunSummary run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  RunSummary summary;
  summary.config_hash = config_hash(cfg);
  for (int t = 0; t < cfg.truths; ++t) summary.truth_seeds.push_back(truth_seed(cfg.seed, t));
  if (cfg.full_scale) summary.warnings.push_back("full-scale configuration: long runtime");

  Setup s(cfg);
  prepare(s, summary);

  std::vector<TruthResult> results(static_cast<std::size_t>(cfg.truths));
  std::atomic<int> next{0};
  auto work = [&] {
    for (int t = next++; t < cfg.truths; t = next++)
      results[static_cast<std::size_t>(t)] = run_truth_job(s, t);
  };
  const int n_threads = std::min(worker_count(cfg), cfg.truths);
  if (n_threads <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(work);
  }

  std::map<std::string, std::pair<Eigen::VectorXd, int>> coverage;
  std::vector<std::pair<std::string, std::string>> files;
  for (auto& res : results) {
    for (auto& m : res.metrics) summary.metrics.push_back(std::move(m));
    for (auto& e : res.errors) summary.errors.push_back(std::move(e));
    for (auto& [name, hist] : res.ranks) {
      auto it = summary.rank_histograms.find(name);
      if (it == summary.rank_histograms.end()) {
        summary.rank_histograms.emplace(name, hist);
      } else {
        it->second.merge(hist);
      }
    }
    for (auto& [label, acc] : res.coverage) {
      auto it = coverage.find(label);
      if (it == coverage.end()) {
        coverage.emplace(label, acc);
      } else {
        it->second.first += acc.first;
        it->second.second += acc.second;
      }
    }
    for (auto& f : res.files) files.push_back(std::move(f));
  }

  if (cfg.out_dir.empty()) return summary;

  namespace fs = std::filesystem;
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  if (cfg.write_fields)
    for (const auto& [label, acc] : coverage)
      files.emplace_back("coverage_" + label + ".csv",
                         field_text(cfg.grid, acc.first / static_cast<double>(acc.second)));
  for (const auto& [name, hist] : summary.rank_histograms) {
    std::ostringstream h;
    write_rank_histogram_csv(h, hist);
    std::string file = name;
    std::replace(file.begin(), file.end(), '.', '_');
    files.emplace_back("rank_" + file + ".csv", h.str());
  }
  {
    std::ostringstream m;
    write_metric_csv(m, summary.metrics);
    files.emplace_back("metrics.csv", m.str());
  }
  files.emplace_back("config.ini", render_config(cfg));

  nlohmann::ordered_json manifest;
  manifest["name"] = cfg.name;
  manifest["version"] = SPARSE_DA_VERSION;
  manifest["config_hash"] = hex64(summary.config_hash);
  manifest["seed"] = cfg.seed;
  manifest["truth_seeds"] = summary.truth_seeds;
  manifest["localisation_radius"] = summary.radius;
  manifest["batches"] = summary.n_batches;
  manifest["files"] = nlohmann::ordered_json::array();
  for (const auto& [name, text] : files) {
    write_text(dir / name, text);
    summary.files.push_back(name);
    manifest["files"].push_back({{"path", name}, {"fnv1a64", hex64(fnv1a(text))}});
  }
  manifest["errors"] = nlohmann::ordered_json::array();
  for (const auto& e : summary.errors)
    manifest["errors"].push_back({{"truth", e.truth},
                                  {"ensemble", e.ensemble},
                                  {"filter", e.filter},
                                  {"kind", e.kind},
                                  {"message", e.message}});
  manifest["warnings"] = summary.warnings;
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  summary.files.push_back("manifest.json");
  return summary;
}

}  // namespace sparse_da
