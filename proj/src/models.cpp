#include "sparse_da/models.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "sparse_da/error.hpp"

namespace sparse_da {

namespace {

Index wrap(Index i, Index n) {
  i %= n;
  return i < 0 ? i + n : i;
}

std::string cell_label(const Grid2D& grid, Index k) {
  auto [i, j] = grid.ij(k);
  std::ostringstream s;
  s << "(" << i << ", " << j << ")";
  return s.str();
}

}  // namespace

void AdvDiffConfig::validate(const Grid2D& grid) const {
  grid.validate();
  if (!(d >= 0.0)) throw ConfigError("diffusion coefficient must be >= 0");
  if (!(dt > 0.0)) throw ConfigError("time step must be > 0");
  const double adv = dt * (std::abs(vx) / grid.dx + std::abs(vy) / grid.dy);
  const double diff =
      dt * d * (2.0 / (grid.dx * grid.dx) + 2.0 / (grid.dy * grid.dy));
  // small slack so that configurations sitting exactly on the bound pass
  constexpr double kSlack = 1e-12;
  if (adv > 1.0 + kSlack) {
    std::ostringstream msg;
    msg << "unstable advection: dt*(|vx|/dx + |vy|/dy) = " << adv << " > 1";
    throw ConfigError(msg.str());
  }
  if (diff > 1.0 + kSlack) {
    std::ostringstream msg;
    msg << "unstable diffusion: dt*d*(2/dx^2 + 2/dy^2) = " << diff << " > 1";
    throw ConfigError(msg.str());
  }
}

LinearOperator::LinearOperator(const Grid2D& grid, Sparse matrix)
    : grid_(grid), matrix_(std::move(matrix)) {
  require_dims(matrix_.rows() == matrix_.cols(), "operator must be square");
}

Eigen::VectorXd LinearOperator::apply(const Eigen::VectorXd& x) const {
  require_dims(x.size() == size(), "operator and vector sizes differ");
  return matrix_ * x;
}

Eigen::MatrixXd LinearOperator::apply(const Eigen::MatrixXd& x) const {
  require_dims(x.rows() == size(), "operator and ensemble sizes differ");
  return matrix_ * x;
}

LinearOperator build_advdiff_operator(const Grid2D& grid,
                                      const AdvDiffConfig& cfg) {
  cfg.validate(grid);
  const double kx = cfg.dt * cfg.d / (grid.dx * grid.dx);
  const double ky = cfg.dt * cfg.d / (grid.dy * grid.dy);
  const double ax = cfg.dt * cfg.vx / (2.0 * grid.dx);
  const double ay = cfg.dt * cfg.vy / (2.0 * grid.dy);
  const double center = 1.0 - 2.0 * kx - 2.0 * ky + cfg.dt * cfg.zeta;

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(5 * grid.cells()));
  for (Index j = 0; j < grid.ny; ++j) {
    for (Index i = 0; i < grid.nx; ++i) {
      const Index k = grid.cell(i, j);
      trip.emplace_back(k, k, center);
      trip.emplace_back(k, grid.cell(wrap(i + 1, grid.nx), j), kx - ax);
      trip.emplace_back(k, grid.cell(wrap(i - 1, grid.nx), j), kx + ax);
      trip.emplace_back(k, grid.cell(i, wrap(j + 1, grid.ny)), ky - ay);
      trip.emplace_back(k, grid.cell(i, wrap(j - 1, grid.ny)), ky + ay);
    }
  }
  LinearOperator::Sparse m(grid.cells(), grid.cells());
  // duplicates (grids with nx or ny <= 2) are summed
  m.setFromTriplets(trip.begin(), trip.end());
  m.makeCompressed();
  return LinearOperator(grid, std::move(m));
}

StateVector step_linear(const LinearOperator& op, const StateVector& x,
                        const StateVector* noise) {
  require_dims(x.size() == op.size(), "state size does not match operator");
  Eigen::VectorXd out = op.matrix() * x.values();
  if (noise) {
    require_dims(noise->size() == x.size(), "noise size does not match state");
    out += noise->values();
  }
  return StateVector(x.grid(), x.n_vars(), std::move(out));
}

void SweConfig::validate() const {
  if (!(H_depth > 0.0)) throw ConfigError("equilibrium depth must be > 0");
  if (!(g > 0.0)) throw ConfigError("gravity must be > 0");
  if (!(dx > 0.0) || !(dy > 0.0)) throw ConfigError("cell sizes must be > 0");
  if (!(dt_num > 0.0)) throw ConfigError("numerical time step must be > 0");
  const double cfl = dt_num * std::sqrt(g * H_depth) * (1.0 / dx + 1.0 / dy);
  if (cfl > 1.0) {
    std::ostringstream msg;
    msg << "gravity-wave CFL number " << cfl << " > 1";
    throw ConfigError(msg.str());
  }
}

StateVector step_swe(const SweConfig& cfg, const StateVector& state,
                     int n_substeps) {
  cfg.validate();
  const Grid2D& grid = state.grid();
  if (state.n_vars() != 3)
    throw DimensionError("shallow-water state needs 3 variables");
  if (std::abs(grid.dx - cfg.dx) > 1e-9 * cfg.dx ||
      std::abs(grid.dy - cfg.dy) > 1e-9 * cfg.dy)
    throw ConfigError("grid cell size does not match the SWE config");
  if (n_substeps < 0) throw ConfigError("substep count must be >= 0");

  const Index nx = grid.nx, ny = grid.ny, n = grid.cells();
  const double g = cfg.g, f = cfg.f, dx = cfg.dx, dy = cfg.dy;
  const double dt = cfg.dt_num;

  Eigen::VectorXd cur = state.values();
  Eigen::VectorXd h(n), u(n), v(n), c(n);
  // x interfaces are indexed by their west cell, y interfaces by their south
  // cell
  Eigen::VectorXd fm_x(n), fhu_x(n), fhv_x(n), hv_x(n);
  Eigen::VectorXd fm_y(n), fhu_y(n), fhv_y(n), hu_y(n);

  for (int step = 0; step < n_substeps; ++step) {
    const double* eta = cur.data();
    const double* hu = eta + n;
    const double* hv = eta + 2 * n;

    double ax = 0.0, ay = 0.0;
    for (Index k = 0; k < n; ++k) {
      h[k] = cfg.H_depth + eta[k];
      if (!(h[k] > 0.0))
        throw NumericalError("shallow water: dry or invalid cell " +
                             cell_label(grid, k));
      u[k] = hu[k] / h[k];
      v[k] = hv[k] / h[k];
      c[k] = std::sqrt(g * h[k]);
      ax = std::max(ax, std::abs(u[k]) + c[k]);
      ay = std::max(ay, std::abs(v[k]) + c[k]);
    }
    const double cfl = dt * (ax / dx + ay / dy);
    if (cfl > 1.0) {
      std::ostringstream msg;
      msg << "shallow water: CFL number " << cfl << " > 1";
      throw NumericalError(msg.str());
    }

    for (Index j = 0; j < ny; ++j) {
      for (Index i = 0; i < nx; ++i) {
        const Index l = grid.cell(i, j);
        const Index r = grid.cell(i + 1 == nx ? 0 : i + 1, j);
        const double ap = std::max({u[l] + c[l], u[r] + c[r], 0.0});
        const double am = std::min({u[l] - c[l], u[r] - c[r], 0.0});
        const double den = ap - am;
        const double hv_int = 0.5 * (hv[l] + hv[r]);
        const double jump =
            (h[r] - h[l]) - 2.0 * f * dx * hv_int / (g * (h[l] + h[r]));
        const double fm = (ap * hu[l] - am * hu[r]) / den + ap * am / den * jump;
        const double pl = hu[l] * u[l] + 0.5 * g * h[l] * h[l];
        const double pr = hu[r] * u[r] + 0.5 * g * h[r] * h[r];
        fm_x[l] = fm;
        fhu_x[l] = (ap * pl - am * pr) / den + ap * am / den * (hu[r] - hu[l]);
        fhv_x[l] = fm * (fm >= 0.0 ? v[l] : v[r]);
        hv_x[l] = hv_int;
      }
    }
    for (Index j = 0; j < ny; ++j) {
      const Index jn = j + 1 == ny ? 0 : j + 1;
      for (Index i = 0; i < nx; ++i) {
        const Index l = grid.cell(i, j);
        const Index r = grid.cell(i, jn);
        const double ap = std::max({v[l] + c[l], v[r] + c[r], 0.0});
        const double am = std::min({v[l] - c[l], v[r] - c[r], 0.0});
        const double den = ap - am;
        const double hu_int = 0.5 * (hu[l] + hu[r]);
        const double jump =
            (h[r] - h[l]) + 2.0 * f * dy * hu_int / (g * (h[l] + h[r]));
        const double fm = (ap * hv[l] - am * hv[r]) / den + ap * am / den * jump;
        const double pl = hv[l] * v[l] + 0.5 * g * h[l] * h[l];
        const double pr = hv[r] * v[r] + 0.5 * g * h[r] * h[r];
        fm_y[l] = fm;
        fhv_y[l] = (ap * pl - am * pr) / den + ap * am / den * (hv[r] - hv[l]);
        fhu_y[l] = fm * (fm >= 0.0 ? u[l] : u[r]);
        hu_y[l] = hu_int;
      }
    }

    Eigen::VectorXd next(3 * n);
    const double rx = dt / dx, ry = dt / dy;
    for (Index j = 0; j < ny; ++j) {
      const Index js = j == 0 ? ny - 1 : j - 1;
      for (Index i = 0; i < nx; ++i) {
        const Index k = grid.cell(i, j);
        const Index w = grid.cell(i == 0 ? nx - 1 : i - 1, j);
        const Index s = grid.cell(i, js);
        next[k] = eta[k] - rx * (fm_x[k] - fm_x[w]) - ry * (fm_y[k] - fm_y[s]);
        next[n + k] = hu[k] - rx * (fhu_x[k] - fhu_x[w]) -
                      ry * (fhu_y[k] - fhu_y[s]) +
                      dt * f * 0.5 * (hv_x[k] + hv_x[w]);
        next[2 * n + k] = hv[k] - rx * (fhv_x[k] - fhv_x[w]) -
                          ry * (fhv_y[k] - fhv_y[s]) -
                          dt * f * 0.5 * (hu_y[k] + hu_y[s]);
      }
    }
    cur.swap(next);
  }
  return StateVector(grid, 3, std::move(cur));
}

StateVector balanced_jet(const Grid2D& grid, const SweConfig& cfg,
                         const JetSpec& jet) {
  cfg.validate();
  grid.validate();
  const Index nx = grid.nx, ny = grid.ny;
  const double ly = grid.length_y();
  const double ys = jet.south_center * ly;
  const double yn = ys + 0.5 * ly;

  std::vector<double> hu(static_cast<std::size_t>(ny));
  double mean_hu = 0.0;
  for (Index j = 0; j < ny; ++j) {
    const double y = static_cast<double>(j) * grid.dy;
    const double a = wrapped_offset(ys, y, ly, true) / jet.width;
    const double b = wrapped_offset(yn, y, ly, true) / jet.width;
    hu[j] = cfg.H_depth * jet.speed * (std::exp(-a * a) - std::exp(-b * b));
    mean_hu += hu[j];
  }
  mean_hu /= static_cast<double>(ny);
  for (double& q : hu) q -= mean_hu;

  // h_{j+1}^2 = h_j^2 - (f dy / g)(hu_j + hu_{j+1}); s_j = h_j^2 - h_0^2
  std::vector<double> s(static_cast<std::size_t>(ny), 0.0);
  for (Index j = 0; j + 1 < ny; ++j)
    s[j + 1] = s[j] - cfg.f * grid.dy / cfg.g * (hu[j] + hu[j + 1]);
  const double smin = *std::min_element(s.begin(), s.end());

  auto mean_h = [&](double a) {
    double m = 0.0;
    for (double sj : s) m += std::sqrt(a + sj);
    return m / static_cast<double>(ny);
  };
  double lo = -smin, hi = -smin + 4.0 * cfg.H_depth * cfg.H_depth;
  if (mean_h(hi) < cfg.H_depth)
    throw ConfigError("jet is too strong for the equilibrium depth");
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mean_h(mid) < cfg.H_depth ? lo : hi) = mid;
  }
  const double a = 0.5 * (lo + hi);

  StateVector out(grid, 3);
  for (Index j = 0; j < ny; ++j) {
    const double h = std::sqrt(a + s[j]);
    if (!(h > 0.0)) throw ConfigError("jet dries the domain");
    for (Index i = 0; i < nx; ++i) {
      const Index k = grid.cell(i, j);
      out.at(swe::kEta, k) = h - cfg.H_depth;
      out.at(swe::kHu, k) = hu[j];
    }
  }
  return out;
}

void ModelErrorSpec::validate() const {
  matern.validate();
  if (coarse_factor < 1) throw ConfigError("coarse_factor must be >= 1");
  if (!(interval > 0.0)) throw ConfigError("model error interval must be > 0");
  if (kind == ModelErrorKind::balanced_swe && !(soar_length > 0.0))
    throw ConfigError("SOAR length must be > 0");
}

void geostrophic_momentum(const Grid2D& grid, const SweConfig& cfg,
                          const Eigen::Ref<const Eigen::VectorXd>& eta,
                          Eigen::Ref<Eigen::VectorXd> hu,
                          Eigen::Ref<Eigen::VectorXd> hv) {
  if (cfg.f == 0.0)
    throw ConfigError("geostrophic balance is undefined for f == 0");
  const double scale = cfg.g * cfg.H_depth / cfg.f;
  for (Index j = 0; j < grid.ny; ++j) {
    for (Index i = 0; i < grid.nx; ++i) {
      const Index k = grid.cell(i, j);
      const double deta_dy = (eta[grid.cell(i, wrap(j + 1, grid.ny))] -
                              eta[grid.cell(i, wrap(j - 1, grid.ny))]) /
                             (2.0 * grid.dy);
      const double deta_dx = (eta[grid.cell(wrap(i + 1, grid.nx), j)] -
                              eta[grid.cell(wrap(i - 1, grid.nx), j)]) /
                             (2.0 * grid.dx);
      hu[k] = -scale * deta_dy;
      hv[k] = scale * deta_dx;
    }
  }
}

ModelError::ModelError(const ModelErrorSpec& spec, const Grid2D& grid,
                       const std::optional<SweConfig>& cfg)
    : spec_(spec), grid_(grid), swe_(cfg) {
  spec_.validate();
  grid_.validate();
  if (spec_.kind == ModelErrorKind::matern_direct) {
    n_vars_ = 1;
    noise_dim_ = grid_.cells();
    factor_ = cholesky_factor(matern_covariance(grid_, spec_.matern));
    return;
  }

  if (!swe_) throw ConfigError("balanced_swe model error needs a SWE config");
  swe_->validate();
  if (swe_->f == 0.0)
    throw ConfigError("balanced_swe model error needs f != 0");
  const int cf = spec_.coarse_factor;
  if (grid_.nx % cf != 0 || grid_.ny % cf != 0)
    throw ConfigError("grid dimensions must be divisible by coarse_factor");
  n_vars_ = 3;
  coarse_ = grid_;
  coarse_.nx = grid_.nx / cf;
  coarse_.ny = grid_.ny / cf;
  coarse_.dx = grid_.dx * cf;
  coarse_.dy = grid_.dy * cf;
  noise_dim_ = coarse_.cells();

  const double len = spec_.soar_length;
  const Index m = noise_dim_;
  smoother_ = Eigen::MatrixXd::Zero(m, m);
  for (Index a = 0; a < m; ++a) {
    for (Index b = 0; b < m; ++b) {
      const double r = torus_distance(coarse_, a, b);
      if (r <= 4.0 * len) smoother_(a, b) = (1.0 + r / len) * std::exp(-r / len);
    }
    smoother_.row(a) *= spec_.matern.sigma / smoother_.row(a).norm();
  }

  factor_.resize(state_size(), m);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(m);
  for (Index a = 0; a < m; ++a) {
    e[a] = 1.0;
    factor_.col(a) = apply_balanced(e);
    e[a] = 0.0;
  }
}

Eigen::VectorXd ModelError::project_coarse_eta(
    const Eigen::VectorXd& coarse) const {
  if (spec_.kind != ModelErrorKind::balanced_swe)
    throw ConfigError("coarse projection only exists for balanced_swe");
  require_dims(coarse.size() == coarse_.cells(), "coarse field size mismatch");
  const Index n = grid_.cells();
  const int cf = spec_.coarse_factor;
  Eigen::VectorXd out(3 * n);
  for (Index j = 0; j < grid_.ny; ++j) {
    const Index j0 = j / cf;
    const Index j1 = wrap(j0 + 1, coarse_.ny);
    const double ty = static_cast<double>(j % cf) / cf;
    for (Index i = 0; i < grid_.nx; ++i) {
      const Index i0 = i / cf;
      const Index i1 = wrap(i0 + 1, coarse_.nx);
      const double tx = static_cast<double>(i % cf) / cf;
      out[grid_.cell(i, j)] =
          (1.0 - tx) * (1.0 - ty) * coarse[coarse_.cell(i0, j0)] +
          tx * (1.0 - ty) * coarse[coarse_.cell(i1, j0)] +
          (1.0 - tx) * ty * coarse[coarse_.cell(i0, j1)] +
          tx * ty * coarse[coarse_.cell(i1, j1)];
    }
  }
  geostrophic_momentum(grid_, *swe_, out.segment(0, n), out.segment(n, n),
                       out.segment(2 * n, n));
  return out;
}

Eigen::VectorXd ModelError::apply_balanced(const Eigen::VectorXd& z) const {
  return project_coarse_eta(smoother_ * z);
}

Eigen::VectorXd ModelError::apply(const Eigen::VectorXd& z) const {
  require_dims(z.size() == noise_dim_, "noise vector has the wrong length");
  if (spec_.kind == ModelErrorKind::balanced_swe) return apply_balanced(z);
  return factor_ * z;
}

Eigen::MatrixXd ModelError::apply(const Eigen::MatrixXd& z) const {
  require_dims(z.rows() == noise_dim_, "noise matrix has the wrong row count");
  return factor_ * z;
}

StateVector ModelError::sample(RngStream& rng) const {
  return StateVector(grid_, n_vars_, apply(rng.normal_vector(noise_dim_)));
}

StateVector sample_model_error(const ModelErrorSpec& spec, const Grid2D& grid,
                               const std::optional<SweConfig>& cfg,
                               RngStream& rng) {
  return ModelError(spec, grid, cfg).sample(rng);
}

Eigen::MatrixXd model_error_covariance(const ModelErrorSpec& spec,
                                       const Grid2D& grid,
                                       const std::optional<SweConfig>& cfg,
                                       Index max_size) {
  const int n_vars = spec.kind == ModelErrorKind::balanced_swe ? 3 : 1;
  if (n_vars * grid.cells() > max_size) {
    std::ostringstream msg;
    msg << "refusing to form a dense " << n_vars * grid.cells()
        << "-square model-error covariance (limit " << max_size << ")";
    throw ConfigError(msg.str());
  }
  if (spec.kind == ModelErrorKind::matern_direct)
    return matern_covariance(grid, spec.matern);
  ModelError q(spec, grid, cfg);
  Eigen::MatrixXd cov = q.factor() * q.factor().transpose();
  return 0.5 * (cov + cov.transpose());
}

}  // namespace sparse_da
