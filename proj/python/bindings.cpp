#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "sparse_da/config.hpp"
#include "sparse_da/error.hpp"
#include "sparse_da/experiment.hpp"
#include "sparse_da/localisation.hpp"
#include "sparse_da/metrics.hpp"
#include "sparse_da/presets.hpp"
#include "sparse_da/random.hpp"

namespace py = pybind11;
using namespace sparse_da;

namespace {

ExperimentConfig config_from(const std::string& preset_name, const std::string& text,
                             bool full) {
  std::istringstream in(text);
  return load_experiment(ConfigFile::parse(in, "python"), preset_name, full);
}

py::dict summary_dict(const RunSummary& s) {
  py::list metrics;
  for (const auto& m : s.metrics) {
    py::dict d;
    d["name"] = m.name;
    d["rep"] = m.rep;
    d["seed"] = m.seed;
    d["steps"] = m.steps;
    d["values"] = m.values;
    metrics.append(d);
  }
  py::list errors;
  for (const auto& e : s.errors) {
    py::dict d;
    d["truth"] = e.truth;
    d["ensemble"] = e.ensemble;
    d["filter"] = e.filter;
    d["kind"] = e.kind;
    d["message"] = e.message;
    errors.append(d);
  }
  py::dict ranks;
  for (const auto& [name, h] : s.rank_histograms) ranks[py::str(name)] = h.counts();

  py::dict out;
  out["config_hash"] = s.config_hash;
  out["truth_seeds"] = s.truth_seeds;
  out["metrics"] = metrics;
  out["rank_histograms"] = ranks;
  out["errors"] = errors;
  out["warnings"] = s.warnings;
  out["files"] = s.files;
  out["localisation_radius"] = s.radius;
  out["batches"] = s.n_batches;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Data-assimilation twin experiments";
  m.attr("__version__") = SPARSE_DA_VERSION;

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.def("preset_names", &preset_names);
  m.def(
      "render_preset",
      [](const std::string& name, bool full) { return render_config(preset(name, full)); },
      py::arg("name"), py::arg("full") = false,
      "Config-file text of a named preset.");
  m.def(
      "run",
      [](const std::string& preset_name, const std::string& config, bool full) {
        const ExperimentConfig cfg = config_from(preset_name, config, full);
        RunSummary s;
        {
          py::gil_scoped_release release;
          s = run_experiment(cfg);
        }
        return summary_dict(s);
      },
      py::arg("preset") = "", py::arg("config") = "", py::arg("full") = false,
      "Run an experiment from a preset plus config-file text overrides.");

  m.def("derive_seed", [](std::uint64_t parent, const std::vector<std::uint64_t>& path) {
    std::uint64_t s = parent;
    for (auto p : path) s = derive_seed(s, {p});
    return s;
  });
  m.def("gaspari_cohn", &gaspari_cohn, py::arg("d"), py::arg("c"));
  m.def("rmse", py::overload_cast<const Eigen::VectorXd&, const Eigen::VectorXd&>(&rmse));
  m.def("fcd", &fcd);
  m.def(
      "d_iq",
      [](double mu, double sigma, std::vector<double> samples) {
        return d_iq(mu, sigma, Ecdf(std::move(samples)));
      },
      py::arg("mu"), py::arg("sigma"), py::arg("samples"));
  m.def("coverage",
        [](const Eigen::VectorXd& mu, const Eigen::VectorXd& sigma,
           const Eigen::VectorXd& truth, double z) {
          return coverage_probability(mu, sigma, truth, z).mean;
        },
        py::arg("mu"), py::arg("sigma"), py::arg("truth"), py::arg("z") = 1.64);
  m.def("crps", &skill_crps, py::arg("hx"), py::arg("y"), py::arg("n_locations"));
  m.def("skill_bias", &skill_bias, py::arg("hx"), py::arg("y"), py::arg("n_locations"));
  m.def("skill_mse", &skill_mse, py::arg("hx"), py::arg("y"), py::arg("n_locations"));
  m.def(
      "rank_histogram",
      [](const Eigen::MatrixXd& ensemble, const Eigen::VectorXd& truth, std::uint64_t seed) {
        if (ensemble.rows() != truth.size())
          throw DimensionError("one truth value per ensemble row");
        RankHistogram h(ensemble.cols());
        RngStream rng(seed);
        for (Eigen::Index i = 0; i < ensemble.rows(); ++i)
          h.add(ensemble.row(i).transpose(), truth[i], rng);
        return py::make_tuple(h.counts(), h.p_value());
      },
      py::arg("ensemble"), py::arg("truth"), py::arg("seed") = 0,
      "Rank counts and chi-square p-value; ties are broken with the seeded stream.");
}
