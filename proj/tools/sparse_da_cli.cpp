#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include "sparse_da/error.hpp"
#include "sparse_da/experiment.hpp"
#include "sparse_da/presets.hpp"

namespace {

using namespace sparse_da;

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct Source {
  std::string config;
  std::string preset;
  bool full = false;
};

ExperimentConfig resolve(const Source& src) {
  if (src.config.empty() && src.preset.empty())
    throw ConfigError("give --config FILE or --preset NAME");
  if (src.config.empty()) {
    std::istringstream empty;
    return load_experiment(ConfigFile::parse(empty, "preset"), src.preset, src.full);
  }
  return load_experiment(ConfigFile::load(src.config), src.preset, src.full);
}

void print_summary(const ExperimentConfig& cfg, const RunSummary& summary) {
  std::set<std::string> names;
  for (const auto& s : summary.metrics) names.insert(s.name);
  std::cout << "radius " << summary.radius << ", batches " << summary.n_batches << "\n";
  for (const auto& name : names)
    std::cout << "  " << name << " (terminal mean) = " << summary.mean_at(name) << "\n";
  if (!cfg.out_dir.empty())
    std::cout << summary.files.size() << " files written to " << cfg.out_dir << "\n";
}

int run(const Source& src, const std::optional<std::uint64_t>& seed,
        const std::optional<int>& workers, const std::string& out) {
  ExperimentConfig cfg = resolve(src);
  if (seed) cfg.seed = *seed;
  if (workers) cfg.workers = *workers;
  if (!out.empty()) {
    cfg.out_dir = out;
  } else if (cfg.out_dir.empty()) {
    const char* env = std::getenv("SPARSE_DA_OUT");
    cfg.out_dir = std::string(env && *env ? env : "sparse_da_out") + "/" + cfg.name;
  }
  cfg.validate();
  if (cfg.full_scale)
    std::cerr << "warning: full-scale configuration; expect hours of runtime and "
                 "several GB of memory\n";
  const RunSummary summary = run_experiment(cfg);
  for (const auto& w : summary.warnings) std::cerr << "warning: " << w << "\n";
  print_summary(cfg, summary);
  for (const auto& e : summary.errors)
    std::cerr << "error: truth " << e.truth << " ensemble " << e.ensemble << " "
              << e.filter << ": " << e.message << "\n";
  return summary.errors.empty() ? 0 : kExitNumerical;
}

int export_truth(const Source& src, int truth, const std::string& out) {
  const ExperimentConfig cfg = resolve(src);
  if (truth < 0 || truth >= cfg.truths) throw ConfigError("truth index out of range");
  const TwinExperiment twin = generate_truth(cfg, truth);
  write_twin(twin, out);
  std::cout << "truth " << truth << " (seed " << twin.seed << ", "
            << twin.observations.size() << " observation times) written to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse-observation ensemble data assimilation experiments"};
  app.require_subcommand(1);

  Source run_src;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string out;
  auto* run_cmd = app.add_subcommand("run", "Run an experiment");
  run_cmd->add_option("--config", run_src.config, "Config file")->check(CLI::ExistingFile);
  run_cmd->add_option("--preset", run_src.preset, "Base preset");
  run_cmd->add_option("--seed", seed, "Master seed");
  run_cmd->add_option("--workers", workers, "Worker threads (0: all cores)");
  run_cmd->add_option("--out", out, "Output directory (default: $SPARSE_DA_OUT/<name>)");
  run_cmd->add_flag("--full", run_src.full, "Paper-scale configuration");

  app.add_subcommand("list-presets", "List the built-in presets");

  Source truth_src;
  int truth = 0;
  std::string truth_out;
  auto* truth_cmd = app.add_subcommand("export-truth", "Write one truth and its observations");
  truth_cmd->add_option("--config", truth_src.config, "Config file")->check(CLI::ExistingFile);
  truth_cmd->add_option("--preset", truth_src.preset, "Base preset");
  truth_cmd->add_option("--truth", truth, "Truth replicate index");
  truth_cmd->add_option("--out", truth_out, "Output file")->required();
  truth_cmd->add_flag("--full", truth_src.full, "Paper-scale configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (app.got_subcommand("list-presets")) {
      for (const auto& name : preset_names()) {
        const ExperimentConfig c = preset(name);
        std::cout << name << "  case=" << to_string(c.kase) << " grid=" << c.grid.nx << "x"
                  << c.grid.ny << " ne=" << c.ne << " truths=" << c.truths
                  << " ensembles=" << c.ensembles << "\n";
      }
      return 0;
    }
    if (app.got_subcommand("export-truth")) return export_truth(truth_src, truth, truth_out);
    return run(run_src, seed, workers, out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DimensionError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  }
}
