// Command-line front end: simulate, estimate, check-lemmas, fit-rate and
// print-config-schema. Exit codes: 0 ok, 1 usage, 2 validation, 3 numerical.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "lbl/config.hpp"
#include "lbl/errors.hpp"
#include "lbl/evaluation.hpp"
#include "lbl/experiment.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kValidation = 2;
constexpr int kNumerical = 3;

struct CommonFlags {
  std::string config;
  std::string out;
  std::size_t workers = 0;
  std::optional<std::uint64_t> seed;
  bool emit_oracle_columns = false;
  bool exact_refilter = false;
  bool plugin_gamma = false;
  std::string bonus_scope;
};

lbl::ExperimentConfig load_with_overrides(const CommonFlags& f) {
  if (f.config.empty()) throw lbl::Error(lbl::ErrorKind::Config, "no configuration given (use --config or a path)");
  auto cfg = lbl::load_config(f.config);
  cfg.run.master_seed = lbl::resolve_master_seed(cfg.run.master_seed, f.seed);
  if (!f.out.empty()) cfg.run.output_dir = f.out;
  if (f.workers > 0) cfg.run.workers = f.workers;
  if (f.emit_oracle_columns) cfg.run.emit_oracle_columns = true;
  if (f.exact_refilter) cfg.run.exact_refilter = true;
  if (f.plugin_gamma) cfg.run.plugin_gamma = true;
  if (!f.bonus_scope.empty()) cfg.policy.bonus_scope = lbl::parse_bonus_scope(f.bonus_scope);
  const auto diag = lbl::validate(cfg.hmm);
  if (!diag.is_stationary_init)
    std::cerr << "warning: pi is not stationary for M; spectral estimates assume a stationary chain\n";
  if (!diag.regular) std::cerr << "warning: the HMM violates the spectral regularity conditions\n";
  return cfg;
}

void add_config_flags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("path", f.config, "Experiment configuration (JSON)");
  cmd->add_option("--config", f.config, "Experiment configuration (JSON)");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--seed", f.seed, "Master seed (overrides LBL_SEED and the config)");
}

int run_simulate(const CommonFlags& f) {
  const auto cfg = load_with_overrides(f);
  const auto report = lbl::simulate(cfg, std::cout);
  std::cout << "wrote " << report.cells.size() << " cells to " << report.output_dir.string() << '\n';
  return kOk;
}

int run_estimate(const CommonFlags& f) {
  const auto cfg = load_with_overrides(f);
  const auto rows = lbl::estimation_curve(cfg);
  std::ostringstream csv;
  lbl::write_estimation_csv(csv, rows);
  const fs::path path = fs::path(cfg.run.output_dir) / "estimate.csv";
  lbl::write_file_atomic(path, csv.str());
  std::cout << csv.str();
  for (const auto& r : rows)
    if (r.failures > 0) std::cerr << "t=" << r.t << ": " << r.failures << " estimation failures\n";
  std::cout << "wrote " << path.string() << '\n';
  return kOk;
}

int run_check_lemmas(std::size_t trials, std::uint64_t seed) {
  const auto report = lbl::run_lemma_suite(trials, seed);
  const auto line = [](const char* name, const lbl::LemmaTally& t) {
    std::cout << name << ": " << (t.trials - t.violations) << "/" << t.trials << " passed\n";
  };
  line("elliptic_potential", report.elliptic);
  line("staged_elliptic_potential", report.staged);
  line("matrix_determinant_lemma", report.determinant);
  line("determinant_trace", report.determinant_trace);
  line("forgetting", report.forgetting);
  return report.all_pass() ? kOk : kNumerical;
}

int run_fit_rate(const std::string& dir) {
  const auto grouped = lbl::read_summary(dir);
  int status = kOk;
  for (const auto& [policy, results] : grouped) {
    try {
      const auto fit = lbl::fit_rate(results);
      std::cout << policy << ": slope " << fit.slope << " 90% interval [" << fit.ci_low << ", " << fit.ci_high
                << "] over " << fit.horizons.size() << " horizons\n";
    } catch (const lbl::Error& e) {
      std::cerr << policy << ": " << e.what() << '\n';
      status = kValidation;
    }
  }
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contextual bandits with HMM-generated contexts"};
  app.require_subcommand(1);

  CommonFlags sim;
  auto* simulate = app.add_subcommand("simulate", "Run the policy x horizon x seed grid");
  add_config_flags(simulate, sim);
  simulate->add_option("--workers", sim.workers, "Worker threads");
  simulate->add_flag("--emit-oracle-columns", sim.emit_oracle_columns, "Hidden states and beliefs in round CSVs");
  simulate->add_flag("--exact-refilter", sim.exact_refilter, "Re-estimate and refilter every round");
  simulate->add_flag("--plugin-gamma", sim.plugin_gamma, "Forgetting rate from the current estimate");
  simulate->add_option("--bonus-scope", sim.bonus_scope, "full | partial")->check(CLI::IsMember({"full", "partial"}));

  CommonFlags est;
  auto* estimate = app.add_subcommand("estimate", "Spectral estimation error curves");
  add_config_flags(estimate, est);

  std::size_t trials = 1000;
  std::uint64_t lemma_seed = 0;
  auto* lemmas = app.add_subcommand("check-lemmas", "Randomized checks of the auxiliary inequalities");
  lemmas->add_option("--trials", trials, "Number of random instances")->check(CLI::PositiveNumber);
  lemmas->add_option("--seed", lemma_seed, "Seed for the random instances");

  std::string results_dir;
  auto* fit = app.add_subcommand("fit-rate", "Log-log regret slope from a results directory");
  fit->add_option("dir", results_dir, "Directory holding summary.csv")->required();

  auto* schema = app.add_subcommand("print-config-schema", "Describe the configuration keys");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (simulate->parsed()) return run_simulate(sim);
    if (estimate->parsed()) return run_estimate(est);
    if (lemmas->parsed()) return run_check_lemmas(trials, lemma_seed);
    if (fit->parsed()) return run_fit_rate(results_dir);
    if (schema->parsed()) {
      std::cout << lbl::schema_text();
      return kOk;
    }
  } catch (const lbl::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return lbl::is_numerical(e.kind()) ? kNumerical : kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  }
  std::cerr << app.help();
  return kUsage;
}
