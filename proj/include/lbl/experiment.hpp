#pragma once

// Experiment orchestration: single simulation cells, the policy x horizon x
// seed grid, run artifacts and the estimation-error curves.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lbl/config.hpp"
#include "lbl/evaluation.hpp"

namespace lbl {

struct CellSpec {
  std::string policy;
  std::size_t horizon = 0;
  std::uint64_t seed = 0;
};

struct CellResult {
  CellSpec cell;
  double regret = 0.0;
  std::size_t estimator_refreshes = 0;
  std::size_t estimator_failures = 0;
  double max_inverse_drift = 0.0;
  double wall_seconds = 0.0;
  std::vector<std::size_t> actions;
};

struct CellOptions {
  bool emit_oracle_columns = false;
  bool keep_actions = false;
  /// Optional testing hook applied to the boxA / boxB bonuses.
  BonusOverride bonus_override;
};

/// Seed of a cell's environment. It depends on (master, T, seed) only so all
/// policies of one (T, seed) pair see the same context and noise streams.
std::uint64_t cell_seed(std::uint64_t master, std::size_t horizon, std::uint64_t seed);

/// Runs one cell and, when `rounds_csv` is given, streams the per-round
/// transcript `t,x,a,r,regret_inc` (plus `h,b1..bH,b1_hat..bH_hat` with
/// oracle columns).
CellResult run_cell(const ExperimentConfig& cfg, const RewardSpec& spec, const TransferFunction& phi,
                    const CellSpec& cell, std::ostream* rounds_csv, const CellOptions& options = {});

/// Full grid in policy-major, then horizon, then seed order.
std::vector<CellSpec> experiment_cells(const ExperimentConfig& cfg);

struct GridResult {
  std::vector<CellResult> cells;
};

/// Runs the grid on `workers` threads; results come back in grid order.
GridResult run_grid(const ExperimentConfig& cfg, std::size_t workers, const CellOptions& options = {});

/// Writes `path` through a temporary sibling and a rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

std::string rounds_file_name(const CellSpec& cell);

/// Sum of the regret_inc column of a rounds CSV.
double rounds_csv_regret(const std::filesystem::path& path);

struct SimulateReport {
  std::vector<CellResult> cells;
  std::filesystem::path output_dir;
};

/// The `simulate` command: runs the grid, writes rounds/*.csv, summary.csv,
/// summary.json and config.json under cfg.run.output_dir. A FAILED marker is
/// present while the run is incomplete and stays there on error. `log`
/// receives one line per cell.
SimulateReport simulate(const ExperimentConfig& cfg, std::ostream& log);

/// summary.csv reader for fit-rate: results[policy][T] = R_T per seed.
std::map<std::string, std::map<std::size_t, std::vector<double>>> read_summary(const std::filesystem::path& dir);

struct EstimateRow {
  std::size_t t;
  double frobenius_M_err;
  double frobenius_E_err;
  double median_l1_belief_gap;
  std::size_t failures;
};

/// Spectral estimation error against the true parameters at each checkpoint,
/// medians over estimate.num_seeds trajectories.
std::vector<EstimateRow> estimation_curve(const ExperimentConfig& cfg);
void write_estimation_csv(std::ostream& out, const std::vector<EstimateRow>& rows);

/// Master seed after applying LBL_SEED (when set) and then `cli_seed`.
std::uint64_t resolve_master_seed(std::uint64_t config_seed, std::optional<std::uint64_t> cli_seed);

}  // namespace lbl
