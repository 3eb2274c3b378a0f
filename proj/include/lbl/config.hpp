#pragma once

// Experiment configuration: JSON with sections hmm, reward, policy, run and
// estimate. Key names are the contract; see schema_text().

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "lbl/bandit_world.hpp"
#include "lbl/hmm.hpp"
#include "lbl/policies.hpp"

namespace lbl {

struct TransferSection {
  TransferKind kind = TransferKind::OneHotAction;
  std::size_t num_actions = 0;
  std::vector<Vec> features;             // action_context_outer: one per context
  std::vector<std::vector<Vec>> table;   // table: [action][context]
};

struct RewardSection {
  RewardModel model = RewardModel::StateDependent;
  TransferSection transfer;
  std::optional<std::vector<Vec>> theta_star;  // explicit vectors, or generated
  std::optional<double> c_theta;
  std::uint64_t generate_seed = 0;
  double generate_target = 0.9;
  NoiseKind noise = NoiseKind::Gaussian;
  double v_eta = 0.0;
  double c_eta = 0.0;
};

struct PolicySection {
  std::vector<std::string> names;  // boxA | boxB | oracle | random
  std::optional<double> lambda;    // default depends on T and the policy
  std::optional<std::size_t> ell;  // boxA stage length, default ceil(T^{3/4})
  double delta = 0.1;
  std::optional<double> gamma;  // default: forgetting rate of the true chain
  std::optional<double> c_theta;
  std::optional<double> c_eta;
  std::optional<double> v_eta;
  BonusScope bonus_scope = BonusScope::Full;
  std::optional<std::size_t> refresh_period;  // boxB, default ceil(sqrt(T))
  bool oracle_beliefs = false;
  bool tolerate_estimator_failures = true;
};

struct RunSection {
  std::vector<std::size_t> horizons;
  std::vector<std::uint64_t> seeds;
  std::uint64_t master_seed = 0;
  std::string output_dir = "results";
  bool emit_oracle_columns = false;
  bool exact_refilter = false;
  bool plugin_gamma = false;
  bool write_rounds = true;
  std::size_t workers = 1;
};

struct EstimateSection {
  std::vector<std::size_t> checkpoints;
  std::size_t num_seeds = 10;
};

struct ExperimentConfig {
  HmmParams hmm;
  RewardSection reward;
  PolicySection policy;
  RunSection run;
  EstimateSection estimate;
  nlohmann::json source;  // the parsed document, kept for snapshots
};

/// Parses and validates; throws Error(Config) naming the missing or
/// malformed key, or the validation error of the offending section.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

TransferFunction build_transfer(const ExperimentConfig& cfg);
/// Explicit theta_star (validated) or the generation recipe.
RewardSpec build_reward(const ExperimentConfig& cfg, const TransferFunction& phi);

/// Rounds ceil(x) down when x is within 1e-9 (relative) of an integer.
std::size_t ceil_power(double base, double exponent);

double default_lambda(const std::string& policy, std::size_t horizon);
std::size_t default_stage_length(std::size_t horizon);

/// Human-readable description of every key.
std::string schema_text();

}  // namespace lbl
