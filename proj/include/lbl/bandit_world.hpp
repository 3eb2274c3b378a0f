#pragma once

// The bandit environment around the HMM: transfer functions, reward models,
// noise, and the observe-context / act / reward protocol.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "lbl/hmm.hpp"

namespace lbl {

enum class TransferKind { OneHotAction, ActionContextOuter, Table };

std::string_view to_string(TransferKind kind);
TransferKind parse_transfer_kind(std::string_view name);

/// phi(a, x) for a finite action set and finite context set; every vector has
/// Euclidean norm at most 1.
class TransferFunction {
 public:
  /// phi(a, x) = e_a in R^A.
  static TransferFunction one_hot_action(std::size_t num_actions, std::size_t num_contexts);
  /// phi(a, x) = e_a (x) feature(x), jointly rescaled so the largest norm is
  /// at most 1. `features` holds one vector per context.
  static TransferFunction action_context_outer(std::size_t num_actions, const std::vector<Vec>& features);
  /// Explicit vectors, table[a][x]; rejected when a norm exceeds 1.
  static TransferFunction table(const std::vector<std::vector<Vec>>& table);

  TransferKind kind() const { return kind_; }
  std::size_t dim() const { return dim_; }
  std::size_t num_actions() const { return num_actions_; }
  std::size_t num_contexts() const { return num_contexts_; }
  const Vec& operator()(std::size_t action, std::size_t context) const;

 private:
  TransferFunction(TransferKind kind, std::size_t actions, std::size_t contexts, std::size_t dim);

  TransferKind kind_;
  std::size_t num_actions_;
  std::size_t num_contexts_;
  std::size_t dim_;
  std::vector<Vec> vectors_;  // index a * X + x
};

enum class NoiseKind { Gaussian, BoundedUniform };
enum class RewardModel { StateDependent, BeliefDependent };

std::string_view to_string(NoiseKind kind);
std::string_view to_string(RewardModel model);
NoiseKind parse_noise_kind(std::string_view name);
RewardModel parse_reward_model(std::string_view name);

/// Gaussian: N(0, v^2) with C = v^2. Bounded uniform on [-sqrt(3C), sqrt(3C)]
/// with sub-Gaussian proxy v^2 = 3C.
struct NoiseModel {
  NoiseKind kind = NoiseKind::Gaussian;
  double v_eta = 0.0;
  double c_eta = 0.0;

  static NoiseModel gaussian(double v_eta);
  static NoiseModel bounded_uniform(double c_eta);
  double draw(Engine& engine) const;
};

struct RewardSpec {
  std::vector<Vec> theta_star;  // one d-vector per hidden state
  double c_theta = 0.0;
  NoiseModel noise;
  RewardModel model = RewardModel::StateDependent;

  std::size_t num_states() const { return theta_star.size(); }
};

/// Throws InvalidArgument when a norm exceeds c_theta or some |phi' theta_h|
/// exceeds 1 over the whole (a, x, h) grid.
void validate_reward(const RewardSpec& spec, const TransferFunction& phi);

/// Gaussian theta vectors rescaled so max |phi(a,x)' theta_h| equals `target`;
/// c_theta is set to the largest realized norm.
RewardSpec make_reward_spec(std::size_t num_states, const TransferFunction& phi, NoiseModel noise, RewardModel model,
                            std::uint64_t seed, double target = 0.9);

struct HiddenState {
  std::size_t index;
};
using RewardDriver = std::variant<HiddenState, Vec>;

/// phi(a,x)' theta_h for a state driver, phi(a,x)' sum_h b(h) theta_h for a
/// belief driver. Throws ModelMismatch when the driver does not fit the model.
double mean_reward(const RewardSpec& spec, const TransferFunction& phi, std::size_t action, std::size_t context,
                   const RewardDriver& driver);

/// sum_h b(h) phi(a,x)' theta_h, regardless of the reward model. This is the
/// quantity the pseudo-regret compares.
double belief_weighted_value(const RewardSpec& spec, const TransferFunction& phi, std::size_t action,
                             std::size_t context, const Vec& belief);

/// Mean reward under spec.model plus one noise draw.
double draw_reward(const RewardSpec& spec, const TransferFunction& phi, std::size_t action, std::size_t context,
                   std::size_t hidden, const Vec& belief, Engine& engine);

struct RoundRecord {
  std::size_t round = 0;
  std::size_t context = 0;
  std::size_t hidden = 0;
  std::size_t action = 0;
  double reward = 0.0;
  Vec true_belief;
  Vec estimated_belief;
};

/// What a policy may see when choosing the action of round t.
struct Observation {
  std::size_t round;
  std::size_t context;
  const Vec& belief;
};

class Environment {
 public:
  Environment(HmmParams params, RewardSpec spec, TransferFunction phi, std::size_t horizon, std::uint64_t seed);
  Environment(const Environment&) = delete;
  Environment& operator=(const Environment&) = delete;

  /// Advances the latent chain and reveals x_t. Throws HorizonExceeded past T.
  std::size_t next_context();
  /// Plays `action` for the revealed context; returns the full record.
  /// Only record.reward may be shown to a policy.
  RoundRecord step(std::size_t action);

  std::size_t round() const { return round_; }
  std::size_t horizon() const { return horizon_; }
  const Vec& true_belief() const { return filter_.current().probs; }
  /// r_t(a) for every action of the current round (diagnostics only).
  const std::vector<double>& reward_vector() const { return rewards_; }

  const HmmParams& params() const { return params_; }
  const RewardSpec& reward_spec() const { return spec_; }
  const TransferFunction& transfer() const { return phi_; }

 private:
  HmmParams params_;
  RewardSpec spec_;
  TransferFunction phi_;
  std::size_t horizon_;
  HmmSampler sampler_;
  TrueFilter filter_;
  Engine noise_;
  std::size_t round_ = 0;
  bool awaiting_action_ = false;
  std::size_t hidden_ = 0;
  std::size_t context_ = 0;
  std::vector<double> rewards_;
};

}  // namespace lbl
