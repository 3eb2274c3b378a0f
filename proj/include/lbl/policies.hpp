#pragma once

// Decision strategies: staged LinUCB on estimated beliefs, single-stage
// LinUCB, the oracle benchmark and a uniform-random baseline, together with
// the ridge estimator and both confidence bonuses.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <string_view>

#include "lbl/bandit_world.hpp"
#include "lbl/belief_filter.hpp"

namespace lbl {

constexpr double kFeatureNormTol = 1e-9;

struct RidgeState {
  Mat gram;
  Vec moment;
  Vec theta_hat;
  double lambda = 1.0;
  std::size_t rounds_absorbed = 0;

  std::size_t dim() const { return static_cast<std::size_t>(moment.size()); }
};

/// gram = lambda I, moment = 0, theta_hat = (1/lambda) 1.
RidgeState make_ridge(std::size_t dim, double lambda);

/// Adds feature feature' to the Gram matrix and feature * reward to the
/// moment, then re-solves theta_hat. Throws FeatureTooLarge when
/// ||feature|| > 1 + 1e-9.
RidgeState ridge_update(const RidgeState& state, const Vec& feature, double reward);
/// In-place variant; `resolve = false` leaves theta_hat stale.
void ridge_absorb(RidgeState& state, const Vec& feature, double reward, bool resolve = true);
void ridge_resolve(RidgeState& state);

/// Block h is belief(h) * phi.
Vec tensor_feature(const Vec& belief, const Vec& phi);

struct StagePlan {
  std::size_t stage_length = 1;
  std::size_t horizon = 1;

  StagePlan() = default;
  StagePlan(std::size_t ell, std::size_t horizon);
  std::size_t num_stages() const { return (horizon + stage_length - 1) / stage_length; }
  std::size_t stage_of(std::size_t t) const { return (t + stage_length - 1) / stage_length; }
};

enum class BonusScope { Full, Partial };
std::string_view to_string(BonusScope scope);
BonusScope parse_bonus_scope(std::string_view name);

struct BonusConfig {
  double delta = 0.1;
  double gamma = 0.5;
  double c_theta = 1.0;
  double c_eta = 0.0;
  double v_eta = 0.0;
  std::size_t H = 1;
  std::size_t X = 1;
  std::size_t d = 1;
  BonusScope scope = BonusScope::Full;
  /// Beliefs are exact, so the belief-error budget is identically zero.
  bool oracle_beliefs = false;

  void validate() const;
  BeliefErrorBudget budget() const { return {H, X, delta / 2.0}; }
  BeliefBudgetTable budget_table(std::size_t horizon) const;
};

/// Staged bonus. `ridge` must be the estimate frozen at the end of the
/// previous stage (rounds_absorbed == (s_t - 1) ell), otherwise StageNotFrozen.
/// `gram_inverse` is the inverse of ridge.gram and `budget` holds
/// u_belief(., delta/2) (or zeros).
double bonus_boxA(const BonusConfig& cfg, const StagePlan& plan, const RidgeState& ridge, const Mat& gram_inverse,
                  const BeliefBudgetTable& budget, const Vec& feature, std::size_t t);
/// Convenience overload inverting the Gram matrix on the spot.
double bonus_boxA(const BonusConfig& cfg, const StagePlan& plan, const RidgeState& ridge,
                  const BeliefBudgetTable& budget, const Vec& feature, std::size_t t);

/// Per-round bonus with the Gram matrix of rounds 1..t-1 given through its
/// inverse.
double bonus_boxB(const BonusConfig& cfg, const RidgeState& ridge, const Mat& gram_inverse,
                  const BeliefBudgetTable& budget, const Vec& feature, std::size_t t);
double bonus_boxB(const BonusConfig& cfg, const RidgeState& ridge, const BeliefBudgetTable& budget,
                  const Vec& feature, std::size_t t);

/// Index of the largest score; the smallest index wins ties.
std::size_t argmax_first(const std::vector<double>& scores);

class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string_view name() const = 0;
  virtual std::size_t act(const Observation& obs) = 0;
  virtual void observe_reward(double reward) = 0;
  /// Replaces the forgetting rate used by the bonus (plug-in estimates).
  virtual void set_gamma(double) {}
};

/// Everything a bonus override sees for one candidate action.
struct BonusQuery {
  std::size_t t;
  std::size_t action;
  const Vec& feature;
  const RidgeState& ridge;
  const Mat& gram_inverse;
};
using BonusOverride = std::function<double(const BonusQuery&)>;

struct LinUcbOptions {
  double lambda = 1.0;
  std::size_t horizon = 1;
  BonusConfig bonus;
  BonusOverride bonus_override;  // replaces the formula when set (testing)
};

/// Staged LinUCB: theta_hat and the Gram inverse are recomputed only at the
/// end of each stage of length ell.
class StagedLinUcb final : public Policy {
 public:
  StagedLinUcb(const TransferFunction& phi, LinUcbOptions options, std::size_t stage_length);
  std::string_view name() const override { return "boxA"; }
  std::size_t act(const Observation& obs) override;
  void observe_reward(double reward) override;
  void set_gamma(double gamma) override { options_.bonus.gamma = gamma; }

  const RidgeState& frozen() const { return frozen_; }
  const StagePlan& plan() const { return plan_; }
  /// Rounds whose data entered the theta_hat used at the last act() call.
  std::size_t last_theta_version() const { return last_version_; }

 private:
  const TransferFunction& phi_;
  LinUcbOptions options_;
  StagePlan plan_;
  BeliefBudgetTable budget_;
  RidgeState pending_;
  RidgeState frozen_;
  Mat frozen_inverse_;
  std::size_t t_ = 0;
  std::size_t last_version_ = 0;
  Vec last_feature_;
  bool awaiting_reward_ = false;
};

/// Single-stage LinUCB: the ridge estimate is refreshed every round and the
/// Gram inverse is maintained by rank-one updates.
class LinUcb final : public Policy {
 public:
  LinUcb(const TransferFunction& phi, LinUcbOptions options);
  std::string_view name() const override { return "boxB"; }
  std::size_t act(const Observation& obs) override;
  void observe_reward(double reward) override;
  void set_gamma(double gamma) override { options_.bonus.gamma = gamma; }

  const RidgeState& ridge() const { return ridge_; }
  const Mat& gram_inverse() const { return inverse_; }
  /// Largest entry of |maintained inverse - direct inverse| seen at a resync.
  double max_inverse_drift() const { return max_drift_; }

  static constexpr std::size_t kResyncPeriod = 1000;
  static constexpr double kDriftTol = 1e-8;

 private:
  const TransferFunction& phi_;
  LinUcbOptions options_;
  BeliefBudgetTable budget_;
  RidgeState ridge_;
  Mat inverse_;
  std::size_t t_ = 0;
  Vec last_feature_;
  bool awaiting_reward_ = false;
  double max_drift_ = 0.0;
};

/// argmax_a sum_h b(h) phi(a,x)' theta*_h with the true belief.
class OraclePolicy final : public Policy {
 public:
  OraclePolicy(const TransferFunction& phi, const RewardSpec& spec) : phi_(phi), spec_(spec) {}
  std::string_view name() const override { return "oracle"; }
  std::size_t act(const Observation& obs) override;
  void observe_reward(double) override {}

 private:
  const TransferFunction& phi_;
  const RewardSpec& spec_;
};

class RandomPolicy final : public Policy {
 public:
  RandomPolicy(std::size_t num_actions, std::uint64_t seed);
  std::string_view name() const override { return "random"; }
  std::size_t act(const Observation& obs) override;
  void observe_reward(double) override {}

 private:
  std::size_t num_actions_;
  Engine engine_;
};

/// Plug-in forgetting rate 1 - min(M)/max(M) of an estimated transition.
double plugin_gamma(const Mat& transition);

}  // namespace lbl
