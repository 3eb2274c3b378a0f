#include "lbl/policies.hpp"

#include <cmath>
#include <string>

#include "lbl/errors.hpp"

namespace lbl {

RidgeState make_ridge(std::size_t dim, double lambda) {
  if (dim == 0) throw Error(ErrorKind::InvalidArgument, "ridge dimension must be >= 1");
  if (!(lambda > 0.0)) throw Error(ErrorKind::InvalidArgument, "lambda must be > 0");
  const auto n = static_cast<Eigen::Index>(dim);
  RidgeState s;
  s.gram = lambda * Mat::Identity(n, n);
  s.moment = Vec::Zero(n);
  s.theta_hat = Vec::Constant(n, 1.0 / lambda);
  s.lambda = lambda;
  return s;
}

void ridge_resolve(RidgeState& state) {
  if (state.rounds_absorbed == 0) return;
  state.theta_hat = state.gram.ldlt().solve(state.moment);
}

void ridge_absorb(RidgeState& state, const Vec& feature, double reward, bool resolve) {
  if (feature.size() != state.moment.size()) throw Error(ErrorKind::ShapeMismatch, "feature length != ridge dimension");
  const double norm = feature.norm();
  if (norm > 1.0 + kFeatureNormTol)
    throw Error(ErrorKind::FeatureTooLarge, "||feature|| = " + std::to_string(norm) + " exceeds 1");
  state.gram.noalias() += feature * feature.transpose();
  state.moment += reward * feature;
  ++state.rounds_absorbed;
  if (resolve) ridge_resolve(state);
}

RidgeState ridge_update(const RidgeState& state, const Vec& feature, double reward) {
  RidgeState next = state;
  ridge_absorb(next, feature, reward, true);
  return next;
}

Vec tensor_feature(const Vec& belief, const Vec& phi) {
  const auto H = belief.size();
  const auto d = phi.size();
  Vec out(H * d);
  for (Eigen::Index h = 0; h < H; ++h) out.segment(h * d, d) = belief(h) * phi;
  return out;
}

StagePlan::StagePlan(std::size_t ell, std::size_t T) : stage_length(ell), horizon(T) {
  if (ell < 1) throw Error(ErrorKind::InvalidArgument, "stage length must be >= 1");
  if (T < 1) throw Error(ErrorKind::InvalidArgument, "horizon must be >= 1");
}

std::string_view to_string(BonusScope scope) { return scope == BonusScope::Full ? "full" : "partial"; }

BonusScope parse_bonus_scope(std::string_view name) {
  if (name == "full") return BonusScope::Full;
  if (name == "partial") return BonusScope::Partial;
  throw Error(ErrorKind::Config, "bonus_scope must be 'full' or 'partial', got '" + std::string(name) + "'");
}

void BonusConfig::validate() const {
  if (!(delta > 0.0 && delta < 1.0)) throw Error(ErrorKind::InvalidArgument, "delta must lie in (0, 1)");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw Error(ErrorKind::InvalidArgument, "gamma must lie in [0, 1)");
  if (c_theta < 0.0 || c_eta < 0.0 || v_eta < 0.0)
    throw Error(ErrorKind::InvalidArgument, "c_theta, c_eta and v_eta must be >= 0");
  if (H < 1 || d < 1 || X < H) throw Error(ErrorKind::InvalidArgument, "bonus dimensions need 1 <= H <= X, d >= 1");
}

BeliefBudgetTable BonusConfig::budget_table(std::size_t horizon) const {
  if (oracle_beliefs) return BeliefBudgetTable::zero(horizon);
  return BeliefBudgetTable(budget(), horizon);
}

double bonus_boxA(const BonusConfig& cfg, const StagePlan& plan, const RidgeState& ridge, const Mat& gram_inverse,
                  const BeliefBudgetTable& budget, const Vec& feature, std::size_t t) {
  const double d = static_cast<double>(cfg.d);
  if (t <= plan.stage_length) return 1.0 + std::sqrt(d) / ridge.lambda;
  const std::size_t s = plan.stage_of(t);
  const std::size_t frozen_rounds = (s - 1) * plan.stage_length;
  if (ridge.rounds_absorbed != frozen_rounds)
    throw Error(ErrorKind::StageNotFrozen, "ridge holds " + std::to_string(ridge.rounds_absorbed) +
                                               " rounds, stage start needs " + std::to_string(frozen_rounds));
  const double sT = static_cast<double>(plan.num_stages());
  const double sm1 = static_cast<double>(s - 1);
  const double ell = static_cast<double>(plan.stage_length);
  const double g = cfg.gamma;
  const double norm = (gram_inverse * feature).norm();

  const double ridge_term = ridge.lambda * std::sqrt(static_cast<double>(cfg.H)) * cfg.c_theta;
  const double mixing_term =
      4.0 * std::sqrt(sT * sm1 * (1.0 + static_cast<double>(s) * g) * ell / (cfg.delta * (1.0 - g)));
  const double noise_term = std::sqrt(4.0 * sT * cfg.c_eta * sm1 * ell / cfg.delta);
  const double drift_term = 2.0 * sm1 * g / (1.0 - g);
  const double belief_term = budget.prefix(frozen_rounds);

  const double head = budget.at(t);
  if (cfg.scope == BonusScope::Full)
    return head + norm * (ridge_term + mixing_term + noise_term + drift_term + belief_term);
  return head + norm * (ridge_term + mixing_term + noise_term) + drift_term + belief_term;
}

double bonus_boxA(const BonusConfig& cfg, const StagePlan& plan, const RidgeState& ridge,
                  const BeliefBudgetTable& budget, const Vec& feature, std::size_t t) {
  return bonus_boxA(cfg, plan, ridge, ridge.gram.inverse(), budget, feature, t);
}

double bonus_boxB(const BonusConfig& cfg, const RidgeState& ridge, const Mat& gram_inverse,
                  const BeliefBudgetTable& budget, const Vec& feature, std::size_t t) {
  if (t < 1) throw Error(ErrorKind::InvalidArgument, "round index starts at 1");
  const double d = static_cast<double>(cfg.d);
  if (t == 1) return 1.0 + std::sqrt(d) / ridge.lambda;
  const double lambda = ridge.lambda;
  const double dH = d * static_cast<double>(cfg.H);
  const double maha = std::sqrt(std::max(0.0, feature.dot(gram_inverse * feature)));
  const double width = budget.prefix(t - 1) / std::sqrt(lambda) +
                       std::sqrt(lambda * static_cast<double>(cfg.H)) * cfg.c_theta +
                       cfg.v_eta * std::sqrt(2.0 * std::log(2.0 / cfg.delta) +
                                             dH * std::log(1.0 + static_cast<double>(t) / (lambda * dH)));
  return budget.at(t) + maha * width;
}

double bonus_boxB(const BonusConfig& cfg, const RidgeState& ridge, const BeliefBudgetTable& budget,
                  const Vec& feature, std::size_t t) {
  return bonus_boxB(cfg, ridge, ridge.gram.inverse(), budget, feature, t);
}

std::size_t argmax_first(const std::vector<double>& scores) {
  if (scores.empty()) throw Error(ErrorKind::InvalidArgument, "no actions to choose from");
  std::size_t best = 0;
  for (std::size_t a = 1; a < scores.size(); ++a)
    if (scores[a] > scores[best]) best = a;
  return best;
}

namespace {

std::size_t checked_horizon(std::size_t t, std::size_t horizon) {
  if (t > horizon) throw Error(ErrorKind::HorizonExceeded, "policy asked to act past its horizon");
  return t;
}

}  // namespace

StagedLinUcb::StagedLinUcb(const TransferFunction& phi, LinUcbOptions options, std::size_t stage_length)
    : phi_(phi), options_(std::move(options)), plan_(stage_length, options_.horizon) {
  options_.bonus.validate();
  if (options_.bonus.d != phi_.dim()) throw Error(ErrorKind::ShapeMismatch, "bonus d != transfer dimension");
  budget_ = options_.bonus.budget_table(options_.horizon);
  pending_ = make_ridge(phi_.dim() * options_.bonus.H, options_.lambda);
  frozen_ = pending_;
  frozen_inverse_ = frozen_.gram.inverse();
}

std::size_t StagedLinUcb::act(const Observation& obs) {
  if (awaiting_reward_) throw Error(ErrorKind::InvalidArgument, "act() called twice without a reward");
  t_ = checked_horizon(obs.round, options_.horizon);
  if (static_cast<std::size_t>(obs.belief.size()) != options_.bonus.H)
    throw Error(ErrorKind::ShapeMismatch, "belief length != H");
  std::vector<double> scores(phi_.num_actions());
  std::vector<Vec> features(phi_.num_actions());
  for (std::size_t a = 0; a < phi_.num_actions(); ++a) {
    features[a] = tensor_feature(obs.belief, phi_(a, obs.context));
    const double bonus =
        options_.bonus_override
            ? options_.bonus_override(BonusQuery{t_, a, features[a], frozen_, frozen_inverse_})
            : bonus_boxA(options_.bonus, plan_, frozen_, frozen_inverse_, budget_, features[a], t_);
    scores[a] = features[a].dot(frozen_.theta_hat) + bonus;
  }
  last_version_ = frozen_.rounds_absorbed;
  const auto choice = argmax_first(scores);
  last_feature_ = std::move(features[choice]);
  awaiting_reward_ = true;
  return choice;
}

void StagedLinUcb::observe_reward(double reward) {
  if (!awaiting_reward_) throw Error(ErrorKind::InvalidArgument, "reward without a preceding action");
  awaiting_reward_ = false;
  ridge_absorb(pending_, last_feature_, reward, false);
  if (t_ % plan_.stage_length == 0) {
    ridge_resolve(pending_);
    frozen_ = pending_;
    frozen_inverse_ = frozen_.gram.inverse();
  }
}

LinUcb::LinUcb(const TransferFunction& phi, LinUcbOptions options) : phi_(phi), options_(std::move(options)) {
  options_.bonus.validate();
  if (options_.bonus.d != phi_.dim()) throw Error(ErrorKind::ShapeMismatch, "bonus d != transfer dimension");
  budget_ = options_.bonus.budget_table(options_.horizon);
  ridge_ = make_ridge(phi_.dim() * options_.bonus.H, options_.lambda);
  inverse_ = ridge_.gram.inverse();
}

std::size_t LinUcb::act(const Observation& obs) {
  if (awaiting_reward_) throw Error(ErrorKind::InvalidArgument, "act() called twice without a reward");
  t_ = checked_horizon(obs.round, options_.horizon);
  if (static_cast<std::size_t>(obs.belief.size()) != options_.bonus.H)
    throw Error(ErrorKind::ShapeMismatch, "belief length != H");
  std::vector<double> scores(phi_.num_actions());
  std::vector<Vec> features(phi_.num_actions());
  for (std::size_t a = 0; a < phi_.num_actions(); ++a) {
    features[a] = tensor_feature(obs.belief, phi_(a, obs.context));
    const double bonus = options_.bonus_override
                             ? options_.bonus_override(BonusQuery{t_, a, features[a], ridge_, inverse_})
                             : bonus_boxB(options_.bonus, ridge_, inverse_, budget_, features[a], t_);
    scores[a] = features[a].dot(ridge_.theta_hat) + bonus;
  }
  const auto choice = argmax_first(scores);
  last_feature_ = std::move(features[choice]);
  awaiting_reward_ = true;
  return choice;
}

void LinUcb::observe_reward(double reward) {
  if (!awaiting_reward_) throw Error(ErrorKind::InvalidArgument, "reward without a preceding action");
  awaiting_reward_ = false;
  ridge_absorb(ridge_, last_feature_, reward, true);
  const Vec u = inverse_ * last_feature_;
  inverse_ -= (u * u.transpose()) / (1.0 + last_feature_.dot(u));
  if (ridge_.rounds_absorbed % kResyncPeriod == 0) {
    const Mat direct = ridge_.gram.inverse();
    const double drift = (direct - inverse_).cwiseAbs().maxCoeff();
    max_drift_ = std::max(max_drift_, drift);
    inverse_ = direct;
  }
}

std::size_t OraclePolicy::act(const Observation& obs) {
  std::vector<double> scores(phi_.num_actions());
  for (std::size_t a = 0; a < scores.size(); ++a)
    scores[a] = belief_weighted_value(spec_, phi_, a, obs.context, obs.belief);
  return argmax_first(scores);
}

RandomPolicy::RandomPolicy(std::size_t num_actions, std::uint64_t seed)
    : num_actions_(num_actions), engine_(make_engine(seed)) {
  if (num_actions == 0) throw Error(ErrorKind::InvalidArgument, "need at least one action");
}

std::size_t RandomPolicy::act(const Observation&) {
  return static_cast<std::size_t>(uniform_index(engine_, num_actions_));
}

double plugin_gamma(const Mat& transition) {
  const double hi = transition.maxCoeff();
  if (!(hi > 0.0)) throw Error(ErrorKind::NotMixing, "transition has no positive entry");
  const double g = 1.0 - transition.minCoeff() / hi;
  if (!(g < 1.0)) throw Error(ErrorKind::NotMixing, "estimated transition has a zero entry");
  return std::max(0.0, g);
}

}  // namespace lbl
