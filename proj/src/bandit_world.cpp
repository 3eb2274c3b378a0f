#include "lbl/bandit_world.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lbl/errors.hpp"

namespace lbl {

namespace {
constexpr double kNormTol = 1e-12;
}

std::string_view to_string(TransferKind kind) {
  switch (kind) {
    case TransferKind::OneHotAction: return "one_hot_action";
    case TransferKind::ActionContextOuter: return "action_context_outer";
    case TransferKind::Table: return "table";
  }
  return "unknown";
}

TransferKind parse_transfer_kind(std::string_view name) {
  if (name == "one_hot_action") return TransferKind::OneHotAction;
  if (name == "action_context_outer") return TransferKind::ActionContextOuter;
  if (name == "table") return TransferKind::Table;
  throw Error(ErrorKind::Config, "unknown transfer kind '" + std::string(name) + "'");
}

std::string_view to_string(NoiseKind kind) {
  return kind == NoiseKind::Gaussian ? "gaussian" : "bounded_uniform";
}

std::string_view to_string(RewardModel model) {
  return model == RewardModel::StateDependent ? "state_dependent" : "belief_dependent";
}

NoiseKind parse_noise_kind(std::string_view name) {
  if (name == "gaussian") return NoiseKind::Gaussian;
  if (name == "bounded_uniform") return NoiseKind::BoundedUniform;
  throw Error(ErrorKind::Config, "unknown noise kind '" + std::string(name) + "'");
}

RewardModel parse_reward_model(std::string_view name) {
  if (name == "state_dependent") return RewardModel::StateDependent;
  if (name == "belief_dependent") return RewardModel::BeliefDependent;
  throw Error(ErrorKind::Config, "unknown reward model '" + std::string(name) + "'");
}

TransferFunction::TransferFunction(TransferKind kind, std::size_t actions, std::size_t contexts, std::size_t dim)
    : kind_(kind), num_actions_(actions), num_contexts_(contexts), dim_(dim), vectors_(actions * contexts) {
  if (actions == 0 || contexts == 0 || dim == 0)
    throw Error(ErrorKind::InvalidArgument, "transfer function needs actions, contexts and dim >= 1");
}

TransferFunction TransferFunction::one_hot_action(std::size_t num_actions, std::size_t num_contexts) {
  TransferFunction phi(TransferKind::OneHotAction, num_actions, num_contexts, num_actions);
  for (std::size_t a = 0; a < num_actions; ++a)
    for (std::size_t x = 0; x < num_contexts; ++x)
      phi.vectors_[a * num_contexts + x] = Vec::Unit(static_cast<Eigen::Index>(num_actions), static_cast<Eigen::Index>(a));
  return phi;
}

TransferFunction TransferFunction::action_context_outer(std::size_t num_actions, const std::vector<Vec>& features) {
  if (features.empty()) throw Error(ErrorKind::InvalidArgument, "need one feature vector per context");
  const auto k = features.front().size();
  double largest = 0.0;
  for (const auto& f : features) {
    if (f.size() != k) throw Error(ErrorKind::ShapeMismatch, "context features have different lengths");
    largest = std::max(largest, f.norm());
  }
  const double scale = largest > 1.0 ? 1.0 / largest : 1.0;
  TransferFunction phi(TransferKind::ActionContextOuter, num_actions, features.size(),
                       num_actions * static_cast<std::size_t>(k));
  for (std::size_t a = 0; a < num_actions; ++a)
    for (std::size_t x = 0; x < features.size(); ++x) {
      Vec v = Vec::Zero(static_cast<Eigen::Index>(phi.dim_));
      v.segment(static_cast<Eigen::Index>(a) * k, k) = scale * features[x];
      phi.vectors_[a * features.size() + x] = std::move(v);
    }
  return phi;
}

TransferFunction TransferFunction::table(const std::vector<std::vector<Vec>>& table) {
  if (table.empty() || table.front().empty()) throw Error(ErrorKind::InvalidArgument, "empty transfer table");
  const auto X = table.front().size();
  const auto d = table.front().front().size();
  TransferFunction phi(TransferKind::Table, table.size(), X, static_cast<std::size_t>(d));
  for (std::size_t a = 0; a < table.size(); ++a) {
    if (table[a].size() != X) throw Error(ErrorKind::ShapeMismatch, "transfer table rows differ in length");
    for (std::size_t x = 0; x < X; ++x) {
      const auto& v = table[a][x];
      if (v.size() != d) throw Error(ErrorKind::ShapeMismatch, "transfer vectors differ in dimension");
      if (v.norm() > 1.0 + kNormTol)
        throw Error(ErrorKind::InvalidArgument,
                    "||phi(" + std::to_string(a) + "," + std::to_string(x) + ")|| exceeds 1");
      phi.vectors_[a * X + x] = v;
    }
  }
  return phi;
}

const Vec& TransferFunction::operator()(std::size_t action, std::size_t context) const {
  if (action >= num_actions_ || context >= num_contexts_)
    throw Error(ErrorKind::InvalidArgument, "transfer function index out of range");
  return vectors_[action * num_contexts_ + context];
}

NoiseModel NoiseModel::gaussian(double v_eta) {
  if (!(v_eta >= 0.0)) throw Error(ErrorKind::InvalidArgument, "v_eta must be >= 0");
  return {NoiseKind::Gaussian, v_eta, v_eta * v_eta};
}

NoiseModel NoiseModel::bounded_uniform(double c_eta) {
  if (!(c_eta >= 0.0)) throw Error(ErrorKind::InvalidArgument, "c_eta must be >= 0");
  return {NoiseKind::BoundedUniform, std::sqrt(3.0 * c_eta), c_eta};
}

double NoiseModel::draw(Engine& engine) const {
  if (kind == NoiseKind::Gaussian) {
    const double z = standard_normal(engine);
    return v_eta * z;
  }
  const double half = std::sqrt(3.0 * c_eta);
  return (2.0 * uniform01(engine) - 1.0) * half;
}

void validate_reward(const RewardSpec& spec, const TransferFunction& phi) {
  if (spec.theta_star.empty()) throw Error(ErrorKind::InvalidArgument, "theta_star is empty");
  for (std::size_t h = 0; h < spec.theta_star.size(); ++h) {
    const auto& th = spec.theta_star[h];
    if (static_cast<std::size_t>(th.size()) != phi.dim())
      throw Error(ErrorKind::ShapeMismatch, "theta_star[" + std::to_string(h) + "] has wrong dimension");
    if (th.norm() > spec.c_theta + kNormTol)
      throw Error(ErrorKind::InvalidArgument, "||theta_star[" + std::to_string(h) + "]|| exceeds c_theta");
    for (std::size_t a = 0; a < phi.num_actions(); ++a)
      for (std::size_t x = 0; x < phi.num_contexts(); ++x)
        if (std::abs(phi(a, x).dot(th)) > 1.0 + kNormTol)
          throw Error(ErrorKind::InvalidArgument, "|phi' theta| exceeds 1 at (a=" + std::to_string(a) +
                                                      ", x=" + std::to_string(x) + ", h=" + std::to_string(h) + ")");
  }
  if (spec.noise.v_eta < 0.0 || spec.noise.c_eta < 0.0)
    throw Error(ErrorKind::InvalidArgument, "noise parameters must be >= 0");
}

RewardSpec make_reward_spec(std::size_t num_states, const TransferFunction& phi, NoiseModel noise, RewardModel model,
                            std::uint64_t seed, double target) {
  Engine engine = make_engine(derive_seed(seed, {stream_id("theta-star")}));
  RewardSpec spec;
  spec.noise = noise;
  spec.model = model;
  double largest = 0.0;
  for (std::size_t h = 0; h < num_states; ++h) {
    Vec th(static_cast<Eigen::Index>(phi.dim()));
    for (Eigen::Index i = 0; i < th.size(); ++i) th(i) = standard_normal(engine);
    for (std::size_t a = 0; a < phi.num_actions(); ++a)
      for (std::size_t x = 0; x < phi.num_contexts(); ++x) largest = std::max(largest, std::abs(phi(a, x).dot(th)));
    spec.theta_star.push_back(std::move(th));
  }
  const double scale = largest > 0.0 ? target / largest : 0.0;
  for (auto& th : spec.theta_star) {
    th *= scale;
    spec.c_theta = std::max(spec.c_theta, th.norm());
  }
  return spec;
}

double belief_weighted_value(const RewardSpec& spec, const TransferFunction& phi, std::size_t action,
                             std::size_t context, const Vec& belief) {
  if (static_cast<std::size_t>(belief.size()) != spec.num_states())
    throw Error(ErrorKind::ShapeMismatch, "belief length != number of states");
  const Vec& f = phi(action, context);
  double value = 0.0;
  for (std::size_t h = 0; h < spec.num_states(); ++h)
    value += belief(static_cast<Eigen::Index>(h)) * f.dot(spec.theta_star[h]);
  return value;
}

double mean_reward(const RewardSpec& spec, const TransferFunction& phi, std::size_t action, std::size_t context,
                   const RewardDriver& driver) {
  const Vec& f = phi(action, context);
  if (spec.model == RewardModel::StateDependent) {
    const auto* h = std::get_if<HiddenState>(&driver);
    if (!h) throw Error(ErrorKind::ModelMismatch, "state-dependent reward needs a hidden state");
    if (h->index >= spec.num_states()) throw Error(ErrorKind::InvalidArgument, "hidden state out of range");
    return f.dot(spec.theta_star[h->index]);
  }
  const auto* b = std::get_if<Vec>(&driver);
  if (!b) throw Error(ErrorKind::ModelMismatch, "belief-dependent reward needs a belief vector");
  if (static_cast<std::size_t>(b->size()) != spec.num_states())
    throw Error(ErrorKind::ShapeMismatch, "belief length != number of states");
  Vec mix = Vec::Zero(f.size());
  for (std::size_t h = 0; h < spec.num_states(); ++h) mix += (*b)(static_cast<Eigen::Index>(h)) * spec.theta_star[h];
  return f.dot(mix);
}

double draw_reward(const RewardSpec& spec, const TransferFunction& phi, std::size_t action, std::size_t context,
                   std::size_t hidden, const Vec& belief, Engine& engine) {
  const double mean = spec.model == RewardModel::StateDependent
                          ? mean_reward(spec, phi, action, context, HiddenState{hidden})
                          : mean_reward(spec, phi, action, context, belief);
  return mean + spec.noise.draw(engine);
}

Environment::Environment(HmmParams params, RewardSpec spec, TransferFunction phi, std::size_t horizon,
                         std::uint64_t seed)
    : params_(std::move(params)),
      spec_(std::move(spec)),
      phi_(std::move(phi)),
      horizon_(horizon),
      sampler_(params_, seed),
      filter_(params_),
      noise_(make_engine(derive_seed(seed, {stream_id("reward-noise")}))) {
  validate(params_);
  validate_reward(spec_, phi_);
  if (spec_.num_states() != params_.num_states())
    throw Error(ErrorKind::ShapeMismatch, "theta_star count != number of hidden states");
  if (phi_.num_contexts() != params_.num_contexts())
    throw Error(ErrorKind::ShapeMismatch, "transfer function context count != X");
  if (horizon_ == 0) throw Error(ErrorKind::InvalidArgument, "horizon must be >= 1");
}

std::size_t Environment::next_context() {
  if (awaiting_action_) throw Error(ErrorKind::InvalidArgument, "previous context still awaits an action");
  if (round_ >= horizon_) throw Error(ErrorKind::HorizonExceeded, "horizon " + std::to_string(horizon_) + " reached");
  const auto d = sampler_.next();
  hidden_ = d.hidden;
  context_ = d.context;
  filter_.push(context_);
  ++round_;
  awaiting_action_ = true;
  return context_;
}

RoundRecord Environment::step(std::size_t action) {
  if (!awaiting_action_) throw Error(ErrorKind::InvalidArgument, "step() called before next_context()");
  if (action >= phi_.num_actions()) throw Error(ErrorKind::InvalidArgument, "action out of range");
  const Vec& b = filter_.current().probs;
  // one noise draw per action every round, so the stream does not depend on the policy
  rewards_.resize(phi_.num_actions());
  for (std::size_t a = 0; a < phi_.num_actions(); ++a)
    rewards_[a] = draw_reward(spec_, phi_, a, context_, hidden_, b, noise_);
  awaiting_action_ = false;
  RoundRecord rec;
  rec.round = round_;
  rec.context = context_;
  rec.hidden = hidden_;
  rec.action = action;
  rec.reward = rewards_[action];
  rec.true_belief = b;
  return rec;
}

}  // namespace lbl
