#include "lbl/belief_filter.hpp"

#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include "lbl/errors.hpp"

namespace lbl {

FilterState filter_step(const FilterState& state, const EstimatedHmm& params, const Vec& initial_guess,
                        std::size_t context) {
  if (params.version < state.params_version)
    throw Error(ErrorKind::InvalidArgument, "parameter version went backwards");
  if (static_cast<std::size_t>(initial_guess.size()) != params.num_states())
    throw Error(ErrorKind::ShapeMismatch, "initial guess length != H");
  FilterState next = state;
  const bool first = state.current.round == 0;
  Vec out;
  const double log_z = bayes_update(first ? initial_guess : state.current.probs, params.transition_hat,
                                    params.emission_hat, context, first, ZeroLikelihood::ResetUniform, out);
  if (std::isfinite(log_z))
    next.log_norm += log_z;
  else
    ++next.resets;
  next.current.probs = std::move(out);
  next.current.round = state.current.round + 1;
  next.params_version = params.version;
  return next;
}

FilterState refilter(const EstimatedHmm& params, const Vec& initial_guess, std::span<const std::size_t> contexts) {
  FilterState state;
  state.params_version = params.version;
  for (auto x : contexts) state = filter_step(state, params, initial_guess, x);
  return state;
}

BeliefErrorBudget::BeliefErrorBudget(std::size_t h, std::size_t x, double d) : H(h), X(x), delta(d) {
  if (!(d > 0.0 && d < 1.0)) throw Error(ErrorKind::InvalidArgument, "delta must lie in (0, 1)");
  if (h < 1 || x < h) throw Error(ErrorKind::InvalidArgument, "belief budget needs 1 <= H <= X");
}

double u_belief(const BeliefErrorBudget& budget, std::size_t t) {
  if (t < 1) throw Error(ErrorKind::InvalidArgument, "u_belief is defined for t >= 1");
  if (t == 1) return 0.0;
  const double tt = static_cast<double>(t);
  const double X = static_cast<double>(budget.X);
  const double H = static_cast<double>(budget.H);
  const double log_term = std::log(6.0 * X * tt * (tt + 1.0) / budget.delta);
  return std::log(tt) * (H * std::sqrt(X) * std::sqrt(2.0 * log_term / tt) + std::exp(-std::sqrt(tt - 1.0)));
}

BeliefBudgetTable::BeliefBudgetTable(const BeliefErrorBudget& budget, std::size_t horizon)
    : values_(horizon), prefix_(horizon + 1, 0.0) {
  for (std::size_t t = 1; t <= horizon; ++t) {
    values_[t - 1] = u_belief(budget, t);
    prefix_[t] = prefix_[t - 1] + values_[t - 1];
  }
}

BeliefBudgetTable BeliefBudgetTable::zero(std::size_t horizon) {
  BeliefBudgetTable table;
  table.values_.assign(horizon, 0.0);
  table.prefix_.assign(horizon + 1, 0.0);
  return table;
}

double BeliefBudgetTable::at(std::size_t t) const {
  if (t < 1 || t > values_.size()) throw Error(ErrorKind::HorizonExceeded, "belief budget table index out of range");
  return values_[t - 1];
}

double BeliefBudgetTable::prefix(std::size_t n) const {
  if (n >= prefix_.size()) throw Error(ErrorKind::HorizonExceeded, "belief budget prefix out of range");
  return prefix_[n];
}

namespace {

EstimatedHmm uninformative_estimate(std::size_t H, std::size_t X) {
  EstimatedHmm e;
  const auto h = static_cast<Eigen::Index>(H);
  const auto x = static_cast<Eigen::Index>(X);
  e.transition_hat = Mat::Identity(h, h);
  e.emission_hat = Mat::Constant(x, h, 1.0 / static_cast<double>(X));
  e.raw_transition = e.transition_hat;
  e.raw_emission = e.emission_hat;
  e.label_permutation.resize(H);
  std::iota(e.label_permutation.begin(), e.label_permutation.end(), std::size_t{0});
  return e;
}

}  // namespace

std::vector<double> belief_error_trace(const HmmParams& true_params, std::span<const ScheduledEstimate> schedule,
                                       std::span<const std::size_t> contexts) {
  validate(true_params);
  const auto H = true_params.num_states();
  const Vec guess = Vec::Constant(static_cast<Eigen::Index>(H), 1.0 / static_cast<double>(H));
  TrueFilter truth(true_params);
  EstimatedHmm active = uninformative_estimate(H, true_params.num_contexts());
  std::vector<std::size_t> perm(H);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  FilterState state;
  std::size_t next = 0;
  std::vector<double> gaps;
  gaps.reserve(contexts.size());
  for (std::size_t t = 1; t <= contexts.size(); ++t) {
    while (next < schedule.size() && schedule[next].from_round <= t) {
      const auto version = std::max(active.version, state.params_version) + 1;
      active = schedule[next].estimate;
      active.version = version;
      perm = best_permutation(true_params.emission, active.emission_hat);
      ++next;
    }
    state = filter_step(state, active, guess, contexts[t - 1]);
    const auto& b = truth.push(contexts[t - 1]);
    double gap = 0.0;
    for (std::size_t h = 0; h < H; ++h)
      gap += std::abs(state.current.probs(static_cast<Eigen::Index>(perm[h])) - b.probs(static_cast<Eigen::Index>(h)));
    gaps.push_back(gap);
  }
  return gaps;
}

void write_belief_trace_csv(std::ostream& out, std::span<const BeliefTraceRow> rows) {
  std::ostringstream s;
  s << std::setprecision(17);
  const auto H = rows.empty() ? 0 : rows.front().truth.size();
  s << "round";
  for (Eigen::Index h = 1; h <= H; ++h) s << ",b" << h;
  for (Eigen::Index h = 1; h <= H; ++h) s << ",b" << h << "_hat";
  s << ",l1_gap\n";
  for (const auto& r : rows) {
    s << r.round;
    for (Eigen::Index h = 0; h < H; ++h) s << ',' << r.truth(h);
    for (Eigen::Index h = 0; h < H; ++h) s << ',' << r.estimate(h);
    s << ',' << r.l1_gap << '\n';
  }
  out << s.str();
}

SpectralBeliefEstimator::SpectralBeliefEstimator(EstimatorOptions options)
    : options_(std::move(options)), moments_(options_.num_contexts) {
  const auto H = options_.num_states;
  if (H < 1 || H > options_.num_contexts) throw Error(ErrorKind::InvalidArgument, "estimator needs 1 <= H <= X");
  if (options_.refresh_period < 1) throw Error(ErrorKind::InvalidArgument, "refresh period must be >= 1");
  initial_guess_ = options_.initial_guess.value_or(Vec::Constant(static_cast<Eigen::Index>(H), 1.0 / H));
  uninformative_ = uninformative_estimate(H, options_.num_contexts);
}

bool SpectralBeliefEstimator::try_refresh() {
  if (moments_.sample_count() < 3) return false;
  try {
    const auto seed = derive_seed(options_.seed, {refreshes_ + failures_});
    auto fresh = postprocess(spectral_estimate(moments_.snapshot(), options_.num_states, seed, options_.spectral));
    auto aligned = align(estimate_, fresh);
    aligned.version = (estimate_ ? estimate_->version : 0) + 1;
    estimate_ = std::move(aligned);
    ++refreshes_;
    return true;
  } catch (const Error& e) {
    if (!options_.tolerate_failures || !is_numerical(e.kind())) throw;
    ++failures_;
    return false;
  }
}

const Belief& SpectralBeliefEstimator::observe(std::size_t context) {
  history_.push_back(context);
  moments_.push(context);
  const auto t = history_.size();
  const bool refresh_round = options_.exact_refilter || t % options_.refresh_period == 0;
  if (refresh_round && try_refresh()) {
    state_ = refilter(*estimate_, initial_guess_, history_);
    return state_.current;
  }
  state_ = filter_step(state_, estimate_ ? *estimate_ : uninformative_, initial_guess_, context);
  return state_.current;
}

}  // namespace lbl
