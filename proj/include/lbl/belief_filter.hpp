#pragma once

// Belief estimation under estimated HMM parameters, the belief-error budget
// function, and the spectral belief-estimation subroutine fed to policies.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "lbl/hmm.hpp"
#include "lbl/spectral.hpp"

namespace lbl {

struct FilterState {
  Belief current;  // round 0 means nothing filtered yet
  std::size_t params_version = 0;
  double log_norm = 0.0;
  std::size_t resets = 0;  // zero-likelihood observations replaced by uniform
};

/// One Bayes step with estimated parameters. The first call weights
/// `initial_guess` by the emission likelihood; later calls predict through
/// the estimated transition first. Zero-likelihood observations reset the
/// belief to uniform.
FilterState filter_step(const FilterState& state, const EstimatedHmm& params, const Vec& initial_guess,
                        std::size_t context);

/// Filters a whole prefix from scratch.
FilterState refilter(const EstimatedHmm& params, const Vec& initial_guess, std::span<const std::size_t> contexts);

struct BeliefErrorBudget {
  std::size_t H = 1;
  std::size_t X = 1;
  double delta = 0.1;

  BeliefErrorBudget() = default;
  BeliefErrorBudget(std::size_t h, std::size_t x, double d);
};

/// ln(t) * (H sqrt(X) sqrt(2 ln(6 X t (t+1) / delta) / t) + exp(-sqrt(t - 1))).
double u_belief(const BeliefErrorBudget& budget, std::size_t t);

/// u_belief(t) for t = 1..T with prefix sums, both cached.
class BeliefBudgetTable {
 public:
  BeliefBudgetTable() = default;
  BeliefBudgetTable(const BeliefErrorBudget& budget, std::size_t horizon);
  /// Table of zeros: beliefs are exact.
  static BeliefBudgetTable zero(std::size_t horizon);

  double at(std::size_t t) const;
  /// sum_{tau=1}^{n} u_belief(tau); n may be 0.
  double prefix(std::size_t n) const;
  std::size_t horizon() const { return values_.size(); }

 private:
  std::vector<double> values_;
  std::vector<double> prefix_;
};

/// Estimates switch in at the given rounds (1-based; the estimate is used from
/// that round on).
struct ScheduledEstimate {
  std::size_t from_round;
  EstimatedHmm estimate;
};

/// l1 gaps ||b_hat_t - b_t||_1 between the estimated filter (continuing from
/// its current belief across parameter switches) and the exact filter. The
/// estimated belief is mapped to the true labels by the best emission match
/// before comparison. Rounds before the first scheduled estimate use the
/// uniform prior and uninformative emissions.
std::vector<double> belief_error_trace(const HmmParams& true_params, std::span<const ScheduledEstimate> schedule,
                                       std::span<const std::size_t> contexts);

struct BeliefTraceRow {
  std::size_t round;
  Vec truth;
  Vec estimate;
  double l1_gap;
};
/// CSV columns: round, b1..bH, b1_hat..bH_hat, l1_gap
void write_belief_trace_csv(std::ostream& out, std::span<const BeliefTraceRow> rows);

struct EstimatorOptions {
  std::size_t num_states = 2;
  std::size_t num_contexts = 2;
  /// Re-estimate whenever t is a multiple of this period.
  std::size_t refresh_period = 1;
  /// Re-estimate and refilter from scratch at every round.
  bool exact_refilter = false;
  /// Re-estimation failures keep the previous estimate instead of throwing.
  bool tolerate_failures = true;
  std::uint64_t seed = 0;
  std::optional<Vec> initial_guess;  // uniform when empty
  SpectralOptions spectral;
};

/// The belief subroutine: accumulates moments, re-estimates on schedule
/// (spectral -> postprocess -> align), and filters. At refresh rounds the
/// whole prefix is refiltered with the new estimate; between refreshes the
/// filter runs incrementally. Before the first successful estimate the
/// belief is the initial guess propagated with no information.
class SpectralBeliefEstimator {
 public:
  explicit SpectralBeliefEstimator(EstimatorOptions options);

  const Belief& observe(std::size_t context);
  const Belief& current() const { return state_.current; }
  const std::optional<EstimatedHmm>& estimate() const { return estimate_; }
  std::size_t refreshes() const { return refreshes_; }
  std::size_t failures() const { return failures_; }
  std::size_t round() const { return history_.size(); }

 private:
  bool try_refresh();

  EstimatorOptions options_;
  Vec initial_guess_;
  MomentAccumulator moments_;
  std::vector<std::size_t> history_;
  std::optional<EstimatedHmm> estimate_;
  EstimatedHmm uninformative_;
  FilterState state_;
  std::size_t refreshes_ = 0;
  std::size_t failures_ = 0;
};

}  // namespace lbl
