#pragma once

// Pseudo-regret accounting, log-log rate fits and executable checks of the
// auxiliary inequalities used by the regret analysis.

#include <cstddef>
#include <cstdint>
#include <map>
#include <vector>

#include "lbl/bandit_world.hpp"

namespace lbl {

/// Per-round benchmark max_a sum_h b(h) phi(a,x)' theta*_h and the same
/// quantity at the played action, both with the true belief.
struct RegretLedger {
  std::vector<double> per_round_benchmark;
  std::vector<double> per_round_value;
  std::vector<double> cumulative;

  std::size_t horizon() const { return cumulative.size(); }
  double total() const { return cumulative.empty() ? 0.0 : cumulative.back(); }
  double increment(std::size_t i) const { return per_round_benchmark[i] - per_round_value[i]; }
};

/// Appends one round and returns its regret increment.
double record_round(RegretLedger& ledger, const Vec& true_belief, std::size_t context, std::size_t action,
                    const RewardSpec& spec, const TransferFunction& phi);

struct RateFit {
  std::vector<double> horizons;
  std::vector<double> final_regrets;  // mean R_T per horizon
  double slope = 0.0;
  double intercept = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

/// Ordinary least-squares slope and intercept of y on x.
std::pair<double, double> ols_fit(const std::vector<double>& x, const std::vector<double>& y);

/// `results[T]` holds R_T for each seed. Needs >= 4 horizons with >= 10
/// seeds each (InsufficientData otherwise). The interval is the 5%-95%
/// percentile range of slopes refitted on seed resamples.
RateFit fit_rate(const std::map<std::size_t, std::vector<double>>& results, std::uint64_t bootstrap_seed = 0,
                 std::size_t bootstrap_rounds = 2000);

struct LemmaCheck {
  double lhs = 0.0;
  double bound = 0.0;
  bool holds = false;
};

/// sum_t ||V_{t-1}^{-1/2} y_t|| <= sqrt(2 d T ln(1 + T/(d lambda))).
LemmaCheck check_elliptic_potential(const std::vector<Vec>& ys, double lambda);

struct StagedPotentialCheck {
  LemmaCheck first;   // frozen V^{-1} sum <= (1/sqrt(lambda)) frozen V^{-1/2} sum
  LemmaCheck second;  // frozen V^{-1/2} sum <= sqrt(2 d S ell (1 + ell/lambda) ln(1 + S ell/(d lambda)))
  LemmaCheck overall; // frozen V^{-1} sum <= second bound / sqrt(lambda)
  bool holds() const { return first.holds && second.holds && overall.holds; }
};

/// Gram matrices frozen at stage boundaries; ys.size() must equal S * ell.
StagedPotentialCheck check_staged_elliptic_potential(const std::vector<Vec>& ys, double lambda, std::size_t ell,
                                                     std::size_t num_stages);

/// det(A + y' y^T) against (1 + y^T A^{-1} y') det(A), relative tolerance
/// 1e-8. Throws SingularA.
LemmaCheck check_matrix_determinant_lemma(const Mat& A, const Vec& y, const Vec& y_prime);

/// log det(V_T) <= d log(lambda + T/d).
LemmaCheck check_determinant_trace(const std::vector<Vec>& ys, double lambda);

struct LemmaTally {
  std::size_t trials = 0;
  std::size_t violations = 0;
};

struct LemmaSuiteReport {
  LemmaTally elliptic;
  LemmaTally staged;
  LemmaTally determinant;
  LemmaTally determinant_trace;
  LemmaTally forgetting;
  bool all_pass() const;
};

/// Randomized instances for every check above plus the forgetting bound.
LemmaSuiteReport run_lemma_suite(std::size_t trials, std::uint64_t seed);

}  // namespace lbl
