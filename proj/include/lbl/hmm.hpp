#pragma once

// Ground-truth hidden Markov model: parameters, sampling, exact Bayes
// filtering and forgetting-rate diagnostics. Contexts are indices in [0, X).

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "lbl/rng.hpp"

namespace lbl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// pi has length H, transition is H x H row-stochastic (transition(h, h') is
/// the probability of moving h -> h'), emission is X x H column-stochastic
/// (column h is the context law of state h).
struct HmmParams {
  Vec initial_dist;
  Mat transition;
  Mat emission;

  std::size_t num_states() const { return static_cast<std::size_t>(transition.rows()); }
  std::size_t num_contexts() const { return static_cast<std::size_t>(emission.rows()); }
};

struct HmmDiagnostics {
  double eps_M = 0.0;
  double sigma_min_E = 0.0;
  double sigma_min_M = 0.0;
  double e_nu_min = 0.0;
  double max_M = 0.0;
  bool is_stationary_init = false;
  /// All regularity conditions needed by the spectral estimator hold.
  bool regular = false;
};

struct Trajectory {
  std::vector<std::size_t> hidden;
  std::vector<std::size_t> contexts;
  std::size_t horizon() const { return contexts.size(); }
};

struct Belief {
  Vec probs;
  std::size_t round = 0;
};

inline constexpr double kStochasticTol = 1e-12;
inline constexpr double kRegularityTol = 1e-10;

/// Throws ShapeMismatch for inconsistent dimensions and NotStochastic when a
/// distribution is invalid. Regularity violations are only reported.
HmmDiagnostics validate(const HmmParams& params);

/// Stationary distribution of a row-stochastic matrix (left eigenvector for 1).
Vec stationary_distribution(const Mat& transition);

/// Draws (h, x) pairs one round at a time. Latent chain and emissions use
/// separate streams.
class HmmSampler {
 public:
  HmmSampler(const HmmParams& params, std::uint64_t seed);

  struct Draw {
    std::size_t hidden;
    std::size_t context;
  };
  Draw next();

 private:
  const HmmParams* params_;
  Engine chain_;
  Engine emission_;
  bool started_ = false;
  std::size_t state_ = 0;
};

/// Index drawn from the probabilities in `probs` (any column/row view).
template <typename Derived>
std::size_t sample_categorical(const Eigen::DenseBase<Derived>& probs, Engine& engine) {
  const double u = uniform01(engine);
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    const double p = probs(i);
    if (p > 0.0) last_positive = static_cast<std::size_t>(i);
    acc += p;
    if (u < acc) return static_cast<std::size_t>(i);
  }
  return last_positive;
}

/// Random HMM with every transition and emission entry drawn uniformly from
/// [floor, 1) before normalization; pi is the stationary distribution.
HmmParams random_hmm(std::size_t num_states, std::size_t num_contexts, Engine& engine, double floor = 0.0);

Trajectory sample_trajectory(const HmmParams& params, std::size_t horizon, std::uint64_t seed);

enum class ZeroLikelihood { Throw, ResetUniform };

/// One step of the forward recursion. With `first` the prior is `prior`,
/// otherwise `prior` is propagated through `transition` first. Writes the
/// normalized posterior into `out` and returns log of the normalizer, or
/// -inf when the observation had zero likelihood (then `out` is uniform
/// under ResetUniform; Throw raises DegenerateLikelihood).
double bayes_update(const Vec& prior, const Mat& transition, const Mat& emission, std::size_t context,
                    bool first, ZeroLikelihood on_zero, Vec& out);

/// b_t(h) = P(h_t = h | x_{1:t}) under the true parameters.
Belief true_belief_filter(const HmmParams& params, std::span<const std::size_t> contexts);

/// Incremental exact filter, one context at a time.
class TrueFilter {
 public:
  explicit TrueFilter(const HmmParams& params);
  const Belief& push(std::size_t context);
  const Belief& current() const { return belief_; }

 private:
  const HmmParams* params_;
  Belief belief_;
};

/// gamma = 1 - eps_M / max(M); throws NotMixing when eps_M = 0.
double forgetting_rate(const HmmParams& params);

/// Exhaustive check of the forgetting inequality for every context sequence
/// of length 0..max_gap and every pair of starting states.
bool check_forgetting(const HmmParams& params, double gamma, std::size_t max_gap);

}  // namespace lbl
