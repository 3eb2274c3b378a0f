#pragma once

// Spectral method-of-moments estimation of an HMM from a context stream,
// followed by clip-and-renormalize post-processing and label alignment.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lbl/hmm.hpp"

namespace lbl {

/// Empirical tables over the (t - 2) triples (x_{s-1}, x_s, x_{s+1}).
/// p31(i, j) = P(x_{s+1} = i, x_{s-1} = j), p32(i, k) = P(x_{s+1} = i, x_s = k),
/// p312[k](i, j) = P(x_{s+1} = i, x_{s-1} = j, x_s = k).
struct MomentSet {
  Mat p31;
  Mat p32;
  std::vector<Mat> p312;
  std::size_t sample_count = 0;

  std::size_t num_contexts() const { return static_cast<std::size_t>(p31.rows()); }
  /// Contraction of the triple tensor along its x_s mode.
  Mat contract(const Vec& z) const;
};

/// Integer triple counts with O(1) append.
class MomentAccumulator {
 public:
  explicit MomentAccumulator(std::size_t num_contexts);

  void push(std::size_t context);
  std::size_t sample_count() const { return seen_; }
  MomentSet snapshot() const;

 private:
  std::size_t index(std::size_t next, std::size_t prev, std::size_t mid) const {
    return (next * X_ + prev) * X_ + mid;
  }

  std::size_t X_;
  std::vector<std::uint64_t> counts_;
  std::size_t seen_ = 0;
  std::size_t prev2_ = 0;
  std::size_t prev1_ = 0;
};

MomentSet accumulate_moments(std::span<const std::size_t> contexts, std::size_t num_contexts);

struct SpectralWorkspace {
  Mat u1, u2, u3;
  Mat gamma_rotation;
  Mat r_matrix;
  Mat l_matrix;
  std::size_t attempts = 0;
};

struct EstimatedHmm {
  Mat transition_hat;  // H x H, row-stochastic after postprocess
  Mat emission_hat;    // X x H, column-stochastic after postprocess
  Mat raw_transition;
  Mat raw_emission;
  std::vector<std::size_t> label_permutation;  // column h of the output came from fresh column perm[h]
  std::size_t version = 0;
  std::size_t sample_count = 0;

  std::size_t num_states() const { return static_cast<std::size_t>(transition_hat.rows()); }
  std::size_t num_contexts() const { return static_cast<std::size_t>(emission_hat.rows()); }
};

struct SpectralOptions {
  std::size_t max_attempts = 10;
  double rank_tol = 1e-12;
  double max_condition = 1e12;
  double imag_tol = 1e-6;
};

/// Raw estimate (transition_hat / emission_hat are copies of the raw matrices
/// until postprocess runs). The emission estimate is stored X x H, one column
/// per state.
EstimatedHmm spectral_estimate(const MomentSet& moments, std::size_t num_states, std::uint64_t seed,
                               const SpectralOptions& options = {}, SpectralWorkspace* workspace = nullptr);

/// Clip negatives, renormalize rows of the transition and columns of the
/// emission; an all-zero row/column becomes uniform.
EstimatedHmm postprocess(const EstimatedHmm& raw);

/// Relabels `fresh` by the permutation minimizing the worst emission-column
/// distance to `previous` (identity when there is no previous estimate).
EstimatedHmm align(const std::optional<EstimatedHmm>& previous, const EstimatedHmm& fresh);

/// Best permutation of `estimate` against reference columns, returned as in
/// align(); also used by diagnostics to compare against ground truth.
std::vector<std::size_t> best_permutation(const Mat& reference_emission, const Mat& fresh_emission);

Mat permute_states(const Mat& transition, std::span<const std::size_t> perm);
Mat permute_columns(const Mat& emission, std::span<const std::size_t> perm);

/// Frobenius errors after relabeling the estimate to best match the truth.
struct EstimationError {
  double transition = 0.0;
  double emission = 0.0;
};
EstimationError estimation_error(const HmmParams& truth, const EstimatedHmm& estimate);

/// Flat decimal text block:
///   line 1: "H <H> X <X> version <v> samples <t>"
///   line 2: "permutation" followed by H indices
///   line 3: "transition" followed by H*H values, row-major
///   line 4: "emission" followed by X*H values, column-major
void write_estimate(std::ostream& out, const EstimatedHmm& estimate);
EstimatedHmm read_estimate(std::istream& in);

}  // namespace lbl
