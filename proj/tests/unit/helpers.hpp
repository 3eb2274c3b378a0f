#pragma once

// Independent reference computations shared by the unit tests.

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "lbl/errors.hpp"

#include "lbl/hmm.hpp"
#include "lbl/spectral.hpp"

namespace testing {

using lbl::HmmParams;
using lbl::Mat;
using lbl::Vec;

inline HmmParams make_hmm(const std::vector<double>& pi, const std::vector<std::vector<double>>& M,
                          const std::vector<std::vector<double>>& columns) {
  const auto H = static_cast<Eigen::Index>(pi.size());
  const auto X = static_cast<Eigen::Index>(columns.front().size());
  HmmParams p;
  p.initial_dist.resize(H);
  p.transition.resize(H, H);
  p.emission.resize(X, H);
  for (Eigen::Index i = 0; i < H; ++i) {
    p.initial_dist(i) = pi[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < H; ++j) p.transition(i, j) = M[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    for (Eigen::Index x = 0; x < X; ++x) p.emission(x, i) = columns[static_cast<std::size_t>(i)][static_cast<std::size_t>(x)];
  }
  return p;
}

// H=2, X=4 instance used throughout: gamma = 0.75, sigma_min(E) about 0.316.
inline HmmParams reference_hmm() {
  return make_hmm({0.6, 0.4}, {{0.8, 0.2}, {0.3, 0.7}}, {{0.4, 0.3, 0.2, 0.1}, {0.1, 0.2, 0.3, 0.4}});
}

// Posterior of h_t by summing the joint probability of every hidden path.
inline Vec path_enumeration_posterior(const HmmParams& p, const std::vector<std::size_t>& xs) {
  const auto H = static_cast<std::size_t>(p.transition.rows());
  const auto T = xs.size();
  Vec post = Vec::Zero(static_cast<Eigen::Index>(H));
  std::vector<std::size_t> path(T, 0);
  while (true) {
    double w = p.initial_dist(static_cast<Eigen::Index>(path[0])) *
               p.emission(static_cast<Eigen::Index>(xs[0]), static_cast<Eigen::Index>(path[0]));
    for (std::size_t t = 1; t < T; ++t)
      w *= p.transition(static_cast<Eigen::Index>(path[t - 1]), static_cast<Eigen::Index>(path[t])) *
           p.emission(static_cast<Eigen::Index>(xs[t]), static_cast<Eigen::Index>(path[t]));
    post(static_cast<Eigen::Index>(path[T - 1])) += w;
    std::size_t k = 0;
    while (k < T && ++path[k] == H) path[k++] = 0;
    if (k == T) break;
  }
  return post / post.sum();
}

// Moments of a stationary chain by summing over the three hidden states of a
// triple (x_{s-1}, x_s, x_{s+1}).
inline lbl::MomentSet population_moments(const HmmParams& p) {
  const auto H = p.transition.rows();
  const auto X = p.emission.rows();
  const Vec pi = lbl::stationary_distribution(p.transition);
  lbl::MomentSet m;
  m.p31 = Mat::Zero(X, X);
  m.p32 = Mat::Zero(X, X);
  m.p312.assign(static_cast<std::size_t>(X), Mat::Zero(X, X));
  m.sample_count = 1000000;
  for (Eigen::Index a = 0; a < H; ++a)
    for (Eigen::Index b = 0; b < H; ++b)
      for (Eigen::Index c = 0; c < H; ++c) {
        const double w = pi(a) * p.transition(a, b) * p.transition(b, c);
        for (Eigen::Index j = 0; j < X; ++j)
          for (Eigen::Index k = 0; k < X; ++k)
            for (Eigen::Index i = 0; i < X; ++i) {
              const double v = w * p.emission(j, a) * p.emission(k, b) * p.emission(i, c);
              m.p31(i, j) += v;
              m.p32(i, k) += v;
              m.p312[static_cast<std::size_t>(k)](i, j) += v;
            }
      }
  return m;
}

// Random HMM satisfying the spectral regularity conditions with margins:
// eps_M >= 0.1 and sigma_min(E) >= 0.1.
inline HmmParams random_regular_hmm(std::size_t H, std::size_t X, lbl::Engine& engine) {
  while (true) {
    auto p = lbl::random_hmm(H, X, engine, 0.0);
    const auto d = lbl::validate(p);
    if (d.eps_M >= 0.1 && d.sigma_min_E >= 0.1) return p;
  }
}

// Kind of the lbl::Error thrown by f, or nothing when f returns normally.
inline std::optional<lbl::ErrorKind> error_kind(const std::function<void()>& f) {
  try {
    f();
  } catch (const lbl::Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

}  // namespace testing
