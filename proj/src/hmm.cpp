#include "lbl/hmm.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "lbl/errors.hpp"

namespace lbl {

namespace {

void require_distribution(const Vec& v, const char* what) {
  if (!v.allFinite()) throw Error(ErrorKind::NotStochastic, std::string(what) + " has non-finite entries");
  if (v.size() > 0 && v.minCoeff() < 0.0)
    throw Error(ErrorKind::NotStochastic, std::string(what) + " has negative entries");
  if (std::abs(v.sum() - 1.0) > kStochasticTol)
    throw Error(ErrorKind::NotStochastic, std::string(what) + " does not sum to 1");
}

double smallest_singular_value(const Mat& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(m);
  const auto& s = svd.singularValues();
  // a tall-vs-wide mismatch means rank < number of columns
  if (m.rows() < m.cols()) return 0.0;
  return s(s.size() - 1);
}

}  // namespace

HmmDiagnostics validate(const HmmParams& params) {
  const auto H = params.transition.rows();
  const auto X = params.emission.rows();
  if (H == 0 || params.transition.cols() != H)
    throw Error(ErrorKind::ShapeMismatch, "transition must be a non-empty square H x H matrix");
  if (params.initial_dist.size() != H)
    throw Error(ErrorKind::ShapeMismatch, "initial distribution length " + std::to_string(params.initial_dist.size()) +
                                              " != H = " + std::to_string(H));
  if (X == 0 || params.emission.cols() != H)
    throw Error(ErrorKind::ShapeMismatch, "emission must be X x H with X >= 1");

  require_distribution(params.initial_dist, "initial distribution");
  for (Eigen::Index h = 0; h < H; ++h) {
    require_distribution(params.transition.row(h).transpose(), ("transition row " + std::to_string(h)).c_str());
    require_distribution(params.emission.col(h), ("emission column " + std::to_string(h)).c_str());
  }

  HmmDiagnostics d;
  d.eps_M = params.transition.minCoeff();
  d.max_M = params.transition.maxCoeff();
  d.e_nu_min = params.emission.minCoeff();
  d.sigma_min_E = smallest_singular_value(params.emission);
  d.sigma_min_M = smallest_singular_value(params.transition);
  const Vec drift = params.transition.transpose() * params.initial_dist - params.initial_dist;
  d.is_stationary_init = drift.lpNorm<1>() <= 1e-9;
  d.regular = d.sigma_min_E > kRegularityTol && d.sigma_min_M > kRegularityTol && d.eps_M > 0.0 &&
              d.e_nu_min > 0.0 && H <= X;
  return d;
}

Vec stationary_distribution(const Mat& transition) {
  const auto H = transition.rows();
  Mat a(H + 1, H);
  a.topRows(H) = transition.transpose() - Mat::Identity(H, H);
  a.row(H).setOnes();
  Vec b = Vec::Zero(H + 1);
  b(H) = 1.0;
  Vec pi = a.colPivHouseholderQr().solve(b);
  pi = pi.cwiseMax(0.0);
  return pi / pi.sum();
}

HmmSampler::HmmSampler(const HmmParams& params, std::uint64_t seed)
    : params_(&params),
      chain_(make_engine(derive_seed(seed, {stream_id("latent-chain")}))),
      emission_(make_engine(derive_seed(seed, {stream_id("emissions")}))) {}

HmmSampler::Draw HmmSampler::next() {
  if (!started_) {
    state_ = sample_categorical(params_->initial_dist, chain_);
    started_ = true;
  } else {
    state_ = sample_categorical(params_->transition.row(static_cast<Eigen::Index>(state_)), chain_);
  }
  const auto x = sample_categorical(params_->emission.col(static_cast<Eigen::Index>(state_)), emission_);
  return {state_, x};
}

HmmParams random_hmm(std::size_t num_states, std::size_t num_contexts, Engine& engine, double floor) {
  if (num_states == 0 || num_contexts == 0) throw Error(ErrorKind::InvalidArgument, "random_hmm needs H, X >= 1");
  const auto H = static_cast<Eigen::Index>(num_states);
  const auto X = static_cast<Eigen::Index>(num_contexts);
  HmmParams p;
  p.transition.resize(H, H);
  p.emission.resize(X, H);
  for (Eigen::Index i = 0; i < H; ++i) {
    for (Eigen::Index j = 0; j < H; ++j) p.transition(i, j) = floor + (1.0 - floor) * uniform01(engine);
    p.transition.row(i) /= p.transition.row(i).sum();
  }
  for (Eigen::Index h = 0; h < H; ++h) {
    for (Eigen::Index x = 0; x < X; ++x) p.emission(x, h) = floor + (1.0 - floor) * uniform01(engine);
    p.emission.col(h) /= p.emission.col(h).sum();
  }
  p.initial_dist = stationary_distribution(p.transition);
  return p;
}

Trajectory sample_trajectory(const HmmParams& params, std::size_t horizon, std::uint64_t seed) {
  if (horizon == 0) throw Error(ErrorKind::InvalidArgument, "horizon must be >= 1");
  validate(params);
  HmmSampler sampler(params, seed);
  Trajectory traj;
  traj.hidden.reserve(horizon);
  traj.contexts.reserve(horizon);
  for (std::size_t t = 0; t < horizon; ++t) {
    const auto d = sampler.next();
    traj.hidden.push_back(d.hidden);
    traj.contexts.push_back(d.context);
  }
  return traj;
}

double bayes_update(const Vec& prior, const Mat& transition, const Mat& emission, std::size_t context,
                    bool first, ZeroLikelihood on_zero, Vec& out) {
  if (context >= static_cast<std::size_t>(emission.rows()))
    throw Error(ErrorKind::InvalidArgument, "context index out of range");
  const auto row = emission.row(static_cast<Eigen::Index>(context)).transpose();
  if (first) {
    out = row.cwiseProduct(prior);
  } else {
    out = row.cwiseProduct(transition.transpose() * prior);
  }
  const double norm = out.sum();
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    if (on_zero == ZeroLikelihood::Throw)
      throw Error(ErrorKind::DegenerateLikelihood,
                  "context " + std::to_string(context) + " has zero likelihood under every state");
    out = Vec::Constant(prior.size(), 1.0 / static_cast<double>(prior.size()));
    return -std::numeric_limits<double>::infinity();
  }
  out /= norm;
  return std::log(norm);
}

TrueFilter::TrueFilter(const HmmParams& params) : params_(&params) {}

const Belief& TrueFilter::push(std::size_t context) {
  Vec next;
  const bool first = belief_.round == 0;
  bayes_update(first ? params_->initial_dist : belief_.probs, params_->transition, params_->emission, context, first,
               ZeroLikelihood::Throw, next);
  belief_.probs = std::move(next);
  ++belief_.round;
  return belief_;
}

Belief true_belief_filter(const HmmParams& params, std::span<const std::size_t> contexts) {
  if (contexts.empty()) throw Error(ErrorKind::InvalidArgument, "belief filter needs at least one context");
  TrueFilter filter(params);
  for (auto x : contexts) filter.push(x);
  return filter.current();
}

double forgetting_rate(const HmmParams& params) {
  const double eps = params.transition.minCoeff();
  if (!(eps > 0.0)) throw Error(ErrorKind::NotMixing, "transition matrix has a zero entry");
  return 1.0 - eps / params.transition.maxCoeff();
}

namespace {

struct ForgettingSearch {
  const HmmParams& params;
  double gamma;
  std::size_t max_gap;
  bool ok = true;

  // alphas.col(h): unnormalized law of h_t given h_s = h and the prefix
  void visit(const Mat& alphas, std::size_t gap) {
    const auto H = alphas.cols();
    const double bound = 2.0 * std::pow(gamma, static_cast<double>(gap)) + 1e-9;
    for (Eigen::Index h = 0; h < H && ok; ++h) {
      const double sh = alphas.col(h).sum();
      if (!(sh > 0.0)) continue;
      for (Eigen::Index g = h + 1; g < H; ++g) {
        const double sg = alphas.col(g).sum();
        if (!(sg > 0.0)) continue;
        const double dist = (alphas.col(h) / sh - alphas.col(g) / sg).lpNorm<1>();
        if (dist > bound) {
          ok = false;
          return;
        }
      }
    }
    if (!ok || gap == max_gap) return;
    const auto X = params.emission.rows();
    for (Eigen::Index x = 0; x < X && ok; ++x) {
      Mat next = params.transition.transpose() * alphas;
      for (Eigen::Index h = 0; h < H; ++h) {
        next.col(h) = next.col(h).cwiseProduct(params.emission.row(x).transpose());
        const double s = next.col(h).sum();
        if (s > 0.0) next.col(h) /= s;
      }
      visit(next, gap + 1);
    }
  }
};

}  // namespace

bool check_forgetting(const HmmParams& params, double gamma, std::size_t max_gap) {
  validate(params);
  if (params.num_states() > 4 || params.num_contexts() > 4 || max_gap > 8)
    throw Error(ErrorKind::TooLarge, "exhaustive forgetting check needs H <= 4, X <= 4, max_gap <= 8");
  ForgettingSearch search{params, gamma, max_gap};
  const auto H = static_cast<Eigen::Index>(params.num_states());
  search.visit(Mat::Identity(H, H), 0);
  return search.ok;
}

}  // namespace lbl
