#include "lbl/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "lbl/errors.hpp"

namespace lbl {

Mat MomentSet::contract(const Vec& z) const {
  Mat out = Mat::Zero(p31.rows(), p31.cols());
  for (std::size_t k = 0; k < p312.size(); ++k) out += z(static_cast<Eigen::Index>(k)) * p312[k];
  return out;
}

MomentAccumulator::MomentAccumulator(std::size_t num_contexts)
    : X_(num_contexts), counts_(num_contexts * num_contexts * num_contexts, 0) {
  if (num_contexts == 0) throw Error(ErrorKind::InvalidArgument, "need at least one context value");
}

void MomentAccumulator::push(std::size_t context) {
  if (context >= X_) throw Error(ErrorKind::InvalidArgument, "context index out of range");
  if (seen_ >= 2) ++counts_[index(context, prev2_, prev1_)];
  prev2_ = prev1_;
  prev1_ = context;
  ++seen_;
}

MomentSet MomentAccumulator::snapshot() const {
  if (seen_ < 3) throw Error(ErrorKind::TooShort, "moments need at least 3 contexts");
  const auto X = static_cast<Eigen::Index>(X_);
  const double scale = 1.0 / static_cast<double>(seen_ - 2);
  MomentSet m;
  m.sample_count = seen_;
  m.p31 = Mat::Zero(X, X);
  m.p32 = Mat::Zero(X, X);
  m.p312.assign(X_, Mat::Zero(X, X));
  for (std::size_t i = 0; i < X_; ++i)
    for (std::size_t j = 0; j < X_; ++j)
      for (std::size_t k = 0; k < X_; ++k) {
        const auto c = counts_[index(i, j, k)];
        if (c == 0) continue;
        const double p = static_cast<double>(c) * scale;
        const auto ii = static_cast<Eigen::Index>(i);
        const auto jj = static_cast<Eigen::Index>(j);
        const auto kk = static_cast<Eigen::Index>(k);
        m.p31(ii, jj) += p;
        m.p32(ii, kk) += p;
        m.p312[k](ii, jj) = p;
      }
  return m;
}

MomentSet accumulate_moments(std::span<const std::size_t> contexts, std::size_t num_contexts) {
  if (contexts.size() < 3) throw Error(ErrorKind::TooShort, "moments need at least 3 contexts");
  MomentAccumulator acc(num_contexts);
  for (auto x : contexts) acc.push(x);
  return acc.snapshot();
}

namespace {

// Largest-magnitude entry of every column made positive (first index on ties).
void fix_signs(Mat& basis) {
  for (Eigen::Index c = 0; c < basis.cols(); ++c) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index r = 0; r < basis.rows(); ++r) {
      if (std::abs(basis(r, c)) > best) {
        best = std::abs(basis(r, c));
        arg = r;
      }
    }
    if (basis(arg, c) < 0.0) basis.col(c) *= -1.0;
  }
}

double condition_number(const Mat& m) {
  Eigen::JacobiSVD<Mat> svd(m);
  const auto& s = svd.singularValues();
  const double smallest = s(s.size() - 1);
  if (!(smallest > 0.0)) return std::numeric_limits<double>::infinity();
  return s(0) / smallest;
}

Mat random_rotation(Engine& engine, Eigen::Index n) {
  Mat g(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) g(i, j) = standard_normal(engine);
  Eigen::HouseholderQR<Mat> qr(g);
  Mat q = qr.householderQ() * Mat::Identity(n, n);
  const Mat r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < n; ++j)
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  return q;
}

}  // namespace

EstimatedHmm spectral_estimate(const MomentSet& moments, std::size_t num_states, std::uint64_t seed,
                               const SpectralOptions& options, SpectralWorkspace* workspace) {
  const auto X = static_cast<Eigen::Index>(moments.num_contexts());
  const auto H = static_cast<Eigen::Index>(num_states);
  if (H == 0 || H > X) throw Error(ErrorKind::InvalidArgument, "spectral estimation needs 1 <= H <= X");
  if (moments.sample_count < 3) throw Error(ErrorKind::TooShort, "moments need at least 3 contexts");
  if (static_cast<std::size_t>(X) != moments.p312.size() || moments.p32.rows() != X)
    throw Error(ErrorKind::ShapeMismatch, "inconsistent moment tables");

  // Step 2: singular subspaces.
  Eigen::JacobiSVD<Mat> svd31(moments.p31, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (svd31.singularValues()(H - 1) < options.rank_tol)
    throw Error(ErrorKind::RankDeficient, "P31 has fewer than H significant singular values");
  Mat u3 = svd31.matrixU().leftCols(H);
  Mat u1 = svd31.matrixV().leftCols(H);
  Eigen::JacobiSVD<Mat> svd32(moments.p32, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat u2 = svd32.matrixV().leftCols(H);
  fix_signs(u3);
  fix_signs(u1);
  fix_signs(u2);

  // Step 3: B(z) = (U3' P312(z) U1)(U3' P31 U1)^{-1}.
  const Mat pivot = u3.transpose() * moments.p31 * u1;
  if (condition_number(pivot) > options.max_condition)
    throw Error(ErrorKind::NearSingularPivot, "U3' P31 U1 is ill-conditioned");
  const Mat pivot_inv = pivot.inverse();
  auto b_of = [&](const Vec& z) -> Mat { return u3.transpose() * moments.contract(z) * u1 * pivot_inv; };

  Engine engine = make_engine(derive_seed(seed, {stream_id("spectral-rotation")}));
  Mat gamma, r;
  std::size_t attempt = 0;
  for (; attempt < options.max_attempts; ++attempt) {
    gamma = random_rotation(engine, H);
    const Mat b1 = b_of(u2 * gamma.row(0).transpose());
    Eigen::EigenSolver<Mat> eig(b1);
    if (eig.info() != Eigen::Success) continue;
    const auto& values = eig.eigenvalues();
    double radius = 0.0, worst_imag = 0.0;
    for (Eigen::Index j = 0; j < H; ++j) {
      radius = std::max(radius, std::abs(values(j)));
      worst_imag = std::max(worst_imag, std::abs(values(j).imag()));
    }
    if (worst_imag > options.imag_tol * radius) continue;
    Mat candidate = eig.eigenvectors().real();
    bool usable = true;
    for (Eigen::Index j = 0; j < H; ++j) {
      const double n = candidate.col(j).norm();
      if (!(n > 0.0)) {
        usable = false;
        break;
      }
      candidate.col(j) /= n;
      // orient each eigenvector so the implied transition row has positive mass
      if ((u3 * candidate.col(j)).sum() < 0.0) candidate.col(j) *= -1.0;
    }
    if (!usable || condition_number(candidate) > options.max_condition) continue;
    r = std::move(candidate);
    break;
  }
  if (r.size() == 0)
    throw Error(ErrorKind::DiagonalizationFailed,
                "no real diagonalizable B(U2 Gamma_1) after " + std::to_string(options.max_attempts) + " draws");

  // Step 4: eigenvalues of every B(U2 Gamma_h) in the basis R.
  const Mat r_inv = r.inverse();
  Mat l(H, H);
  for (Eigen::Index h = 0; h < H; ++h) {
    const Mat d = r_inv * b_of(u2 * gamma.row(h).transpose()) * r;
    l.row(h) = d.diagonal().transpose();
  }

  // Step 5.
  const Mat o = u2 * gamma.inverse() * l;  // X x H, column h estimates nu_h
  const Mat u3o = u3.transpose() * o;
  if (condition_number(u3o) > options.max_condition)
    throw Error(ErrorKind::NearSingularPivot, "U3' O is ill-conditioned");
  const Mat m = (u3o.inverse() * r).transpose();

  if (workspace) {
    workspace->u1 = u1;
    workspace->u2 = u2;
    workspace->u3 = u3;
    workspace->gamma_rotation = gamma;
    workspace->r_matrix = r;
    workspace->l_matrix = l;
    workspace->attempts = attempt + 1;
  }

  EstimatedHmm est;
  est.raw_transition = m;
  est.raw_emission = o;
  est.transition_hat = m;
  est.emission_hat = o;
  est.label_permutation.resize(num_states);
  std::iota(est.label_permutation.begin(), est.label_permutation.end(), std::size_t{0});
  est.sample_count = moments.sample_count;
  return est;
}

EstimatedHmm postprocess(const EstimatedHmm& raw) {
  if (!raw.transition_hat.allFinite() || !raw.emission_hat.allFinite())
    throw Error(ErrorKind::NonFinite, "estimate has non-finite entries");
  EstimatedHmm out = raw;
  Mat& m = out.transition_hat;
  Mat& e = out.emission_hat;
  m = m.cwiseMax(0.0);
  e = e.cwiseMax(0.0);
  for (Eigen::Index h = 0; h < m.rows(); ++h) {
    const double s = m.row(h).sum();
    if (s > 0.0)
      m.row(h) /= s;
    else
      m.row(h).setConstant(1.0 / static_cast<double>(m.cols()));
  }
  for (Eigen::Index h = 0; h < e.cols(); ++h) {
    const double s = e.col(h).sum();
    if (s > 0.0)
      e.col(h) /= s;
    else
      e.col(h).setConstant(1.0 / static_cast<double>(e.rows()));
  }
  return out;
}

Mat permute_states(const Mat& transition, std::span<const std::size_t> perm) {
  const auto H = transition.rows();
  Mat out(H, H);
  for (Eigen::Index h = 0; h < H; ++h)
    for (Eigen::Index g = 0; g < H; ++g)
      out(h, g) = transition(static_cast<Eigen::Index>(perm[h]), static_cast<Eigen::Index>(perm[g]));
  return out;
}

Mat permute_columns(const Mat& emission, std::span<const std::size_t> perm) {
  Mat out(emission.rows(), emission.cols());
  for (Eigen::Index h = 0; h < emission.cols(); ++h) out.col(h) = emission.col(static_cast<Eigen::Index>(perm[h]));
  return out;
}

std::vector<std::size_t> best_permutation(const Mat& reference_emission, const Mat& fresh_emission) {
  if (reference_emission.rows() != fresh_emission.rows() || reference_emission.cols() != fresh_emission.cols())
    throw Error(ErrorKind::ShapeMismatch, "emission estimates have different shapes");
  const auto H = static_cast<std::size_t>(fresh_emission.cols());
  std::vector<std::size_t> perm(H), best;
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double cost = 0.0;
    for (std::size_t h = 0; h < H; ++h)
      cost = std::max(cost, (reference_emission.col(static_cast<Eigen::Index>(h)) -
                             fresh_emission.col(static_cast<Eigen::Index>(perm[h])))
                                .norm());
    if (cost < best_cost) {
      best_cost = cost;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

EstimatedHmm align(const std::optional<EstimatedHmm>& previous, const EstimatedHmm& fresh) {
  EstimatedHmm out = fresh;
  const auto H = fresh.num_states();
  if (!previous) {
    out.label_permutation.resize(H);
    std::iota(out.label_permutation.begin(), out.label_permutation.end(), std::size_t{0});
    return out;
  }
  if (previous->num_states() != H) throw Error(ErrorKind::ShapeMismatch, "alignment needs equal H");
  const auto perm = best_permutation(previous->emission_hat, fresh.emission_hat);
  out.emission_hat = permute_columns(fresh.emission_hat, perm);
  out.raw_emission = permute_columns(fresh.raw_emission, perm);
  out.transition_hat = permute_states(fresh.transition_hat, perm);
  out.raw_transition = permute_states(fresh.raw_transition, perm);
  out.label_permutation = perm;
  return out;
}

EstimationError estimation_error(const HmmParams& truth, const EstimatedHmm& estimate) {
  const auto perm = best_permutation(truth.emission, estimate.emission_hat);
  EstimationError err;
  err.transition = (permute_states(estimate.transition_hat, perm) - truth.transition).norm();
  err.emission = (permute_columns(estimate.emission_hat, perm) - truth.emission).norm();
  return err;
}

void write_estimate(std::ostream& out, const EstimatedHmm& estimate) {
  const auto H = estimate.transition_hat.rows();
  const auto X = estimate.emission_hat.rows();
  std::ostringstream s;
  s << std::setprecision(17);
  s << "H " << H << " X " << X << " version " << estimate.version << " samples " << estimate.sample_count << '\n';
  s << "permutation";
  for (auto p : estimate.label_permutation) s << ' ' << p;
  s << "\ntransition";
  for (Eigen::Index i = 0; i < H; ++i)
    for (Eigen::Index j = 0; j < H; ++j) s << ' ' << estimate.transition_hat(i, j);
  s << "\nemission";
  for (Eigen::Index h = 0; h < H; ++h)
    for (Eigen::Index x = 0; x < X; ++x) s << ' ' << estimate.emission_hat(x, h);
  s << '\n';
  out << s.str();
}

EstimatedHmm read_estimate(std::istream& in) {
  auto expect = [&](const char* word) {
    std::string w;
    if (!(in >> w) || w != word) throw Error(ErrorKind::Config, std::string("estimate block: expected '") + word + "'");
  };
  Eigen::Index H = 0, X = 0;
  EstimatedHmm est;
  expect("H");
  in >> H;
  expect("X");
  in >> X;
  expect("version");
  in >> est.version;
  expect("samples");
  in >> est.sample_count;
  if (!in || H <= 0 || X <= 0) throw Error(ErrorKind::Config, "estimate block: bad header");
  expect("permutation");
  est.label_permutation.resize(static_cast<std::size_t>(H));
  for (auto& p : est.label_permutation) in >> p;
  expect("transition");
  est.transition_hat.resize(H, H);
  for (Eigen::Index i = 0; i < H; ++i)
    for (Eigen::Index j = 0; j < H; ++j) in >> est.transition_hat(i, j);
  expect("emission");
  est.emission_hat.resize(X, H);
  for (Eigen::Index h = 0; h < H; ++h)
    for (Eigen::Index x = 0; x < X; ++x) in >> est.emission_hat(x, h);
  if (!in) throw Error(ErrorKind::Config, "estimate block: truncated");
  est.raw_transition = est.transition_hat;
  est.raw_emission = est.emission_hat;
  return est;
}

}  // namespace lbl
