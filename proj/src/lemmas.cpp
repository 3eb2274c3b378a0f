#include <algorithm>
#include <cmath>

#include "lbl/errors.hpp"
#include "lbl/evaluation.hpp"

namespace lbl {

namespace {

constexpr double kBoundSlack = 1e-9;

void require_lambda(double lambda) {
  if (!(lambda >= 1.0)) throw Error(ErrorKind::InvalidArgument, "lemma checks need lambda >= 1");
}

std::size_t common_dim(const std::vector<Vec>& ys) {
  if (ys.empty()) throw Error(ErrorKind::InvalidArgument, "need at least one vector");
  const auto d = ys.front().size();
  for (const auto& y : ys) {
    if (y.size() != d) throw Error(ErrorKind::ShapeMismatch, "vectors differ in dimension");
    if (y.norm() > 1.0 + kBoundSlack) throw Error(ErrorKind::InvalidArgument, "vectors must have norm <= 1");
  }
  return static_cast<std::size_t>(d);
}

LemmaCheck compare(double lhs, double bound) { return {lhs, bound, lhs <= bound + kBoundSlack}; }

}  // namespace

LemmaCheck check_elliptic_potential(const std::vector<Vec>& ys, double lambda) {
  require_lambda(lambda);
  const auto d = common_dim(ys);
  const auto n = static_cast<Eigen::Index>(d);
  Mat V = lambda * Mat::Identity(n, n);
  double sum = 0.0;
  for (const auto& y : ys) {
    sum += std::sqrt(std::max(0.0, y.dot(V.ldlt().solve(y))));
    V.noalias() += y * y.transpose();
  }
  const double T = static_cast<double>(ys.size());
  const double dd = static_cast<double>(d);
  return compare(sum, std::sqrt(2.0 * dd * T * std::log(1.0 + T / (dd * lambda))));
}

StagedPotentialCheck check_staged_elliptic_potential(const std::vector<Vec>& ys, double lambda, std::size_t ell,
                                                     std::size_t num_stages) {
  require_lambda(lambda);
  if (ell < 1 || num_stages < 1) throw Error(ErrorKind::InvalidArgument, "need ell >= 1 and S >= 1");
  if (ys.size() != ell * num_stages) throw Error(ErrorKind::ShapeMismatch, "need exactly S * ell vectors");
  const auto d = common_dim(ys);
  const auto n = static_cast<Eigen::Index>(d);
  Mat V = lambda * Mat::Identity(n, n);
  double inv_sum = 0.0, half_sum = 0.0;
  for (std::size_t s = 0; s < num_stages; ++s) {
    const auto solver = V.ldlt();
    for (std::size_t k = 0; k < ell; ++k) {
      const Vec& y = ys[s * ell + k];
      const Vec w = solver.solve(y);
      inv_sum += w.norm();
      half_sum += std::sqrt(std::max(0.0, y.dot(w)));
    }
    for (std::size_t k = 0; k < ell; ++k) V.noalias() += ys[s * ell + k] * ys[s * ell + k].transpose();
  }
  const double S = static_cast<double>(num_stages);
  const double l = static_cast<double>(ell);
  const double dd = static_cast<double>(d);
  const double root = std::sqrt(2.0 * dd * S * l * (1.0 + l / lambda) * std::log(1.0 + S * l / (dd * lambda)));
  StagedPotentialCheck out;
  out.first = compare(inv_sum, half_sum / std::sqrt(lambda));
  out.second = compare(half_sum, root);
  out.overall = compare(inv_sum, root / std::sqrt(lambda));
  return out;
}

LemmaCheck check_matrix_determinant_lemma(const Mat& A, const Vec& y, const Vec& y_prime) {
  if (A.rows() != A.cols() || y.size() != A.rows() || y_prime.size() != A.rows())
    throw Error(ErrorKind::ShapeMismatch, "determinant lemma needs square A and matching vectors");
  Eigen::FullPivLU<Mat> lu(A);
  if (!lu.isInvertible()) throw Error(ErrorKind::SingularA, "A is singular");
  const double detA = lu.determinant();
  const double lhs = (A + y_prime * y.transpose()).determinant();
  const double rhs = (1.0 + y.dot(lu.solve(y_prime))) * detA;
  const double scale = std::max({std::abs(lhs), std::abs(rhs), std::abs(detA)});
  LemmaCheck c;
  c.lhs = std::abs(lhs - rhs);
  c.bound = 1e-8 * scale;
  c.holds = c.lhs <= c.bound;
  return c;
}

LemmaCheck check_determinant_trace(const std::vector<Vec>& ys, double lambda) {
  require_lambda(lambda);
  const auto d = common_dim(ys);
  const auto n = static_cast<Eigen::Index>(d);
  Mat V = lambda * Mat::Identity(n, n);
  for (const auto& y : ys) V.noalias() += y * y.transpose();
  const Eigen::LLT<Mat> llt(V);
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double dd = static_cast<double>(d);
  return compare(logdet, dd * std::log(lambda + static_cast<double>(ys.size()) / dd));
}

bool LemmaSuiteReport::all_pass() const {
  return elliptic.violations == 0 && staged.violations == 0 && determinant.violations == 0 &&
         determinant_trace.violations == 0 && forgetting.violations == 0;
}

namespace {

// Direction uniform on the sphere, length uniform on [0, 1] with a fifth of
// the draws pinned to unit length.
Vec random_ball_vector(std::size_t d, Engine& engine) {
  Vec v(static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = standard_normal(engine);
  const double n = v.norm();
  if (n == 0.0) return Vec::Zero(v.size());
  const double len = uniform01(engine) < 0.2 ? 1.0 : uniform01(engine);
  return v * (len / n);
}

std::vector<Vec> random_vectors(std::size_t count, std::size_t d, Engine& engine) {
  std::vector<Vec> ys;
  ys.reserve(count);
  for (std::size_t i = 0; i < count; ++i) ys.push_back(random_ball_vector(d, engine));
  return ys;
}

std::size_t draw_between(Engine& engine, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(uniform_index(engine, hi - lo + 1));
}

void tally(LemmaTally& t, bool holds) {
  ++t.trials;
  if (!holds) ++t.violations;
}

}  // namespace

LemmaSuiteReport run_lemma_suite(std::size_t trials, std::uint64_t seed) {
  LemmaSuiteReport report;
  for (std::size_t i = 0; i < trials; ++i) {
    Engine engine = make_engine(derive_seed(seed, {stream_id("lemma-suite"), i}));
    const double lambda = 1.0 + 9.0 * uniform01(engine);

    {
      const auto d = draw_between(engine, 1, 8);
      const auto T = draw_between(engine, 1, 512);
      const auto ys = random_vectors(T, d, engine);
      tally(report.elliptic, check_elliptic_potential(ys, lambda).holds);
      tally(report.determinant_trace, check_determinant_trace(ys, lambda).holds);
    }
    {
      const auto d = draw_between(engine, 1, 8);
      const auto S = draw_between(engine, 1, 16);
      const auto ell = draw_between(engine, 1, 32);
      const auto ys = random_vectors(S * ell, d, engine);
      tally(report.staged, check_staged_elliptic_potential(ys, lambda, ell, S).holds());
    }
    {
      const auto d = draw_between(engine, 1, 6);
      const auto n = static_cast<Eigen::Index>(d);
      Mat A(n, n);
      for (Eigen::Index r = 0; r < n; ++r)
        for (Eigen::Index c = 0; c < n; ++c) A(r, c) = standard_normal(engine);
      A += static_cast<double>(d) * Mat::Identity(n, n);
      Vec y(n), yp(n);
      for (Eigen::Index r = 0; r < n; ++r) {
        y(r) = standard_normal(engine);
        yp(r) = standard_normal(engine);
      }
      tally(report.determinant, check_matrix_determinant_lemma(A, y, yp).holds);
    }
    {
      const auto H = draw_between(engine, 2, 3);
      const auto X = draw_between(engine, 2, 3);
      const double floor = 0.05 * uniform01(engine);
      const auto params = random_hmm(H, X, engine, floor);
      tally(report.forgetting, check_forgetting(params, forgetting_rate(params), 6));
    }
  }
  return report;
}

}  // namespace lbl
