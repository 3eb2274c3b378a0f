#include <cmath>
#include <map>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "lbl/errors.hpp"
#include "lbl/evaluation.hpp"
#include "lbl/policies.hpp"

using namespace lbl;
using testing::error_kind;

namespace {

Vec vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

RewardSpec reference_spec() {
  RewardSpec s;
  s.theta_star = {vec({0.8, -0.4, 0.3}), vec({-0.4, 0.8, 0.3})};
  s.c_theta = 1.0;
  s.noise = NoiseModel::gaussian(0.1);
  return s;
}

std::map<std::size_t, std::vector<double>> power_law(double c, double p, std::size_t seeds = 10) {
  std::map<std::size_t, std::vector<double>> r;
  for (std::size_t T : {1000, 2000, 4000, 8000, 16000}) r[T].assign(seeds, c * std::pow(double(T), p));
  return r;
}

}  // namespace

TEST_CASE("regret ledger") {
  const auto phi = TransferFunction::one_hot_action(3, 4);
  const auto spec = reference_spec();
  SUBCASE("three rounds by hand") {
    RegretLedger ledger;
    // b = (1, 0): values (0.8, -0.4, 0.3); playing 2 costs 0.5
    CHECK(record_round(ledger, vec({1.0, 0.0}), 0, 2, spec, phi) == doctest::Approx(0.5).epsilon(1e-14));
    // b = (0.5, 0.5): values (0.2, 0.2, 0.3); playing 0 costs 0.1
    CHECK(record_round(ledger, vec({0.5, 0.5}), 1, 0, spec, phi) == doctest::Approx(0.1).epsilon(1e-12));
    // b = (0.25, 0.75): values (-0.1, 0.5, 0.3); playing 1 costs 0
    CHECK(record_round(ledger, vec({0.25, 0.75}), 3, 1, spec, phi) == 0.0);
    CHECK(ledger.horizon() == 3);
    CHECK(ledger.total() == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(ledger.per_round_benchmark[1] == doctest::Approx(0.3).epsilon(1e-14));
    CHECK(ledger.increment(0) == doctest::Approx(0.5).epsilon(1e-14));
  }
  SUBCASE("oracle increments vanish and others stay in range") {
    Engine e = make_engine(3);
    OraclePolicy oracle(phi, spec);
    RegretLedger a, b;
    for (std::size_t t = 1; t <= 2000; ++t) {
      Vec belief(2);
      belief(0) = uniform01(e);
      belief(1) = 1.0 - belief(0);
      const auto x = static_cast<std::size_t>(uniform_index(e, 4));
      CHECK(record_round(a, belief, x, oracle.act(Observation{t, x, belief}), spec, phi) == 0.0);
      const double inc = record_round(b, belief, x, static_cast<std::size_t>(uniform_index(e, 3)), spec, phi);
      CHECK(inc >= 0.0);
      CHECK(inc <= 2.0);
    }
    CHECK(a.total() == 0.0);
    for (std::size_t i = 1; i < b.horizon(); ++i) CHECK(b.cumulative[i] >= b.cumulative[i - 1]);
  }
}

TEST_CASE("rate fit") {
  SUBCASE("least squares") {
    const auto [slope, intercept] = ols_fit({0.0, 1.0, 2.0}, {1.0, 3.0, 5.0});
    CHECK(slope == doctest::Approx(2.0));
    CHECK(intercept == doctest::Approx(1.0));
  }
  SUBCASE("exact power laws") {
    const auto linear = fit_rate(power_law(3.0, 1.0));
    CHECK(linear.slope == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(linear.intercept == doctest::Approx(std::log(3.0)).epsilon(1e-10));
    CHECK(linear.ci_low == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(linear.ci_high == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(fit_rate(power_law(0.5, 0.5)).slope == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(linear.horizons.size() == 5);
  }
  SUBCASE("noisy seeds give an interval around the slope") {
    Engine e = make_engine(11);
    auto r = power_law(2.0, 0.5, 20);
    for (auto& [T, v] : r)
      for (auto& x : v) x *= std::exp(0.2 * standard_normal(e));
    const auto fit = fit_rate(r, 5);
    CHECK(fit.ci_low <= fit.slope);
    CHECK(fit.ci_high >= fit.slope);
    CHECK(fit.ci_low < fit.ci_high);
    CHECK(std::abs(fit.slope - 0.5) < 0.1);
    const auto again = fit_rate(r, 5);
    CHECK(again.ci_low == fit.ci_low);
  }
  SUBCASE("insufficient data") {
    auto r = power_law(1.0, 1.0);
    r.erase(r.begin());
    r.erase(r.begin());
    CHECK(error_kind([&] { fit_rate(r); }) == ErrorKind::InsufficientData);
    auto few = power_law(1.0, 1.0, 9);
    CHECK(error_kind([&] { fit_rate(few); }) == ErrorKind::InsufficientData);
    auto zero = power_law(0.0, 1.0);
    CHECK(error_kind([&] { fit_rate(zero); }) == ErrorKind::InvalidArgument);
  }
}

TEST_CASE("auxiliary inequalities") {
  SUBCASE("elliptic potential, scalar example") {
    const std::vector<Vec> ys(3, vec({1.0}));
    const auto c = check_elliptic_potential(ys, 1.0);
    CHECK(c.lhs == doctest::Approx(1.0 + 1.0 / std::sqrt(2.0) + 1.0 / std::sqrt(3.0)).epsilon(1e-14));
    CHECK(c.lhs == doctest::Approx(2.2845).epsilon(1e-4));
    CHECK(c.bound == doctest::Approx(std::sqrt(6.0 * std::log(4.0))).epsilon(1e-14));
    CHECK(c.holds);
  }
  SUBCASE("zero vectors") {
    const std::vector<Vec> ys(5, Vec::Zero(3));
    CHECK(check_elliptic_potential(ys, 2.0).lhs == 0.0);
    CHECK(check_determinant_trace(ys, 2.0).lhs == doctest::Approx(3.0 * std::log(2.0)).epsilon(1e-14));
    CHECK(check_determinant_trace(ys, 2.0).holds);
  }
  SUBCASE("single-round stages reduce to the ordinary potential") {
    Engine e = make_engine(4);
    std::vector<Vec> ys;
    for (int i = 0; i < 40; ++i) {
      Vec v(3);
      for (Eigen::Index k = 0; k < 3; ++k) v(k) = standard_normal(e);
      ys.push_back(v / (1.0 + v.norm()));
    }
    const auto staged = check_staged_elliptic_potential(ys, 1.0, 1, 40);
    const auto plain = check_elliptic_potential(ys, 1.0);
    CHECK(staged.holds());
    CHECK(staged.second.lhs == doctest::Approx(plain.lhs).epsilon(1e-12));
    CHECK(error_kind([&] { check_staged_elliptic_potential(ys, 1.0, 3, 10); }) == ErrorKind::ShapeMismatch);
    CHECK(error_kind([&] { check_elliptic_potential(ys, 0.5); }) == ErrorKind::InvalidArgument);
  }
  SUBCASE("determinant lemma") {
    const Mat I = Mat::Identity(3, 3);
    const Vec e1 = Vec::Unit(3, 0);
    CHECK(check_matrix_determinant_lemma(I, e1, e1).holds);
    CHECK((I + e1 * e1.transpose()).determinant() == doctest::Approx(2.0));
    CHECK(check_matrix_determinant_lemma(I, Vec::Zero(3), e1).lhs == 0.0);
    Mat S = Mat::Zero(3, 3);
    S(0, 0) = 1.0;
    CHECK(error_kind([&] { check_matrix_determinant_lemma(S, e1, e1); }) == ErrorKind::SingularA);
  }
  SUBCASE("randomized suite") {
    const auto r = run_lemma_suite(60, 2);
    CHECK(r.all_pass());
    CHECK(r.elliptic.trials == 60);
    CHECK(r.forgetting.trials == 60);
  }
}
