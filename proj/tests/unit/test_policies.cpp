#include <cmath>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "lbl/errors.hpp"
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

Vec random_unit_ball(Engine& e, Eigen::Index d) {
  Vec v(d);
  for (Eigen::Index i = 0; i < d; ++i) v(i) = standard_normal(e);
  return v * (uniform01(e) / v.norm());
}

Vec random_simplex(Engine& e, Eigen::Index H) {
  Vec v(H);
  for (Eigen::Index i = 0; i < H; ++i) v(i) = -std::log(1.0 - uniform01(e));
  return v / v.sum();
}

double budget_term(std::size_t H, std::size_t X, double delta, std::size_t t) {
  if (t == 1) return 0.0;
  const double tt = static_cast<double>(t);
  return std::log(tt) * (static_cast<double>(H) * std::sqrt(static_cast<double>(X)) *
                             std::sqrt(2.0 * std::log(6.0 * static_cast<double>(X) * tt * (tt + 1.0) / delta) / tt) +
                         std::exp(-std::sqrt(tt - 1.0)));
}

BonusConfig small_config() {
  BonusConfig c;
  c.delta = 0.1;
  c.gamma = 0.5;
  c.c_theta = 1.0;
  c.c_eta = 0.01;
  c.v_eta = 0.1;
  c.H = 2;
  c.X = 2;
  c.d = 2;
  return c;
}

}  // namespace

TEST_CASE("ridge estimator") {
  SUBCASE("scalar example") {
    auto s = make_ridge(1, 1.0);
    CHECK(s.theta_hat(0) == 1.0);
    s = ridge_update(s, vec({1.0}), 2.0);
    CHECK(s.gram(0, 0) == 2.0);
    CHECK(s.theta_hat(0) == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("matches the batch normal equations") {
    Engine e = make_engine(5);
    auto s = make_ridge(4, 0.7);
    Mat F(50, 4);
    Vec r(50);
    for (Eigen::Index i = 0; i < 50; ++i) {
      const Vec f = random_unit_ball(e, 4);
      F.row(i) = f.transpose();
      r(i) = standard_normal(e);
      s = ridge_update(s, f, r(i));
      const Mat G = 0.7 * Mat::Identity(4, 4) + F.topRows(i + 1).transpose() * F.topRows(i + 1);
      const Vec theta = G.fullPivLu().solve(F.topRows(i + 1).transpose() * r.head(i + 1));
      CHECK((s.theta_hat - theta).norm() < 1e-8);
      CHECK((s.gram - G).cwiseAbs().maxCoeff() < 1e-12);
      // G - lambda I is positive semi-definite
      Eigen::SelfAdjointEigenSolver<Mat> eig(s.gram);
      CHECK(eig.eigenvalues().minCoeff() >= 0.7 - 1e-10);
    }
    CHECK(s.rounds_absorbed == 50);
  }
  SUBCASE("zero feature leaves the estimate unchanged") {
    auto s = ridge_update(make_ridge(2, 1.0), vec({0.6, 0.0}), 1.0);
    const auto t = ridge_update(s, vec({0.0, 0.0}), 5.0);
    CHECK(t.gram == s.gram);
    CHECK(t.theta_hat == s.theta_hat);
  }
  SUBCASE("long features are rejected") {
    const auto s = make_ridge(2, 1.0);
    CHECK(error_kind([&] { ridge_update(s, vec({1.0, 0.1}), 0.0); }) == ErrorKind::FeatureTooLarge);
    CHECK(error_kind([&] { ridge_update(s, vec({1.0, 0.0}), 0.0); }) == std::nullopt);
    CHECK(error_kind([&] { ridge_update(s, vec({1.0}), 0.0); }) == ErrorKind::ShapeMismatch);
    CHECK(error_kind([] { make_ridge(2, 0.0); }) == ErrorKind::InvalidArgument);
  }
  SUBCASE("consistency") {
    Engine e = make_engine(12);
    const Vec theta = vec({0.5, -0.3, 0.2});
    auto s = make_ridge(3, 1.0);
    for (int t = 0; t < 5000; ++t) {
      const Vec f = random_unit_ball(e, 3);
      ridge_absorb(s, f, f.dot(theta) + 0.1 * standard_normal(e), false);
    }
    ridge_resolve(s);
    CHECK((s.theta_hat - theta).norm() < 0.05);
  }
}

TEST_CASE("tensor feature") {
  const Vec f = tensor_feature(vec({0.25, 0.75}), vec({1.0, 2.0, 3.0}));
  CHECK((f - vec({0.25, 0.5, 0.75, 0.75, 1.5, 2.25})).norm() < 1e-15);
  CHECK((tensor_feature(vec({1.0, 0.0}), vec({0.6, 0.8})) - vec({0.6, 0.8, 0.0, 0.0})).norm() == 0.0);
  // ||b (x) phi|| = ||b|| ||phi|| <= 1 for beliefs and unit features
  Engine e = make_engine(1);
  for (int i = 0; i < 100; ++i) {
    const Vec b = random_simplex(e, 3);
    const Vec p = random_unit_ball(e, 4);
    CHECK(tensor_feature(b, p).norm() == doctest::Approx(b.norm() * p.norm()).epsilon(1e-12));
  }
}

TEST_CASE("staged bonus") {
  auto cfg = small_config();
  cfg.d = 4;
  const StagePlan plan(10, 100);
  CHECK(plan.num_stages() == 10);
  CHECK(plan.stage_of(10) == 1);
  CHECK(plan.stage_of(11) == 2);
  const auto table = cfg.budget_table(100);
  const Vec v = Vec::Constant(8, 0.25);
  SUBCASE("first stage") {
    const auto ridge = make_ridge(8, 2.0);
    CHECK(bonus_boxA(cfg, plan, ridge, table, v, 1) == 2.0);
    CHECK(bonus_boxA(cfg, plan, ridge, table, v, 10) == 2.0);
  }
  SUBCASE("requires the frozen estimate") {
    auto ridge = make_ridge(8, 2.0);
    CHECK(error_kind([&] { bonus_boxA(cfg, plan, ridge, table, v, 11); }) == ErrorKind::StageNotFrozen);
    for (int i = 0; i < 10; ++i) ridge_absorb(ridge, v, 0.5);
    CHECK(error_kind([&] { bonus_boxA(cfg, plan, ridge, table, v, 11); }) == std::nullopt);
    CHECK(error_kind([&] { bonus_boxA(cfg, plan, ridge, table, v, 21); }) == ErrorKind::StageNotFrozen);
  }
  SUBCASE("term by term") {
    auto ridge = make_ridge(8, 2.0);
    Engine e = make_engine(3);
    for (int i = 0; i < 20; ++i) ridge_absorb(ridge, random_unit_ball(e, 8), 0.1);
    const std::size_t t = 27;  // stage 3
    const Mat Ginv = ridge.gram.inverse();
    const double norm = (Ginv * v).norm();
    const double sT = 10, s = 3, ell = 10;
    double prefix = 0.0;
    for (std::size_t tau = 1; tau <= 20; ++tau) prefix += budget_term(2, 2, 0.05, tau);

    BonusConfig zero = cfg;
    zero.gamma = 0.0;
    zero.c_eta = 0.0;
    zero.oracle_beliefs = true;
    const double expect0 = norm * (2.0 * std::sqrt(2.0) * 1.0 + 4.0 * std::sqrt(sT * (s - 1) * ell / 0.1));
    CHECK(bonus_boxA(zero, plan, ridge, zero.budget_table(100), v, t) == doctest::Approx(expect0).epsilon(1e-12));

    const double g = 0.5;
    const double terms = 2.0 * std::sqrt(2.0) + 4.0 * std::sqrt(sT * (s - 1) * (1 + s * g) * ell / (0.1 * (1 - g))) +
                         std::sqrt(4.0 * sT * 0.01 * (s - 1) * ell / 0.1);
    const double drift = 2.0 * (s - 1) * g / (1 - g);
    const double head = budget_term(2, 2, 0.05, t);
    CHECK(bonus_boxA(cfg, plan, ridge, table, v, t) ==
          doctest::Approx(head + norm * (terms + drift + prefix)).epsilon(1e-12));
    BonusConfig partial = cfg;
    partial.scope = BonusScope::Partial;
    CHECK(bonus_boxA(partial, plan, ridge, table, v, t) ==
          doctest::Approx(head + norm * terms + drift + prefix).epsilon(1e-12));

    // affine in ||G^{-1} v||
    const double b1 = bonus_boxA(cfg, plan, ridge, table, v, t) - head;
    const double b2 = bonus_boxA(cfg, plan, ridge, table, Vec(0.5 * v), t) - head;
    CHECK(b2 == doctest::Approx(0.5 * b1).epsilon(1e-12));
  }
  CHECK(parse_bonus_scope("partial") == BonusScope::Partial);
  CHECK(error_kind([] { parse_bonus_scope("half"); }) == ErrorKind::Config);
}

TEST_CASE("per-round bonus") {
  auto cfg = small_config();
  const auto table = cfg.budget_table(100);
  const Vec v = vec({0.5, 0.0, 0.0, 0.5});
  SUBCASE("first round") { CHECK(bonus_boxB(cfg, make_ridge(4, 4.0), table, v, 1) == 1.0 + std::sqrt(2.0) / 4.0); }
  SUBCASE("isotropic gram at t = 10") {
    const double lambda = 10.0;
    const auto ridge = make_ridge(4, lambda);
    double prefix = 0.0;
    for (std::size_t tau = 1; tau <= 9; ++tau) prefix += budget_term(2, 2, 0.05, tau);
    const double maha = v.norm() / std::sqrt(lambda);
    const double dH = 4.0;
    const double width = prefix / std::sqrt(lambda) + std::sqrt(lambda * 2.0) * 1.0 +
                         0.1 * std::sqrt(2.0 * std::log(2.0 / 0.1) + dH * std::log(1.0 + 10.0 / (lambda * dH)));
    CHECK(bonus_boxB(cfg, ridge, table, v, 10) ==
          doctest::Approx(budget_term(2, 2, 0.05, 10) + maha * width).epsilon(1e-12));
  }
  SUBCASE("large lambda leaves the parameter-norm term") {
    const auto ridge = make_ridge(4, 1e12);
    const double limit = budget_term(2, 2, 0.05, 10) + v.norm() * std::sqrt(2.0) * 1.0;
    CHECK(bonus_boxB(cfg, ridge, table, v, 10) == doctest::Approx(limit).epsilon(1e-5));
  }
}

TEST_CASE("argmax") {
  CHECK(argmax_first({1.0, 1.0, 0.5}) == 0);
  CHECK(argmax_first({0.0, 2.0, 2.0}) == 1);
  CHECK(argmax_first({-1.0, -3.0, -0.5}) == 2);
  Engine e = make_engine(8);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> s(5);
    for (auto& x : s) x = standard_normal(e);
    const double shift = 100.0 * standard_normal(e);
    std::vector<double> shifted = s;
    for (auto& x : shifted) x += shift;
    CHECK(argmax_first(s) == argmax_first(shifted));
  }
  CHECK(error_kind([] { argmax_first({}); }) == ErrorKind::InvalidArgument);
}

namespace {

struct ScriptedRound {
  std::size_t context;
  Vec belief;
  std::vector<double> rewards;
};

std::vector<ScriptedRound> script(std::size_t T, std::uint64_t seed) {
  Engine e = make_engine(seed);
  std::vector<ScriptedRound> rounds;
  for (std::size_t t = 0; t < T; ++t) {
    ScriptedRound r;
    r.context = static_cast<std::size_t>(uniform_index(e, 2));
    r.belief = random_simplex(e, 2);
    const double p = r.belief(0);
    r.rewards = {0.6 * p - 0.2 * (1 - p) + 0.1 * standard_normal(e), -0.1 * p + 0.5 * (1 - p) + 0.1 * standard_normal(e)};
    rounds.push_back(std::move(r));
  }
  return rounds;
}

}  // namespace

TEST_CASE("staged policy against a direct implementation") {
  const std::size_t T = 50, ell = 7;
  const double lambda = 1.5;
  const auto phi = TransferFunction::one_hot_action(2, 2);
  LinUcbOptions opts;
  opts.lambda = lambda;
  opts.horizon = T;
  opts.bonus = small_config();
  StagedLinUcb policy(phi, opts, ell);
  const auto rounds = script(T, 77);

  std::vector<Vec> feats;
  std::vector<double> rewards;
  for (std::size_t t = 1; t <= T; ++t) {
    const auto& r = rounds[t - 1];
    // reference: everything recomputed from the frozen prefix
    const std::size_t s = (t + ell - 1) / ell;
    const std::size_t n = (s - 1) * ell;
    Mat G = lambda * Mat::Identity(4, 4);
    Vec m = Vec::Zero(4);
    for (std::size_t i = 0; i < n; ++i) {
      G += feats[i] * feats[i].transpose();
      m += rewards[i] * feats[i];
    }
    const Vec theta = n == 0 ? Vec(Vec::Constant(4, 1.0 / lambda)) : Vec(G.inverse() * m);
    double prefix = 0.0;
    for (std::size_t tau = 1; tau <= n; ++tau) prefix += budget_term(2, 2, 0.05, tau);
    std::size_t best = 0;
    double best_score = -1e300;
    for (std::size_t a = 0; a < 2; ++a) {
      Vec f = Vec::Zero(4);
      f(static_cast<Eigen::Index>(2 * 0 + a)) = r.belief(0);
      f(static_cast<Eigen::Index>(2 * 1 + a)) = r.belief(1);
      double bonus;
      if (t <= ell) {
        bonus = 1.0 + std::sqrt(2.0) / lambda;
      } else {
        const double sT = std::ceil(double(T) / ell), sm1 = double(s - 1), g = 0.5;
        bonus = budget_term(2, 2, 0.05, t) +
                (G.inverse() * f).norm() *
                    (lambda * std::sqrt(2.0) + 4.0 * std::sqrt(sT * sm1 * (1 + double(s) * g) * ell / (0.1 * (1 - g))) +
                     std::sqrt(4.0 * sT * 0.01 * sm1 * ell / 0.1) + 2.0 * sm1 * g / (1 - g) + prefix);
      }
      const double score = f.dot(theta) + bonus;
      if (score > best_score + 1e-12) {
        best_score = score;
        best = a;
      }
    }
    const auto chosen = policy.act(Observation{t, r.context, r.belief});
    CHECK(chosen == best);
    CHECK(policy.last_theta_version() == n);
    policy.observe_reward(r.rewards[chosen]);
    feats.push_back(tensor_feature(r.belief, phi(chosen, r.context)));
    rewards.push_back(r.rewards[chosen]);
  }
}

TEST_CASE("single-stage and one-round stages coincide") {
  const std::size_t T = 400;
  const auto phi = TransferFunction::one_hot_action(2, 2);
  LinUcbOptions opts;
  opts.lambda = 1.0;
  opts.horizon = T;
  opts.bonus = small_config();
  opts.bonus_override = [](const BonusQuery& q) {
    return 0.3 * std::sqrt(q.feature.dot(q.gram_inverse * q.feature));
  };
  StagedLinUcb staged(phi, opts, 1);
  LinUcb single(phi, opts);
  const auto rounds = script(T, 9);
  int switches = 0;
  std::size_t prev = 0;
  for (std::size_t t = 1; t <= T; ++t) {
    const auto& r = rounds[t - 1];
    const Observation obs{t, r.context, r.belief};
    const auto a = staged.act(obs);
    const auto b = single.act(obs);
    CHECK(a == b);
    switches += a != prev;
    prev = a;
    staged.observe_reward(r.rewards[a]);
    single.observe_reward(r.rewards[b]);
  }
  CHECK(switches > 0);
}

TEST_CASE("policy protocol") {
  const auto phi = TransferFunction::one_hot_action(2, 2);
  LinUcbOptions opts;
  opts.horizon = 3;
  opts.bonus = small_config();
  LinUcb p(phi, opts);
  const Vec b = vec({0.5, 0.5});
  CHECK(error_kind([&] { p.observe_reward(1.0); }) == ErrorKind::InvalidArgument);
  p.act(Observation{1, 0, b});
  CHECK(error_kind([&] { p.act(Observation{2, 0, b}); }) == ErrorKind::InvalidArgument);
  p.observe_reward(0.0);
  CHECK(error_kind([&] { p.act(Observation{4, 0, b}); }) == ErrorKind::HorizonExceeded);
  const Vec wrong = vec({1.0});
  CHECK(error_kind([&] { p.act(Observation{2, 0, wrong}); }) == ErrorKind::ShapeMismatch);
  opts.bonus.d = 3;
  CHECK(error_kind([&] { LinUcb(phi, opts); }) == ErrorKind::ShapeMismatch);
}

TEST_CASE("rank-one inverse updates stay accurate") {
  const std::size_t T = 3500;
  const auto phi = TransferFunction::action_context_outer(3, {vec({1.0, 0.0}), vec({0.6, 0.8})});
  LinUcbOptions opts;
  opts.lambda = std::sqrt(double(T));
  opts.horizon = T;
  opts.bonus = small_config();
  opts.bonus.d = phi.dim();
  LinUcb p(phi, opts);
  Engine e = make_engine(2);
  for (std::size_t t = 1; t <= T; ++t) {
    const Vec b = random_simplex(e, 2);
    const auto x = static_cast<std::size_t>(uniform_index(e, 2));
    p.act(Observation{t, x, b});
    p.observe_reward(standard_normal(e));
  }
  CHECK(p.max_inverse_drift() < LinUcb::kDriftTol);
  CHECK((p.gram_inverse() - p.ridge().gram.inverse()).cwiseAbs().maxCoeff() < LinUcb::kDriftTol);
}

TEST_CASE("oracle and random baselines") {
  const auto phi = TransferFunction::one_hot_action(3, 4);
  RewardSpec spec;
  spec.theta_star = {vec({0.8, -0.4, 0.3}), vec({-0.4, 0.8, 0.3})};
  spec.c_theta = 1.0;
  OraclePolicy oracle(phi, spec);
  Engine e = make_engine(4);
  for (int i = 0; i < 200; ++i) {
    const Vec b = random_simplex(e, 2);
    const auto x = static_cast<std::size_t>(uniform_index(e, 4));
    const auto a = oracle.act(Observation{1, x, b});
    for (std::size_t other = 0; other < 3; ++other)
      CHECK(belief_weighted_value(spec, phi, a, x, b) >= belief_weighted_value(spec, phi, other, x, b));
  }
  SUBCASE("shared parameters make beliefs irrelevant") {
    const auto outer = TransferFunction::action_context_outer(2, {vec({1.0, 0.0}), vec({0.0, 1.0}), vec({0.6, 0.8})});
    RewardSpec same;
    const Vec th = vec({0.3, -0.2, -0.1, 0.5});
    same.theta_star = {th, th};
    same.c_theta = 1.0;
    OraclePolicy o(outer, same);
    for (std::size_t x = 0; x < 3; ++x) {
      const auto first = o.act(Observation{1, x, vec({1.0, 0.0})});
      for (int i = 0; i < 20; ++i) CHECK(o.act(Observation{1, x, random_simplex(e, 2)}) == first);
    }
  }
  SUBCASE("random policy is uniform") {
    RandomPolicy r(3, 6);
    std::vector<int> counts(3, 0);
    const Vec b = vec({0.5, 0.5});
    for (int i = 0; i < 30000; ++i) ++counts[r.act(Observation{1, 0, b})];
    for (int c : counts) CHECK(std::abs(c - 10000) < 400);
  }
  SUBCASE("plug-in forgetting rate") {
    Mat M(2, 2);
    M << 0.8, 0.2, 0.3, 0.7;
    CHECK(plugin_gamma(M) == doctest::Approx(0.75));
    M << 1.0, 0.0, 0.3, 0.7;
    CHECK(error_kind([&] { plugin_gamma(M); }) == ErrorKind::NotMixing);
  }
}
