#include <cmath>
#include <set>

#include "doctest.h"
#include "lbl/rng.hpp"

TEST_CASE("derived seeds are deterministic and path sensitive") {
  CHECK(lbl::derive_seed(7, {1, 2}) == lbl::derive_seed(7, {1, 2}));
  CHECK(lbl::derive_seed(7, {1, 2}) != lbl::derive_seed(7, {2, 1}));
  CHECK(lbl::derive_seed(7, {1}) != lbl::derive_seed(8, {1}));
  CHECK(lbl::stream_id("latent-chain") == lbl::stream_id("latent-chain"));
  CHECK(lbl::stream_id("latent-chain") != lbl::stream_id("emissions"));
}

TEST_CASE("engines built from one seed replay the same stream") {
  auto a = lbl::make_engine(99);
  auto b = lbl::make_engine(99);
  for (int i = 0; i < 100; ++i) CHECK(a() == b());
}

TEST_CASE("uniform01 and uniform_index stay in range") {
  auto e = lbl::make_engine(3);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 10000; ++i) {
    const double u = lbl::uniform01(e);
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const auto k = lbl::uniform_index(e, 5);
    CHECK(k < 5);
    seen.insert(k);
  }
  CHECK(seen.size() == 5);
}

TEST_CASE("standard normal has mean 0 and variance 1") {
  auto e = lbl::make_engine(11);
  const int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = lbl::standard_normal(e);
    s += z;
    s2 += z * z;
  }
  const double mean = s / n;
  CHECK(std::abs(mean) < 4.0 / std::sqrt(n));
  CHECK(std::abs(s2 / n - mean * mean - 1.0) < 0.02);
}
