#include <catch_amalgamated.hpp>

#include <random>

#include "agentfp/stats.hpp"
#include "oracles.hpp"

using namespace agentfp;
using namespace agentfp::stats;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("mann_whitney on separated samples") {
  std::vector<double> a{1, 2, 3}, b{4, 5, 6};
  auto m = mann_whitney(a, b);
  CHECK(m.u == 0);
  CHECK(m.r == -1);
  CHECK_THAT(m.p_two_sided, WithinAbs(oracle::mwu_exact_p(a, b), 1e-12));
  CHECK_THAT(m.p_two_sided, WithinAbs(0.1, 1e-12));  // 2 of 20 labelings
}

TEST_CASE("mann_whitney on identical constant samples") {
  std::vector<double> a{1, 1, 1};
  auto m = mann_whitney(a, a);
  CHECK(m.u == 4.5);
  CHECK(m.r == 0);
  CHECK(m.p_two_sided == 1.0);
}

TEST_CASE("mann_whitney rejects empty samples") {
  std::vector<double> a{1}, none;
  CHECK_THROWS_AS(mann_whitney(a, none), StatsError);
  CHECK_THROWS_AS(mann_whitney(none, a), StatsError);
}

TEST_CASE("mann_whitney exact branch matches subset enumeration") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 60; ++rep) {
    std::uniform_int_distribution<int> size(1, 9), val(0, 6);
    std::vector<double> a(static_cast<std::size_t>(size(rng))), b(static_cast<std::size_t>(size(rng)));
    for (auto& x : a) x = val(rng);
    for (auto& x : b) x = val(rng);
    auto m = mann_whitney(a, b);
    INFO("n1=" << a.size() << " n2=" << b.size());
    CHECK(m.u == oracle::mwu_u(a, b));
    CHECK_THAT(m.p_two_sided, WithinAbs(oracle::mwu_exact_p(a, b), 1e-9));
  }
}

TEST_CASE("mann_whitney large samples use the normal approximation") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0, 1);
  std::vector<double> a(30), b(30);
  for (auto& x : a) x = n(rng);
  for (auto& x : b) x = n(rng) + 0.8;
  auto m = mann_whitney(a, b);
  CHECK(m.u == oracle::mwu_u(a, b));
  CHECK(m.r < 0);
  CHECK(m.p_two_sided < 0.05);
  // all-tied pooled sample has zero variance
  std::vector<double> c(15, 2.0), d(15, 2.0);
  CHECK(mann_whitney(c, d).p_two_sided == 1.0);
}

TEST_CASE("mann_whitney properties") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 100);
  for (std::size_t n1 : {3u, 8u, 14u, 25u}) {
    std::vector<double> a(n1), b(n1 + 2);
    for (auto& x : a) x = u(rng);
    for (auto& x : b) x = u(rng) + 10;
    auto ab = mann_whitney(a, b), ba = mann_whitney(b, a);
    CHECK_THAT(ab.r, WithinAbs(-ba.r, 1e-12));
    CHECK_THAT(ab.p_two_sided, WithinAbs(ba.p_two_sided, 1e-12));
    CHECK(ab.p_two_sided >= 0.0);
    CHECK(ab.p_two_sided <= 1.0);
    // strictly increasing transform of the pooled values
    auto ta = a, tb = b;
    for (auto& x : ta) x = std::exp(x / 20.0) + 3;
    for (auto& x : tb) x = std::exp(x / 20.0) + 3;
    auto t = mann_whitney(ta, tb);
    CHECK(t.u == ab.u);
    CHECK(t.r == ab.r);
    CHECK_THAT(t.p_two_sided, WithinAbs(ab.p_two_sided, 1e-12));
  }
}

TEST_CASE("normal approximation tracks exact p on tie-free samples") {
  for (std::size_t n1 = 3; n1 <= 9; ++n1)
    for (std::size_t n2 = 3; n1 + n2 <= 12; ++n2) {
      std::vector<double> pooled(n1 + n2);
      std::iota(pooled.begin(), pooled.end(), 0.0);
      std::mt19937_64 rng(n1 * 31 + n2);
      for (int rep = 0; rep < 5; ++rep) {
        std::shuffle(pooled.begin(), pooled.end(), rng);
        std::vector<double> a(pooled.begin(), pooled.begin() + static_cast<std::ptrdiff_t>(n1));
        std::vector<double> b(pooled.begin() + static_cast<std::ptrdiff_t>(n1), pooled.end());
        CHECK_THAT(mann_whitney_normal_p(a, b), WithinAbs(oracle::mwu_exact_p(a, b), 0.05));
      }
    }
}

TEST_CASE("brown_forsythe") {
  SECTION("identical groups") {
    auto r = brown_forsythe({{1, 2, 3}, {1, 2, 3}});
    CHECK(r.w == 0);
    CHECK(r.p == 1);
    REQUIRE(r.sd_ratio);
    CHECK(*r.sd_ratio == 1);
  }
  SECTION("statistic matches the oracle") {
    std::vector<std::vector<double>> g{{0, 10, 20}, {9, 10, 11}};
    auto r = brown_forsythe(g);
    CHECK_THAT(r.w, WithinAbs(oracle::bf_w(g), 1e-9));
    // z = {10,0,10} vs {1,0,1}: between SS 54, within SS 202/3 on 4 df
    CHECK_THAT(r.w, WithinAbs(54.0 / (202.0 / 3.0 / 4.0), 1e-9));
    CHECK_THAT(r.p, WithinAbs(0.1477669, 1e-6));
    CHECK_THAT(*r.sd_ratio, WithinRel(10.0, 1e-12));
  }
  SECTION("location and scale invariance") {
    std::vector<std::vector<double>> g{{1, 4, 9, 2}, {3, 3.5, 8, 1, 0}, {7, 2, 2.5}};
    auto base = brown_forsythe(g);
    auto shifted = g;
    for (auto& x : shifted[1]) x += 100;
    auto s = brown_forsythe(shifted);
    CHECK_THAT(s.w, WithinRel(base.w, 1e-9));
    auto scaled = g;
    for (auto& grp : scaled)
      for (auto& x : grp) x *= 3.7;
    auto c = brown_forsythe(scaled);
    CHECK_THAT(c.w, WithinRel(base.w, 1e-9));
    CHECK_THAT(c.p, WithinRel(base.p, 1e-9));
    CHECK_FALSE(base.sd_ratio);
  }
  SECTION("zero spread everywhere") {
    auto r = brown_forsythe({{5, 5}, {7, 7}});
    CHECK(r.w == 0);
    CHECK(r.p == 1);
  }
  SECTION("errors") {
    CHECK_THROWS_AS(brown_forsythe({{1, 2, 3}}), StatsError);
    CHECK_THROWS_AS(brown_forsythe({{1, 2, 3}, {4}}), StatsError);
  }
  SECTION("F tail agrees with a permutation oracle on moderate samples") {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> n(0, 1);
    std::vector<std::vector<double>> g(2, std::vector<double>(50));
    for (auto& x : g[0]) x = n(rng);
    for (auto& x : g[1]) x = 1.3 * n(rng);
    auto r = brown_forsythe(g);
    double perm = oracle::bf_permutation_p(g, 20000, 9);
    INFO("F tail " << r.p << " permutation " << perm);
    CHECK(std::abs(r.p - perm) <= 0.05 * perm + 0.01);
    double lib_perm = brown_forsythe_permutation_p(g, 20000, 9);
    CHECK(std::abs(lib_perm - perm) <= 0.05 * perm + 0.01);
  }
}

TEST_CASE("effect_label") {
  CHECK(effect_label(1.0) == EffectLabel::large);
  CHECK(effect_label(-0.35) == EffectLabel::medium);
  CHECK(effect_label(0.09) == EffectLabel::negligible);
  CHECK(effect_label(0.1) == EffectLabel::small);
  CHECK(effect_label(-0.5) == EffectLabel::large);
  CHECK_THROWS_AS(effect_label(1.2), StatsError);
  CHECK(to_string(EffectLabel::medium) == "medium");
}
