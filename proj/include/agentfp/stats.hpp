#pragma once

// Mann-Whitney U with rank-biserial effect size, Brown-Forsythe variance test,
// and effect-size labelling.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "agentfp/error.hpp"

namespace agentfp::stats {

inline constexpr double kSignificance = 0.01;
inline constexpr std::size_t kExactMaxTotal = 20;

struct MWUResult {
  double u = 0.0;
  double p_two_sided = 1.0;
  double r = 0.0;
};

struct BFResult {
  double w = 0.0;
  double p = 1.0;
  std::optional<double> sd_ratio;  // two-group case only
};

enum class EffectLabel { negligible, small, medium, large };

constexpr std::string_view to_string(EffectLabel l) {
  switch (l) {
    case EffectLabel::negligible: return "negligible";
    case EffectLabel::small: return "small";
    case EffectLabel::medium: return "medium";
    case EffectLabel::large: return "large";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Special functions

inline double normal_sf(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

namespace detail {

// Continued fraction for the incomplete beta (modified Lentz).
inline double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-15, kTiny = 1e-300;
  double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0, d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  return h;
}

}  // namespace detail

// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  double lbt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  double bt = std::exp(lbt);
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * detail::beta_cf(a, b, x) / a;
  return 1.0 - bt * detail::beta_cf(b, a, 1.0 - x) / b;
}

// P(F > f) for F ~ F(d1, d2).
inline double f_sf(double f, double d1, double d2) {
  if (!(f > 0.0)) return 1.0;
  if (std::isinf(f)) return 0.0;
  return incomplete_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f));
}

// ---------------------------------------------------------------------------
// Mann-Whitney U

// Midranks (1-based) of the pooled sample.
inline std::vector<double> midranks(std::span<const double> pooled) {
  std::vector<std::size_t> order(pooled.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return pooled[i] < pooled[j]; });
  std::vector<double> ranks(pooled.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && pooled[order[j + 1]] == pooled[order[i]]) ++j;
    double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

// U counts pairs with a_i > b_j, plus one half per tie.
inline double mann_whitney_u(std::span<const double> a, std::span<const double> b) {
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  auto ranks = midranks(pooled);
  double r1 = std::accumulate(ranks.begin(), ranks.begin() + static_cast<std::ptrdiff_t>(a.size()), 0.0);
  double n1 = static_cast<double>(a.size());
  return r1 - n1 * (n1 + 1.0) / 2.0;
}

// Exact two-sided p: fraction of all size-|a| subsets of the pooled midranks
// whose rank sum lies at least as far from its mean as the observed one.
// Works in doubled ranks so ties stay integral.
inline double mann_whitney_exact_p(std::span<const double> a, std::span<const double> b) {
  const std::size_t n1 = a.size(), n = a.size() + b.size();
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  auto ranks = midranks(pooled);
  std::vector<int> r2(n);
  for (std::size_t i = 0; i < n; ++i) r2[i] = static_cast<int>(std::lround(2.0 * ranks[i]));
  const int max_sum = std::accumulate(r2.begin(), r2.end(), 0);
  int observed = 0;
  for (std::size_t i = 0; i < n1; ++i) observed += r2[i];
  // ways[k][s]: number of k-subsets with doubled-rank sum s
  std::vector<std::vector<double>> ways(n1 + 1, std::vector<double>(max_sum + 1, 0.0));
  ways[0][0] = 1.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = std::min(i + 1, n1); k >= 1; --k)
      for (int s = max_sum; s >= r2[i]; --s) ways[k][s] += ways[k - 1][s - r2[i]];
  // Mean of the doubled rank sum is n1 * (n + 1); compare in units of half-ranks.
  const long long center = static_cast<long long>(n1) * static_cast<long long>(n + 1);
  const long long dev = std::llabs(static_cast<long long>(observed) - center);
  double extreme = 0.0, total = 0.0;
  for (int s = 0; s <= max_sum; ++s) {
    double w = ways[n1][s];
    if (w == 0.0) continue;
    total += w;
    if (std::llabs(static_cast<long long>(s) - center) >= dev) extreme += w;
  }
  return std::min(1.0, extreme / total);
}

// Normal approximation with tie-corrected variance and continuity correction.
inline double mann_whitney_normal_p(std::span<const double> a, std::span<const double> b) {
  const double n1 = static_cast<double>(a.size()), n2 = static_cast<double>(b.size()), n = n1 + n2;
  const double u = mann_whitney_u(a, b);
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  std::sort(pooled.begin(), pooled.end());
  double tie_term = 0.0;
  for (std::size_t i = 0; i < pooled.size();) {
    std::size_t j = i;
    while (j < pooled.size() && pooled[j] == pooled[i]) ++j;
    double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }
  const double var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
  if (!(var > 0.0)) return 1.0;
  const double z = std::max(0.0, std::abs(u - n1 * n2 / 2.0) - 0.5) / std::sqrt(var);
  return std::min(1.0, 2.0 * normal_sf(z));
}

inline MWUResult mann_whitney(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw StatsError("mann_whitney needs non-empty samples");
  MWUResult out;
  out.u = mann_whitney_u(a, b);
  out.r = 2.0 * out.u / (static_cast<double>(a.size()) * static_cast<double>(b.size())) - 1.0;
  out.p_two_sided = a.size() + b.size() <= kExactMaxTotal ? mann_whitney_exact_p(a, b)
                                                          : mann_whitney_normal_p(a, b);
  return out;
}

// ---------------------------------------------------------------------------
// Brown-Forsythe

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

inline double population_sd(std::span<const double> v) {
  double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

// One-way ANOVA F statistic; +inf when groups differ but have no spread.
inline double anova_f(const std::vector<std::vector<double>>& groups) {
  std::size_t n_total = 0;
  double grand = 0.0;
  for (const auto& g : groups) {
    n_total += g.size();
    grand += std::accumulate(g.begin(), g.end(), 0.0);
  }
  grand /= static_cast<double>(n_total);
  double ssb = 0.0, ssw = 0.0;
  for (const auto& g : groups) {
    double m = std::accumulate(g.begin(), g.end(), 0.0) / static_cast<double>(g.size());
    ssb += static_cast<double>(g.size()) * (m - grand) * (m - grand);
    for (double x : g) ssw += (x - m) * (x - m);
  }
  const double k = static_cast<double>(groups.size());
  const double df_b = k - 1.0, df_w = static_cast<double>(n_total) - k;
  if (ssw <= 0.0) return ssb <= 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return (ssb / df_b) / (ssw / df_w);
}

inline std::vector<std::vector<double>> median_deviations(const std::vector<std::vector<double>>& groups) {
  std::vector<std::vector<double>> z;
  z.reserve(groups.size());
  for (const auto& g : groups) {
    double m = median(g);
    std::vector<double> d;
    d.reserve(g.size());
    for (double x : g) d.push_back(std::abs(x - m));
    z.push_back(std::move(d));
  }
  return z;
}

inline void check_bf_groups(const std::vector<std::vector<double>>& groups) {
  if (groups.size() < 2) throw StatsError("brown_forsythe needs at least two groups");
  for (std::size_t i = 0; i < groups.size(); ++i)
    if (groups[i].size() < 2)
      throw StatsError("brown_forsythe group " + std::to_string(i) + " has fewer than two values");
}

inline BFResult brown_forsythe(const std::vector<std::vector<double>>& groups) {
  check_bf_groups(groups);
  BFResult out;
  auto z = median_deviations(groups);
  out.w = anova_f(z);
  std::size_t n_total = 0;
  for (const auto& g : groups) n_total += g.size();
  const double d1 = static_cast<double>(groups.size()) - 1.0;
  const double d2 = static_cast<double>(n_total) - static_cast<double>(groups.size());
  out.p = out.w == 0.0 ? 1.0 : f_sf(out.w, d1, d2);
  if (groups.size() == 2) {
    double s1 = population_sd(groups[0]), s2 = population_sd(groups[1]);
    if (s2 > 0.0) out.sd_ratio = s1 / s2;
    else out.sd_ratio = s1 > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
  }
  return out;
}

// Permutation p-value for the Brown-Forsythe statistic: the median-deviation
// values are reshuffled across groups and the ANOVA F recomputed.
inline double brown_forsythe_permutation_p(const std::vector<std::vector<double>>& groups,
                                           std::size_t resamples, std::uint64_t seed) {
  check_bf_groups(groups);
  auto z = median_deviations(groups);
  const double observed = anova_f(z);
  std::vector<double> pooled;
  std::vector<std::size_t> sizes;
  for (const auto& g : z) {
    pooled.insert(pooled.end(), g.begin(), g.end());
    sizes.push_back(g.size());
  }
  std::mt19937_64 rng(seed);
  std::size_t hits = 0;
  std::vector<std::vector<double>> perm(z.size());
  for (std::size_t r = 0; r < resamples; ++r) {
    std::shuffle(pooled.begin(), pooled.end(), rng);
    std::size_t off = 0;
    for (std::size_t g = 0; g < sizes.size(); ++g) {
      perm[g].assign(pooled.begin() + static_cast<std::ptrdiff_t>(off),
                     pooled.begin() + static_cast<std::ptrdiff_t>(off + sizes[g]));
      off += sizes[g];
    }
    // Relative slack so the identity arrangement always counts despite summation order.
    if (anova_f(perm) >= observed * (1.0 - 1e-12)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(resamples);
}

inline EffectLabel effect_label(double r) {
  const double m = std::abs(r);
  if (!(m <= 1.0)) throw StatsError("effect size outside [-1, 1]");
  if (m >= 0.5) return EffectLabel::large;
  if (m >= 0.3) return EffectLabel::medium;
  if (m >= 0.1) return EffectLabel::small;
  return EffectLabel::negligible;
}

}  // namespace agentfp::stats
