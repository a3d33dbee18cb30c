#pragma once

// Reference computations used as expected values in tests. They are written
// from the definitions, deliberately avoiding the library's algorithms
// (pairwise counting instead of ranks, subset enumeration instead of DP,
// direct sums instead of the ANOVA helper).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <vector>

namespace oracle {

// U by counting pairs.
inline double mwu_u(const std::vector<double>& a, const std::vector<double>& b) {
  double u = 0.0;
  for (double x : a)
    for (double y : b) u += x > y ? 1.0 : (x == y ? 0.5 : 0.0);
  return u;
}

// Exact two-sided p by enumerating every assignment of |a| pooled values to
// the first group and counting U at least as far from n1*n2/2.
inline double mwu_exact_p(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> pooled(a);
  pooled.insert(pooled.end(), b.begin(), b.end());
  const std::size_t n = pooled.size(), n1 = a.size();
  const double center = static_cast<double>(a.size() * b.size()) / 2.0;
  const double observed = std::abs(mwu_u(a, b) - center);
  std::vector<bool> mask(n, false);
  std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(n1), true);
  std::sort(mask.begin(), mask.end());
  std::size_t extreme = 0, total = 0;
  do {
    std::vector<double> ga, gb;
    for (std::size_t i = 0; i < n; ++i) (mask[i] ? ga : gb).push_back(pooled[i]);
    ++total;
    if (std::abs(mwu_u(ga, gb) - center) >= observed - 1e-9) ++extreme;
  } while (std::next_permutation(mask.begin(), mask.end()));
  return static_cast<double>(extreme) / static_cast<double>(total);
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

// One-way ANOVA F written as (SST - SSW) / df_b over SSW / df_w.
inline double anova_f(const std::vector<std::vector<double>>& groups) {
  double sum = 0.0, sumsq = 0.0;
  std::size_t n = 0;
  double ssw = 0.0;
  for (const auto& g : groups) {
    double gs = 0.0;
    for (double x : g) {
      sum += x;
      sumsq += x * x;
      gs += x;
    }
    n += g.size();
    const double m = gs / static_cast<double>(g.size());
    for (double x : g) ssw += (x - m) * (x - m);
  }
  const double sst = sumsq - sum * sum / static_cast<double>(n);
  const double k = static_cast<double>(groups.size());
  return ((sst - ssw) / (k - 1.0)) / (ssw / (static_cast<double>(n) - k));
}

inline std::vector<std::vector<double>> abs_median_deviations(const std::vector<std::vector<double>>& groups) {
  std::vector<std::vector<double>> z;
  for (const auto& g : groups) {
    const double m = median(g);
    std::vector<double> d;
    for (double x : g) d.push_back(std::fabs(x - m));
    z.push_back(d);
  }
  return z;
}

inline double bf_w(const std::vector<std::vector<double>>& groups) { return anova_f(abs_median_deviations(groups)); }

// Permutation p of the Brown-Forsythe statistic, reshuffling the deviation
// values between groups. Its own generator and shuffle, not std::shuffle.
inline double bf_permutation_p(const std::vector<std::vector<double>>& groups, std::size_t resamples,
                               std::uint32_t seed) {
  const auto z = abs_median_deviations(groups);
  const double observed = anova_f(z);
  std::vector<double> pooled;
  std::vector<std::size_t> sizes;
  for (const auto& g : z) {
    pooled.insert(pooled.end(), g.begin(), g.end());
    sizes.push_back(g.size());
  }
  std::minstd_rand rng(seed);
  std::size_t hits = 0;
  std::vector<std::vector<double>> perm(z.size());
  for (std::size_t r = 0; r < resamples; ++r) {
    for (std::size_t i = pooled.size() - 1; i > 0; --i) {
      const std::size_t j = rng() % (i + 1);
      std::swap(pooled[i], pooled[j]);
    }
    std::size_t off = 0;
    for (std::size_t g = 0; g < sizes.size(); ++g) {
      perm[g].assign(pooled.begin() + static_cast<std::ptrdiff_t>(off),
                     pooled.begin() + static_cast<std::ptrdiff_t>(off + sizes[g]));
      off += sizes[g];
    }
    if (anova_f(perm) >= observed * (1.0 - 1e-12)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(resamples);
}

// Shannon entropy in nats divided by ln k.
inline double normalized_entropy(const std::vector<double>& counts) {
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  if (counts.size() < 2) return 0.0;
  double h = 0.0;
  for (double c : counts)
    if (c > 0) h -= c / total * std::log(c / total);
  return h / std::log(static_cast<double>(counts.size()));
}

inline double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace oracle
