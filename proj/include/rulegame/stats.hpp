#pragma once

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace rulegame {

enum class TestMethod : std::uint8_t { Exact, NormalApprox };

constexpr std::string_view test_method_name(TestMethod m) noexcept {
  return m == TestMethod::Exact ? "EXACT" : "NORMAL_APPROX";
}

/// Which p-value route to use. Auto picks Exact when choose(n+m, n) <= 1e6.
enum class MethodChoice : std::uint8_t { Auto, Exact, NormalApprox };

struct TestResult {
  double statistic = 0.0; // rank sum of the first sample
  double p_less = 1.0;    // P(W <= observed): first sample tends smaller
  double p_greater = 1.0; // P(W >= observed): first sample tends larger
  double p_two_sided = 1.0;
  TestMethod method = TestMethod::Exact;
};

inline constexpr double kExactEnumerationLimit = 1e6;

/// Ranks 1..N with ties replaced by the mean of the ranks they span.
inline std::vector<double> midranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

namespace detail {

inline double choose(std::size_t n, std::size_t k) {
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i)
    r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Avoids reporting exactly 0 when the normal tail underflows.
inline double clamp_p(double p) { return std::clamp(p, DBL_MIN, 1.0); }

} // namespace detail

/// Wilcoxon rank-sum (Mann-Whitney) test with midranks for ties.
///
/// The exact route builds the null distribution of the first sample's rank
/// sum over all choose(n+m, n) equally likely label assignments, counting
/// subsets by doubled midrank sum (always an integer). The approximate route
/// uses a tie-corrected variance and a 0.5 continuity correction.
inline TestResult wilcoxon_rank_sum(std::span<const double> xs, std::span<const double> ys,
                                    MethodChoice choice = MethodChoice::Auto) {
  if (xs.empty() || ys.empty()) throw std::invalid_argument("wilcoxon_rank_sum: empty sample");
  const std::size_t n = xs.size(), m = ys.size(), total = n + m;
  std::vector<double> pooled(xs.begin(), xs.end());
  pooled.insert(pooled.end(), ys.begin(), ys.end());
  if (std::any_of(pooled.begin(), pooled.end(), [](double v) { return std::isnan(v); }))
    throw std::invalid_argument("wilcoxon_rank_sum: NaN in sample");
  const auto ranks = midranks(pooled);

  TestResult r;
  r.statistic = std::accumulate(ranks.begin(), ranks.begin() + static_cast<std::ptrdiff_t>(n), 0.0);

  bool exact = choice == MethodChoice::Exact ||
               (choice == MethodChoice::Auto &&
                detail::choose(total, n) <= kExactEnumerationLimit);
  if (exact) {
    r.method = TestMethod::Exact;
    std::vector<std::size_t> doubled(total);
    for (std::size_t i = 0; i < total; ++i)
      doubled[i] = static_cast<std::size_t>(std::lround(ranks[i] * 2.0));
    const std::size_t max_sum = total * (total + 1);
    // ways[k][s]: subsets of the items seen so far with k members and doubled sum s
    std::vector<std::vector<double>> ways(n + 1, std::vector<double>(max_sum + 1, 0.0));
    ways[0][0] = 1.0;
    for (std::size_t i = 0; i < total; ++i)
      for (std::size_t k = std::min(i + 1, n); k >= 1; --k)
        for (std::size_t s = max_sum; s >= doubled[i]; --s) {
          ways[k][s] += ways[k - 1][s - doubled[i]];
          if (s == doubled[i]) break;
        }
    const auto observed = static_cast<std::size_t>(std::lround(r.statistic * 2.0));
    double below = 0.0, above = 0.0, all = 0.0;
    for (std::size_t s = 0; s <= max_sum; ++s) {
      const double w = ways[n][s];
      all += w;
      if (s <= observed) below += w;
      if (s >= observed) above += w;
    }
    r.p_less = below / all;
    r.p_greater = above / all;
  } else {
    r.method = TestMethod::NormalApprox;
    const double dn = static_cast<double>(n), dm = static_cast<double>(m),
                 dt = static_cast<double>(total);
    std::vector<double> sorted = pooled;
    std::sort(sorted.begin(), sorted.end());
    double ties = 0.0;
    for (std::size_t i = 0; i < sorted.size();) {
      std::size_t j = i;
      while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i);
      ties += t * t * t - t;
      i = j;
    }
    const double mean = dn * (dt + 1.0) / 2.0;
    const double var = dn * dm / 12.0 * ((dt + 1.0) - ties / (dt * (dt - 1.0)));
    if (var <= 0.0) {
      r.p_less = r.p_greater = 1.0;
    } else {
      const double sd = std::sqrt(var);
      r.p_less = detail::clamp_p(detail::normal_cdf((r.statistic - mean + 0.5) / sd));
      r.p_greater = detail::clamp_p(detail::normal_cdf((mean - r.statistic + 0.5) / sd));
    }
  }
  r.p_less = std::min(r.p_less, 1.0);
  r.p_greater = std::min(r.p_greater, 1.0);
  r.p_two_sided = std::min(1.0, 2.0 * std::min(r.p_less, r.p_greater));
  return r;
}

} // namespace rulegame
