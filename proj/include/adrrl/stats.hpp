#pragma once

// Small statistical helpers used by tests, property suites and reports.

#include "adrrl/common.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <numeric>

namespace adrrl::stats {

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
  double stddev = 0.0;
  std::size_t n = 0;
};

inline MeanSe mean_se(std::span<const double> xs) {
  MeanSe r;
  r.n = xs.size();
  if (xs.empty()) return r;
  r.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    r.se = r.stddev / std::sqrt(static_cast<double>(xs.size()));
  }
  return r;
}

inline double median(std::vector<double> xs) {
  if (xs.empty()) throw UsageError("median of an empty sample");
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

// One-sided Welch test of H1: mean(a) < mean(b).
inline TestResult welch_less(std::span<const double> a, std::span<const double> b) {
  const auto ma = mean_se(a), mb = mean_se(b);
  const double va = ma.se * ma.se, vb = mb.se * mb.se;
  TestResult r;
  if (va + vb <= 0.0) {
    r.statistic = ma.mean < mb.mean ? -INFINITY : 0.0;
    r.p_value = ma.mean < mb.mean ? 0.0 : 1.0;
    return r;
  }
  r.statistic = (ma.mean - mb.mean) / std::sqrt(va + vb);
  const double df = (va + vb) * (va + vb) /
                    (va * va / static_cast<double>(ma.n - 1) + vb * vb / static_cast<double>(mb.n - 1));
  r.p_value = boost::math::cdf(boost::math::students_t(df), r.statistic);
  return r;
}

// Kolmogorov survival function Q(lambda) = 2 sum (-1)^(k-1) exp(-2 k^2 lambda^2).
inline double kolmogorov_q(double lambda) {
  if (lambda < 1e-3) return 1.0;
  double sum = 0.0, sign = 1.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
    sum += term;
    if (std::abs(term) < 1e-16) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

// Two-sample Kolmogorov-Smirnov test (asymptotic p-value with Stephens' correction).
inline TestResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw UsageError("ks test needs two nonempty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double ne = std::sqrt(na * nb / (na + nb));
  return {d, kolmogorov_q((ne + 0.12 + 0.11 / ne) * d)};
}

// Pearson chi-square goodness of fit against equal expected counts.
inline TestResult chi_square_uniform(std::span<const std::size_t> counts) {
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  const double expected = total / static_cast<double>(counts.size());
  double chi2 = 0.0;
  for (auto c : counts) chi2 += (static_cast<double>(c) - expected) * (static_cast<double>(c) - expected) / expected;
  boost::math::chi_squared dist(static_cast<double>(counts.size() - 1));
  return {chi2, boost::math::cdf(boost::math::complement(dist, chi2))};
}

inline double normal_quantile(double p) { return boost::math::quantile(boost::math::normal(), p); }
inline double normal_pdf(double x) { return boost::math::pdf(boost::math::normal(), x); }

}  // namespace adrrl::stats
