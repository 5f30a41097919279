#pragma once

// VaR / CVaR of discrete return distributions and the greedy solution of the
// dual problem  min_xi sum_k p_k xi_k z_k  s.t.  0 <= xi_k <= 1/alpha, sum_k p_k xi_k = 1.

#include "adrrl/common.hpp"

#include <algorithm>
#include <numeric>

namespace adrrl::cvar {

struct DiscreteDistribution {
  Vector outcomes;
  Vector probabilities;

  static DiscreteDistribution uniform(const Vector& outcomes) {
    if (outcomes.size() == 0) throw UsageError("distribution: no outcomes");
    return {outcomes, Vector::Constant(outcomes.size(), 1.0 / static_cast<double>(outcomes.size()))};
  }

  void validate() const {
    if (outcomes.size() == 0) throw UsageError("distribution: no outcomes");
    if (outcomes.size() != probabilities.size()) throw UsageError("distribution: size mismatch");
    if ((probabilities.array() < 0.0).any()) throw UsageError("distribution: negative probability");
    if (std::abs(probabilities.sum() - 1.0) > 1e-12) throw UsageError("distribution: probabilities must sum to 1");
    if (!outcomes.allFinite()) throw UsageError("distribution: non-finite outcome");
  }

  double mean() const { return outcomes.dot(probabilities); }

  // Indices sorted by outcome (ties kept in input order).
  std::vector<Eigen::Index> order() const {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(outcomes.size()));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return outcomes[a] < outcomes[b]; });
    return idx;
  }
};

inline void check_alpha(double alpha, bool allow_one = false) {
  if (!(alpha > 0.0 && (alpha < 1.0 || (allow_one && alpha == 1.0))))
    throw UsageError("cvar: alpha must lie in (0, 1)");
}

// max{ z : F(z) <= alpha } with the right-continuous cdf; the minimum outcome if none qualifies.
inline double var_alpha(const DiscreteDistribution& dist, double alpha) {
  dist.validate();
  check_alpha(alpha);
  const auto idx = dist.order();
  double best = dist.outcomes[idx.front()];
  double F = 0.0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    F += dist.probabilities[idx[k]];
    // F(z) includes every atom with the same value.
    if (k + 1 < idx.size() && dist.outcomes[idx[k + 1]] == dist.outcomes[idx[k]]) continue;
    if (F <= alpha + 1e-12) best = dist.outcomes[idx[k]];
    else break;
  }
  return best;
}

// (1/alpha) int_0^alpha F^{-1}(u) du
inline double cvar_alpha(const DiscreteDistribution& dist, double alpha) {
  dist.validate();
  check_alpha(alpha, true);
  double remaining = alpha, acc = 0.0;
  for (auto k : dist.order()) {
    const double take = std::min(remaining, dist.probabilities[k]);
    acc += take * dist.outcomes[k];
    remaining -= take;
    if (remaining <= 0.0) break;
  }
  if (remaining > 0.0) {
    // rounding left a sliver of mass; it belongs to the largest outcome
    acc += remaining * dist.outcomes.maxCoeff();
  }
  return acc / alpha;
}

struct DualSolution {
  double value = 0.0;
  Vector xi;
};

// Greedy: xi = 1/alpha on the lowest outcomes until mass alpha is used,
// a fractional weight on the boundary atom, 0 above.
inline DualSolution cvar_dual_oracle(const DiscreteDistribution& dist, double alpha) {
  dist.validate();
  check_alpha(alpha, true);
  DualSolution sol;
  sol.xi = Vector::Zero(dist.outcomes.size());
  double remaining = alpha;
  for (auto k : dist.order()) {
    if (remaining <= 0.0) break;
    const double p = dist.probabilities[k];
    if (p <= 0.0) continue;
    const double take = std::min(remaining, p);
    sol.xi[k] = take / (alpha * p);
    remaining -= take;
  }
  sol.value = (dist.probabilities.array() * sol.xi.array() * dist.outcomes.array()).sum();
  return sol;
}

inline double empirical_cvar(const Vector& samples, double alpha) {
  if (samples.size() == 0) throw UsageError("empirical_cvar: no samples");
  // Sorting directly avoids building the probability vector for large samples.
  std::vector<double> s(samples.data(), samples.data() + samples.size());
  std::sort(s.begin(), s.end());
  check_alpha(alpha, true);
  const double n = static_cast<double>(s.size());
  double remaining = alpha, acc = 0.0;
  for (double x : s) {
    const double take = std::min(remaining, 1.0 / n);
    acc += take * x;
    remaining -= take;
    if (remaining <= 0.0) break;
  }
  return acc / alpha;
}

inline double empirical_cvar(std::span<const double> samples, double alpha) {
  return empirical_cvar(Vector(Eigen::Map<const Vector>(samples.data(), static_cast<Eigen::Index>(samples.size()))),
                        alpha);
}

}  // namespace adrrl::cvar
