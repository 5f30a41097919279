#pragma once

#include "adrrl/common.hpp"

#include <numbers>

namespace adrrl::diffusion {

// Steps are indexed 1..N. alpha_bar(0) = 1 by convention.
struct DiffusionSchedule {
  int N = 0;
  Vector betas;       // betas[i-1] = beta_i
  Vector alpha_bars;  // alpha_bars[i-1] = prod_{j<=i} (1 - beta_j)
  double x0_clip = 0.0;  // bound on |x0 estimate| inside the posterior mean; 0 disables

  double beta(int i) const { return betas[check(i) - 1]; }
  double alpha_bar(int i) const { return i == 0 ? 1.0 : alpha_bars[check(i) - 1]; }
  double sigma(int i) const { return std::sqrt(beta(i)); }  // Sigma_i = beta_i I

  void validate() const {
    if (N < 1 || betas.size() != N || alpha_bars.size() != N) throw ConfigError("schedule: inconsistent sizes");
    for (int i = 1; i <= N; ++i) {
      if (!(beta(i) > 0.0 && beta(i) < 1.0)) throw ConfigError("schedule: beta outside (0, 1)");
      if (!(alpha_bar(i) < alpha_bar(i - 1))) throw ConfigError("schedule: alpha_bar not decreasing");
    }
    if (!(x0_clip >= 0.0)) throw ConfigError("schedule: x0_clip must be nonneg");
  }

 private:
  int check(int i) const {
    if (i < 1 || i > N) throw UsageError("schedule: step " + std::to_string(i) + " outside [1, " + std::to_string(N) + "]");
    return i;
  }
};

inline DiffusionSchedule cosine_schedule(int N, double s = 0.008, double beta_max = 0.999) {
  if (N < 2) throw ConfigError("cosine_schedule: need at least 2 steps");
  if (!(beta_max > 0.0 && beta_max < 1.0)) throw ConfigError("cosine_schedule: beta_max must lie in (0, 1)");
  auto f = [&](double i) {
    const double c = std::cos((i / N + s) / (1.0 + s) * std::numbers::pi / 2.0);
    return c * c;
  };
  DiffusionSchedule sch;
  sch.N = N;
  sch.betas.resize(N);
  sch.alpha_bars.resize(N);
  const double f0 = f(0.0);
  double prod = 1.0;
  for (int i = 1; i <= N; ++i) {
    const double beta = 1.0 - (f(i) / f0) / (f(i - 1) / f0);
    sch.betas[i - 1] = std::clamp(beta, 1e-8, beta_max);
    prod *= 1.0 - sch.betas[i - 1];
    sch.alpha_bars[i - 1] = prod;
  }
  return sch;
}

}  // namespace adrrl::diffusion
