#pragma once

// Adversarial guidance of the reverse diffusion chain.
//
// A guided step samples tau_{i-1} ~ N(mu - c_i beta_i g_i, beta_i I) where
// g_i is the return gradient at mu (state entries only). Relative to the
// unguided step N(mu, beta_i I) its density ratio is
//   xi = exp(-1/2 (2 c_i D.g_i + c_i^2 beta_i |g_i|^2)),  D = tau_{i-1} - mu,
// and the per-step scale is capped by
//   c_i = min( sqrt(2 log eta_i / (beta_i |g_i|^2)), (R - |mu|_inf) / |beta_i g_i|_inf )
// with eta_i = (1/alpha)^(1/N) and R = 3 sigma_i. All quantities live in
// standardized trajectory space. The infinity norm of mu is over state entries.

#include "adrrl/diffusion/denoiser.hpp"
#include "adrrl/envs/trajectory.hpp"
#include "adrrl/returns/return_model.hpp"

#include <spdlog/spdlog.h>

#include <limits>

namespace adrrl::guidance {

enum class EtaRule { uniform_power };

// three_sigma: feasible set |tau_{i-1}|_inf <= R, second term clamped at 0 when |mu|_inf >= R.
// three_sigma_centered: feasible set |tau_{i-1} - mu|_inf <= R, second term R / |beta g|_inf.
enum class RRule { three_sigma, three_sigma_centered };

// Deliberate bugs used to check that the property suites notice them.
enum class Mutation { none, flip_sign, inflate_10x };

inline std::string to_string(RRule r) { return r == RRule::three_sigma ? "three_sigma" : "three_sigma_centered"; }
inline RRule parse_r_rule(std::string_view s) {
  if (s == "three_sigma") return RRule::three_sigma;
  if (s == "three_sigma_centered") return RRule::three_sigma_centered;
  throw ConfigError("unknown guidance R rule '" + std::string(s) + "'");
}
inline std::string to_string(Mutation m) {
  switch (m) {
    case Mutation::none: return "none";
    case Mutation::flip_sign: return "flip_sign";
    case Mutation::inflate_10x: return "inflate_10x";
  }
  return "?";
}
inline Mutation parse_mutation(std::string_view s) {
  if (s == "none") return Mutation::none;
  if (s == "flip_sign") return Mutation::flip_sign;
  if (s == "inflate_10x") return Mutation::inflate_10x;
  throw ConfigError("unknown guidance mutation '" + std::string(s) + "'");
}

struct GuidanceConfig {
  double alpha = 0.1;
  int n_steps = 50;
  EtaRule eta_rule = EtaRule::uniform_power;
  RRule r_rule = RRule::three_sigma;
  double r_sigmas = 3.0;
  bool enabled = true;
  double action_scale = 1.0;
  bool final_step_noise = false;
  Mutation mutation = Mutation::none;

  void validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("guidance: alpha must lie in (0, 1]");
    if (n_steps < 1) throw ConfigError("guidance: n_steps must be positive");
    if (!(r_sigmas > 0.0)) throw ConfigError("guidance: r_sigmas must be positive");
    if (!(action_scale >= 0.0)) throw ConfigError("guidance: action_scale must be nonneg");
  }

  // log eta_i; uniform power gives prod_i eta_i = 1/alpha.
  double log_eta(int /*i*/) const { return -std::log(alpha) / n_steps; }
  double eta(int i) const { return std::exp(log_eta(i)); }
  bool active() const { return enabled && alpha < 1.0; }
};

struct CiResult {
  double c = 0.0;
  double first = std::numeric_limits<double>::infinity();   // budget term
  double second = std::numeric_limits<double>::infinity();  // box term
  bool degenerate = false;  // g ~ 0 or eta = 1
  bool clamped = false;     // box term clamped at 0
};

// g: gradient (state entries; zeros elsewhere are harmless), beta: Sigma_i = beta I.
inline CiResult compute_ci(const Eigen::Ref<const Vector>& g, double beta, double log_eta, double mu_inf_norm,
                           double R, RRule rule = RRule::three_sigma) {
  if (!g.allFinite()) throw GuidanceError("compute_ci: non-finite gradient");
  CiResult r;
  const double gnorm2 = g.squaredNorm();
  if (log_eta <= 0.0 || std::sqrt(gnorm2) < 1e-12) {
    r.degenerate = true;
    return r;
  }
  r.first = std::sqrt(2.0 * log_eta / (beta * gnorm2));
  const double sg_inf = beta * g.cwiseAbs().maxCoeff();
  if (rule == RRule::three_sigma) {
    r.second = (R - mu_inf_norm) / sg_inf;
    if (r.second < 0.0) {
      r.second = 0.0;
      r.clamped = true;
    }
  } else {
    r.second = R / sg_inf;
  }
  r.c = std::min(r.first, r.second);
  return r;
}

// Matrix-normal form: G is d_s x T (or any p x q), U and V the diagonal row/column covariances.
// Tr[V^-1 (U G V)^T U^-1 (U G V)] replaces g^T Sigma g and |U G V|_inf replaces |Sigma g|_inf.
inline CiResult compute_ci_matrix(const Matrix& G, const Vector& U, const Vector& V, double log_eta,
                                  double M_inf_norm, double R) {
  if (U.size() != G.rows() || V.size() != G.cols()) throw ConfigError("compute_ci_matrix: shape mismatch");
  if ((U.array() <= 0.0).any() || (V.array() <= 0.0).any())
    throw GuidanceError("compute_ci_matrix: singular covariance");
  if ((U.array() >= 1.0).any() || (V.array() >= 1.0).any())
    throw UsageError("compute_ci_matrix: covariance entries must lie in [0, 1)");
  if (!G.allFinite()) throw GuidanceError("compute_ci_matrix: non-finite gradient");
  CiResult r;
  const Matrix UGV = U.asDiagonal() * G * V.asDiagonal();
  const double inf = UGV.cwiseAbs().maxCoeff();
  if (log_eta <= 0.0 || inf == 0.0) {
    r.degenerate = true;
    return r;
  }
  const Matrix inner = V.cwiseInverse().asDiagonal() * UGV.transpose() * U.cwiseInverse().asDiagonal() * UGV;
  r.first = std::sqrt(2.0 * log_eta / inner.trace());
  r.second = (R - M_inf_norm) / inf;
  if (r.second < 0.0) {
    r.second = 0.0;
    r.clamped = true;
  }
  r.c = std::min(r.first, r.second);
  return r;
}

// Signed scale actually applied: shift = -c_eff beta g.
inline double effective_scale(double c, Mutation m) {
  switch (m) {
    case Mutation::flip_sign: return -c;
    case Mutation::inflate_10x: return 10.0 * c;
    case Mutation::none: break;
  }
  return c;
}

// log xi = -1/2 (2 c D.g + c^2 beta |g|^2)
inline double log_xi(double c, const Eigen::Ref<const Vector>& D, const Eigen::Ref<const Vector>& g, double beta) {
  return -0.5 * (2.0 * c * D.dot(g) + c * c * beta * g.squaredNorm());
}

// Isotropic Gaussian log density.
inline double log_normal(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& mean, double var) {
  const double d = static_cast<double>(x.size());
  return -0.5 * ((x - mean).squaredNorm() / var + d * std::log(2.0 * std::numbers::pi * var));
}

struct GuidedStepRecord {
  int i = 0;
  double c = 0.0;       // signed scale applied
  double beta = 0.0;
  Vector g;
  Vector mu;
  Vector tau_prev;      // Gaussian draw, before action guidance and inpainting
  double log_xi = 0.0;
};

// |log N(tau; mu - c beta g, beta) - log xi - log N(tau; mu, beta)|
inline double density_identity_error(const GuidedStepRecord& r) {
  const Vector guided_mean = r.mu - r.c * r.beta * r.g;
  return std::abs(log_normal(r.tau_prev, guided_mean, r.beta) - r.log_xi - log_normal(r.tau_prev, r.mu, r.beta));
}

// Post-step hook that edits the action block of tau_{i-1} (policy consistency).
using ActionGuide = std::function<void(Matrix& tau_prev, int i, double beta)>;

struct StepStats {
  int guided = 0;     // columns with c > 0
  int clamped = 0;    // box term clamped to 0
  int fallback = 0;   // guidance errors, step ran unguided
  double mean_c = 0.0;
};

struct GuidedStep {
  Matrix tau_prev;
  Vector log_xi;  // per column
  Vector c;       // signed scale per column
  StepStats stats;
};

struct GuidanceContext {
  const diffusion::EpsFn& eps;
  const returns::ReturnModel& z;
  const diffusion::DiffusionSchedule& sch;
  const GuidanceConfig& cfg;
  const envs::TrajectoryLayout& layout;
  std::optional<diffusion::Inpaint> inpaint;
  ActionGuide action_guide;  // may be empty
};

// Per-column c_i at posterior mean mu with gradient g.
inline Vector scales_for(const GuidanceContext& ctx, const Matrix& mu, const Matrix& g, int i, StepStats& stats) {
  const int n = static_cast<int>(mu.cols());
  Vector c = Vector::Zero(n);
  if (!ctx.cfg.active()) return c;
  const double beta = ctx.sch.beta(i);
  const double R = ctx.cfg.r_sigmas * ctx.sch.sigma(i);
  const int sb = ctx.layout.state_block();
  for (int b = 0; b < n; ++b) {
    try {
      const double mu_inf = mu.col(b).head(sb).cwiseAbs().maxCoeff();
      const auto r = compute_ci(g.col(b).head(sb), beta, ctx.cfg.log_eta(i), mu_inf, R, ctx.cfg.r_rule);
      c[b] = effective_scale(r.c, ctx.cfg.mutation);
      stats.clamped += r.clamped;
      stats.guided += r.c > 0.0;
    } catch (const GuidanceError& e) {
      ++stats.fallback;
      spdlog::warn("guidance fallback at step {}: {}", i, e.what());
    }
  }
  stats.mean_c = n > 0 ? c.mean() : 0.0;
  return c;
}

// One reverse step over a batch of chains. The RNG draw (one d x n normal
// matrix) is identical to diffusion::ancestral_step, so disabled guidance
// reproduces the unguided sampler exactly.
inline GuidedStep guided_step(const GuidanceContext& ctx, Matrix tau_i, int i, Rng& rng,
                              std::vector<GuidedStepRecord>* records = nullptr) {
  if (ctx.inpaint) ctx.inpaint->apply(tau_i);
  GuidedStep out;
  const Matrix mu = diffusion::posterior_mean(ctx.eps, tau_i, i, ctx.sch);
  const int n = static_cast<int>(mu.cols());
  const double beta = ctx.sch.beta(i);
  Matrix g = Matrix::Zero(mu.rows(), n);
  if (ctx.cfg.active()) g = returns::return_gradient(ctx.z, mu, i);
  out.c = scales_for(ctx, mu, g, i, out.stats);

  const Matrix noise = normal_matrix(mu.rows(), n, rng);
  const bool noisy = diffusion::step_adds_noise(i, {std::nullopt, ctx.cfg.final_step_noise});
  out.tau_prev = mu;
  if (noisy) out.tau_prev += ctx.sch.sigma(i) * noise;
  out.log_xi = Vector::Zero(n);
  for (int b = 0; b < n; ++b) {
    if (out.c[b] == 0.0) continue;
    out.tau_prev.col(b) -= out.c[b] * beta * g.col(b);
    out.log_xi[b] = log_xi(out.c[b], out.tau_prev.col(b) - mu.col(b), g.col(b), beta);
  }
  if (records) {
    for (int b = 0; b < n; ++b)
      records->push_back({i, out.c[b], beta, g.col(b), mu.col(b), out.tau_prev.col(b), out.log_xi[b]});
  }
  if (ctx.action_guide && ctx.cfg.action_scale > 0.0) ctx.action_guide(out.tau_prev, i, beta);
  return out;
}

struct ChainResult {
  Matrix tau0;               // standardized, one chain per column
  Vector log_weight;         // sum_i log xi_i per chain
  int envelope_violations = 0;
  int clamped = 0;
  int fallback = 0;
  int guided = 0;
  std::vector<double> mean_c;  // per step, index N - i
  std::vector<GuidedStepRecord> records;
};

// Full guided reverse chain from tau_N ~ N(0, I).
inline ChainResult adversarial_sample(const GuidanceContext& ctx, Eigen::Index n, Rng& rng,
                                      bool keep_records = false) {
  ChainResult out;
  Matrix tau = normal_matrix(ctx.layout.dim(), n, rng);
  out.log_weight = Vector::Zero(n);
  for (int i = ctx.sch.N; i >= 1; --i) {
    auto step = guided_step(ctx, std::move(tau), i, rng, keep_records ? &out.records : nullptr);
    tau = std::move(step.tau_prev);
    out.log_weight += step.log_xi;
    out.clamped += step.stats.clamped;
    out.fallback += step.stats.fallback;
    out.guided += step.stats.guided;
    out.mean_c.push_back(step.stats.mean_c);
  }
  if (ctx.inpaint) ctx.inpaint->apply(tau);
  out.tau0 = std::move(tau);
  // prod xi <= 1/alpha is expected but not guaranteed pointwise; count and report.
  const double bound = -std::log(ctx.cfg.alpha) + std::log1p(1e-9);
  for (Eigen::Index b = 0; b < n; ++b) out.envelope_violations += out.log_weight[b] > bound;
  if (out.envelope_violations > 0)
    spdlog::debug("adversarial_sample: {} of {} chains exceed the 1/alpha envelope", out.envelope_violations, n);
  return out;
}

struct WeightEstimate {
  double mean = 0.0;
  double se = 0.0;
  Vector weights;
};

// E over UNGUIDED chains of prod_i xi_i; every step samples (no deterministic final step).
inline WeightEstimate envelope_weight_expectation(const GuidanceContext& ctx, Eigen::Index n_chains, Rng& rng) {
  if (n_chains < 1) throw UsageError("envelope_weight_expectation: need at least one chain");
  Matrix tau = normal_matrix(ctx.layout.dim(), n_chains, rng);
  Vector logw = Vector::Zero(n_chains);
  StepStats stats;
  for (int i = ctx.sch.N; i >= 1; --i) {
    if (ctx.inpaint) ctx.inpaint->apply(tau);
    const Matrix mu = diffusion::posterior_mean(ctx.eps, tau, i, ctx.sch);
    const double beta = ctx.sch.beta(i);
    Matrix g = Matrix::Zero(mu.rows(), mu.cols());
    if (ctx.cfg.active()) g = returns::return_gradient(ctx.z, mu, i);
    const Vector c = scales_for(ctx, mu, g, i, stats);
    tau = mu + ctx.sch.sigma(i) * normal_matrix(mu.rows(), mu.cols(), rng);
    for (Eigen::Index b = 0; b < n_chains; ++b)
      if (c[b] != 0.0) logw[b] += log_xi(c[b], tau.col(b) - mu.col(b), g.col(b), beta);
  }
  WeightEstimate est;
  est.weights = logw.array().exp().matrix();
  est.mean = est.weights.mean();
  if (n_chains > 1)
    est.se = std::sqrt((est.weights.array() - est.mean).square().sum() / static_cast<double>(n_chains - 1) /
                       static_cast<double>(n_chains));
  return est;
}

}  // namespace adrrl::guidance
