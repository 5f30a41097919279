#pragma once

// Adversarial trajectory generation with the trained world model: chunked
// guided chains with s_0 inpainting and policy action consistency, then
// reward labelling.

#include "adrrl/guidance/guidance.hpp"
#include "adrrl/orchestrator/checkpoint.hpp"
#include "adrrl/orchestrator/parallel.hpp"

namespace adrrl::orchestrator {

// Pulls the action block toward the policy mean of the states it sits next to:
// a += k (mu(s) - a) with k = min(scale * beta * std_a^2 / sigma_pi^2, 1), i.e.
// a beta-weighted step along grad_a log pi in standardized coordinates.
inline guidance::ActionGuide policy_action_guide(const policy::GaussianPolicy& pi,
                                                 const diffusion::Standardizer& st,
                                                 const envs::TrajectoryLayout& layout, double scale) {
  return [&pi, &st, layout, scale](Matrix& tau, int /*i*/, double beta) {
    const int L = layout.length, ds = layout.state_dim, da = layout.action_dim;
    const Eigen::Index n = tau.cols();
    Matrix S(ds, n * L);
    for (Eigen::Index b = 0; b < n; ++b)
      for (int t = 0; t < L; ++t) {
        const int o = layout.state_offset(t);
        S.col(b * L + t) = st.mean.segment(o, ds) + st.std.segment(o, ds).cwiseProduct(tau.col(b).segment(o, ds));
      }
    const Matrix mu = pi.mean(S);
    const Vector var = (2.0 * pi.log_std).array().exp().matrix();
    for (int t = 0; t < L; ++t) {
      const int o = layout.action_offset(t);
      for (int j = 0; j < da; ++j) {
        const double sa = st.std[o + j], ma = st.mean[o + j];
        const double k = std::min(scale * beta * sa * sa / var[j], 1.0);
        for (Eigen::Index b = 0; b < n; ++b) {
          const double a = ma + sa * tau(o + j, b);
          tau(o + j, b) = (a + k * (mu(j, b * L + t) - a) - ma) / sa;
        }
      }
    }
  };
}

struct SyntheticBatch {
  Matrix tau0;  // standardized, one chain per column
  std::vector<envs::Trajectory> windows;  // raw units, clipped actions, model rewards
  Vector returns;                         // discounted window returns under the reward model
  Vector log_weight;                      // log prod xi per chain
  int envelope_violations = 0;
  int clamped = 0;
  int fallback = 0;
  int guided = 0;
  double mean_c = 0.0;  // over chains and steps
};

struct SampleRequest {
  guidance::GuidanceConfig guidance;
  Matrix s0;  // raw initial states, d_s x count; empty: no inpainting
  int count = 0;
  std::uint64_t seed = 0;
  bool action_guide = true;
  int workers = 1;
  int chunk = 64;
};

inline SyntheticBatch generate_synthetic(const Checkpoint& ck, const SampleRequest& req) {
  if (req.count <= 0) throw UsageError("generate_synthetic: count must be positive");
  const auto layout = ck.layout();
  if (req.s0.size() > 0 && (req.s0.rows() != layout.state_dim || req.s0.cols() != req.count))
    throw ConfigError("generate_synthetic: s0 must be d_s x count");
  const std::size_t n_chunks = (static_cast<std::size_t>(req.count) + req.chunk - 1) / req.chunk;
  auto run_chunk = [&](std::size_t k) {
    const int first = static_cast<int>(k) * req.chunk;
    const int n = std::min(req.chunk, req.count - first);
    const diffusion::EpsFn eps = diffusion::mlp_eps(ck.denoiser);
    guidance::GuidanceContext ctx{eps, ck.return_model, ck.schedule, req.guidance, layout, std::nullopt, {}};
    if (req.s0.size() > 0) {
      Matrix s0 = req.s0.middleCols(first, n);
      for (Eigen::Index b = 0; b < n; ++b) s0.col(b) = ck.standardizer.apply_segment(s0.col(b), 0);
      ctx.inpaint = diffusion::Inpaint{s0};
    }
    if (req.action_guide)
      ctx.action_guide = policy_action_guide(ck.policy, ck.standardizer, layout, req.guidance.action_scale);
    Rng rng(derive_seed(req.seed, k));
    return guidance::adversarial_sample(ctx, n, rng);
  };
  const auto chunks = parallel_map(n_chunks, req.workers, run_chunk);

  SyntheticBatch out;
  out.tau0.resize(layout.dim(), req.count);
  out.log_weight.resize(req.count);
  Eigen::Index c = 0;
  double c_sum = 0.0;
  for (const auto& ch : chunks) {
    out.tau0.middleCols(c, ch.tau0.cols()) = ch.tau0;
    out.log_weight.segment(c, ch.tau0.cols()) = ch.log_weight;
    c += ch.tau0.cols();
    out.envelope_violations += ch.envelope_violations;
    out.clamped += ch.clamped;
    out.fallback += ch.fallback;
    out.guided += ch.guided;
    for (double m : ch.mean_c) c_sum += m * static_cast<double>(ch.tau0.cols());
  }
  out.mean_c = c_sum / (static_cast<double>(req.count) * ck.schedule.N);

  const Matrix raw = ck.standardizer.invert(out.tau0);
  out.windows.reserve(static_cast<std::size_t>(req.count));
  out.returns.resize(req.count);
  for (Eigen::Index b = 0; b < raw.cols(); ++b) {
    auto w = envs::unflatten(raw.col(b), layout, ck.config.a2c.gamma);
    w.actions = w.actions.cwiseMax(-envs::Environment::kActionBound).cwiseMin(envs::Environment::kActionBound);
    w.rewards = returns::label_rewards(ck.reward_model, w);
    out.returns[b] = envs::discounted_return(w);
    out.windows.push_back(std::move(w));
  }
  return out;
}

// Initial states from fresh environment resets.
inline Matrix reset_states(const RunConfig& cfg, int count, std::uint64_t seed) {
  auto env = envs::make_env(cfg.env_kind, cfg.env);
  Rng rng(seed);
  Matrix s0(env.state_dim(), count);
  for (int b = 0; b < count; ++b) s0.col(b) = env.reset(rng).s;
  return s0;
}

}  // namespace adrrl::orchestrator
