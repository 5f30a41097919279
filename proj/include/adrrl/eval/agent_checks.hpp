#pragma once

// Checks that need a trained agent: the guidance effect on synthetic returns.

#include "adrrl/eval/checks.hpp"
#include "adrrl/orchestrator/synthetic.hpp"

namespace adrrl::eval {

struct GuidanceEffect {
  CheckResult lowers;       // alpha < 1 guided vs unguided, one-sided Welch
  CheckResult alpha_one;    // alpha = 1 vs unguided, two-sample KS
  double env_reward_p = 1.0;  // the same Welch test with true environment rewards
};

// Returns of synthetic windows relabelled with the environment's reward function.
inline std::vector<double> env_reward_returns(const orchestrator::Checkpoint& ck,
                                              const orchestrator::SyntheticBatch& batch) {
  const auto env = envs::make_env(ck.config.env_kind, ck.config.env);
  std::vector<double> out;
  out.reserve(batch.windows.size());
  for (const auto& w : batch.windows) {
    Vector r(w.length());
    for (int t = 0; t < w.length(); ++t) r[t] = env.reward(w.states.row(t).transpose(), w.actions.row(t).transpose());
    out.push_back(envs::discounted_return(r, w.gamma));
  }
  return out;
}

// `count` windows each: guided at `alpha`, unguided, and alpha = 1. All start
// from the same environment-reset states and use the policy action guide.
inline GuidanceEffect check_trained_guidance_effect(const orchestrator::Checkpoint& ck, double alpha,
                                                    const CheckOptions& opt, int count = 1000) {
  detail::Stopwatch sw;
  orchestrator::SampleRequest req;
  req.guidance = ck.config.guidance;
  req.guidance.r_rule = opt.r_rule;
  req.guidance.mutation = opt.mutation;
  req.count = count;
  req.s0 = orchestrator::reset_states(ck.config, count, derive_seed(opt.seed, 201));
  req.workers = ck.config.workers;
  req.chunk = ck.config.sample_chunk;

  auto draw = [&](double a, bool enabled, std::uint64_t stream) {
    req.guidance.alpha = a;
    req.guidance.enabled = enabled;
    req.seed = derive_seed(opt.seed, stream);
    return orchestrator::generate_synthetic(ck, req);
  };
  const auto guided = draw(alpha, true, 202);
  const auto plain = draw(alpha, false, 203);
  const auto one = draw(1.0, true, 204);

  auto as_vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  const auto g = as_vec(guided.returns), u = as_vec(plain.returns), o = as_vec(one.returns);
  const auto welch = stats::welch_less(g, u);
  const auto ks = stats::ks_two_sample(o, u);

  GuidanceEffect eff;
  eff.env_reward_p = stats::welch_less(env_reward_returns(ck, guided), env_reward_returns(ck, plain)).p_value;
  eff.lowers = {"7a", fmt::format("guided (alpha {:g}) returns below unguided", alpha), welch.p_value < 0.01,
                welch.p_value, 0.01, {}, 0.0};
  eff.lowers.detail = fmt::format(
      "{} windows each, rule {}: guided mean {:.4f}, unguided mean {:.4f}, one-sided Welch p {:.3g}; "
      "with environment rewards p {:.3g}; {:.1f}% of steps guided, {} chains above 1/alpha",
      count, guidance::to_string(opt.r_rule), stats::mean_se(g).mean, stats::mean_se(u).mean, welch.p_value,
      eff.env_reward_p, 100.0 * guided.guided / (static_cast<double>(count) * ck.schedule.N),
      guided.envelope_violations);
  eff.alpha_one = {"7b", "alpha = 1 indistinguishable from unguided", ks.p_value > 0.001, ks.p_value, 0.001, {}, 0.0};
  eff.alpha_one.detail = fmt::format("two-sample KS D {:.4f}, p {:.3g}", ks.statistic, ks.p_value);
  eff.lowers.seconds = eff.alpha_one.seconds = sw.seconds();
  return eff;
}

}  // namespace adrrl::eval
