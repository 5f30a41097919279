#pragma once

// Property checks shared by `adrrl verify` and the acceptance binary. Each
// check builds its own random models, runs to completion and reports the
// worst observed value against its bound; failures are data, not exceptions.

#include "adrrl/cvar/cvar.hpp"
#include "adrrl/guidance/guidance.hpp"
#include "adrrl/nn/gradcheck.hpp"
#include "adrrl/policy/a2c.hpp"
#include "adrrl/stats.hpp"

#include <spdlog/fmt/fmt.h>

#include <chrono>

namespace adrrl::eval {

struct CheckResult {
  std::string id;    // e.g. "2a"
  std::string name;
  bool passed = false;
  double value = 0.0;  // worst observed quantity
  double bound = 0.0;  // what it was compared against
  std::string detail;
  double seconds = 0.0;
};

struct CheckOptions {
  guidance::Mutation mutation = guidance::Mutation::none;
  guidance::RRule r_rule = guidance::RRule::three_sigma;
  std::uint64_t seed = 0;
};

namespace detail {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline CheckResult finish(CheckResult r, const Stopwatch& sw) {
  r.seconds = sw.seconds();
  return r;
}

// A small random world model: MLP denoiser and return model, optionally fitted
// for a few dozen Adam steps to a two-cluster dataset so the weights are not
// purely at initialization.
struct RandomWorld {
  envs::TrajectoryLayout layout;
  diffusion::DiffusionSchedule sch;
  nn::MlpModel eps_net;
  returns::ReturnModel z;
  diffusion::EpsFn eps;
  guidance::GuidanceConfig cfg;

  RandomWorld(const envs::TrajectoryLayout& l, int N, double alpha, bool trained, Rng& rng)
      : layout(l),
        sch(diffusion::cosine_schedule(N)),
        eps_net(nn::MlpModel::initialized(diffusion::denoiser_spec(l.dim(), 16, 2, 8, N), rng)),
        z(returns::ReturnModel::create(l, 16, 2, 8, N, rng)),
        eps(diffusion::mlp_eps(eps_net)) {
    cfg.alpha = alpha;
    cfg.n_steps = N;
    if (!trained) return;
    Matrix data = 0.5 * normal_matrix(l.dim(), 256, rng);
    for (Eigen::Index b = 0; b < data.cols(); ++b) data.col(b).array() += b % 2 ? 1.0 : -1.0;
    const Vector y = data.topRows(l.state_block()).colwise().sum().transpose();
    z.target = returns::TargetScaling::fit(y);
    nn::AdamState eo, zo;
    diffusion::train_denoiser(eps_net, eo, data, sch, 40, 64, 1e-2, rng);
    returns::train_return_model(z, zo, data, y, sch, 40, 64, 1e-2, rng);
  }

  guidance::GuidanceContext ctx() const { return {eps, z, sch, cfg, layout, std::nullopt, {}}; }
};

inline envs::TrajectoryLayout random_layout(Rng& rng) {
  return {uniform_int(rng, 1, 4), uniform_int(rng, 1, 2), uniform_int(rng, 1, 2)};
}

inline double pick_alpha(Rng& rng) {
  constexpr double alphas[] = {0.5, 0.25, 0.1, 0.01};
  return alphas[uniform_int(rng, 0, 3)];
}

// Guided-step records (c != 0) from random worlds until `want` are collected.
struct RecordSet {
  std::vector<guidance::GuidedStepRecord> records;
  std::vector<double> log_eta;
  std::vector<double> R;
  std::vector<guidance::RRule> rule;
  int worlds = 0;
};

inline RecordSet guided_records(std::size_t want, const CheckOptions& opt, Rng& rng, bool final_step_noise,
                                bool mix_rules) {
  RecordSet out;
  while (out.records.size() < want) {
    const int N = uniform_int(rng, 2, 20);
    RandomWorld w(random_layout(rng), N, pick_alpha(rng), out.worlds % 2 == 1, rng);
    w.cfg.mutation = opt.mutation;
    w.cfg.final_step_noise = final_step_noise;
    w.cfg.r_rule = mix_rules && out.worlds % 3 == 2 ? guidance::RRule::three_sigma_centered : opt.r_rule;
    ++out.worlds;
    for (int i = 1; i <= N; ++i) {
      // small tau keeps |mu|_inf below R often enough for the literal box rule
      const double scale = std::exp(std::uniform_real_distribution<double>(-3.0, 1.0)(rng));
      std::vector<guidance::GuidedStepRecord> recs;
      guidance::guided_step(w.ctx(), scale * normal_matrix(w.layout.dim(), 8, rng), i, rng, &recs);
      for (auto& r : recs) {
        if (r.c == 0.0) continue;
        out.records.push_back(std::move(r));
        out.log_eta.push_back(w.cfg.log_eta(i));
        out.R.push_back(w.cfg.r_sigmas * w.sch.sigma(i));
        out.rule.push_back(w.cfg.r_rule);
      }
    }
  }
  return out;
}

// Linear return model Z(tau) = w . tau with no hidden layers.
inline returns::ReturnModel linear_return(const envs::TrajectoryLayout& layout, const Vector& w, int n_steps) {
  auto spec = nn::MlpSpec::standard(layout.dim(), 1, 0, 1,
                                    nn::StepEmbedding{4, nn::EmbeddingKind::sinusoidal, n_steps});
  returns::ReturnModel z{nn::MlpModel(spec), {}, layout};
  z.net.weight(0) = w.transpose();
  return z;
}

}  // namespace detail

// |log p_guided - log xi - log p_unguided| over random guided steps at every i.
inline CheckResult check_density_identity(const CheckOptions& opt = {}, std::size_t steps = 10000) {
  detail::Stopwatch sw;
  Rng rng(derive_seed(opt.seed, 101));
  const auto set = detail::guided_records(steps, opt, rng, /*final_step_noise=*/true, /*mix_rules=*/true);
  double worst = 0.0;
  for (const auto& r : set.records) worst = std::max(worst, guidance::density_identity_error(r));
  CheckResult res{"1", "density identity", worst < 1e-8, worst, 1e-8, {}, 0.0};
  res.detail = fmt::format("{} guided steps from {} random models", set.records.size(), set.worlds);
  return detail::finish(res, sw);
}

// xi at its analytic maximizer tau = mu - c Sigma g equals exp(c^2 g'Sigma g / 2) <= eta_i.
inline CheckResult check_budget_analytic(const CheckOptions& opt = {}, std::size_t steps = 10000) {
  detail::Stopwatch sw;
  Rng rng(derive_seed(opt.seed, 102));
  const auto set = detail::guided_records(steps, opt, rng, false, true);
  double worst = 0.0;  // max over steps of xi_max / eta
  for (std::size_t k = 0; k < set.records.size(); ++k) {
    const auto& r = set.records[k];
    const Vector at = r.mu - r.c * r.beta * r.g;
    worst = std::max(worst, std::exp(guidance::log_xi(r.c, at - r.mu, r.g, r.beta) - set.log_eta[k]));
  }
  const double tol = 1.0 + 1e-12;
  CheckResult res{"2a", "per-step budget at the analytic maximizer", worst <= tol, worst, tol, {}, 0.0};
  res.detail = fmt::format("max xi/eta over {} guided steps", set.records.size());
  return detail::finish(res, sw);
}

// Uniform random search over the feasible set of tau_{i-1}: |tau|_inf <= R on
// state entries for three_sigma, |tau - mu|_inf <= R for the centered rule.
inline CheckResult check_budget_search(const CheckOptions& opt = {}, std::size_t points = 100000,
                                       std::size_t steps = 100) {
  detail::Stopwatch sw;
  Rng rng(derive_seed(opt.seed, 103));
  const auto set = detail::guided_records(steps, opt, rng, false, false);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const std::size_t per = (points + set.records.size() - 1) / set.records.size();
  double worst = 0.0;
  std::size_t tried = 0, above = 0;
  for (std::size_t k = 0; k < set.records.size(); ++k) {
    const auto& r = set.records[k];
    for (std::size_t p = 0; p < per && tried < points; ++p, ++tried) {
      Vector tau = r.mu;
      for (Eigen::Index j = 0; j < tau.size(); ++j) {
        if (r.g[j] == 0.0) continue;  // xi does not depend on entries outside the gradient's support
        tau[j] = (set.rule[k] == guidance::RRule::three_sigma ? 0.0 : r.mu[j]) + set.R[k] * u(rng);
      }
      const double ratio = std::exp(guidance::log_xi(r.c, tau - r.mu, r.g, r.beta) - set.log_eta[k]);
      worst = std::max(worst, ratio);
      above += ratio > 1.0 + 1e-9;
    }
  }
  const double tol = 1.0 + 1e-9;
  CheckResult res{"2b", "per-step budget under random search", worst <= tol, worst, tol, {}, 0.0};
  res.detail = fmt::format("max xi/eta over {} feasible points ({} above eta) at {} steps, rule {}", tried, above,
                           set.records.size(), guidance::to_string(opt.r_rule));
  return detail::finish(res, sw);
}

// max prod xi over guided chains against 1/alpha, under both R rules: the
// literal box rule clamps most steps to c = 0, so on its own it can pass
// without exercising the guidance at all.
inline CheckResult check_chain_envelope(const CheckOptions& opt = {}, Eigen::Index chains = 10000, int N = 50) {
  detail::Stopwatch sw;
  Rng rng(derive_seed(opt.seed, 104));
  double worst = 0.0;  // max over rules and alphas of max prod xi * alpha
  std::string detail;
  for (auto rule : {guidance::RRule::three_sigma, guidance::RRule::three_sigma_centered})
    for (double alpha : {0.5, 0.1}) {
      detail::RandomWorld w({4, 2, 1}, N, alpha, true, rng);
      w.cfg.mutation = opt.mutation;
      w.cfg.r_rule = rule;
      int violations = 0, guided = 0;
      double max_log = -INFINITY;
      for (Eigen::Index done = 0; done < chains;) {
        const Eigen::Index n = std::min<Eigen::Index>(500, chains - done);
        const auto out = guidance::adversarial_sample(w.ctx(), n, rng);
        max_log = std::max(max_log, out.log_weight.maxCoeff());
        violations += out.envelope_violations;
        guided += out.guided;
        done += n;
      }
      worst = std::max(worst, std::exp(max_log) * alpha);
      detail += fmt::format("{}{} alpha {}: max log prod xi {:.4f} vs log(1/alpha) {:.4f}, {} of {} chains above, "
                            "{:.1f}% of steps guided",
                            detail.empty() ? "" : "; ", guidance::to_string(rule), alpha, max_log, -std::log(alpha),
                            violations, chains, 100.0 * guided / (static_cast<double>(chains) * N));
    }
  const double tol = 1.0 + 1e-9;
  CheckResult res{"3a", "chain envelope prod xi <= 1/alpha", worst <= tol, worst, tol, detail, 0.0};
  return detail::finish(res, sw);
}

// E[prod xi] = 1 over unguided chains at low dimension.
inline CheckResult check_unit_expectation(const CheckOptions& opt = {}, Eigen::Index chains = 100000) {
  detail::Stopwatch sw;
  Rng rng(derive_seed(opt.seed, 105));
  double worst = 0.0;  // |mean - 1| / se, worst over the two rules
  std::string detail;
  for (auto rule : {guidance::RRule::three_sigma, guidance::RRule::three_sigma_centered}) {
    detail::RandomWorld w({1, 2, 1}, 5, 0.25, true, rng);  // d = 5, N = 5
    w.cfg.mutation = opt.mutation;
    w.cfg.r_rule = rule;
    const auto est = guidance::envelope_weight_expectation(w.ctx(), chains, rng);
    const double z = est.se > 0.0 ? std::abs(est.mean - 1.0) / est.se : (est.mean == 1.0 ? 0.0 : INFINITY);
    worst = std::max(worst, z);
    detail += fmt::format("{}{}: mean {:.5f} se {:.5f}", detail.empty() ? "" : "; ", guidance::to_string(rule),
                          est.mean, est.se);
  }
  CheckResult res{"3b", "unguided E[prod xi] = 1", worst <= 3.0, worst, 3.0, detail, 0.0};
  return detail::finish(res, sw);
}

// Dual greedy value against the quantile tail integral; Gaussian CVaR_0.1.
inline CheckResult check_cvar(const CheckOptions& opt = {}, int distributions = 1000) {
  detail::Stopwatch sw;
  Rng rng(derive_seed(opt.seed, 106));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0, worst_feas = 0.0;
  for (int k = 0; k < distributions; ++k) {
    const int n = uniform_int(rng, 1, 50);
    cvar::DiscreteDistribution dist;
    dist.outcomes = 3.0 * normal_matrix(n, 1, rng).col(0);
    // repeated outcomes exercise ties at the quantile
    if (k % 4 == 0) dist.outcomes = dist.outcomes.array().round();
    dist.probabilities.resize(n);
    for (int j = 0; j < n; ++j) dist.probabilities[j] = u(rng) + 1e-3;
    dist.probabilities /= dist.probabilities.sum();
    for (double alpha : {0.1, 0.25, 0.5, 0.9}) {
      const auto dual = cvar::cvar_dual_oracle(dist, alpha);
      worst = std::max(worst, std::abs(dual.value - cvar::cvar_alpha(dist, alpha)));
      const double mass = dist.probabilities.dot(dual.xi);
      worst_feas = std::max({worst_feas, std::abs(mass - 1.0), -dual.xi.minCoeff(),
                             dual.xi.maxCoeff() - 1.0 / alpha});
    }
  }
  const Vector z = normal_matrix(100000, 1, rng).col(0);
  const double gauss = cvar::empirical_cvar(z, 0.1);
  const double exact = -stats::normal_pdf(stats::normal_quantile(0.1)) / 0.1;  // -1.7550
  const bool ok = worst < 1e-12 && worst_feas < 1e-12 && std::abs(gauss - exact) < 0.02;
  CheckResult res{"4", "CVaR primal-dual equivalence", ok, worst, 1e-12, {}, 0.0};
  res.detail = fmt::format("dual feasibility error {:.2e}; Gaussian CVaR_0.1 {:.4f} (exact {:.4f}, tol 0.02)",
                           worst_feas, gauss, exact);
  return detail::finish(res, sw);
}

// Central finite differences against backprop for every learned component.
inline CheckResult check_gradients(const CheckOptions& opt = {}, int cases = 20) {
  detail::Stopwatch sw;
  Rng rng(derive_seed(opt.seed, 107));
  constexpr double h = 1e-5, tol = 1e-4;
  std::vector<std::pair<std::string, double>> worst;
  auto record = [&](const std::string& name, double err) {
    for (auto& [n, e] : worst)
      if (n == name) {
        e = std::max(e, err);
        return;
      }
    worst.emplace_back(name, err);
  };
  for (int c = 0; c < cases; ++c) {
    const auto layout = detail::random_layout(rng);
    const int N = uniform_int(rng, 2, 20), B = uniform_int(rng, 2, 5);
    std::vector<int> steps(static_cast<std::size_t>(B));
    for (auto& s : steps) s = uniform_int(rng, 1, N);
    const Matrix x = normal_matrix(layout.dim(), B, rng);
    const Vector y = normal_matrix(B, 1, rng).col(0);

    const auto sch = diffusion::cosine_schedule(N);
    auto eps_net = nn::MlpModel::initialized(diffusion::denoiser_spec(layout.dim(), 8, 2, 4, N), rng);
    const Matrix noise = normal_matrix(layout.dim(), B, rng);
    const auto el = diffusion::denoiser_loss_fixed(eps_net, x, steps, noise, sch);
    record("eps_theta", nn::relative_error(el.grad, nn::finite_difference_gradient([&](const Vector& p) {
      nn::MlpModel m = eps_net;
      m.set_parameters(p);
      return diffusion::denoiser_loss_fixed(m, x, steps, noise, sch).loss;
    }, eps_net.parameters(), h)));

    auto z = returns::ReturnModel::create(layout, 8, 2, 4, N, rng);
    const auto zl = returns::scalar_regression_loss(z.net, x, steps, y);
    record("Z_phi", nn::relative_error(zl.grad, nn::finite_difference_gradient([&](const Vector& p) {
      nn::MlpModel m = z.net;
      m.set_parameters(p);
      return returns::scalar_regression_loss(m, x, steps, y).loss;
    }, z.net.parameters(), h)));
    // the guidance direction: d Z / d tau (state entries) at one column
    const int i = steps[0];
    const Vector g = returns::return_gradient(z, Matrix(x.col(0)), i).col(0);
    const Vector fd = nn::finite_difference_gradient([&](const Vector& t) { return z.predict(Matrix(t), i)[0]; },
                                                     Vector(x.col(0)), h);
    record("Z_phi input", nn::relative_error(g, layout.state_mask().cwiseProduct(fd)));

    const int ds = layout.state_dim, da = layout.action_dim;
    auto reward = returns::RewardModel::create(ds, da, 8, 2, rng);
    const Matrix sa = normal_matrix(ds + da, B, rng);
    const auto rl = returns::scalar_regression_loss(reward.net, sa, {}, y);
    record("reward", nn::relative_error(rl.grad, nn::finite_difference_gradient([&](const Vector& p) {
      nn::MlpModel m = reward.net;
      m.set_parameters(p);
      return returns::scalar_regression_loss(m, sa, {}, y).loss;
    }, reward.net.parameters(), h)));

    auto pi = policy::GaussianPolicy::create(ds, da, 8, 2, -0.3, rng);
    pi.mean_net.weight(pi.mean_net.num_layers() - 1) *= 50.0;  // away from the near-zero output init
    const Matrix S = normal_matrix(ds, B, rng), A = normal_matrix(da, B, rng);
    const auto al = policy::actor_loss(pi, S, A, y, 0.01);
    record("policy", nn::relative_error(al.grad, nn::finite_difference_gradient([&](const Vector& p) {
      policy::GaussianPolicy q = pi;
      q.set_parameters(p);
      return policy::actor_loss(q, S, A, y, 0.01).loss;
    }, pi.parameters(), h)));

    auto critic = policy::Critic::create(ds, 8, 2, rng);
    const auto cl = policy::critic_loss(critic, S, y);
    record("critic", nn::relative_error(cl.grad, nn::finite_difference_gradient([&](const Vector& p) {
      policy::Critic q = critic;
      q.value_net.set_parameters(p);
      return policy::critic_loss(q, S, y).loss;
    }, critic.value_net.parameters(), h)));
  }
  double overall = 0.0;
  std::string detail;
  for (const auto& [n, e] : worst) {
    overall = std::max(overall, e);
    detail += fmt::format("{}{} {:.1e}", detail.empty() ? "" : ", ", n, e);
  }
  CheckResult res{"5", "gradient correctness", overall < tol, overall, tol, {}, 0.0};
  res.detail = fmt::format("{} cases each: {}", cases, detail);
  return detail::finish(res, sw);
}

// |Sigma g|_inf^2 <= g'Sigma g for diagonal Sigma with entries in [0, 1).
inline CheckResult check_inf_norm_inequality(const CheckOptions& opt = {}, int trials = 10000) {
  detail::Stopwatch sw;
  Rng rng(derive_seed(opt.seed, 108));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int violations = 0;
  double worst = -INFINITY;  // max of lhs - rhs, relative
  for (int t = 0; t < trials; ++t) {
    const int d = uniform_int(rng, 1, 64);
    Vector sigma(d);
    for (auto& s : sigma) s = u(rng);
    const Vector g = normal_matrix(d, 1, rng).col(0) * std::exp(6.0 * (u(rng) - 0.5));
    const double lhs = std::pow(sigma.cwiseProduct(g).cwiseAbs().maxCoeff(), 2), rhs = g.dot(sigma.cwiseProduct(g));
    violations += lhs > rhs;
    if (rhs > 0.0) worst = std::max(worst, (lhs - rhs) / rhs);
  }
  CheckResult res{"6", "|Sigma g|_inf^2 <= g'Sigma g", violations == 0, static_cast<double>(violations), 0.0, {}, 0.0};
  res.detail = fmt::format("{} violations in {} draws; max relative slack {:.3g}", violations, trials, worst);
  return detail::finish(res, sw);
}

// Guided chains under a known model (standard-normal data, linear Z) must
// have lower predicted return than unguided ones.
inline CheckResult check_guidance_lowers_returns(const CheckOptions& opt = {}, Eigen::Index n = 1000) {
  detail::Stopwatch sw;
  const envs::TrajectoryLayout layout{3, 1, 1};
  const int N = 20;
  const auto sch = diffusion::cosine_schedule(N);
  const diffusion::EpsFn eps = [&sch](const Matrix& x, int i) {
    return Matrix(std::sqrt(1.0 - sch.alpha_bar(i)) * x);  // E[eps | tau_i] for N(0, I) data
  };
  Vector w = Vector::Zero(layout.dim());
  w.head(layout.state_block()).setOnes();
  const auto z = detail::linear_return(layout, w, N);
  guidance::GuidanceConfig cfg;
  cfg.alpha = 0.1;
  cfg.n_steps = N;
  cfg.r_rule = opt.r_rule;
  cfg.mutation = opt.mutation;
  guidance::GuidanceContext ctx{eps, z, sch, cfg, layout, std::nullopt, {}};
  Rng a(derive_seed(opt.seed, 109)), b(derive_seed(opt.seed, 110));
  const auto guided = guidance::adversarial_sample(ctx, n, a);
  const Matrix plain = diffusion::unguided_sample(eps, sch, layout.dim(), n, b);
  const Vector rg = z.predict(guided.tau0, 1), ru = z.predict(plain, 1);
  const auto t = stats::welch_less(std::span<const double>(rg.data(), rg.size()),
                                   std::span<const double>(ru.data(), ru.size()));
  CheckResult res{"7s", "guidance lowers returns (analytic model)", t.p_value < 0.01, t.p_value, 0.01, {}, 0.0};
  res.detail = fmt::format("guided mean {:.4f}, unguided mean {:.4f}, one-sided Welch p {:.3g}", rg.mean(),
                           ru.mean(), t.p_value);
  return detail::finish(res, sw);
}

}  // namespace adrrl::eval
