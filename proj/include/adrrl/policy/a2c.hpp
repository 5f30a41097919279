#pragma once

// Gaussian policy with state-independent log std, value critic, GAE and the
// advantage actor-critic update on (synthetic) trajectory windows.

#include "adrrl/envs/rollout.hpp"
#include "adrrl/envs/trajectory.hpp"
#include "adrrl/nn/adam.hpp"
#include "adrrl/nn/mlp.hpp"
#include "adrrl/nn/tensor_io.hpp"

#include <numbers>

namespace adrrl::policy {

struct GaussianPolicy {
  nn::MlpModel mean_net;
  Vector log_std;

  static GaussianPolicy create(int state_dim, int action_dim, int hidden, int layers, double init_log_std, Rng& rng) {
    auto spec = nn::MlpSpec::standard(state_dim, hidden, layers, action_dim);
    auto net = nn::MlpModel::initialized(spec, rng);
    // small initial means keep the first rollouts near-random
    net.weight(net.num_layers() - 1) *= 0.01;
    return {std::move(net), Vector::Constant(action_dim, init_log_std)};
  }

  int state_dim() const { return mean_net.input_size(); }
  int action_dim() const { return mean_net.output_size(); }
  Vector stddev() const { return log_std.array().exp().matrix(); }

  Matrix mean(const Matrix& states) const { return nn::forward_batch(mean_net, states); }
  Vector mean(const Vector& s) const { return nn::forward(mean_net, s); }

  // Exact Gaussian log density (no clipping correction).
  double log_prob(const Vector& s, const Vector& a) const { return log_prob_batch(Matrix(s), Matrix(a))[0]; }

  Vector log_prob_batch(const Matrix& states, const Matrix& actions) const {
    const Matrix mu = mean(states);
    const Vector inv_var = (-2.0 * log_std).array().exp().matrix();
    const double log_norm = -0.5 * static_cast<double>(action_dim()) * std::log(2.0 * std::numbers::pi) - log_std.sum();
    Vector out(states.cols());
    for (Eigen::Index b = 0; b < states.cols(); ++b)
      out[b] = log_norm - 0.5 * (actions.col(b) - mu.col(b)).array().square().matrix().dot(inv_var);
    return out;
  }

  double entropy() const {
    return log_std.sum() + 0.5 * static_cast<double>(action_dim()) * (1.0 + std::log(2.0 * std::numbers::pi));
  }

  envs::ActionSample act(const Vector& s, Rng& rng) const {
    if (!s.allFinite()) throw UsageError("policy: non-finite state");
    const Vector mu = mean(s);
    Vector a = mu;
    const Vector sd = stddev();
    std::normal_distribution<double> n01;
    for (Eigen::Index j = 0; j < a.size(); ++j) a[j] += sd[j] * n01(rng);
    return {a, log_prob(s, a)};
  }

  Vector parameters() const {
    Vector p(mean_net.num_parameters() + log_std.size());
    p << mean_net.parameters(), log_std;
    return p;
  }
  void set_parameters(const Vector& p) {
    mean_net.set_parameters(p.head(mean_net.num_parameters()));
    log_std = p.tail(log_std.size());
  }
};

struct Critic {
  nn::MlpModel value_net;

  static Critic create(int state_dim, int hidden, int layers, Rng& rng) {
    return {nn::MlpModel::initialized(nn::MlpSpec::standard(state_dim, hidden, layers, 1), rng)};
  }

  Vector values(const Matrix& states) const { return nn::forward_batch(value_net, states).row(0).transpose(); }
};

struct A2CConfig {
  double gae_lambda = 0.9;
  double gamma = 0.99;
  double critic_lr = 3e-4;
  double actor_lr = 3e-5;
  double entropy_weight = 1e-5;
  int batch = 512;
  bool normalize_advantages = true;
  int critic_epochs = 1;  // critic steps per update; extra ones run before the joint step

  void validate() const {
    if (!(gae_lambda > 0.0 && gae_lambda <= 1.0)) throw ConfigError("a2c: gae_lambda must lie in (0, 1]");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("a2c: gamma must lie in (0, 1]");
    if (!(critic_lr >= 0.0) || !(actor_lr >= 0.0)) throw ConfigError("a2c: learning rates must be nonneg");
    if (!(entropy_weight >= 0.0)) throw ConfigError("a2c: entropy_weight must be nonneg");
    if (batch <= 0) throw ConfigError("a2c: batch must be positive");
    if (critic_epochs < 1) throw ConfigError("a2c: critic_epochs must be at least 1");
  }
};

// A_t = sum_k (gamma lambda)^k delta_{t+k}, delta_t = r_t + gamma V(s_{t+1}) - V(s_t).
inline Vector gae_advantages(const Vector& rewards, const Vector& values, double gamma, double lambda) {
  const Eigen::Index L = rewards.size();
  if (values.size() != L + 1)
    throw UsageError("gae: values must have one more entry than rewards (bootstrap value included)");
  Vector adv(L);
  double running = 0.0;
  for (Eigen::Index t = L - 1; t >= 0; --t) {
    const double delta = rewards[t] + gamma * values[t + 1] - values[t];
    running = delta + gamma * lambda * running;
    adv[t] = running;
  }
  return adv;
}

struct LossGrad {
  double loss = 0.0;
  Vector grad;
};

// -(1/n) sum_b adv_b log pi(a_b | s_b) - w H(pi), gradient over [mean params, log_std].
inline LossGrad actor_loss(const GaussianPolicy& pi, const Matrix& states, const Matrix& actions, const Vector& adv,
                           double entropy_weight) {
  const double n = static_cast<double>(states.cols());
  nn::Tape tape;
  const Matrix mu = nn::forward_batch(pi.mean_net, states, {}, &tape);
  const Vector inv_var = (-2.0 * pi.log_std).array().exp().matrix();
  const Matrix z = actions - mu;  // a - mu
  const Vector logp = pi.log_prob_batch(states, actions);
  LossGrad out;
  out.loss = -logp.dot(adv) / n - entropy_weight * pi.entropy();
  // d log pi / d mu = (a - mu) / sigma^2
  Matrix dmu = z.array().colwise() * inv_var.array();
  dmu.array().rowwise() *= (-adv.transpose().array() / n);
  // d log pi / d log_std = (a - mu)^2 / sigma^2 - 1
  Vector dlogstd = Vector::Zero(pi.log_std.size());
  for (Eigen::Index b = 0; b < states.cols(); ++b)
    dlogstd -= adv[b] / n * ((z.col(b).array().square() * inv_var.array()) - 1.0).matrix();
  dlogstd.array() -= entropy_weight;
  out.grad.resize(pi.mean_net.num_parameters() + pi.log_std.size());
  out.grad << nn::backward(pi.mean_net, dmu, tape).parameters, dlogstd;
  return out;
}

// Mean squared error of V(s) against fixed targets.
inline LossGrad critic_loss(const Critic& critic, const Matrix& states, const Vector& targets) {
  const double n = static_cast<double>(states.cols());
  nn::Tape tape;
  const Matrix v = nn::forward_batch(critic.value_net, states, {}, &tape);
  const Matrix diff = v - targets.transpose();
  return {diff.squaredNorm() / n, nn::backward(critic.value_net, (2.0 / n) * diff, tape).parameters};
}

struct A2COptimizers {
  nn::AdamState actor;
  nn::AdamState critic;
};

struct A2CStats {
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double entropy = 0.0;
  double mean_return = 0.0;  // mean discounted return of the batch windows
};

// Flattened per-step training data of a batch of windows.
struct A2CBatch {
  Matrix states;   // d_s x n
  Matrix actions;  // d_a x n
  Vector advantages;
  Vector targets;  // lambda-returns for the critic
  double mean_return = 0.0;
};

inline A2CBatch prepare_batch(const Critic& critic, const std::vector<envs::Trajectory>& windows,
                              const A2CConfig& cfg) {
  if (windows.empty()) throw UsageError("a2c: empty batch");
  const int ds = windows.front().state_dim(), da = windows.front().action_dim();
  Eigen::Index n = 0;
  for (const auto& w : windows) n += w.length();
  A2CBatch b;
  b.states.resize(ds, n);
  b.actions.resize(da, n);
  b.advantages.resize(n);
  b.targets.resize(n);
  Eigen::Index c = 0;
  double ret = 0.0;
  for (const auto& w : windows) {
    const Vector v = critic.values(w.states.transpose());  // bootstrap V(s_L) included
    const Vector adv = gae_advantages(w.rewards, v, cfg.gamma, cfg.gae_lambda);
    const int L = w.length();
    b.states.middleCols(c, L) = w.states.topRows(L).transpose();
    b.actions.middleCols(c, L) = w.actions.transpose();
    b.advantages.segment(c, L) = adv;
    b.targets.segment(c, L) = adv + v.head(L);
    c += L;
    ret += envs::discounted_return(w.rewards, cfg.gamma);
  }
  b.mean_return = ret / static_cast<double>(windows.size());
  if (cfg.normalize_advantages && n > 1) {
    const double m = b.advantages.mean();
    const double sd = std::sqrt((b.advantages.array() - m).square().sum() / static_cast<double>(n - 1));
    b.advantages = (b.advantages.array() - m) / (sd + 1e-8);
  }
  return b;
}

inline A2CStats a2c_update(GaussianPolicy& pi, Critic& critic, A2COptimizers& opt,
                           const std::vector<envs::Trajectory>& windows, const A2CConfig& cfg) {
  for (int e = 1; e < cfg.critic_epochs; ++e) {
    const A2CBatch pre = prepare_batch(critic, windows, cfg);
    const auto crit = critic_loss(critic, pre.states, pre.targets);
    if (!std::isfinite(crit.loss)) throw TrainingError("a2c: non-finite critic loss during pre-fit");
    nn::adam_step(critic.value_net, crit.grad, opt.critic, cfg.critic_lr);
  }
  const A2CBatch b = prepare_batch(critic, windows, cfg);
  const auto actor = actor_loss(pi, b.states, b.actions, b.advantages, cfg.entropy_weight);
  const auto crit = critic_loss(critic, b.states, b.targets);
  if (!std::isfinite(actor.loss) || !std::isfinite(crit.loss)) {
    throw TrainingError("a2c: non-finite loss (actor " + std::to_string(actor.loss) + ", critic " +
                        std::to_string(crit.loss) + ", log_std [" + std::to_string(pi.log_std.minCoeff()) + ", " +
                        std::to_string(pi.log_std.maxCoeff()) + "], mean return " +
                        std::to_string(b.mean_return) + ")");
  }
  Vector p = pi.parameters();
  nn::adam_update(p, actor.grad, opt.actor, cfg.actor_lr);
  pi.set_parameters(p);
  nn::adam_step(critic.value_net, crit.grad, opt.critic, cfg.critic_lr);
  return {actor.loss, crit.loss, pi.entropy(), b.mean_return};
}

inline void append_policy(nn::TensorList& list, const std::string& prefix, const GaussianPolicy& pi) {
  nn::append_model(list, prefix + ".mean", pi.mean_net);
  list.push_back(nn::make_tensor(prefix + ".log_std", pi.log_std));
}

inline GaussianPolicy read_policy(const nn::TensorList& list, const std::string& prefix) {
  return {nn::read_model(list, prefix + ".mean"), nn::tensor_vector(nn::find_tensor(list, prefix + ".log_std"))};
}

inline void append_critic(nn::TensorList& list, const std::string& prefix, const Critic& c) {
  nn::append_model(list, prefix, c.value_net);
}

inline Critic read_critic(const nn::TensorList& list, const std::string& prefix) {
  return {nn::read_model(list, prefix)};
}

}  // namespace adrrl::policy
