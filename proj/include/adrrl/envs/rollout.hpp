#pragma once

#include "adrrl/envs/env.hpp"
#include "adrrl/envs/trajectory.hpp"

#include <concepts>

namespace adrrl::envs {

struct ActionSample {
  Vector action;
  double log_prob = 0.0;
};

template <class P>
concept StochasticPolicy = requires(const P& p, const Vector& s, Rng& rng) {
  { p.act(s, rng) } -> std::convertible_to<ActionSample>;
};

// Steps `env` L times from its current state. Stored actions are the clipped
// actions actually executed.
template <StochasticPolicy P>
Trajectory collect_rollout(Environment& env, const P& policy, int length, Rng& rng, double gamma = 0.99) {
  if (length <= 0) throw ConfigError("rollout: window length must be positive");
  if (length > env.remaining()) throw UsageError("rollout: window longer than the remaining episode");
  Trajectory traj;
  traj.gamma = gamma;
  traj.states.resize(length + 1, env.state_dim());
  traj.actions.resize(length, env.action_dim());
  traj.rewards.resize(length);
  traj.states.row(0) = env.state().s.transpose();
  for (int t = 0; t < length; ++t) {
    const ActionSample a = policy.act(env.state().s, rng);
    const Vector executed = Environment::clip_action(a.action);
    const StepResult r = env.step(executed);
    traj.actions.row(t) = executed.transpose();
    traj.rewards[t] = r.reward;
    traj.states.row(t + 1) = r.next_state.transpose();
  }
  return traj;
}

// Full episode from reset, sliced into consecutive windows of `window` steps.
template <StochasticPolicy P>
std::vector<Trajectory> collect_episode_windows(Environment& env, const P& policy, int window, Rng& rng,
                                                double gamma, double* undiscounted_return = nullptr) {
  env.reset(rng);
  std::vector<Trajectory> windows;
  double total = 0.0;
  while (env.remaining() >= window) {
    windows.push_back(collect_rollout(env, policy, window, rng, gamma));
    total += windows.back().rewards.sum();
  }
  if (undiscounted_return) *undiscounted_return = total;
  return windows;
}

// Undiscounted episode return under an arbitrary state -> action map.
template <class ActFn>
double episode_return(Environment& env, ActFn&& act, Rng& rng) {
  env.reset(rng);
  double total = 0.0;
  while (!env.state().done) total += env.step(act(env.state().s)).reward;
  return total;
}

}  // namespace adrrl::envs
