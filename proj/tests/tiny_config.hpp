#pragma once

// A run small enough to train in well under a second.

#include "adrrl/orchestrator/config.hpp"

inline adrrl::orchestrator::RunConfig tiny_config(std::uint64_t seed = 3) {
  using namespace adrrl::orchestrator;
  RunConfig c = default_config();
  c.seed = seed;
  c.iterations = 3;
  c.model_iterations = 3;
  c.window = 4;
  c.workers = 1;
  c.sample_chunk = 4;
  c.env.episode_horizon = 20;
  c.diffusion = {5, 16, 1, 8, 1e-3, 16, 0.2, 0.0};
  c.reward_model = {8, 1, 1e-3, 16};
  c.policy.hidden = 8;
  c.policy.layers = 1;
  c.a2c.batch = 8;
  c.a2c.critic_epochs = 2;
  c.guidance.n_steps = 5;
  c.guidance.r_rule = adrrl::guidance::RRule::three_sigma_centered;  // guidance active on most steps
  c.eval_episodes = 3;
  return c;
}
