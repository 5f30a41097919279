#pragma once

#include "adrrl/diffusion/denoiser.hpp"
#include "adrrl/diffusion/schedule.hpp"
#include "adrrl/diffusion/standardizer.hpp"
#include "adrrl/orchestrator/config.hpp"
#include "adrrl/policy/a2c.hpp"
#include "adrrl/returns/return_model.hpp"

namespace adrrl::orchestrator {

struct Checkpoint {
  RunConfig config;
  int iteration = 0;
  diffusion::DiffusionSchedule schedule;
  diffusion::Standardizer standardizer;
  nn::MlpModel denoiser;
  returns::ReturnModel return_model;
  returns::RewardModel reward_model;
  policy::GaussianPolicy policy;
  policy::Critic critic;
  Rng rng;

  envs::TrajectoryLayout layout() const { return config.layout(); }
};

// Fresh models for `cfg`, all drawn from one initialization stream.
inline Checkpoint initial_checkpoint(const RunConfig& cfg) {
  cfg.validate();
  const auto layout = cfg.layout();
  Rng init(derive_seed(cfg.seed, 0));
  const auto& d = cfg.diffusion;
  Checkpoint ck{cfg,
                0,
                diffusion::cosine_schedule(d.n_steps, 0.008, d.beta_max),
                diffusion::Standardizer::identity(layout.dim()),
                nn::MlpModel::initialized(diffusion::denoiser_spec(layout.dim(), d.hidden, d.layers, d.embedding,
                                                                   d.n_steps),
                                          init),
                returns::ReturnModel::create(layout, d.hidden, d.layers, d.embedding, d.n_steps, init),
                returns::RewardModel::create(layout.state_dim, layout.action_dim, cfg.reward_model.hidden,
                                             cfg.reward_model.layers, init),
                policy::GaussianPolicy::create(layout.state_dim, layout.action_dim, cfg.policy.hidden,
                                               cfg.policy.layers, cfg.policy.init_log_std, init),
                policy::Critic::create(layout.state_dim, cfg.policy.hidden, cfg.policy.layers, init),
                Rng(derive_seed(cfg.seed, 1))};
  ck.schedule.x0_clip = d.x0_clip;
  return ck;
}

inline std::string rng_text(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline nn::TensorList checkpoint_tensors(const Checkpoint& ck) {
  nn::TensorList list;
  list.push_back(nn::make_bytes("meta.config", to_ini(ck.config)));
  const std::uint64_t hash = config_hash(ck.config);
  list.push_back(nn::make_words("meta.config_hash", std::span<const std::uint64_t>(&hash, 1)));
  list.push_back(nn::make_scalar("meta.iteration", ck.iteration));
  list.push_back(nn::make_tensor("schedule.betas", ck.schedule.betas));
  list.push_back(nn::make_tensor("schedule.alpha_bars", ck.schedule.alpha_bars));
  list.push_back(nn::make_scalar("schedule.x0_clip", ck.schedule.x0_clip));
  list.push_back(nn::make_tensor("standardizer.mean", ck.standardizer.mean));
  list.push_back(nn::make_tensor("standardizer.std", ck.standardizer.std));
  nn::append_model(list, "denoiser", ck.denoiser);
  returns::append_return_model(list, "return_model", ck.return_model);
  returns::append_reward_model(list, "reward_model", ck.reward_model);
  policy::append_policy(list, "policy", ck.policy);
  policy::append_critic(list, "critic", ck.critic);
  list.push_back(nn::make_bytes("rng.state", rng_text(ck.rng)));
  return list;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  nn::save_tensors(path, checkpoint_tensors(ck));
}

inline Checkpoint checkpoint_from_tensors(const nn::TensorList& list) {
  const std::string text = nn::tensor_bytes(nn::find_tensor(list, "meta.config"));
  RunConfig cfg = parse_config(text, /*env_overrides=*/false);
  const auto stored = nn::tensor_words(nn::find_tensor(list, "meta.config_hash"));
  if (stored.size() != 1 || stored[0] != config_hash(cfg)) throw FormatError("checkpoint: config hash mismatch");

  Checkpoint ck = initial_checkpoint(cfg);
  ck.iteration = static_cast<int>(nn::find_tensor(list, "meta.iteration").data.at(0));
  ck.schedule.betas = nn::tensor_vector(nn::find_tensor(list, "schedule.betas"));
  ck.schedule.alpha_bars = nn::tensor_vector(nn::find_tensor(list, "schedule.alpha_bars"));
  ck.schedule.N = static_cast<int>(ck.schedule.betas.size());
  ck.schedule.x0_clip = nn::find_tensor(list, "schedule.x0_clip").data.at(0);
  ck.schedule.validate();
  ck.standardizer.mean = nn::tensor_vector(nn::find_tensor(list, "standardizer.mean"));
  ck.standardizer.std = nn::tensor_vector(nn::find_tensor(list, "standardizer.std"));
  if (ck.standardizer.dim() != ck.layout().dim()) throw FormatError("checkpoint: standardizer dimension mismatch");
  ck.denoiser = nn::read_model(list, "denoiser");
  returns::read_return_model(list, "return_model", ck.return_model);
  returns::read_reward_model(list, "reward_model", ck.reward_model);
  ck.policy = policy::read_policy(list, "policy");
  ck.critic = policy::read_critic(list, "critic");
  std::istringstream rs(nn::tensor_bytes(nn::find_tensor(list, "rng.state")));
  rs >> ck.rng;
  if (!rs) throw FormatError("checkpoint: bad RNG state");
  return ck;
}

inline Checkpoint load_checkpoint(const std::string& path) {
  return checkpoint_from_tensors(nn::load_tensors(path));
}

// Outputs of every stored model on fixed random inputs; two checkpoints with
// equal parameters give bit-identical probes.
inline std::vector<Matrix> forward_probe(const Checkpoint& ck, std::uint64_t seed, int n = 16) {
  Rng rng(seed);
  const auto layout = ck.layout();
  const Matrix tau = normal_matrix(layout.dim(), n, rng);
  std::vector<int> steps(static_cast<std::size_t>(n));
  for (auto& s : steps) s = uniform_int(rng, 1, ck.schedule.N);
  const Matrix S = normal_matrix(layout.state_dim, n, rng);
  const Matrix SA = normal_matrix(layout.state_dim + layout.action_dim, n, rng);
  return {nn::forward_batch(ck.denoiser, tau, steps),
          Matrix(ck.return_model.predict(tau, steps)),
          Matrix(returns::return_gradient(ck.return_model, tau, steps.front())),
          Matrix(ck.reward_model.predict(SA)),
          ck.policy.mean(S),
          Matrix(ck.policy.log_std),
          Matrix(ck.critic.values(S)),
          ck.standardizer.apply(ck.standardizer.invert(tau))};
}

}  // namespace adrrl::orchestrator
