#pragma once

// The outer training loop: collect a real episode, improve the world model,
// sample adversarial windows, improve the policy.

#include "adrrl/envs/replay_buffer.hpp"
#include "adrrl/envs/rollout.hpp"
#include "adrrl/orchestrator/synthetic.hpp"

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include <chrono>

namespace adrrl::orchestrator {

inline constexpr const char* kMetricsVersionLine = "# adrrl-metrics v1";
inline constexpr const char* kEventsVersionLine = "# adrrl-events v1";

struct IterationMetrics {
  int iteration = 0;
  long env_steps = 0;
  double episode_return = 0.0;  // undiscounted, mean over this iteration's episodes
  double denoiser_loss = 0.0;
  double return_loss = 0.0;
  double reward_loss = 0.0;
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double entropy = 0.0;
  double synthetic_return = 0.0;  // mean discounted return of the synthetic batch
  double mean_c = 0.0;
  double guided_fraction = 0.0;
  int clamped = 0;
  int fallback = 0;
  int envelope_violations = 0;
  double max_log_weight = 0.0;

  static std::string header() {
    return "iteration,env_steps,episode_return,denoiser_loss,return_loss,reward_loss,actor_loss,critic_loss,"
           "entropy,synthetic_return,mean_c,guided_fraction,clamped,fallback,envelope_violations,max_log_weight";
  }
  std::string row() const {
    return fmt::format("{},{},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{},{},{},{:.10g}",
                       iteration, env_steps, episode_return, denoiser_loss, return_loss, reward_loss, actor_loss,
                       critic_loss, entropy, synthetic_return, mean_c, guided_fraction, clamped, fallback,
                       envelope_violations, max_log_weight);
  }
};

struct TrainOptions {
  bool write_files = true;
  std::function<void(const IterationMetrics&)> on_iteration;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<IterationMetrics> metrics;
};

namespace detail {

class RunLog {
 public:
  RunLog(const RunConfig& cfg, bool enabled) : enabled_(enabled) {
    if (!enabled_) return;
    std::filesystem::create_directories(cfg.out_dir);
    dir_ = cfg.out_dir;
    std::ofstream(dir_ / "config.ini") << to_ini(cfg);
    metrics_.open(dir_ / "metrics.csv");
    events_.open(dir_ / "events.csv");
    if (!metrics_ || !events_) throw Error("cannot write logs under " + cfg.out_dir);
    metrics_ << kMetricsVersionLine << '\n' << IterationMetrics::header() << '\n';
    events_ << kEventsVersionLine << '\n' << "seq,iteration,phase\n";
  }

  void event(int iteration, std::string_view phase) {
    ++seq_;
    if (enabled_) events_ << seq_ << ',' << iteration << ',' << phase << '\n';
  }

  void metrics(const IterationMetrics& m) {
    if (!enabled_) return;
    metrics_ << m.row() << '\n';
    metrics_.flush();
    events_.flush();
  }

  void checkpoint(const Checkpoint& ck) {
    if (enabled_) save_checkpoint((dir_ / "checkpoint.adrl").string(), ck);
  }

 private:
  bool enabled_;
  std::filesystem::path dir_;
  std::ofstream metrics_, events_;
  long seq_ = 0;
};

// A state uniform over stored windows and time indices.
inline Matrix buffer_states(const envs::ReplayBuffer& buffer, int count, Rng& rng) {
  const auto& items = buffer.items();
  Matrix out(items.front().state_dim(), count);
  for (int b = 0; b < count; ++b) {
    const auto& w = items[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(items.size()) - 1))];
    out.col(b) = w.states.row(uniform_int(rng, 0, w.length())).transpose();
  }
  return out;
}

}  // namespace detail

inline TrainResult adrrl_train(const RunConfig& cfg, const TrainOptions& opt = {}) {
  cfg.validate();
  TrainResult result{initial_checkpoint(cfg), {}};
  Checkpoint& ck = result.checkpoint;
  detail::RunLog log(cfg, opt.write_files);
  const auto layout = cfg.layout();
  auto env = envs::make_env(cfg.env_kind, cfg.env);
  envs::ReplayBuffer buffer(cfg.buffer_capacity, derive_seed(cfg.seed, 2));
  nn::AdamState denoiser_opt, return_opt, reward_opt;
  policy::A2COptimizers a2c_opt;
  const int K = cfg.model_iterations;
  const auto t_start = std::chrono::steady_clock::now();
  long env_steps = 0;

  try {
    for (int m = 1; m <= cfg.iterations; ++m) {
      const std::uint64_t it_seed = ck.rng();
      Rng env_rng(derive_seed(it_seed, 0)), train_rng(derive_seed(it_seed, 1)), s0_rng(derive_seed(it_seed, 2));
      IterationMetrics row;
      row.iteration = m;

      // real interaction
      double total = 0.0;
      for (int e = 0; e < cfg.episodes_per_iteration; ++e) {
        double ep = 0.0;
        for (auto& w : envs::collect_episode_windows(env, ck.policy, cfg.window, env_rng, cfg.a2c.gamma, &ep))
          buffer.add(std::move(w));
        total += ep;
        env_steps += cfg.env.episode_horizon;
      }
      row.episode_return = total / cfg.episodes_per_iteration;
      row.env_steps = env_steps;
      log.event(m, "collect");

      // model improvement
      const Matrix raw = buffer.tensors();
      ck.standardizer = diffusion::Standardizer::fit(raw);
      const Matrix data = ck.standardizer.apply(raw);
      Vector window_returns(static_cast<Eigen::Index>(buffer.size()));
      for (std::size_t k = 0; k < buffer.size(); ++k)
        window_returns[static_cast<Eigen::Index>(k)] = envs::discounted_return(buffer[k]);
      ck.return_model.target = returns::TargetScaling::fit(window_returns);
      const auto transitions = returns::transitions_of(buffer.items());
      ck.reward_model.fit_normalization(transitions);
      row.denoiser_loss = diffusion::train_denoiser(ck.denoiser, denoiser_opt, data, ck.schedule, K,
                                                    cfg.diffusion.batch, cfg.diffusion.lr, train_rng);
      row.return_loss = returns::train_return_model(ck.return_model, return_opt, data, window_returns, ck.schedule, K,
                                                    cfg.diffusion.batch, cfg.diffusion.lr, train_rng);
      row.reward_loss = returns::train_reward_model(ck.reward_model, reward_opt, transitions, K,
                                                    cfg.reward_model.batch, cfg.reward_model.lr, train_rng);
      log.event(m, "model");

      // adversarial generation
      SampleRequest req{cfg.guidance, detail::buffer_states(buffer, cfg.a2c.batch, s0_rng), cfg.a2c.batch,
                        derive_seed(it_seed, 3), true, cfg.workers, cfg.sample_chunk};
      const auto batch = generate_synthetic(ck, req);
      row.synthetic_return = batch.returns.mean();
      row.mean_c = batch.mean_c;
      row.guided_fraction = static_cast<double>(batch.guided) / (static_cast<double>(cfg.a2c.batch) * ck.schedule.N);
      row.clamped = batch.clamped;
      row.fallback = batch.fallback;
      row.envelope_violations = batch.envelope_violations;
      row.max_log_weight = batch.log_weight.maxCoeff();
      log.event(m, "sample");

      // policy improvement
      for (int u = 0; u < cfg.policy.updates_per_iteration; ++u) {
        const auto s = policy::a2c_update(ck.policy, ck.critic, a2c_opt, batch.windows, cfg.a2c);
        row.actor_loss = s.actor_loss;
        row.critic_loss = s.critic_loss;
        row.entropy = s.entropy;
      }
      log.event(m, "policy");

      ck.iteration = m;
      log.metrics(row);
      result.metrics.push_back(row);
      if (opt.on_iteration) opt.on_iteration(row);
      if (m % 25 == 0 || m == cfg.iterations) {
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        spdlog::info("iter {}/{}  return {:.2f}  synthetic {:.3f}  mean_c {:.3g}  [{:.0f}s]", m, cfg.iterations,
                     row.episode_return, row.synthetic_return, row.mean_c, secs);
      }
    }
  } catch (const Error& e) {
    spdlog::error("training aborted at iteration {}: {}", ck.iteration + 1, e.what());
    log.checkpoint(ck);
    throw;
  }
  log.checkpoint(ck);
  return result;
}

}  // namespace adrrl::orchestrator
