#pragma once

// Forward noising, the epsilon-prediction objective, the closed-form
// posterior mean and ancestral sampling over flattened trajectory tensors.
// Every function works column-wise: a Matrix holds one tensor per column.

#include "adrrl/diffusion/schedule.hpp"
#include "adrrl/nn/adam.hpp"
#include "adrrl/nn/mlp.hpp"

#include <functional>
#include <optional>

namespace adrrl::diffusion {

// eps(X, i) -> predicted noise for every column of X at step i.
using EpsFn = std::function<Matrix(const Matrix&, int)>;

inline EpsFn mlp_eps(const nn::MlpModel& net) {
  return [&net](const Matrix& x, int i) {
    const std::vector<int> steps(static_cast<std::size_t>(x.cols()), i);
    return nn::forward_batch(net, x, steps);
  };
}

// Denoiser network: d -> hidden^layers -> d with a step embedding.
inline nn::MlpSpec denoiser_spec(int dim, int hidden, int layers, int embedding_dim, int n_steps) {
  return nn::MlpSpec::standard(dim, hidden, layers, dim,
                               nn::StepEmbedding{embedding_dim, nn::EmbeddingKind::sinusoidal, n_steps});
}

struct Noised {
  Matrix tau;  // tau_i
  Matrix eps;
};

inline Noised forward_noise_with(const Matrix& tau0, int i, const DiffusionSchedule& sch, Matrix eps) {
  const double ab = sch.alpha_bar(i);
  Noised out;
  out.tau = std::sqrt(ab) * tau0 + std::sqrt(1.0 - ab) * eps;
  out.eps = std::move(eps);
  return out;
}

inline Noised forward_noise(const Matrix& tau0, int i, const DiffusionSchedule& sch, Rng& rng) {
  return forward_noise_with(tau0, i, sch, normal_matrix(tau0.rows(), tau0.cols(), rng));
}

// Per-column steps variant used for training batches.
inline Noised forward_noise_steps(const Matrix& tau0, std::span<const int> steps, const Matrix& eps,
                                  const DiffusionSchedule& sch) {
  Noised out;
  out.tau.resize(tau0.rows(), tau0.cols());
  for (Eigen::Index b = 0; b < tau0.cols(); ++b) {
    const double ab = sch.alpha_bar(steps[static_cast<std::size_t>(b)]);
    out.tau.col(b) = std::sqrt(ab) * tau0.col(b) + std::sqrt(1.0 - ab) * eps.col(b);
  }
  out.eps = eps;
  return out;
}

struct LossAndGrad {
  double loss = 0.0;         // batch mean of the squared error summed over dimensions
  double per_element = 0.0;  // loss / d
  Vector grad;               // d loss / d parameters
};

// Deterministic core of the objective: steps and noise are given.
inline LossAndGrad denoiser_loss_fixed(const nn::MlpModel& net, const Matrix& tau0, std::span<const int> steps,
                                       const Matrix& eps, const DiffusionSchedule& sch) {
  if (tau0.cols() == 0) throw UsageError("denoiser_loss: empty batch");
  const auto noised = forward_noise_steps(tau0, steps, eps, sch);
  nn::Tape tape;
  const Matrix pred = nn::forward_batch(net, noised.tau, steps, &tape);
  const Matrix diff = pred - eps;
  const double B = static_cast<double>(tau0.cols());
  LossAndGrad out;
  out.loss = diff.squaredNorm() / B;
  out.per_element = out.loss / static_cast<double>(tau0.rows());
  out.grad = nn::backward(net, (2.0 / B) * diff, tape).parameters;
  return out;
}

// Samples i ~ U{1..N} and eps ~ N(0, I) per column.
inline LossAndGrad denoiser_loss(const nn::MlpModel& net, const Matrix& tau0, const DiffusionSchedule& sch,
                                 Rng& rng) {
  std::vector<int> steps(static_cast<std::size_t>(tau0.cols()));
  for (auto& s : steps) s = uniform_int(rng, 1, sch.N);
  const Matrix eps = normal_matrix(tau0.rows(), tau0.cols(), rng);
  return denoiser_loss_fixed(net, tau0, steps, eps, sch);
}

// Uniform minibatch of columns.
inline Matrix sample_columns(const Matrix& data, int batch, Rng& rng) {
  if (data.cols() == 0) throw UsageError("minibatch: no data");
  Matrix out(data.rows(), batch);
  for (int b = 0; b < batch; ++b) out.col(b) = data.col(uniform_int(rng, 0, static_cast<int>(data.cols()) - 1));
  return out;
}

// K Adam steps on minibatches of standardized data; returns the mean loss.
inline double train_denoiser(nn::MlpModel& net, nn::AdamState& opt, const Matrix& data, const DiffusionSchedule& sch,
                             int iterations, int batch, double lr, Rng& rng) {
  double total = 0.0;
  for (int k = 0; k < iterations; ++k) {
    const Matrix mb = sample_columns(data, batch, rng);
    const auto lg = denoiser_loss(net, mb, sch, rng);
    nn::adam_step(net, lg.grad, opt, lr);
    total += lg.loss;
  }
  return iterations > 0 ? total / iterations : 0.0;
}

// mu = (tau_i - beta_i / sqrt(1 - alpha_bar_i) * eps_hat) / sqrt(1 - beta_i).
// With x0_clip > 0 the same mean is formed from the clipped x0 estimate
// (the two agree exactly when nothing is clipped).
inline Matrix posterior_mean_from_eps(const Matrix& tau_i, const Matrix& eps_hat, int i,
                                      const DiffusionSchedule& sch) {
  const double beta = sch.beta(i);
  if (sch.x0_clip <= 0.0)
    return (tau_i - (beta / std::sqrt(1.0 - sch.alpha_bar(i))) * eps_hat) / std::sqrt(1.0 - beta);
  const double ab = sch.alpha_bar(i), ab_prev = sch.alpha_bar(i - 1);
  const Matrix x0 = ((tau_i - std::sqrt(1.0 - ab) * eps_hat) / std::sqrt(ab))
                        .cwiseMax(-sch.x0_clip)
                        .cwiseMin(sch.x0_clip);
  return (std::sqrt(ab_prev) * beta / (1.0 - ab)) * x0 + (std::sqrt(1.0 - beta) * (1.0 - ab_prev) / (1.0 - ab)) * tau_i;
}

inline Matrix posterior_mean(const EpsFn& eps, const Matrix& tau_i, int i, const DiffusionSchedule& sch) {
  return posterior_mean_from_eps(tau_i, eps(tau_i, i), i, sch);
}

// Fixed initial-state values written into the leading rows of every column.
struct Inpaint {
  Matrix s0;  // d_s x n (or d_s x 1, broadcast)

  void apply(Matrix& tau) const {
    if (s0.size() == 0) return;
    if (s0.cols() == 1) tau.topRows(s0.rows()).colwise() = s0.col(0);
    else tau.topRows(s0.rows()) = s0;
  }
};

struct SampleOptions {
  std::optional<Inpaint> inpaint;
  bool final_step_noise = false;
};

// Whether the transition out of step i adds noise.
inline bool step_adds_noise(int i, const SampleOptions& opt) { return i > 1 || opt.final_step_noise; }

// tau_{i-1} ~ N(mu(tau_i, i), beta_i I). A noise matrix is always drawn so
// that RNG consumption does not depend on the step index.
inline Matrix ancestral_step(const EpsFn& eps, Matrix tau_i, int i, const DiffusionSchedule& sch, Rng& rng,
                             const SampleOptions& opt = {}) {
  if (opt.inpaint) opt.inpaint->apply(tau_i);
  Matrix mu = posterior_mean(eps, tau_i, i, sch);
  const Matrix z = normal_matrix(mu.rows(), mu.cols(), rng);
  if (step_adds_noise(i, opt)) mu += sch.sigma(i) * z;
  return mu;
}

inline Matrix unguided_sample(const EpsFn& eps, const DiffusionSchedule& sch, Eigen::Index dim, Eigen::Index n,
                              Rng& rng, const SampleOptions& opt = {}) {
  Matrix tau = normal_matrix(dim, n, rng);
  for (int i = sch.N; i >= 1; --i) tau = ancestral_step(eps, std::move(tau), i, sch, rng, opt);
  if (opt.inpaint) opt.inpaint->apply(tau);
  return tau;
}

}  // namespace adrrl::diffusion
