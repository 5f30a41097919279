#pragma once

// Z(tau_i, i): window-return predictor over noisy standardized trajectories,
// and the per-step reward model used to label synthetic windows.

#include "adrrl/diffusion/denoiser.hpp"
#include "adrrl/diffusion/standardizer.hpp"
#include "adrrl/envs/replay_buffer.hpp"
#include "adrrl/nn/adam.hpp"
#include "adrrl/nn/mlp.hpp"
#include "adrrl/nn/tensor_io.hpp"

namespace adrrl::returns {

// Regression targets are normalized internally: prediction = shift + scale * net(x).
struct TargetScaling {
  double shift = 0.0;
  double scale = 1.0;

  static TargetScaling fit(const Vector& y) {
    TargetScaling t;
    if (y.size() == 0) return t;
    t.shift = y.mean();
    const double var = y.size() > 1 ? (y.array() - t.shift).square().sum() / static_cast<double>(y.size() - 1) : 0.0;
    t.scale = var > 1e-16 ? std::sqrt(var) : 1.0;
    return t;
  }
};

struct RegressionLoss {
  double loss = 0.0;  // mean squared error in normalized target units
  Vector grad;
};

// Mean squared error of a scalar-output network against normalized targets.
inline RegressionLoss scalar_regression_loss(const nn::MlpModel& net, const Matrix& x, std::span<const int> steps,
                                             const Vector& normalized_targets) {
  if (x.cols() == 0) throw UsageError("regression: empty batch");
  nn::Tape tape;
  const Matrix pred = nn::forward_batch(net, x, steps, &tape);
  const Matrix diff = pred - normalized_targets.transpose();
  const double B = static_cast<double>(x.cols());
  return {diff.squaredNorm() / B, nn::backward(net, (2.0 / B) * diff, tape).parameters};
}

struct ReturnModel {
  nn::MlpModel net;
  TargetScaling target;
  envs::TrajectoryLayout layout;

  static ReturnModel create(const envs::TrajectoryLayout& layout, int hidden, int layers, int embedding_dim,
                            int n_steps, Rng& rng) {
    auto spec = nn::MlpSpec::standard(layout.dim(), hidden, layers, 1,
                                      nn::StepEmbedding{embedding_dim, nn::EmbeddingKind::sinusoidal, n_steps});
    return {nn::MlpModel::initialized(spec, rng), {}, layout};
  }

  Vector predict(const Matrix& tau, std::span<const int> steps) const {
    return (target.shift + target.scale * nn::forward_batch(net, tau, steps).row(0).array()).matrix().transpose();
  }
  Vector predict(const Matrix& tau, int i) const {
    return predict(tau, std::vector<int>(static_cast<std::size_t>(tau.cols()), i));
  }
};

// One Adam step per iteration: i ~ U{1..N}, tau_0 -> tau_i, regress onto the clean window return.
// `data` holds standardized clean windows (columns) and `returns` their discounted returns.
inline double train_return_model(ReturnModel& z, nn::AdamState& opt, const Matrix& data, const Vector& returns,
                                 const diffusion::DiffusionSchedule& sch, int iterations, int batch, double lr,
                                 Rng& rng) {
  if (data.cols() == 0) throw UsageError("return model: empty buffer");
  if (returns.size() != data.cols()) throw ConfigError("return model: returns/data size mismatch");
  double total = 0.0;
  Matrix mb(data.rows(), batch);
  Vector y(batch);
  std::vector<int> steps(static_cast<std::size_t>(batch));
  for (int k = 0; k < iterations; ++k) {
    for (int b = 0; b < batch; ++b) {
      const int j = uniform_int(rng, 0, static_cast<int>(data.cols()) - 1);
      mb.col(b) = data.col(j);
      y[b] = (returns[j] - z.target.shift) / z.target.scale;
      steps[static_cast<std::size_t>(b)] = uniform_int(rng, 1, sch.N);
    }
    const Matrix eps = normal_matrix(mb.rows(), batch, rng);
    const auto noised = diffusion::forward_noise_steps(mb, steps, eps, sch);
    const auto lg = scalar_regression_loss(z.net, noised.tau, steps, y);
    nn::adam_step(z.net, lg.grad, opt, lr);
    total += lg.loss;
  }
  return iterations > 0 ? total / iterations : 0.0;
}

// g = dZ/dtau at (mu, i) in standardized coordinates, with action entries zeroed.
inline Matrix return_gradient(const ReturnModel& z, const Matrix& mu, int i) {
  if (mu.rows() != z.layout.dim()) throw ConfigError("return_gradient: tensor has wrong dimension");
  const std::vector<int> steps(static_cast<std::size_t>(mu.cols()), i);
  Matrix g = nn::input_gradient_batch(z.net, mu, Matrix::Constant(1, mu.cols(), z.target.scale), steps);
  g.bottomRows(z.layout.action_block()).setZero();
  return g;
}

// Chain rule through z = (x - mean) / std.
inline Matrix raw_gradient(const Matrix& standardized_grad, const diffusion::Standardizer& st) {
  return standardized_grad.array().colwise() / st.std.array();
}

inline void append_return_model(nn::TensorList& list, const std::string& prefix, const ReturnModel& z) {
  nn::append_model(list, prefix, z.net);
  list.push_back(nn::make_scalar(prefix + ".target_shift", z.target.shift));
  list.push_back(nn::make_scalar(prefix + ".target_scale", z.target.scale));
}

inline void read_return_model(const nn::TensorList& list, const std::string& prefix, ReturnModel& z) {
  z.net = nn::read_model(list, prefix);
  z.target.shift = nn::find_tensor(list, prefix + ".target_shift").data.at(0);
  z.target.scale = nn::find_tensor(list, prefix + ".target_scale").data.at(0);
}

// ---------------------------------------------------------------------------
// Per-step reward model r(s, a).

struct Transitions {
  Matrix inputs;  // (d_s + d_a) x n, rows [s; a]
  Vector rewards;
};

inline Transitions transitions_of(const std::vector<envs::Trajectory>& windows) {
  Transitions tr;
  if (windows.empty()) return tr;
  const int ds = windows.front().state_dim(), da = windows.front().action_dim();
  Eigen::Index n = 0;
  for (const auto& w : windows) n += w.length();
  tr.inputs.resize(ds + da, n);
  tr.rewards.resize(n);
  Eigen::Index c = 0;
  for (const auto& w : windows) {
    for (int t = 0; t < w.length(); ++t, ++c) {
      tr.inputs.col(c).head(ds) = w.states.row(t).transpose();
      tr.inputs.col(c).tail(da) = w.actions.row(t).transpose();
      tr.rewards[c] = w.rewards[t];
    }
  }
  return tr;
}

struct RewardModel {
  nn::MlpModel net;
  diffusion::Standardizer inputs;
  TargetScaling target;

  static RewardModel create(int state_dim, int action_dim, int hidden, int layers, Rng& rng) {
    const int d = state_dim + action_dim;
    return {nn::MlpModel::initialized(nn::MlpSpec::standard(d, hidden, layers, 1), rng),
            diffusion::Standardizer::identity(d), {}};
  }

  // Refit the input and target normalization on the current data.
  void fit_normalization(const Transitions& tr) {
    inputs = diffusion::Standardizer::fit(tr.inputs);
    target = TargetScaling::fit(tr.rewards);
  }

  // Columns of `sa` are raw [s; a].
  Vector predict(const Matrix& sa) const {
    const Matrix out = nn::forward_batch(net, inputs.apply(sa));
    return (target.shift + target.scale * out.row(0).array()).matrix().transpose();
  }
};

inline double train_reward_model(RewardModel& model, nn::AdamState& opt, const Transitions& tr, int iterations,
                                 int batch, double lr, Rng& rng) {
  if (tr.inputs.cols() == 0) throw UsageError("reward model: no transitions");
  const Matrix x = model.inputs.apply(tr.inputs);
  const Vector y = (tr.rewards.array() - model.target.shift) / model.target.scale;
  double total = 0.0;
  Matrix mb(x.rows(), batch);
  Vector yb(batch);
  for (int k = 0; k < iterations; ++k) {
    for (int b = 0; b < batch; ++b) {
      const int j = uniform_int(rng, 0, static_cast<int>(x.cols()) - 1);
      mb.col(b) = x.col(j);
      yb[b] = y[j];
    }
    const auto lg = scalar_regression_loss(model.net, mb, {}, yb);
    nn::adam_step(model.net, lg.grad, opt, lr);
    total += lg.loss;
  }
  return iterations > 0 ? total / iterations : 0.0;
}

// Per-step rewards for a window from the reward model.
inline Vector label_rewards(const RewardModel& model, const envs::Trajectory& traj) {
  const int ds = traj.state_dim(), da = traj.action_dim();
  Matrix sa(ds + da, traj.length());
  sa.topRows(ds) = traj.states.topRows(traj.length()).transpose();
  sa.bottomRows(da) = traj.actions.transpose();
  return model.predict(sa);
}

inline void append_reward_model(nn::TensorList& list, const std::string& prefix, const RewardModel& r) {
  nn::append_model(list, prefix, r.net);
  list.push_back(nn::make_tensor(prefix + ".input_mean", r.inputs.mean));
  list.push_back(nn::make_tensor(prefix + ".input_std", r.inputs.std));
  list.push_back(nn::make_scalar(prefix + ".target_shift", r.target.shift));
  list.push_back(nn::make_scalar(prefix + ".target_scale", r.target.scale));
}

inline void read_reward_model(const nn::TensorList& list, const std::string& prefix, RewardModel& r) {
  r.net = nn::read_model(list, prefix);
  r.inputs.mean = nn::tensor_vector(nn::find_tensor(list, prefix + ".input_mean"));
  r.inputs.std = nn::tensor_vector(nn::find_tensor(list, prefix + ".input_std"));
  r.target.shift = nn::find_tensor(list, prefix + ".target_shift").data.at(0);
  r.target.scale = nn::find_tensor(list, prefix + ".target_scale").data.at(0);
}

}  // namespace adrrl::returns
