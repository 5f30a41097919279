#pragma once

#include "adrrl/nn/mlp.hpp"

namespace adrrl::nn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Vector m;
  Vector v;
  std::int64_t t = 0;
};

// One bias-corrected Adam step on a flat parameter vector.
inline void adam_update(Eigen::Ref<Vector> params, const Vector& grad, AdamState& state, double lr,
                        const AdamConfig& cfg = {}) {
  if (grad.size() != params.size()) throw ConfigError("adam: gradient/parameter size mismatch");
  if (!grad.allFinite()) {
    Eigen::Index bad = 0;
    while (bad < grad.size() && std::isfinite(grad[bad])) ++bad;
    throw TrainingError("adam: non-finite gradient at index " + std::to_string(bad) + " (value " +
                        std::to_string(grad[bad]) + ", step " + std::to_string(state.t + 1) + ")");
  }
  if (state.m.size() != params.size()) {
    state.m = Vector::Zero(params.size());
    state.v = Vector::Zero(params.size());
    state.t = 0;
  }
  ++state.t;
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad;
  state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  params.array() -= lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + cfg.eps);
}

inline void adam_step(MlpModel& model, const Vector& grad, AdamState& state, double lr,
                      const AdamConfig& cfg = {}) {
  adam_update(model.mutable_parameters(), grad, state, lr, cfg);
}

}  // namespace adrrl::nn
