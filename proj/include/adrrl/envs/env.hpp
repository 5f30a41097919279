#pragma once

// Toy continuous-control environments with perturbable physics.
//
// point_mass_1d: state [x, v], action [u]. Goal x = 0.
// point_mass_2d: state [x, y, vx, vy], action [ux, uy]. Goal origin; gravity acts along -y.
// pendulum:      state [theta, omega], action [u]. theta = 0 is upright, pi hangs down.
//
// Integration is semi-implicit Euler; the viscous friction term is treated
// implicitly so that arbitrarily large friction damps without overshoot.
// Rewards are evaluated on the pre-step state and the clipped action:
//   point mass: -|pos - goal|^2 - 0.01 |a|^2
//   pendulum:   -(theta^2 + 0.1 omega^2 + 0.001 a^2)

#include "adrrl/common.hpp"

#include <algorithm>
#include <numbers>
#include <string>

namespace adrrl::envs {

enum class EnvKind { point_mass_1d, point_mass_2d, pendulum };

inline std::string to_string(EnvKind k) {
  switch (k) {
    case EnvKind::point_mass_1d: return "point_mass_1d";
    case EnvKind::point_mass_2d: return "point_mass_2d";
    case EnvKind::pendulum: return "pendulum";
  }
  return "?";
}

inline EnvKind parse_env_kind(std::string_view name) {
  if (name == "point_mass_1d") return EnvKind::point_mass_1d;
  if (name == "point_mass_2d") return EnvKind::point_mass_2d;
  if (name == "pendulum") return EnvKind::pendulum;
  throw ConfigError("unknown environment kind '" + std::string(name) + "'");
}

struct EnvParams {
  double mass = 1.0;
  double friction = 0.1;
  double gravity = 0.0;       // point mass: acceleration along -x (1d) or -y (2d)
  double dt = 0.05;
  int episode_horizon = 200;
  double init_spread = 1.0;   // half-width of the uniform initial position/angle box

  void validate(int window_length = 1) const {
    if (!(mass > 0.0) || !std::isfinite(mass)) throw ConfigError("env: mass must be positive");
    if (!(friction >= 0.0)) throw ConfigError("env: friction must be nonneg");
    if (!(dt > 0.0)) throw ConfigError("env: dt must be positive");
    if (!std::isfinite(gravity)) throw ConfigError("env: gravity must be finite");
    if (episode_horizon <= 0) throw ConfigError("env: episode_horizon must be positive");
    if (episode_horizon < window_length)
      throw ConfigError("env: episode_horizon must be at least the window length");
    if (!(init_spread >= 0.0)) throw ConfigError("env: init_spread must be nonneg");
  }
};

inline EnvParams default_params(EnvKind kind) {
  EnvParams p;
  if (kind == EnvKind::pendulum) {
    p.gravity = 9.81;
    p.init_spread = std::numbers::pi;
  }
  return p;
}

inline int state_dim(EnvKind k) { return k == EnvKind::point_mass_2d ? 4 : 2; }
inline int action_dim(EnvKind k) { return k == EnvKind::point_mass_2d ? 2 : 1; }

struct EnvState {
  Vector s;
  int t = 0;
  bool done = false;
};

struct StepResult {
  Vector next_state;
  double reward = 0.0;
  bool done = false;
};

class Environment {
 public:
  static constexpr double kActionBound = 1.0;
  static constexpr double kPendulumMaxTorque = 2.0;

  Environment(EnvKind kind, EnvParams params) : kind_(kind), params_(params) {
    params_.validate();
    state_.s = Vector::Zero(state_dim());
  }

  EnvKind kind() const { return kind_; }
  const EnvParams& params() const { return params_; }
  int state_dim() const { return envs::state_dim(kind_); }
  int action_dim() const { return envs::action_dim(kind_); }
  const EnvState& state() const { return state_; }
  int remaining() const { return state_.done ? 0 : params_.episode_horizon - state_.t; }

  const EnvState& reset(Rng& rng) {
    std::uniform_real_distribution<double> u(-params_.init_spread, params_.init_spread);
    Vector s = Vector::Zero(state_dim());
    switch (kind_) {
      case EnvKind::point_mass_1d: s[0] = u(rng); break;
      case EnvKind::point_mass_2d:
        s[0] = u(rng);
        s[1] = u(rng);
        break;
      case EnvKind::pendulum: s[0] = wrap_angle(std::numbers::pi + u(rng)); break;
    }
    return reset_to(s);
  }

  const EnvState& reset_to(const Vector& s) {
    if (s.size() != state_dim()) throw ConfigError("env: reset state has wrong dimension");
    state_ = EnvState{s, 0, false};
    return state_;
  }

  static Vector clip_action(const Vector& a) { return a.cwiseMax(-kActionBound).cwiseMin(kActionBound); }

  double reward(const Vector& s, const Vector& a_clipped) const {
    switch (kind_) {
      case EnvKind::point_mass_1d: return -s[0] * s[0] - 0.01 * a_clipped.squaredNorm();
      case EnvKind::point_mass_2d: return -s.head(2).squaredNorm() - 0.01 * a_clipped.squaredNorm();
      case EnvKind::pendulum: {
        const double th = wrap_angle(s[0]);
        return -(th * th + 0.1 * s[1] * s[1] + 0.001 * a_clipped.squaredNorm());
      }
    }
    return 0.0;
  }

  // Pure transition function; does not touch the episode state.
  Vector dynamics(const Vector& s, const Vector& a_clipped) const {
    const double m = params_.mass, f = params_.friction, g = params_.gravity, dt = params_.dt;
    const double damp = 1.0 + dt * f / m;
    Vector next = s;
    switch (kind_) {
      case EnvKind::point_mass_1d:
        next[1] = (s[1] + dt * (a_clipped[0] / m - g)) / damp;
        next[0] = s[0] + dt * next[1];
        break;
      case EnvKind::point_mass_2d:
        next[2] = (s[2] + dt * a_clipped[0] / m) / damp;
        next[3] = (s[3] + dt * (a_clipped[1] / m - g)) / damp;
        next[0] = s[0] + dt * next[2];
        next[1] = s[1] + dt * next[3];
        break;
      case EnvKind::pendulum: {
        // unit length: theta'' = g sin(theta) + (u tau - f omega) / m
        next[1] = (s[1] + dt * (g * std::sin(s[0]) + kPendulumMaxTorque * a_clipped[0] / m)) / damp;
        next[0] = wrap_angle(s[0] + dt * next[1]);
        break;
      }
    }
    return next;
  }

  StepResult step(const Vector& action) {
    if (state_.done) throw UsageError("env: step called on a finished episode");
    if (action.size() != action_dim()) throw ConfigError("env: action has wrong dimension");
    const Vector a = clip_action(action);
    StepResult r;
    r.reward = reward(state_.s, a);
    r.next_state = dynamics(state_.s, a);
    state_.s = r.next_state;
    ++state_.t;
    state_.done = state_.t >= params_.episode_horizon;
    r.done = state_.done;
    return r;
  }

  static double wrap_angle(double th) {
    const double two_pi = 2.0 * std::numbers::pi;
    // maps into (-pi, pi]
    th = std::fmod(th + std::numbers::pi, two_pi);
    if (th <= 0) th += two_pi;
    return th - std::numbers::pi;
  }

 private:
  EnvKind kind_;
  EnvParams params_;
  EnvState state_;
};

inline Environment make_env(EnvKind kind, const EnvParams& params) { return Environment(kind, params); }
inline Environment make_env(std::string_view kind, const EnvParams& params) {
  return Environment(parse_env_kind(kind), params);
}

}  // namespace adrrl::envs
