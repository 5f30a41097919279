#include "adrrl/envs/env.hpp"
#include "adrrl/envs/replay_buffer.hpp"
#include "adrrl/envs/rollout.hpp"
#include "adrrl/envs/trajectory.hpp"
#include "adrrl/stats.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <sstream>

using namespace adrrl;
using namespace adrrl::envs;

namespace {

struct GaussianTestPolicy {
  double mean = 0.0;
  double stddev = 0.0;
  int dim = 1;
  ActionSample act(const Vector& /*s*/, Rng& rng) const {
    ActionSample a;
    a.action = Vector::Constant(dim, mean);
    if (stddev > 0) {
      std::normal_distribution<double> n(0.0, stddev);
      for (int j = 0; j < dim; ++j) a.action[j] += n(rng);
    }
    return a;
  }
};

EnvParams frictionless(double dt = 0.05) {
  EnvParams p;
  p.friction = 0.0;
  p.gravity = 0.0;
  p.dt = dt;
  return p;
}

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

}  // namespace

TEST(Env, ZeroActionFromRestLeavesStateUnchanged) {
  auto env = make_env("point_mass_1d", frictionless());
  env.reset_to(vec({0.3, 0.0}));
  const auto r = env.step(vec({0.0}));
  EXPECT_EQ(r.next_state[0], 0.3);
  EXPECT_EQ(r.next_state[1], 0.0);
}

TEST(Env, UnitForceForOneStepAddsDtToVelocity) {
  auto env = make_env(EnvKind::point_mass_1d, frictionless(0.1));
  env.reset_to(vec({0.0, 0.0}));
  const auto r = env.step(vec({1.0}));
  EXPECT_NEAR(r.next_state[1], 0.1, 1e-15);
}

TEST(Env, DoublingMassHalvesVelocityChange) {
  auto p = frictionless(0.1);
  auto light = make_env(EnvKind::point_mass_1d, p);
  p.mass = 2.0;
  auto heavy = make_env(EnvKind::point_mass_1d, p);
  light.reset_to(vec({0.0, 0.5}));
  heavy.reset_to(vec({0.0, 0.5}));
  const double dv_light = light.step(vec({0.7})).next_state[1] - 0.5;
  const double dv_heavy = heavy.step(vec({0.7})).next_state[1] - 0.5;
  EXPECT_NEAR(dv_heavy, 0.5 * dv_light, 1e-15);
}

TEST(Env, PendulumStaysAtStableEquilibrium) {
  auto env = make_env(EnvKind::pendulum, default_params(EnvKind::pendulum));
  env.reset_to(vec({std::numbers::pi, 0.0}));
  for (int t = 0; t < 50; ++t) {
    const auto r = env.step(vec({0.0}));
    EXPECT_NEAR(std::abs(r.next_state[0]), std::numbers::pi, 1e-12);
    EXPECT_NEAR(r.next_state[1], 0.0, 1e-12);
  }
}

TEST(Env, ZeroActionAtGoalGivesZeroReward) {
  auto env = make_env(EnvKind::point_mass_1d, EnvParams{});
  env.reset_to(vec({0.0, 0.0}));
  EXPECT_EQ(env.step(vec({0.0})).reward, 0.0);
  auto env2 = make_env(EnvKind::point_mass_2d, EnvParams{});
  env2.reset_to(Vector::Zero(4));
  EXPECT_EQ(env2.step(Vector::Zero(2)).reward, 0.0);
}

TEST(Env, RewardFormulas) {
  auto pm = make_env(EnvKind::point_mass_1d, EnvParams{});
  EXPECT_DOUBLE_EQ(pm.reward(vec({2.0, 5.0}), vec({0.5})), -4.0 - 0.01 * 0.25);
  auto pend = make_env(EnvKind::pendulum, default_params(EnvKind::pendulum));
  EXPECT_DOUBLE_EQ(pend.reward(vec({0.5, 2.0}), vec({1.0})), -(0.25 + 0.4 + 0.001));
}

TEST(Env, ActionsAreClipped) {
  auto env = make_env(EnvKind::point_mass_1d, frictionless(0.1));
  env.reset_to(vec({0.0, 0.0}));
  EXPECT_NEAR(env.step(vec({5.0})).next_state[1], 0.1, 1e-15);
}

TEST(Env, LargeFrictionDecaysMonotonically) {
  auto p = frictionless(0.05);
  p.friction = 1e6;
  auto env = make_env(EnvKind::point_mass_1d, p);
  env.reset_to(vec({0.0, 1.0}));
  double prev = 1.0;
  for (int t = 0; t < 20; ++t) {
    const double v = env.step(vec({0.0})).next_state[1];
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, prev);
    prev = v;
  }
  EXPECT_LT(prev, 1e-10);
}

TEST(Env, FrictionMatchesExponentialDecay) {
  // Linear drag ODE v' = -(f/m) v has v(T) = v0 exp(-f T / m).
  auto p = frictionless(1e-4);
  p.friction = 2.0;
  p.mass = 1.5;
  p.episode_horizon = 20000;
  auto env = make_env(EnvKind::point_mass_1d, p);
  env.reset_to(vec({0.0, 1.0}));
  for (int t = 0; t < 10000; ++t) env.step(vec({0.0}));
  const double expected = std::exp(-2.0 * 1.0 / 1.5);
  EXPECT_NEAR(env.state().s[1], expected, 1e-3);
}

TEST(Env, KineticEnergyNonIncreasingWithFriction) {
  for (auto kind : {EnvKind::point_mass_1d, EnvKind::point_mass_2d}) {
    EnvParams p;
    p.friction = 0.3;
    auto env = make_env(kind, p);
    Rng rng(3);
    env.reset(rng);
    Vector s = env.state().s;
    const int d = env.state_dim() / 2;
    s.tail(d).setConstant(1.3);
    env.reset_to(s);
    double ke = 0.5 * s.tail(d).squaredNorm();
    while (!env.state().done) {
      const auto r = env.step(Vector::Zero(env.action_dim()));
      const double next = 0.5 * r.next_state.tail(d).squaredNorm();
      EXPECT_LE(next, ke);
      ke = next;
    }
  }
}

TEST(Env, SteppingFinishedEpisodeIsUsageError) {
  EnvParams p;
  p.episode_horizon = 2;
  auto env = make_env(EnvKind::point_mass_1d, p);
  Rng rng(1);
  env.reset(rng);
  env.step(vec({0.0}));
  EXPECT_TRUE(env.step(vec({0.0})).done);
  EXPECT_THROW(env.step(vec({0.0})), UsageError);
}

TEST(Env, UnknownKindIsConfigError) {
  EXPECT_THROW(make_env("cartpole", EnvParams{}), ConfigError);
  EnvParams bad;
  bad.mass = 0.0;
  EXPECT_THROW(make_env(EnvKind::pendulum, bad), ConfigError);
  bad = EnvParams{};
  bad.dt = -1;
  EXPECT_THROW(make_env(EnvKind::pendulum, bad), ConfigError);
}

TEST(Env, HorizonShorterThanWindowRejected) {
  EnvParams p;
  p.episode_horizon = 5;
  EXPECT_THROW(p.validate(10), ConfigError);
  EXPECT_NO_THROW(p.validate(5));
}

TEST(Env, WrapAngleRange) {
  EXPECT_DOUBLE_EQ(Environment::wrap_angle(std::numbers::pi), std::numbers::pi);
  EXPECT_DOUBLE_EQ(Environment::wrap_angle(-std::numbers::pi), std::numbers::pi);
  EXPECT_NEAR(Environment::wrap_angle(3 * std::numbers::pi / 2), -std::numbers::pi / 2, 1e-15);
  EXPECT_NEAR(Environment::wrap_angle(0.25), 0.25, 1e-15);
}

TEST(Rollout, SameSeedIsIdentical) {
  GaussianTestPolicy policy{0.2, 0.0, 1};
  auto run = [&](std::uint64_t seed) {
    auto env = make_env(EnvKind::point_mass_1d, EnvParams{});
    Rng rng(seed);
    env.reset(rng);
    return collect_rollout(env, policy, 10, rng);
  };
  const auto a = run(42), b = run(42);
  EXPECT_EQ(a.states, b.states);
  EXPECT_EQ(a.actions, b.actions);
  EXPECT_EQ(a.rewards, b.rewards);
}

TEST(Rollout, LengthOneShape) {
  GaussianTestPolicy policy{0.0, 0.5, 2};
  auto env = make_env(EnvKind::point_mass_2d, EnvParams{});
  Rng rng(2);
  env.reset(rng);
  const auto t = collect_rollout(env, policy, 1, rng);
  EXPECT_EQ(t.states.rows(), 2);
  EXPECT_EQ(t.states.cols(), 4);
  EXPECT_EQ(t.actions.rows(), 1);
  EXPECT_EQ(t.actions.cols(), 2);
  EXPECT_EQ(t.rewards.size(), 1);
}

TEST(Rollout, WindowBeyondHorizonRejected) {
  EnvParams p;
  p.episode_horizon = 5;
  auto env = make_env(EnvKind::point_mass_1d, p);
  Rng rng(0);
  env.reset(rng);
  EXPECT_THROW(collect_rollout(env, GaussianTestPolicy{}, 6, rng), UsageError);
}

TEST(Rollout, ActionMeanMatchesPolicy) {
  // Policy mean well inside the clip box so clipping is negligible.
  GaussianTestPolicy policy{0.1, 0.2, 1};
  auto env = make_env(EnvKind::point_mass_1d, EnvParams{});
  Rng rng(7);
  std::vector<double> actions;
  for (int k = 0; k < 1000; ++k) {
    env.reset(rng);
    const auto t = collect_rollout(env, policy, 1, rng);
    actions.push_back(t.actions(0, 0));
  }
  const auto m = stats::mean_se(actions);
  EXPECT_LT(std::abs(m.mean - 0.1), 3 * m.se);
}

TEST(Rollout, EpisodeWindowsCoverHorizon) {
  EnvParams p;
  p.episode_horizon = 35;
  auto env = make_env(EnvKind::point_mass_1d, p);
  Rng rng(5);
  double total = 0;
  const auto w = collect_episode_windows(env, GaussianTestPolicy{0.0, 0.3, 1}, 10, rng, 0.99, &total);
  ASSERT_EQ(w.size(), 3u);
  double sum = 0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    sum += w[k].rewards.sum();
    if (k > 0) EXPECT_EQ(w[k].states.row(0), w[k - 1].states.row(10));
  }
  EXPECT_DOUBLE_EQ(total, sum);
}

TEST(DiscountedReturn, Examples) {
  EXPECT_DOUBLE_EQ(discounted_return(vec({1, 1, 1}), 1.0), 3.0);
  EXPECT_DOUBLE_EQ(discounted_return(vec({5, 0, 0}), 0.5), 5.0);
  EXPECT_NEAR(discounted_return(vec({1, 1, 1}), 0.99), 2.9701, 1e-12);
}

TEST(DiscountedReturn, Linearity) {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const Vector a = normal_matrix(12, 1, rng).col(0), b = normal_matrix(12, 1, rng).col(0);
    const double x = 1.7, y = -0.3;
    EXPECT_NEAR(discounted_return(Vector(x * a + y * b), 0.9),
                x * discounted_return(a, 0.9) + y * discounted_return(b, 0.9), 1e-12);
  }
}

TEST(ReplayBuffer, UniformSampling) {
  ReplayBuffer buf(100, 11);
  for (int k = 0; k < 10; ++k) {
    Trajectory t;
    t.states = Matrix::Constant(2, 2, k);
    t.actions = Matrix::Zero(1, 1);
    t.rewards = Vector::Zero(1);
    buf.add(t);
  }
  std::vector<std::size_t> counts(10, 0);
  for (int k = 0; k < 10000; ++k) ++counts[buf.sample_index()];
  EXPECT_GT(stats::chi_square_uniform(counts).p_value, 0.001);
}

TEST(ReplayBuffer, RingOverwritesOldest) {
  ReplayBuffer buf(3, 0);
  for (int k = 0; k < 5; ++k) {
    Trajectory t;
    t.states = Matrix::Constant(2, 1, k);
    t.actions = Matrix::Zero(1, 1);
    t.rewards = Vector::Zero(1);
    buf.add(t);
  }
  EXPECT_EQ(buf.size(), 3u);
  EXPECT_EQ(buf[0].states(0, 0), 3);
  EXPECT_EQ(buf[1].states(0, 0), 4);
  EXPECT_EQ(buf[2].states(0, 0), 2);
}

TEST(ReplayBuffer, EmptySampleIsUsageError) {
  ReplayBuffer buf(4, 0);
  EXPECT_THROW(buf.sample(), UsageError);
}

TEST(Trajectory, FlattenRoundTripAndLayout) {
  Trajectory t;
  t.states.resize(3, 2);
  t.states << 1, 2, 3, 4, 5, 6;
  t.actions.resize(2, 1);
  t.actions << 7, 8;
  t.rewards = Vector::Zero(2);
  const Vector f = flatten(t);
  ASSERT_EQ(f.size(), 8);
  for (int k = 0; k < 8; ++k) EXPECT_EQ(f[k], k + 1);
  const auto back = unflatten(f, layout_of(t), 0.99);
  EXPECT_EQ(back.states, t.states);
  EXPECT_EQ(back.actions, t.actions);
  EXPECT_EQ(layout_of(t).state_mask().sum(), 6);
}

TEST(Trajectory, CsvRoundTrip) {
  auto env = make_env(EnvKind::point_mass_2d, EnvParams{});
  Rng rng(4);
  env.reset(rng);
  const auto t = collect_rollout(env, GaussianTestPolicy{0.0, 0.5, 2}, 10, rng);
  std::stringstream ss;
  write_csv(ss, t);
  const auto back = read_csv(ss, t.gamma);
  EXPECT_EQ(back.states, t.states);
  EXPECT_EQ(back.actions, t.actions);
  EXPECT_EQ(back.rewards, t.rewards);
}

TEST(Trajectory, MalformedCsvIsFormatError) {
  std::stringstream ss("t,s0,s1,a0,r\n0,1,2\n");
  EXPECT_THROW(read_csv(ss, 0.99), FormatError);
}
