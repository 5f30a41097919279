#include "adrrl/nn/adam.hpp"
#include "adrrl/nn/gradcheck.hpp"
#include "adrrl/nn/mlp.hpp"
#include "adrrl/nn/tensor_io.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace adrrl;
using namespace adrrl::nn;

namespace {

MlpSpec single_layer(int in, int out, Activation act) {
  MlpSpec s;
  s.layer_sizes = {in, out};
  s.activations = {act};
  return s;
}

MlpSpec random_spec(Rng& rng, bool embedding) {
  const int in = uniform_int(rng, 1, 6);
  const int hidden = uniform_int(rng, 2, 8);
  const int out = uniform_int(rng, 1, 3);
  std::optional<StepEmbedding> emb;
  if (embedding)
    emb = StepEmbedding{2 * uniform_int(rng, 1, 4),
                        uniform_int(rng, 0, 1) ? EmbeddingKind::table : EmbeddingKind::sinusoidal, 12};
  auto spec = MlpSpec::standard(in, hidden, 3, out, emb);
  if (uniform_int(rng, 0, 1)) spec.activations[1] = Activation::tanh;
  return spec;
}

std::vector<int> random_steps(Rng& rng, const MlpModel& m, int batch) {
  std::vector<int> steps;
  if (m.has_step_embedding())
    for (int b = 0; b < batch; ++b) steps.push_back(uniform_int(rng, 0, 12));
  return steps;
}

}  // namespace

TEST(Forward, IdentitySingleLayer) {
  MlpModel m(single_layer(2, 2, Activation::identity));
  m.weight(0) = Matrix::Identity(2, 2);
  Vector x(2);
  x << 1, 2;
  EXPECT_EQ(forward(m, x), Vector(x));
}

TEST(Forward, ReluSingleLayer) {
  MlpModel m(single_layer(2, 2, Activation::relu));
  m.weight(0) = Matrix::Identity(2, 2);
  Vector x(2), expect(2);
  x << -1, 3;
  expect << 0, 3;
  EXPECT_EQ(forward(m, x), expect);
}

TEST(Forward, TwoLayerHandComputed) {
  // a0 = [0.5*0.5+0.1, -1*0.5+0.2] = [0.35, -0.3]; h0 = [0.35, 0]; y = 2*0.35 - 0.5 = 0.2
  MlpModel m(MlpSpec::standard(1, 2, 1, 1));
  m.weight(0) << 0.5, -1.0;
  m.bias(0) << 0.1, 0.2;
  m.weight(1) << 2.0, 3.0;
  m.bias(1) << -0.5;
  EXPECT_NEAR(forward(m, Vector(Vector::Constant(1, 0.5)))[0], 0.2, 1e-15);
}

TEST(Forward, DimensionMismatchIsConfigError) {
  MlpModel m(MlpSpec::standard(3, 4, 2, 1));
  EXPECT_THROW(forward(m, Vector(Vector::Zero(2))), ConfigError);
  EXPECT_THROW(forward(m, Vector(Vector::Zero(3)), 1), ConfigError);
  MlpModel e(MlpSpec::standard(3, 4, 2, 1, StepEmbedding{4, EmbeddingKind::sinusoidal, 10}));
  EXPECT_THROW(forward(e, Vector(Vector::Zero(3))), ConfigError);
}

TEST(Forward, DeterministicAndTapeReplayIsBitExact) {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    auto m = MlpModel::initialized(random_spec(rng, trial % 2 == 0), rng);
    Matrix x = normal_matrix(m.input_size(), 5, rng);
    auto steps = random_steps(rng, m, 5);
    Tape tape;
    Matrix y1 = forward_batch(m, x, steps, &tape);
    Matrix y2 = forward_batch(m, x, steps);
    EXPECT_EQ(y1, y2);
    EXPECT_EQ(replay(m, tape), tape.output());
    EXPECT_TRUE(y1.allFinite());
    EXPECT_EQ(y1.rows(), m.output_size());
  }
}

TEST(Backward, LinearScalar) {
  MlpModel m(single_layer(1, 1, Activation::identity));
  m.weight(0) << 0.7;
  Tape tape;
  forward_batch(m, Matrix::Constant(1, 1, 2.0), {}, &tape);
  auto g = backward(m, Matrix::Constant(1, 1, 1.0), tape);
  EXPECT_DOUBLE_EQ(MlpModel::view(g.parameters, m.slot("layer0.weight"))(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(MlpModel::view(g.parameters, m.slot("layer0.bias"))(0, 0), 1.0);
}

TEST(Backward, ConstantLossGivesZeroGradient) {
  Rng rng(5);
  auto m = MlpModel::initialized(random_spec(rng, true), rng);
  Matrix x = normal_matrix(m.input_size(), 3, rng);
  auto steps = random_steps(rng, m, 3);
  Tape tape;
  forward_batch(m, x, steps, &tape);
  auto g = backward(m, Matrix::Zero(m.output_size(), 3), tape);
  EXPECT_EQ(g.parameters.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Backward, StaleTapeIsUsageError) {
  Rng rng(6);
  auto m = MlpModel::initialized(MlpSpec::standard(2, 3, 2, 1), rng);
  Tape tape;
  forward_batch(m, Matrix::Ones(2, 1), {}, &tape);
  m.mutable_parameters()[0] += 0.1;
  EXPECT_THROW(backward(m, Matrix::Ones(1, 1), tape), UsageError);
  MlpModel other = m;
  forward_batch(m, Matrix::Ones(2, 1), {}, &tape);
  EXPECT_THROW(backward(other, Matrix::Ones(1, 1), tape), UsageError);
}

TEST(Backward, MatchesFiniteDifferencesOnRandomNets) {
  Rng rng(7);
  for (int trial = 0; trial < 25; ++trial) {
    auto m = MlpModel::initialized(random_spec(rng, trial % 3 != 0), rng);
    const int batch = 4;
    Matrix x = normal_matrix(m.input_size(), batch, rng);
    Matrix w = normal_matrix(m.output_size(), batch, rng);
    auto steps = random_steps(rng, m, batch);
    Tape tape;
    forward_batch(m, x, steps, &tape);
    auto g = backward(m, w, tape);

    MlpModel probe = m;
    auto loss = [&](const Vector& p) {
      probe.set_parameters(p);
      return forward_batch(probe, x, steps).cwiseProduct(w).sum();
    };
    const Vector fd = finite_difference_gradient(loss, m.parameters(), 1e-5);
    EXPECT_LT(relative_error(g.parameters, fd), 1e-4) << "trial " << trial;
  }
}

TEST(InputGradient, LinearModelReturnsWeights) {
  MlpModel m(single_layer(3, 1, Activation::identity));
  m.weight(0) << 0.3, -1.2, 2.0;
  Vector g = input_gradient(m, Vector(Vector::Random(3)), Vector(Vector::Ones(1)));
  EXPECT_TRUE(g.isApprox(m.weight(0).row(0).transpose().eval()));
}

TEST(InputGradient, AntisymmetricWeightsGiveAntisymmetricGradient) {
  MlpSpec spec = MlpSpec::standard(2, 3, 1, 1);
  spec.activations[0] = Activation::tanh;
  MlpModel m(spec);
  m.weight(0) << 0.4, -0.4, -1.1, 1.1, 0.7, -0.7;
  m.weight(1) << 0.9, -0.3, 1.5;
  Vector x(2);
  x << 0.35, 0.35;
  Vector g = input_gradient(m, x, Vector(Vector::Ones(1)));
  EXPECT_NEAR(g[0], -g[1], 1e-15);
  EXPECT_GT(std::abs(g[0]), 1e-3);
}

TEST(InputGradient, MatchesFiniteDifferences) {
  Rng rng(8);
  for (int trial = 0; trial < 25; ++trial) {
    auto m = MlpModel::initialized(random_spec(rng, trial % 2 == 0), rng);
    Vector x = normal_matrix(m.input_size(), 1, rng).col(0);
    Vector w = normal_matrix(m.output_size(), 1, rng).col(0);
    std::optional<int> step;
    if (m.has_step_embedding()) step = uniform_int(rng, 0, 12);
    Vector g = input_gradient(m, x, w, step);
    auto f = [&](const Vector& xi) { return forward(m, xi, step).dot(w); };
    EXPECT_LT(relative_error(g, finite_difference_gradient(f, x)), 1e-4) << "trial " << trial;
  }
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Vector p = Vector::LinSpaced(4, -1, 1);
  const Vector before = p;
  AdamState s;
  for (int k = 0; k < 5; ++k) adam_update(p, Vector::Zero(4), s, 0.1);
  EXPECT_EQ(p, before);
}

TEST(Adam, ZeroLearningRateIsIdentity) {
  Vector p = Vector::LinSpaced(4, -1, 1);
  const Vector before = p;
  AdamState s;
  adam_update(p, Vector::Ones(4), s, 0.0);
  EXPECT_EQ(p, before);
}

TEST(Adam, ConstantGradientMovesOpposite) {
  Vector p = Vector::Zero(2);
  Vector g(2);
  g << 0.5, -3.0;
  AdamState s;
  for (int k = 0; k < 100; ++k) adam_update(p, g, s, 0.01);
  EXPECT_LT(p[0], -0.5);
  EXPECT_GT(p[1], 0.5);
}

TEST(Adam, FirstStepOnQuadratic) {
  // grad of (x-3)^2 at 0 is -6; bias-corrected first step is lr * g / (|g| + eps).
  Vector x = Vector::Zero(1);
  AdamState s;
  adam_update(x, Vector::Constant(1, 2.0 * (x[0] - 3.0)), s, 0.1);
  EXPECT_NEAR(x[0], 0.1 * 6.0 / (6.0 + 1e-8), 1e-15);
}

TEST(Adam, NonFiniteGradientIsTrainingError) {
  Vector p = Vector::Zero(3);
  Vector g = Vector::Zero(3);
  g[1] = std::nan("");
  AdamState s;
  EXPECT_THROW(adam_update(p, g, s, 0.1), TrainingError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Rng rng(9);
  for (int trial = 0; trial < 8; ++trial) {
    auto m = MlpModel::initialized(random_spec(rng, trial % 2 == 1), rng);
    TensorList list;
    append_model(list, "net", m);
    list.push_back(make_words("rng", std::vector<std::uint64_t>{~0ULL, 1ULL << 63, 12345}));
    std::stringstream first;
    write_tensors(first, list);
    const std::string bytes = first.str();
    std::stringstream in(bytes);
    auto loaded = read_tensors(in);
    MlpModel back = read_model(loaded, "net");
    Matrix x = normal_matrix(m.input_size(), 4, rng);
    auto steps = random_steps(rng, m, 4);
    EXPECT_EQ(forward_batch(back, x, steps), forward_batch(m, x, steps));
    EXPECT_EQ(tensor_words(find_tensor(loaded, "rng")), (std::vector<std::uint64_t>{~0ULL, 1ULL << 63, 12345}));
    std::stringstream second;
    write_tensors(second, loaded);
    EXPECT_EQ(second.str(), bytes);
  }
}

TEST(Checkpoint, HeaderLayout) {
  TensorList list{make_scalar("x", 1.0)};
  std::stringstream ss;
  write_tensors(ss, list);
  const std::string b = ss.str();
  ASSERT_GE(b.size(), 8u);
  EXPECT_EQ(b.substr(0, 4), "ADRL");
  EXPECT_EQ(static_cast<unsigned char>(b[4]), 1);
  // name_len(4) + "x" + rank(4) + payload(8)
  EXPECT_EQ(b.size(), 8u + 4 + 1 + 4 + 8);
  EXPECT_EQ(static_cast<unsigned char>(b[b.size() - 2]), 0xF0);  // 1.0 = 0x3FF0... little-endian
  EXPECT_EQ(static_cast<unsigned char>(b[b.size() - 1]), 0x3F);
}

TEST(Checkpoint, BadMagicRejected) {
  std::stringstream ss("XXXX\x01\x00\x00\x00");
  EXPECT_THROW(read_tensors(ss), FormatError);
}
