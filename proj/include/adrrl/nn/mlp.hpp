#pragma once

// Multilayer perceptron with an optional diffusion-step embedding and
// reverse-mode gradients w.r.t. parameters and inputs.
//
// Topology (n = number of affine layers):
//   a_0 = W_0 x + b_0 + P e(step)          (P e(step) only with an embedding)
//   h_0 = act_0(a_0)
//   a_k = W_k h_{k-1} + b_k,  k = 1..n-1
//   h_k = act_k(a_k) + h_0                 (skip, hidden layers of width |h_0|)
//   output = h_{n-1}                       (the last layer never takes a skip)
//
// All parameters live in one flat vector; gradients share that layout.

#include "adrrl/common.hpp"

#include <atomic>
#include <numbers>
#include <optional>
#include <string>

namespace adrrl::nn {

enum class Activation { relu, tanh, identity };
enum class EmbeddingKind { sinusoidal, table };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
  }
  return "?";
}

struct StepEmbedding {
  int dim = 128;
  EmbeddingKind kind = EmbeddingKind::sinusoidal;
  int max_steps = 1000;  // table rows are 0..max_steps
};

struct MlpSpec {
  std::vector<int> layer_sizes;          // input, hidden..., output
  std::vector<Activation> activations;   // one per affine layer
  std::optional<StepEmbedding> step_embedding;
  bool skip_connections = true;

  int num_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }

  void validate() const {
    if (layer_sizes.size() < 2) throw ConfigError("mlp: need at least input and output sizes");
    for (int s : layer_sizes)
      if (s <= 0) throw ConfigError("mlp: layer sizes must be positive");
    if (static_cast<int>(activations.size()) != num_layers())
      throw ConfigError("mlp: one activation per layer required");
    if (step_embedding) {
      if (step_embedding->dim <= 0) throw ConfigError("mlp: embedding dim must be positive");
      if (step_embedding->kind == EmbeddingKind::sinusoidal && step_embedding->dim % 2 != 0)
        throw ConfigError("mlp: sinusoidal embedding dim must be even");
      if (step_embedding->max_steps < 0) throw ConfigError("mlp: max_steps must be nonneg");
    }
  }

  // relu hidden layers, identity output.
  static MlpSpec standard(int input, int hidden, int hidden_layers, int output,
                          std::optional<StepEmbedding> embedding = std::nullopt) {
    MlpSpec s;
    s.layer_sizes.push_back(input);
    for (int k = 0; k < hidden_layers; ++k) s.layer_sizes.push_back(hidden);
    s.layer_sizes.push_back(output);
    s.activations.assign(hidden_layers, Activation::relu);
    s.activations.push_back(Activation::identity);
    s.step_embedding = embedding;
    s.validate();
    return s;
  }
};

namespace detail {
inline std::atomic<std::uint64_t>& model_counter() {
  static std::atomic<std::uint64_t> counter{1};
  return counter;
}
}  // namespace detail

class MlpModel {
 public:
  struct Slot {
    std::string name;
    Eigen::Index offset = 0;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    Eigen::Index size() const { return rows * cols; }
  };

  explicit MlpModel(MlpSpec spec) : spec_(std::move(spec)), id_(next_id()) {
    spec_.validate();
    Eigen::Index offset = 0;
    auto add = [&](std::string name, Eigen::Index rows, Eigen::Index cols) {
      slots_.push_back({std::move(name), offset, rows, cols});
      offset += rows * cols;
    };
    for (int k = 0; k < spec_.num_layers(); ++k) {
      add("layer" + std::to_string(k) + ".weight", spec_.layer_sizes[k + 1], spec_.layer_sizes[k]);
      add("layer" + std::to_string(k) + ".bias", spec_.layer_sizes[k + 1], 1);
    }
    if (const auto& e = spec_.step_embedding) {
      add("embedding.projection", spec_.layer_sizes[1], e->dim);
      if (e->kind == EmbeddingKind::table) add("embedding.table", e->dim, e->max_steps + 1);
    }
    params_ = Vector::Zero(offset);
  }

  // Uniform fan-in initialisation.
  static MlpModel initialized(MlpSpec spec, Rng& rng) {
    MlpModel m(std::move(spec));
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (const auto& slot : m.slots_) {
      double scale = 1.0;
      if (slot.name.ends_with(".weight") || slot.name.ends_with(".projection"))
        scale = 1.0 / std::sqrt(static_cast<double>(slot.cols));
      else if (slot.name.ends_with(".bias"))
        scale = 1.0 / std::sqrt(static_cast<double>(m.slots_[&slot - m.slots_.data() - 1].cols));
      for (Eigen::Index j = 0; j < slot.size(); ++j) m.params_[slot.offset + j] = scale * unit(rng);
    }
    return m;
  }

  MlpModel(const MlpModel& o)
      : spec_(o.spec_), slots_(o.slots_), params_(o.params_), id_(next_id()) {}
  MlpModel& operator=(const MlpModel& o) {
    if (this != &o) {
      spec_ = o.spec_;
      slots_ = o.slots_;
      params_ = o.params_;
      id_ = next_id();
      version_ = 0;
    }
    return *this;
  }
  MlpModel(MlpModel&&) noexcept = default;
  MlpModel& operator=(MlpModel&&) noexcept = default;

  const MlpSpec& spec() const { return spec_; }
  int num_layers() const { return spec_.num_layers(); }
  int input_size() const { return spec_.layer_sizes.front(); }
  int output_size() const { return spec_.layer_sizes.back(); }
  bool has_step_embedding() const { return spec_.step_embedding.has_value(); }
  Eigen::Index num_parameters() const { return params_.size(); }
  const std::vector<Slot>& slots() const { return slots_; }

  const Vector& parameters() const { return params_; }
  Vector& mutable_parameters() {
    ++version_;
    return params_;
  }
  void set_parameters(const Vector& p) {
    if (p.size() != params_.size()) throw ConfigError("mlp: parameter vector size mismatch");
    ++version_;
    params_ = p;
  }

  const Slot& slot(std::string_view name) const {
    for (const auto& s : slots_)
      if (s.name == name) return s;
    throw ConfigError("mlp: no parameter named " + std::string(name));
  }

  // Views into any vector laid out like the parameters (e.g. a gradient).
  static Eigen::Map<const Matrix> view(const Vector& flat, const Slot& s) {
    return {flat.data() + s.offset, s.rows, s.cols};
  }
  static Eigen::Map<Matrix> view(Vector& flat, const Slot& s) {
    return {flat.data() + s.offset, s.rows, s.cols};
  }

  Eigen::Map<const Matrix> weight(int k) const { return view(params_, slots_[2 * k]); }
  Eigen::Map<const Matrix> bias(int k) const { return view(params_, slots_[2 * k + 1]); }
  Eigen::Map<Matrix> weight(int k) {
    ++version_;
    return view(params_, slots_[2 * k]);
  }
  Eigen::Map<Matrix> bias(int k) {
    ++version_;
    return view(params_, slots_[2 * k + 1]);
  }
  Eigen::Map<const Matrix> embedding_projection() const { return view(params_, slot("embedding.projection")); }
  Eigen::Map<const Matrix> embedding_table() const { return view(params_, slot("embedding.table")); }

  bool skip_into(int k) const {
    return spec_.skip_connections && k >= 1 && k < num_layers() - 1 &&
           spec_.layer_sizes[k + 1] == spec_.layer_sizes[1];
  }

  std::uint64_t id() const { return id_; }
  std::uint64_t version() const { return version_; }

 private:
  static std::uint64_t next_id() { return detail::model_counter().fetch_add(1); }

  MlpSpec spec_;
  std::vector<Slot> slots_;
  Vector params_;
  std::uint64_t id_ = 0;
  std::uint64_t version_ = 0;
};

// Cached activations of one batched forward pass.
struct Tape {
  std::uint64_t model_id = 0;
  std::uint64_t model_version = 0;
  Matrix input;                 // in x B
  std::vector<int> steps;
  Matrix embedding;             // emb_dim x B
  std::vector<Matrix> pre;      // a_k
  std::vector<Matrix> post;     // h_k

  const Matrix& output() const { return post.back(); }
  bool matches(const MlpModel& m) const { return model_id == m.id() && model_version == m.version(); }
};

struct Gradients {
  Vector parameters;
  Matrix input;
};

namespace detail {

inline void apply_activation(Activation a, const Matrix& pre, Matrix& post) {
  switch (a) {
    case Activation::relu: post = pre.cwiseMax(0.0); break;
    case Activation::tanh: post = pre.array().tanh().matrix(); break;
    case Activation::identity: post = pre; break;
  }
}

// Multiplies `grad` in place by act'(pre).
inline void activation_backward(Activation a, const Matrix& pre, Matrix& grad) {
  switch (a) {
    case Activation::relu: grad = (pre.array() > 0.0).select(grad, 0.0); break;
    case Activation::tanh: grad.array() *= 1.0 - pre.array().tanh().square(); break;
    case Activation::identity: break;
  }
}

inline Matrix step_embedding(const MlpModel& m, std::span<const int> steps) {
  const auto& e = *m.spec().step_embedding;
  Matrix out(e.dim, static_cast<Eigen::Index>(steps.size()));
  if (e.kind == EmbeddingKind::table) {
    const auto table = m.embedding_table();
    for (std::size_t b = 0; b < steps.size(); ++b) {
      if (steps[b] < 0 || steps[b] > e.max_steps) throw UsageError("mlp: step outside embedding table");
      out.col(static_cast<Eigen::Index>(b)) = table.col(steps[b]);
    }
    return out;
  }
  const int half = e.dim / 2;
  for (std::size_t b = 0; b < steps.size(); ++b) {
    if (steps[b] < 0) throw UsageError("mlp: negative diffusion step");
    for (int j = 0; j < half; ++j) {
      const double freq = std::exp(-std::log(10000.0) * j / half);
      const double angle = steps[b] * freq;
      out(j, static_cast<Eigen::Index>(b)) = std::sin(angle);
      out(j + half, static_cast<Eigen::Index>(b)) = std::cos(angle);
    }
  }
  return out;
}

inline void check_steps(const MlpModel& m, Eigen::Index batch, std::span<const int> steps) {
  if (m.has_step_embedding()) {
    if (static_cast<Eigen::Index>(steps.size()) != batch)
      throw ConfigError("mlp: model has a step embedding; one step per input column required");
  } else if (!steps.empty()) {
    throw ConfigError("mlp: step given to a model without step embedding");
  }
}

}  // namespace detail

// Batched forward: columns of `input` are samples.
inline Matrix forward_batch(const MlpModel& m, const Matrix& input, std::span<const int> steps = {},
                      Tape* tape = nullptr) {
  if (input.rows() != m.input_size())
    throw ConfigError("mlp: input has " + std::to_string(input.rows()) + " rows, model expects " +
                      std::to_string(m.input_size()));
  detail::check_steps(m, input.cols(), steps);
  const int n = m.num_layers();
  std::vector<Matrix> pre(n), post(n);
  Matrix emb;
  if (m.has_step_embedding()) emb = detail::step_embedding(m, steps);

  for (int k = 0; k < n; ++k) {
    const Matrix& below = (k == 0) ? input : post[k - 1];
    pre[k].noalias() = m.weight(k) * below;
    pre[k].colwise() += m.bias(k).col(0);
    if (k == 0 && m.has_step_embedding()) pre[k].noalias() += m.embedding_projection() * emb;
    detail::apply_activation(m.spec().activations[k], pre[k], post[k]);
    if (m.skip_into(k)) post[k] += post[0];
  }
  Matrix out = post.back();
  if (tape) {
    tape->model_id = m.id();
    tape->model_version = m.version();
    tape->input = input;
    tape->steps.assign(steps.begin(), steps.end());
    tape->embedding = std::move(emb);
    tape->pre = std::move(pre);
    tape->post = std::move(post);
  }
  return out;
}

inline Vector forward(const MlpModel& m, const Vector& input, std::optional<int> step = std::nullopt) {
  if (step.has_value() != m.has_step_embedding())
    throw ConfigError("mlp: step must be given iff the model has a step embedding");
  std::vector<int> steps;
  if (step) steps.push_back(*step);
  return forward_batch(m, Matrix(input), steps).col(0);
}

// Re-evaluates the forward pass recorded on a tape.
inline Matrix replay(const MlpModel& m, const Tape& tape) {
  if (!tape.matches(m)) throw UsageError("mlp: stale tape");
  return forward_batch(m, tape.input, tape.steps);
}

// Gradients of sum_b <output_grad[:, b], output[:, b]> w.r.t. parameters
// (summed over the batch) and inputs (per column).
inline Gradients backward(const MlpModel& m, const Matrix& output_grad, const Tape& tape) {
  if (!tape.matches(m)) throw UsageError("mlp: stale tape (model changed or tape from another model)");
  if (output_grad.rows() != m.output_size() || output_grad.cols() != tape.input.cols())
    throw ConfigError("mlp: output gradient shape mismatch");

  const int n = m.num_layers();
  Gradients g;
  g.parameters = Vector::Zero(m.num_parameters());
  const auto& slots = m.slots();

  std::vector<Matrix> dpost(n);
  dpost[n - 1] = output_grad;
  Matrix skip_accum;  // gradient flowing into h_0 through skips
  for (int k = n - 1; k >= 0; --k) {
    Matrix dh = std::move(dpost[k]);
    if (k == 0 && skip_accum.size() > 0) dh += skip_accum;
    if (m.skip_into(k)) {
      if (skip_accum.size() == 0) skip_accum = dh;
      else skip_accum += dh;
    }
    detail::activation_backward(m.spec().activations[k], tape.pre[k], dh);
    const Matrix& below = (k == 0) ? tape.input : tape.post[k - 1];
    MlpModel::view(g.parameters, slots[2 * k]).noalias() = dh * below.transpose();
    MlpModel::view(g.parameters, slots[2 * k + 1]) = dh.rowwise().sum();
    if (k == 0) {
      if (m.has_step_embedding()) {
        MlpModel::view(g.parameters, m.slot("embedding.projection")).noalias() =
            dh * tape.embedding.transpose();
        if (m.spec().step_embedding->kind == EmbeddingKind::table) {
          auto table_grad = MlpModel::view(g.parameters, m.slot("embedding.table"));
          const Matrix demb = m.embedding_projection().transpose() * dh;
          for (std::size_t b = 0; b < tape.steps.size(); ++b)
            table_grad.col(tape.steps[b]) += demb.col(static_cast<Eigen::Index>(b));
        }
      }
      g.input.noalias() = m.weight(0).transpose() * dh;
    } else {
      dpost[k - 1].noalias() = m.weight(k).transpose() * dh;
    }
  }
  return g;
}

// d/dx of <weights, f(x)> for a single input.
inline Vector input_gradient(const MlpModel& m, const Vector& input, const Vector& output_weights,
                             std::optional<int> step = std::nullopt) {
  if (step.has_value() != m.has_step_embedding())
    throw ConfigError("mlp: step must be given iff the model has a step embedding");
  std::vector<int> steps;
  if (step) steps.push_back(*step);
  Tape tape;
  forward_batch(m, Matrix(input), steps, &tape);
  return backward(m, Matrix(output_weights), tape).input.col(0);
}

// Batched input gradient; column b of the result is d<W[:,b], f(X[:,b])>/dX[:,b].
inline Matrix input_gradient_batch(const MlpModel& m, const Matrix& input, const Matrix& output_weights,
                             std::span<const int> steps = {}) {
  Tape tape;
  forward_batch(m, input, steps, &tape);
  return backward(m, output_weights, tape).input;
}

}  // namespace adrrl::nn
