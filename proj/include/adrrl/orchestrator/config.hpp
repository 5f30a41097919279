#pragma once

// Run configuration: INI sections, unknown keys rejected, ADRRL_<SECTION>_<KEY>
// environment variables override file values.

#include "adrrl/envs/env.hpp"
#include "adrrl/guidance/guidance.hpp"
#include "adrrl/policy/a2c.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cctype>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace adrrl::orchestrator {

struct DiffusionConfig {
  int n_steps = 50;
  int hidden = 1024;
  int layers = 6;
  int embedding = 128;
  double lr = 3e-4;
  int batch = 256;
  double beta_max = 0.999;  // cosine schedule clip
  double x0_clip = 0.0;     // 0: no clipping of the x0 estimate while sampling
};

struct RewardModelConfig {
  int hidden = 256;
  int layers = 2;
  double lr = 1e-3;
  int batch = 256;
};

struct PolicyNetConfig {
  int hidden = 256;
  int layers = 2;
  double init_log_std = -0.5;
  int updates_per_iteration = 1;
};

struct RunConfig {
  envs::EnvKind env_kind = envs::EnvKind::point_mass_1d;
  envs::EnvParams env;
  std::uint64_t seed = 0;
  std::string out_dir = "runs/default";
  int iterations = 200;        // M
  int model_iterations = 100;  // K
  int window = 10;             // L
  int episodes_per_iteration = 1;
  std::size_t buffer_capacity = 100000;
  int workers = 0;        // 0: hardware concurrency
  int sample_chunk = 64;  // chains per worker task
  DiffusionConfig diffusion;
  RewardModelConfig reward_model;
  guidance::GuidanceConfig guidance;
  policy::A2CConfig a2c;
  PolicyNetConfig policy;
  int eval_episodes = 20;
  double eval_alpha = 0.1;  // CVaR level reported by evaluation

  envs::TrajectoryLayout layout() const {
    return {window, envs::state_dim(env_kind), envs::action_dim(env_kind)};
  }

  void validate() const {
    env.validate(window);
    if (iterations < 0) throw ConfigError("run.iterations must be nonneg");
    if (model_iterations < 0) throw ConfigError("run.model_iterations must be nonneg");
    if (window <= 0) throw ConfigError("run.window must be positive");
    if (episodes_per_iteration <= 0) throw ConfigError("run.episodes_per_iteration must be positive");
    if (buffer_capacity == 0) throw ConfigError("buffer.capacity must be positive");
    if (workers < 0) throw ConfigError("run.workers must be nonneg");
    if (sample_chunk <= 0) throw ConfigError("run.sample_chunk must be positive");
    if (diffusion.n_steps < 2) throw ConfigError("diffusion.n_steps must be at least 2");
    if (diffusion.hidden <= 0 || diffusion.layers <= 0 || diffusion.embedding <= 0 || diffusion.batch <= 0)
      throw ConfigError("diffusion sizes must be positive");
    if (!(diffusion.lr >= 0.0)) throw ConfigError("diffusion.lr must be nonneg");
    if (!(diffusion.beta_max > 0.0 && diffusion.beta_max < 1.0)) throw ConfigError("diffusion.beta_max must lie in (0, 1)");
    if (!(diffusion.x0_clip >= 0.0)) throw ConfigError("diffusion.x0_clip must be nonneg");
    if (reward_model.hidden <= 0 || reward_model.layers <= 0 || reward_model.batch <= 0)
      throw ConfigError("reward_model sizes must be positive");
    if (policy.hidden <= 0 || policy.layers <= 0 || policy.updates_per_iteration < 0)
      throw ConfigError("policy sizes must be positive");
    if (eval_episodes <= 0) throw ConfigError("eval.episodes must be positive");
    if (!(eval_alpha > 0.0 && eval_alpha <= 1.0)) throw ConfigError("eval.alpha must lie in (0, 1]");
    guidance.validate();
    if (guidance.n_steps != diffusion.n_steps) throw ConfigError("guidance step count must equal diffusion.n_steps");
    a2c.validate();
  }
};

namespace detail {

inline std::string format_double(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* first = text.data();
  const char* last = first + text.size();
  while (first < last && std::isspace(static_cast<unsigned char>(*first))) ++first;
  while (last > first && std::isspace(static_cast<unsigned char>(last[-1]))) --last;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) throw ConfigError("config key " + key + ": cannot parse '" + text + "'");
  return value;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError("config key " + key + ": expected a boolean, got '" + text + "'");
}

struct KeySpec {
  std::string section;
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
  std::string name() const { return section + "." + key; }
};

// Builds a KeySpec for a numeric field reached through `access`.
template <class T, class Access>
KeySpec num(std::string section, std::string key, Access access) {
  const std::string full = section + "." + key;
  return {section, key, [access, full](RunConfig& c, const std::string& v) { access(c) = parse_number<T>(full, v); },
          [access](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return format_double(access(c));
            else return std::to_string(access(c));
          }};
}

template <class Access>
KeySpec flag(std::string section, std::string key, Access access) {
  const std::string full = section + "." + key;
  return {section, key, [access, full](RunConfig& c, const std::string& v) { access(c) = parse_bool(full, v); },
          [access](const RunConfig& c) { return std::string(access(c) ? "true" : "false"); }};
}

inline const std::vector<KeySpec>& key_specs() {
  static const std::vector<KeySpec> specs = [] {
    std::vector<KeySpec> s;
    s.push_back({"run", "env", [](RunConfig& c, const std::string& v) {
                   c.env_kind = envs::parse_env_kind(v);
                 },
                 [](const RunConfig& c) { return envs::to_string(c.env_kind); }});
    s.push_back(num<std::uint64_t>("run", "seed", [](auto& c) -> auto& { return c.seed; }));
    s.push_back({"run", "out_dir", [](RunConfig& c, const std::string& v) { c.out_dir = v; },
                 [](const RunConfig& c) { return c.out_dir; }});
    s.push_back(num<int>("run", "iterations", [](auto& c) -> auto& { return c.iterations; }));
    s.push_back(num<int>("run", "model_iterations", [](auto& c) -> auto& { return c.model_iterations; }));
    s.push_back(num<int>("run", "window", [](auto& c) -> auto& { return c.window; }));
    s.push_back(
        num<int>("run", "episodes_per_iteration", [](auto& c) -> auto& { return c.episodes_per_iteration; }));
    s.push_back(num<int>("run", "workers", [](auto& c) -> auto& { return c.workers; }));
    s.push_back(num<int>("run", "sample_chunk", [](auto& c) -> auto& { return c.sample_chunk; }));

    s.push_back(num<double>("env", "mass", [](auto& c) -> auto& { return c.env.mass; }));
    s.push_back(num<double>("env", "friction", [](auto& c) -> auto& { return c.env.friction; }));
    s.push_back(num<double>("env", "gravity", [](auto& c) -> auto& { return c.env.gravity; }));
    s.push_back(num<double>("env", "dt", [](auto& c) -> auto& { return c.env.dt; }));
    s.push_back(num<int>("env", "episode_horizon", [](auto& c) -> auto& { return c.env.episode_horizon; }));
    s.push_back(num<double>("env", "init_spread", [](auto& c) -> auto& { return c.env.init_spread; }));

    s.push_back(num<std::size_t>("buffer", "capacity", [](auto& c) -> auto& { return c.buffer_capacity; }));

    s.push_back(num<int>("diffusion", "n_steps", [](auto& c) -> auto& { return c.diffusion.n_steps; }));
    s.push_back(num<int>("diffusion", "hidden", [](auto& c) -> auto& { return c.diffusion.hidden; }));
    s.push_back(num<int>("diffusion", "layers", [](auto& c) -> auto& { return c.diffusion.layers; }));
    s.push_back(num<int>("diffusion", "embedding", [](auto& c) -> auto& { return c.diffusion.embedding; }));
    s.push_back(num<double>("diffusion", "lr", [](auto& c) -> auto& { return c.diffusion.lr; }));
    s.push_back(num<int>("diffusion", "batch", [](auto& c) -> auto& { return c.diffusion.batch; }));
    s.push_back(num<double>("diffusion", "beta_max", [](auto& c) -> auto& { return c.diffusion.beta_max; }));
    s.push_back(num<double>("diffusion", "x0_clip", [](auto& c) -> auto& { return c.diffusion.x0_clip; }));

    s.push_back(num<int>("reward_model", "hidden", [](auto& c) -> auto& { return c.reward_model.hidden; }));
    s.push_back(num<int>("reward_model", "layers", [](auto& c) -> auto& { return c.reward_model.layers; }));
    s.push_back(num<double>("reward_model", "lr", [](auto& c) -> auto& { return c.reward_model.lr; }));
    s.push_back(num<int>("reward_model", "batch", [](auto& c) -> auto& { return c.reward_model.batch; }));

    s.push_back(num<double>("guidance", "alpha", [](auto& c) -> auto& { return c.guidance.alpha; }));
    s.push_back(flag("guidance", "enabled", [](auto& c) -> auto& { return c.guidance.enabled; }));
    s.push_back(num<double>("guidance", "action_scale", [](auto& c) -> auto& { return c.guidance.action_scale; }));
    s.push_back({"guidance", "r_rule",
                 [](RunConfig& c, const std::string& v) { c.guidance.r_rule = guidance::parse_r_rule(v); },
                 [](const RunConfig& c) { return guidance::to_string(c.guidance.r_rule); }});
    s.push_back(num<double>("guidance", "r_sigmas", [](auto& c) -> auto& { return c.guidance.r_sigmas; }));
    s.push_back(
        flag("guidance", "final_step_noise", [](auto& c) -> auto& { return c.guidance.final_step_noise; }));
    s.push_back({"guidance", "mutation",
                 [](RunConfig& c, const std::string& v) { c.guidance.mutation = guidance::parse_mutation(v); },
                 [](const RunConfig& c) { return guidance::to_string(c.guidance.mutation); }});

    s.push_back(num<double>("a2c", "gae_lambda", [](auto& c) -> auto& { return c.a2c.gae_lambda; }));
    s.push_back(num<double>("a2c", "gamma", [](auto& c) -> auto& { return c.a2c.gamma; }));
    s.push_back(num<double>("a2c", "critic_lr", [](auto& c) -> auto& { return c.a2c.critic_lr; }));
    s.push_back(num<double>("a2c", "actor_lr", [](auto& c) -> auto& { return c.a2c.actor_lr; }));
    s.push_back(num<double>("a2c", "entropy_weight", [](auto& c) -> auto& { return c.a2c.entropy_weight; }));
    s.push_back(num<int>("a2c", "batch", [](auto& c) -> auto& { return c.a2c.batch; }));
    s.push_back(num<int>("a2c", "critic_epochs", [](auto& c) -> auto& { return c.a2c.critic_epochs; }));
    s.push_back(
        flag("a2c", "normalize_advantages", [](auto& c) -> auto& { return c.a2c.normalize_advantages; }));

    s.push_back(num<int>("policy", "hidden", [](auto& c) -> auto& { return c.policy.hidden; }));
    s.push_back(num<int>("policy", "layers", [](auto& c) -> auto& { return c.policy.layers; }));
    s.push_back(num<double>("policy", "init_log_std", [](auto& c) -> auto& { return c.policy.init_log_std; }));
    s.push_back(num<int>("policy", "updates_per_iteration",
                         [](auto& c) -> auto& { return c.policy.updates_per_iteration; }));

    s.push_back(num<int>("eval", "episodes", [](auto& c) -> auto& { return c.eval_episodes; }));
    s.push_back(num<double>("eval", "alpha", [](auto& c) -> auto& { return c.eval_alpha; }));
    return s;
  }();
  return specs;
}

inline const KeySpec* find_key(std::string_view section, std::string_view key) {
  for (const auto& k : key_specs())
    if (k.section == section && k.key == key) return &k;
  return nullptr;
}

inline std::string env_var_name(const KeySpec& k) {
  std::string name = "ADRRL_" + k.section + "_" + k.key;
  for (auto& ch : name) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return name;
}

}  // namespace detail

// Defaults for the environment kind: pendulum gets gravity and a full-circle start.
inline RunConfig default_config(envs::EnvKind kind = envs::EnvKind::point_mass_1d) {
  RunConfig c;
  c.env_kind = kind;
  c.env = envs::default_params(kind);
  return c;
}

inline void set_key(RunConfig& cfg, const std::string& dotted, const std::string& value) {
  const auto dot = dotted.find('.');
  if (dot == std::string::npos) throw ConfigError("config key must be section.key: '" + dotted + "'");
  const auto* spec = detail::find_key(dotted.substr(0, dot), dotted.substr(dot + 1));
  if (!spec) throw ConfigError("unknown config key '" + dotted + "'");
  spec->set(cfg, value);
}

inline void apply_env_overrides(RunConfig& cfg) {
  for (const auto& k : detail::key_specs()) {
    if (const char* v = std::getenv(detail::env_var_name(k).c_str())) k.set(cfg, v);
  }
}

// Parses INI text. run.env is applied first so env defaults do not clobber explicit keys.
inline RunConfig parse_config(const std::string& text, bool env_overrides = true) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream is(text);
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  std::string kind = "point_mass_1d";
  if (const char* v = env_overrides ? std::getenv("ADRRL_RUN_ENV") : nullptr) kind = v;
  else if (auto run = tree.get_child_optional("run"))
    if (auto e = run->get_optional<std::string>("env")) kind = *e;
  RunConfig cfg = default_config(envs::parse_env_kind(kind));
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw ConfigError("config: key '" + section + "' outside a section");
    for (const auto& [key, value] : body) {
      const auto* spec = detail::find_key(section, key);
      if (!spec) throw ConfigError("unknown config key '" + section + "." + key + "'");
      spec->set(cfg, value.data());
    }
  }
  if (env_overrides) apply_env_overrides(cfg);
  cfg.guidance.n_steps = cfg.diffusion.n_steps;
  cfg.validate();
  return cfg;
}

inline RunConfig load_config(const std::string& path, bool env_overrides = true) {
  if (!std::filesystem::is_regular_file(path)) throw ConfigError("config file not found: " + path);
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), env_overrides);
}

// Canonical INI text: every key, fixed order, full precision.
inline std::string to_ini(const RunConfig& cfg) {
  std::ostringstream os;
  std::string section;
  for (const auto& k : detail::key_specs()) {
    if (k.section != section) {
      if (!section.empty()) os << '\n';
      section = k.section;
      os << '[' << section << "]\n";
    }
    os << k.key << " = " << k.get(cfg) << '\n';
  }
  return os.str();
}

// Hash of the canonical text minus run.out_dir, which does not affect results.
inline std::uint64_t config_hash(const RunConfig& cfg) {
  RunConfig c = cfg;
  c.out_dir.clear();
  return fnv1a64(to_ini(c));
}

}  // namespace adrrl::orchestrator
